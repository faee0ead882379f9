#include <doctest.h>

#include <algorithm>

#include "waferssl/errors.hpp"
#include "waferssl/eval.hpp"
#include "waferssl/rng.hpp"

using namespace waferssl;

TEST_CASE("confusion tallies pairs into rows=truth, cols=pred") {
    const ConfusionMatrix cm = confusion({0, 1, 1}, {0, 0, 1});
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.total() == 3);

    const ConfusionMatrix empty = confusion({}, {});
    CHECK(empty.total() == 0);

    const ConfusionMatrix diag = confusion({2, 2, 5}, {2, 2, 5});
    CHECK(diag.at(2, 2) == 2);
    CHECK(diag.at(5, 5) == 1);

    CHECK_THROWS_AS(confusion({0}, {0, 1}), WaferError);
    CHECK_THROWS_AS(confusion({0, 9}, {0, 1}), WaferError);
}

TEST_CASE("metrics reproduce the four-sample hand case") {
    const ConfusionMatrix cm = confusion({0, 1, 1, 2}, {0, 0, 1, 2});
    const MetricsReport r = compute_metrics(cm);
    CHECK(r.accuracy == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r.per_class[0].precision == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.per_class[0].recall == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.per_class[0].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("perfect diagonal gives all-ones metrics") {
    std::vector<int> labels;
    for (int c = 0; c < 9; ++c) {
        labels.insert(labels.end(), 3, c);
    }
    const MetricsReport r = compute_metrics(confusion(labels, labels));
    CHECK(r.accuracy == 1.0);
    CHECK(r.macro_precision == 1.0);
    CHECK(r.macro_recall == 1.0);
    CHECK(r.macro_f1 == 1.0);
    for (const auto& m : r.per_class) {
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == 1.0);
        CHECK(m.one_vs_rest_accuracy == 1.0);
    }
}

TEST_CASE("degenerate support flags undefined metrics") {
    const MetricsReport r = compute_metrics(confusion({4, 4, 4}, {4, 4, 4}));
    CHECK(r.per_class[4].precision == 1.0);
    CHECK(r.per_class[4].recall == 1.0);
    CHECK(r.per_class[4].f1 == 1.0);
    for (int c = 0; c < 9; ++c) {
        if (c == 4) continue;
        CHECK_FALSE(r.per_class[static_cast<std::size_t>(c)].precision_defined);
        CHECK_FALSE(r.per_class[static_cast<std::size_t>(c)].recall_defined);
        CHECK_FALSE(r.per_class[static_cast<std::size_t>(c)].f1_defined);
        CHECK(r.per_class[static_cast<std::size_t>(c)].one_vs_rest_accuracy == 1.0);
    }
    CHECK(r.macro_precision == 1.0);  // undefined classes excluded from the mean

    ConfusionMatrix zero;
    CHECK_THROWS_AS(compute_metrics(zero), WaferError);
}

TEST_CASE("metrics are permutation invariant and internally consistent") {
    Rng rng(2024);
    std::vector<int> preds(500), truths(500);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        preds[i] = static_cast<int>(rng.uniform_below(9));
        truths[i] = static_cast<int>(rng.uniform_below(9));
    }
    const MetricsReport a = compute_metrics(confusion(preds, truths));

    std::vector<std::size_t> order(preds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<int> preds2, truths2;
    for (std::size_t i : order) {
        preds2.push_back(preds[i]);
        truths2.push_back(truths[i]);
    }
    const MetricsReport b = compute_metrics(confusion(preds2, truths2));
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.macro_f1 == b.macro_f1);

    // micro identity: accuracy equals the diagonal fraction, recomputed here
    const ConfusionMatrix cm = confusion(preds, truths);
    std::uint64_t diag = 0;
    for (int c = 0; c < 9; ++c) diag += cm.at(c, c);
    CHECK(a.accuracy == doctest::Approx(static_cast<double>(diag) / 500.0).epsilon(1e-15));

    // per-class F1 is the harmonic mean of P and R; macros are plain means
    double macro_f = 0.0;
    int n_f = 0;
    for (const auto& m : a.per_class) {
        if (m.f1_defined) {
            CHECK(m.f1 == doctest::Approx(2.0 * m.precision * m.recall / (m.precision + m.recall))
                              .epsilon(1e-12));
            macro_f += m.f1;
            ++n_f;
        }
    }
    REQUIRE(n_f > 0);
    CHECK(a.macro_f1 == doctest::Approx(macro_f / n_f).epsilon(1e-12));
}

TEST_CASE("overall rendering matches the reported-results format byte for byte") {
    MetricsReport r;
    r.accuracy = 0.8463;
    r.macro_precision = 0.8624;
    r.macro_recall = 0.8441;
    r.macro_f1 = 0.8340;
    CHECK(render_report(r, ReportStyle::Overall) == "84.63%, 86.24%, 84.41%, 83.40%");

    MetricsReport ones;
    ones.accuracy = ones.macro_precision = ones.macro_recall = ones.macro_f1 = 1.0;
    CHECK(render_report(ones, ReportStyle::Overall) == "100.00%, 100.00%, 100.00%, 100.00%");
}

TEST_CASE("per-class rendering lists all nine classes in label order") {
    std::vector<int> labels;
    for (int c = 0; c < 9; ++c) labels.push_back(c);
    const MetricsReport r = compute_metrics(confusion(labels, labels));
    const std::string table = render_report(r, ReportStyle::PerClass);
    const auto rows = std::count(table.begin(), table.end(), '\n') + 1;
    CHECK(rows == 9);
    std::size_t pos = 0;
    for (int c = 0; c < 9; ++c) {
        const std::size_t found = table.find(class_name(c), pos);
        REQUIRE(found != std::string::npos);
        pos = found;
    }
    CHECK(table.find("Near-full") != std::string::npos);
    CHECK(table.find("100.00%") != std::string::npos);
}

TEST_CASE("key-value report is one metric per line") {
    const MetricsReport r = compute_metrics(confusion({0, 1}, {0, 1}));
    const std::string doc = report_key_values(r);
    CHECK(doc.find("overall.accuracy = 1") != std::string::npos);
    CHECK(doc.find("class.Center.precision = 1") != std::string::npos);
    CHECK(doc.find("class.None.recall = undefined") != std::string::npos);
    CHECK(doc.find("overall.weighted_f1 = ") != std::string::npos);
    CHECK(doc.find("class.Center.support = 1") != std::string::npos);
}

TEST_CASE("support-weighted averages match a direct recomputation") {
    // skewed supports: class 0 dominates
    std::vector<int> truths, preds;
    for (int i = 0; i < 12; ++i) {
        truths.push_back(0);
        preds.push_back(i < 9 ? 0 : 1);  // recall_0 = 0.75
    }
    for (int i = 0; i < 4; ++i) {
        truths.push_back(1);
        preds.push_back(i < 2 ? 1 : 0);  // recall_1 = 0.5
    }
    const MetricsReport r = compute_metrics(confusion(preds, truths));
    const double expected_wr = (12.0 * 0.75 + 4.0 * 0.5) / 16.0;
    CHECK(r.weighted_recall == doctest::Approx(expected_wr).epsilon(1e-12));
    CHECK(r.per_class[0].support == 12);
    CHECK(r.per_class[1].support == 4);
    // macro ignores support: (0.75 + 0.5) / 2
    CHECK(r.macro_recall == doctest::Approx(0.625).epsilon(1e-12));
}
