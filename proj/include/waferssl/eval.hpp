#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "waferssl/dataset.hpp"

namespace waferssl {

// 9 x 9 counts; rows = true class, columns = predicted class.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    std::uint64_t total() const;
    std::uint64_t& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)]; }
    std::uint64_t at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)]; }
};

struct PerClassMetrics {
    double one_vs_rest_accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_defined = false;
    bool recall_defined = false;
    bool f1_defined = false;
    std::uint64_t support = 0;  // true-class count
};

// Macro (unweighted) averages are the headline; support-weighted variants are
// carried alongside for comparison and surface only in the key-value report.
struct MetricsReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    std::array<PerClassMetrics, kNumClasses> per_class{};
};

enum class ReportStyle { Overall, PerClass };

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths);

// Per class: precision = TP/(TP+FP), recall = TP/(TP+FN), f1 = 2PR/(P+R),
// one-vs-rest accuracy = (TP+TN)/total. Macro values are unweighted means over
// classes whose denominators are nonzero; undefined classes are flagged.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

// Overall style: one "accuracy, precision, recall, F1" percentage row, two
// decimals. PerClass style: nine rows keyed by class name in the same column
// order. Undefined metrics render as "n/a".
std::string render_report(const MetricsReport& report, ReportStyle style);

// Machine-parsable key = value document, one metric per line.
std::string report_key_values(const MetricsReport& report);

}  // namespace waferssl
