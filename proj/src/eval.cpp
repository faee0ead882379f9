#include "waferssl/eval.hpp"

#include <cstdio>
#include <sstream>

#include "waferssl/errors.hpp"

namespace waferssl {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts) {
        for (std::uint64_t v : row) t += v;
    }
    return t;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths) {
    if (preds.size() != truths.size()) {
        raise(ErrorCode::LengthMismatch, "preds and truths differ in length");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (truths[i] < 0 || truths[i] >= kNumClasses || preds[i] < 0 || preds[i] >= kNumClasses) {
            raise(ErrorCode::BadLabel, "entry " + std::to_string(i) + " outside 0..8");
        }
        cm.at(truths[i], preds[i])++;
    }
    return cm;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) raise(ErrorCode::EmptyMatrix, "confusion matrix has no samples");

    MetricsReport report;
    std::uint64_t diag = 0;
    double macro_p = 0.0, macro_r = 0.0, macro_f = 0.0;
    std::size_t n_p = 0, n_r = 0, n_f = 0;
    double weighted_p = 0.0, weighted_r = 0.0, weighted_f = 0.0;
    std::uint64_t support_p = 0, support_r = 0, support_f = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        std::uint64_t tp = cm.at(c, c);
        std::uint64_t fp = 0, fn = 0;
        for (int o = 0; o < kNumClasses; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        const std::uint64_t tn = total - tp - fp - fn;
        diag += tp;

        PerClassMetrics& m = report.per_class[static_cast<std::size_t>(c)];
        m.support = tp + fn;
        m.one_vs_rest_accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
        if (tp + fp > 0) {
            m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            m.precision_defined = true;
            macro_p += m.precision;
            n_p++;
            weighted_p += static_cast<double>(m.support) * m.precision;
            support_p += m.support;
        }
        if (tp + fn > 0) {
            m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
            m.recall_defined = true;
            macro_r += m.recall;
            n_r++;
            weighted_r += static_cast<double>(m.support) * m.recall;
            support_r += m.support;
        }
        if (m.precision_defined && m.recall_defined && m.precision + m.recall > 0.0) {
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            m.f1_defined = true;
            macro_f += m.f1;
            n_f++;
            weighted_f += static_cast<double>(m.support) * m.f1;
            support_f += m.support;
        }
    }
    report.accuracy = static_cast<double>(diag) / static_cast<double>(total);
    report.macro_precision = n_p > 0 ? macro_p / static_cast<double>(n_p) : 0.0;
    report.macro_recall = n_r > 0 ? macro_r / static_cast<double>(n_r) : 0.0;
    report.macro_f1 = n_f > 0 ? macro_f / static_cast<double>(n_f) : 0.0;
    report.weighted_precision = support_p > 0 ? weighted_p / static_cast<double>(support_p) : 0.0;
    report.weighted_recall = support_r > 0 ? weighted_r / static_cast<double>(support_r) : 0.0;
    report.weighted_f1 = support_f > 0 ? weighted_f / static_cast<double>(support_f) : 0.0;
    return report;
}

namespace {

std::string pct(double v, bool defined) {
    if (!defined) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", v * 100.0);
    return buf;
}

}  // namespace

std::string render_report(const MetricsReport& report, ReportStyle style) {
    std::ostringstream out;
    if (style == ReportStyle::Overall) {
        out << pct(report.accuracy, true) << ", " << pct(report.macro_precision, true) << ", "
            << pct(report.macro_recall, true) << ", " << pct(report.macro_f1, true);
        return out.str();
    }
    for (int c = 0; c < kNumClasses; ++c) {
        const PerClassMetrics& m = report.per_class[static_cast<std::size_t>(c)];
        char name[16];
        std::snprintf(name, sizeof(name), "%-9s", class_name(c).c_str());
        out << name << "  " << pct(m.one_vs_rest_accuracy, true) << ", "
            << pct(m.precision, m.precision_defined) << ", " << pct(m.recall, m.recall_defined) << ", "
            << pct(m.f1, m.f1_defined);
        if (c + 1 < kNumClasses) out << '\n';
    }
    return out.str();
}

std::string report_key_values(const MetricsReport& report) {
    std::ostringstream out;
    char buf[64];
    auto emit = [&](const std::string& key, double v, bool defined = true) {
        if (!defined) {
            out << key << " = undefined\n";
            return;
        }
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << key << " = " << buf << '\n';
    };
    emit("overall.accuracy", report.accuracy);
    emit("overall.macro_precision", report.macro_precision);
    emit("overall.macro_recall", report.macro_recall);
    emit("overall.macro_f1", report.macro_f1);
    emit("overall.weighted_precision", report.weighted_precision);
    emit("overall.weighted_recall", report.weighted_recall);
    emit("overall.weighted_f1", report.weighted_f1);
    for (int c = 0; c < kNumClasses; ++c) {
        const PerClassMetrics& m = report.per_class[static_cast<std::size_t>(c)];
        const std::string key = "class." + class_name(c);
        out << key << ".support = " << m.support << '\n';
        emit(key + ".one_vs_rest_accuracy", m.one_vs_rest_accuracy);
        emit(key + ".precision", m.precision, m.precision_defined);
        emit(key + ".recall", m.recall, m.recall_defined);
        emit(key + ".f1", m.f1, m.f1_defined);
    }
    return out.str();
}

}  // namespace waferssl
