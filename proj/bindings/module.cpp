#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "waferssl/augment.hpp"
#include "waferssl/commands.hpp"
#include "waferssl/dataset.hpp"
#include "waferssl/errors.hpp"
#include "waferssl/eval.hpp"
#include "waferssl/losses.hpp"
#include "waferssl/resample.hpp"
#include "waferssl/train.hpp"
#include "waferssl/verify.hpp"

namespace py = pybind11;
using namespace waferssl;

namespace {

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) raise(ErrorCode::ShapeMismatch, "expected at least one row");
    Tensor t({static_cast<int>(rows.size()), static_cast<int>(rows.front().size())});
    std::size_t off = 0;
    for (const auto& r : rows) {
        if (r.size() != rows.front().size()) raise(ErrorCode::ShapeMismatch, "ragged rows");
        std::copy(r.begin(), r.end(), t.data.begin() + off);
        off += r.size();
    }
    return t;
}

std::vector<std::vector<double>> tensor_to_rows(const Tensor& t) {
    const std::size_t rows = static_cast<std::size_t>(t.shape[0]);
    const std::size_t cols = t.numel() / rows;
    std::vector<std::vector<double>> out(rows, std::vector<double>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(t.data.begin() + r * cols, t.data.begin() + (r + 1) * cols, out[r].begin());
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "wafer-map semi-supervised training core";

    py::register_exception<WaferError>(m, "WaferError");

    py::class_<WaferMap>(m, "WaferMap")
        .def(py::init<>())
        .def_readwrite("height", &WaferMap::height)
        .def_readwrite("width", &WaferMap::width)
        .def_readwrite("grid", &WaferMap::grid)
        .def_readwrite("label", &WaferMap::label)
        .def("__repr__", [](const WaferMap& w) {
            std::ostringstream s;
            s << "WaferMap(" << w.height << "x" << w.width;
            if (w.label) s << ", label=" << class_name(*w.label);
            s << ")";
            return s.str();
        });

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def_readonly("records", &Dataset::records)
        .def_property_readonly("counts_per_class",
                               [](const Dataset& d) {
                                   return std::vector<std::size_t>(d.counts_per_class.begin(),
                                                                   d.counts_per_class.end());
                               })
        .def_readonly("unlabeled_count", &Dataset::unlabeled_count)
        .def("push", &Dataset::push)
        .def("__len__", &Dataset::size);

    py::class_<PerClassMetrics>(m, "PerClassMetrics")
        .def_readonly("one_vs_rest_accuracy", &PerClassMetrics::one_vs_rest_accuracy)
        .def_readonly("precision", &PerClassMetrics::precision)
        .def_readonly("recall", &PerClassMetrics::recall)
        .def_readonly("f1", &PerClassMetrics::f1)
        .def_readonly("precision_defined", &PerClassMetrics::precision_defined)
        .def_readonly("recall_defined", &PerClassMetrics::recall_defined)
        .def_readonly("f1_defined", &PerClassMetrics::f1_defined);

    py::class_<MetricsReport>(m, "MetricsReport")
        .def_readonly("accuracy", &MetricsReport::accuracy)
        .def_readonly("macro_precision", &MetricsReport::macro_precision)
        .def_readonly("macro_recall", &MetricsReport::macro_recall)
        .def_readonly("macro_f1", &MetricsReport::macro_f1)
        .def_property_readonly("per_class", [](const MetricsReport& r) {
            return std::vector<PerClassMetrics>(r.per_class.begin(), r.per_class.end());
        });

    m.def("class_names", [] { return class_names(); });
    m.def("class_index", &class_index, py::arg("name"));

    m.def(
        "generate_synthetic_wafer",
        [](int cls, int height, int width, std::uint64_t seed, double noise_rate) {
            if (cls < 0 || cls >= kNumClasses) raise(ErrorCode::BadLabel, "class index outside 0..8");
            return generate_synthetic_wafer(static_cast<ClassLabel>(cls), height, width, seed, noise_rate);
        },
        py::arg("class_index"), py::arg("height") = 24, py::arg("width") = 24, py::arg("seed") = 1,
        py::arg("noise_rate") = 0.0);

    m.def(
        "generate_synthetic_dataset",
        [](const std::vector<std::size_t>& counts, int height, int width, std::uint64_t seed,
           double noise_rate) {
            if (counts.size() != kNumClasses) {
                raise(ErrorCode::ConfigInvalid, "counts must list all nine classes");
            }
            std::array<std::size_t, kNumClasses> a{};
            std::copy(counts.begin(), counts.end(), a.begin());
            return generate_synthetic_dataset(a, height, width, seed, noise_rate);
        },
        py::arg("per_class_counts"), py::arg("height") = 24, py::arg("width") = 24, py::arg("seed") = 1,
        py::arg("noise_rate") = 0.0);

    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
    m.def("split_labeled_fraction", &split_labeled_fraction, py::arg("dataset"), py::arg("fraction"),
          py::arg("seed"));

    m.def(
        "encode_input",
        [](const WaferMap& w, int th, int tw) {
            Tensor t = encode_input(w, th, tw);
            return py::make_tuple(t.shape, t.data);
        },
        py::arg("wafer"), py::arg("target_height"), py::arg("target_width"));

    m.def(
        "augment",
        [](const WaferMap& w, bool rotate_90s, bool flip, double die_noise_rate, std::uint64_t seed) {
            AugmentPolicy policy;
            policy.rotate_90s = rotate_90s;
            policy.flip = flip;
            policy.die_noise_rate = die_noise_rate;
            return augment(w, policy, seed);
        },
        py::arg("wafer"), py::arg("rotate_90s") = true, py::arg("flip") = true,
        py::arg("die_noise_rate") = 0.0, py::arg("seed") = 1);

    m.def("smote_oversample", &smote_oversample, py::arg("class_samples"), py::arg("n_synthetic"),
          py::arg("k") = 5, py::arg("seed") = 1);
    m.def(
        "undersample",
        [](const std::vector<std::vector<double>>& samples, std::size_t target, std::uint64_t seed) {
            return undersample(samples, target, seed);
        },
        py::arg("class_samples"), py::arg("target"), py::arg("seed") = 1);
    m.def(
        "balance_dataset",
        [](const Dataset& d, std::size_t target_per_class, std::size_t k, std::uint64_t seed,
           bool allow_k_clamp) {
            ResamplePlan plan;
            plan.target_per_class = target_per_class;
            plan.smote_k = k;
            plan.seed = seed;
            plan.allow_k_clamp = allow_k_clamp;
            return balance_dataset(d, plan);
        },
        py::arg("dataset"), py::arg("target_per_class"), py::arg("k") = 5, py::arg("seed") = 1,
        py::arg("allow_k_clamp") = false);

    m.def(
        "softmax_cross_entropy",
        [](const std::vector<std::vector<double>>& logits, const std::vector<int>& labels) {
            auto [loss, grad] = softmax_cross_entropy(rows_to_tensor(logits), labels);
            return py::make_tuple(loss, tensor_to_rows(grad));
        },
        py::arg("logits"), py::arg("labels"));
    m.def(
        "consistency_loss",
        [](const std::vector<std::vector<double>>& s, const std::vector<std::vector<double>>& t) {
            auto [loss, grad] = consistency_loss(rows_to_tensor(s), rows_to_tensor(t));
            return py::make_tuple(loss, tensor_to_rows(grad));
        },
        py::arg("student_logits"), py::arg("teacher_logits"));
    m.def(
        "l2_normalize",
        [](const std::vector<std::vector<double>>& rows) {
            return tensor_to_rows(l2_normalize(rows_to_tensor(rows)));
        },
        py::arg("vectors"));
    m.def(
        "supcon_loss",
        [](const std::vector<std::vector<double>>& projections, const std::vector<int>& labels,
           double temperature, bool include_anchor_in_denominator) {
            LossConfig cfg;
            cfg.temperature = temperature;
            cfg.include_anchor_in_denominator = include_anchor_in_denominator;
            auto [loss, grad] = supcon_loss(rows_to_tensor(projections), labels, cfg);
            return py::make_tuple(loss, tensor_to_rows(grad));
        },
        py::arg("projections"), py::arg("labels"), py::arg("temperature") = 0.1,
        py::arg("include_anchor_in_denominator") = false);
    m.def("consistency_ramp", &consistency_ramp, py::arg("step"), py::arg("rampup_steps"));

    m.def(
        "confusion_metrics",
        [](const std::vector<int>& preds, const std::vector<int>& truths) {
            return compute_metrics(confusion(preds, truths));
        },
        py::arg("preds"), py::arg("truths"));
    m.def(
        "render_report",
        [](const MetricsReport& r, const std::string& style) {
            return render_report(r, style == "per_class" ? ReportStyle::PerClass : ReportStyle::Overall);
        },
        py::arg("report"), py::arg("style") = "overall");

    m.def(
        "train",
        [](const Dataset& labeled, const Dataset& unlabeled, const Dataset& val, int input_size,
           int stem_channels, int blocks, int embed_dim, int proj_dim, std::size_t epochs,
           std::size_t batch_labeled, std::size_t batch_unlabeled, double lr, double momentum,
           double ema_alpha, std::uint64_t seed, double temperature, double consistency_weight,
           double supcon_weight, double die_noise_rate) {
            ModelConfig mc;
            mc.input_height = input_size;
            mc.input_width = input_size;
            mc.stem_channels = stem_channels;
            mc.blocks = blocks;
            mc.embed_dim = embed_dim;
            mc.proj_dim = proj_dim;
            TrainConfig tc;
            tc.epochs = epochs;
            tc.batch_labeled = batch_labeled;
            tc.batch_unlabeled = batch_unlabeled;
            tc.lr = lr;
            tc.momentum = momentum;
            tc.ema_alpha = ema_alpha;
            tc.seed = seed;
            tc.loss.temperature = temperature;
            tc.loss.consistency_weight_max = consistency_weight;
            tc.loss.supcon_weight = supcon_weight;
            tc.augment.die_noise_rate = die_noise_rate;
            const TrainResult result = train(labeled, unlabeled, val, mc, tc);
            py::list history;
            for (const EpochRecord& r : result.history.epochs) {
                py::dict row;
                row["epoch"] = r.epoch;
                row["classification"] = r.losses.classification;
                row["consistency"] = r.losses.consistency;
                row["supcontrast"] = r.losses.supcontrast;
                row["total"] = r.losses.total;
                if (r.evaluated) {
                    row["val_accuracy"] = r.val.accuracy;
                    row["val_macro_f1"] = r.val.macro_f1;
                }
                history.append(row);
            }
            return history;
        },
        py::arg("labeled"), py::arg("unlabeled"), py::arg("val"), py::arg("input_size") = 24,
        py::arg("stem_channels") = 8, py::arg("blocks") = 2, py::arg("embed_dim") = 32,
        py::arg("proj_dim") = 16, py::arg("epochs") = 1, py::arg("batch_labeled") = 16,
        py::arg("batch_unlabeled") = 16, py::arg("lr") = 0.05, py::arg("momentum") = 0.9,
        py::arg("ema_alpha") = 0.99, py::arg("seed") = 1, py::arg("temperature") = 0.1,
        py::arg("consistency_weight") = 1.0, py::arg("supcon_weight") = 1.0,
        py::arg("die_noise_rate") = 0.05);

    m.def(
        "verify",
        [](const std::string& suite) {
            std::ostringstream log;
            const bool ok = run_verification(suite, false, log);
            return py::make_tuple(ok, log.str());
        },
        py::arg("suite") = "all");
}
