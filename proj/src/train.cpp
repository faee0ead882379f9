#include "waferssl/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <tuple>

#include "waferssl/errors.hpp"
#include "waferssl/rng.hpp"

namespace waferssl {

void TrainConfig::validate() const {
    if (batch_labeled < 1 || batch_unlabeled < 1) raise(ErrorCode::ConfigInvalid, "batch sizes must be >= 1");
    if (!(lr > 0.0)) raise(ErrorCode::ConfigInvalid, "lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) raise(ErrorCode::ConfigInvalid, "momentum must be in [0,1)");
    if (!(ema_alpha >= 0.0 && ema_alpha <= 1.0)) raise(ErrorCode::ConfigInvalid, "ema_alpha must be in [0,1]");
    if (eval_every < 1) raise(ErrorCode::ConfigInvalid, "eval_every must be >= 1");
    loss.validate();
    augment.validate();
}

namespace {

// Seed-stream tags for the independent random choices of a run.
constexpr std::uint64_t kInitStream = 0x01;
constexpr std::uint64_t kLabeledShuffle = 0x02;
constexpr std::uint64_t kUnlabeledShuffle = 0x03;
constexpr std::uint64_t kAugmentStream = 0x04;

Tensor encode_batch(const std::vector<const WaferMap*>& wafers, const ModelConfig& cfg) {
    const int n = static_cast<int>(wafers.size());
    Tensor batch({n, cfg.input_channels, cfg.input_height, cfg.input_width});
    const std::size_t stride = Tensor::numel_of({cfg.input_channels, cfg.input_height, cfg.input_width});
    for (int i = 0; i < n; ++i) {
        Tensor one = encode_input(*wafers[i], cfg.input_height, cfg.input_width);
        std::copy(one.data.begin(), one.data.end(), batch.data.begin() + i * stride);
    }
    return batch;
}

Tensor slice_rows(const Tensor& m, std::size_t row_begin, std::size_t row_count) {
    const std::size_t cols = static_cast<std::size_t>(m.shape[1]);
    Tensor out({static_cast<int>(row_count), m.shape[1]});
    std::copy(m.data.begin() + row_begin * cols, m.data.begin() + (row_begin + row_count) * cols,
              out.data.begin());
    return out;
}

// Cyclic shuffled walk over unlabeled indices; reshuffles on wrap-around.
class UnlabeledSampler {
public:
    UnlabeledSampler(std::size_t count, std::uint64_t seed) : count_(count), seed_(seed) {
        order_.resize(count);
        for (std::size_t i = 0; i < count; ++i) order_[i] = i;
        if (count_ > 0) reshuffle();
    }

    std::vector<std::size_t> take(std::size_t n) {
        std::vector<std::size_t> out;
        if (count_ == 0) return out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (cursor_ == count_) reshuffle();
            out.push_back(order_[cursor_++]);
        }
        return out;
    }

private:
    void reshuffle() {
        Rng rng(derive_seed(seed_, {kUnlabeledShuffle, reshuffles_++}));
        rng.shuffle(order_);
        cursor_ = 0;
    }

    std::size_t count_;
    std::uint64_t seed_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::uint64_t reshuffles_ = 0;
};

}  // namespace

MetricsReport evaluate_checkpoint(const ParamSet& params, const Dataset& dataset,
                                  const ModelConfig& model_config) {
    if (!dataset.fully_labeled()) {
        raise(ErrorCode::UnlabeledInput, "evaluation dataset must be fully labeled");
    }
    if (dataset.empty()) raise(ErrorCode::EmptyMatrix, "evaluation dataset is empty");
    std::vector<int> preds, truths;
    preds.reserve(dataset.size());
    truths.reserve(dataset.size());
    const std::size_t chunk = 64;
    for (std::size_t begin = 0; begin < dataset.size(); begin += chunk) {
        const std::size_t n = std::min(chunk, dataset.size() - begin);
        std::vector<const WaferMap*> wafers(n);
        for (std::size_t i = 0; i < n; ++i) wafers[i] = &dataset.records[begin + i];
        const Tensor inputs = encode_batch(wafers, model_config);
        const BatchOutput out = forward(params, model_config, inputs, /*train_mode=*/false, nullptr);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = &out.logits.data[i * static_cast<std::size_t>(model_config.num_classes)];
            int best = 0;
            for (int c = 1; c < model_config.num_classes; ++c) {
                if (row[c] > row[best]) best = c;
            }
            preds.push_back(best);
            truths.push_back(*dataset.records[begin + i].label);
        }
    }
    return compute_metrics(confusion(preds, truths));
}

TrainResult train(const Dataset& labeled, const Dataset& unlabeled, const Dataset& val,
                  const ModelConfig& model_config, const TrainConfig& cfg,
                  const EpochCallback& on_eval) {
    model_config.validate();
    cfg.validate();
    if (labeled.empty()) raise(ErrorCode::EmptyLabeledSet, "labeled dataset is empty");
    if (!labeled.fully_labeled()) raise(ErrorCode::UnlabeledInput, "labeled dataset contains unlabeled records");
    if (!val.empty() && !val.fully_labeled()) {
        raise(ErrorCode::UnlabeledInput, "validation dataset must be fully labeled");
    }

    TrainResult result;
    result.student = init_params(model_config, derive_seed(cfg.seed, {kInitStream}));
    result.teacher = result.student;
    result.velocity = zero_grads(result.student);

    UnlabeledSampler unlabeled_sampler(unlabeled.size(), cfg.seed);
    std::vector<std::size_t> labeled_order(labeled.size());
    for (std::size_t i = 0; i < labeled_order.size(); ++i) labeled_order[i] = i;

    std::uint64_t global_step = 0;
    const std::size_t steps_per_epoch =
        (labeled.size() + cfg.batch_labeled - 1) / cfg.batch_labeled;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        {
            Rng rng(derive_seed(cfg.seed, {kLabeledShuffle, epoch}));
            rng.shuffle(labeled_order);
        }
        double sum_cls = 0.0, sum_cons = 0.0, sum_sup = 0.0, sum_total = 0.0;

        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const std::size_t lab_begin = step * cfg.batch_labeled;
            const std::size_t n_lab = std::min(cfg.batch_labeled, labeled.size() - lab_begin);
            const auto unlab_idx = unlabeled_sampler.take(cfg.batch_unlabeled);
            const std::size_t n_unlab = unlab_idx.size();
            const std::size_t n = n_lab + n_unlab;

            std::vector<const WaferMap*> originals(n);
            std::vector<int> labels(n_lab);
            for (std::size_t i = 0; i < n_lab; ++i) {
                originals[i] = &labeled.records[labeled_order[lab_begin + i]];
                labels[i] = *originals[i]->label;
            }
            for (std::size_t i = 0; i < n_unlab; ++i) {
                originals[n_lab + i] = &unlabeled.records[unlab_idx[i]];
            }

            // Independent augmentation draws for the two networks.
            std::vector<WaferMap> student_views(n), teacher_views(n);
            std::vector<const WaferMap*> student_ptrs(n), teacher_ptrs(n);
            for (std::size_t i = 0; i < n; ++i) {
                student_views[i] = augment(*originals[i], cfg.augment,
                                           derive_seed(cfg.seed, {kAugmentStream, global_step, i, 0}));
                student_ptrs[i] = &student_views[i];
                if (cfg.augment_teacher) {
                    teacher_views[i] = augment(*originals[i], cfg.augment,
                                               derive_seed(cfg.seed, {kAugmentStream, global_step, i, 1}));
                    teacher_ptrs[i] = &teacher_views[i];
                } else {
                    teacher_ptrs[i] = originals[i];
                }
            }

            const Tensor student_inputs = encode_batch(student_ptrs, model_config);
            const Tensor teacher_inputs = encode_batch(teacher_ptrs, model_config);

            ForwardCache cache;
            const BatchOutput student_out =
                forward(result.student, model_config, student_inputs, /*train_mode=*/true, &cache);
            const BatchOutput teacher_out =
                forward(result.teacher, model_config, teacher_inputs, /*train_mode=*/true, nullptr);

            // Classification and contrastive terms on the labeled rows.
            const Tensor labeled_logits = slice_rows(student_out.logits, 0, n_lab);
            auto [cls_loss, cls_grad] = softmax_cross_entropy(labeled_logits, labels);
            double sup_loss = 0.0;
            Tensor sup_grad({static_cast<int>(n_lab), model_config.proj_dim});
            if (n_lab >= 2) {
                const Tensor labeled_proj = slice_rows(student_out.projections, 0, n_lab);
                std::tie(sup_loss, sup_grad) = supcon_loss(labeled_proj, labels, cfg.loss);
            }

            // Consistency between the two networks' softmax outputs.
            const std::size_t cons_begin = cfg.consistency_on_labeled ? 0 : n_lab;
            const std::size_t cons_count = n - cons_begin;
            double cons_loss = 0.0;
            Tensor cons_grad;
            if (cons_count > 0) {
                const Tensor s_rows = slice_rows(student_out.logits, cons_begin, cons_count);
                const Tensor t_rows = slice_rows(teacher_out.logits, cons_begin, cons_count);
                std::tie(cons_loss, cons_grad) = consistency_loss(s_rows, t_rows);
            }

            const LossBreakdown breakdown =
                total_loss(cls_loss, cons_loss, sup_loss, cfg.loss, global_step);
            sum_cls += breakdown.classification;
            sum_cons += breakdown.consistency;
            sum_sup += breakdown.supcontrast;
            sum_total += breakdown.total;

            // Assemble output gradients of the weighted total.
            const double w_cons =
                cfg.loss.consistency_weight_max * consistency_ramp(global_step, cfg.loss.rampup_steps);
            Tensor d_logits({static_cast<int>(n), model_config.num_classes});
            const std::size_t ncls = static_cast<std::size_t>(model_config.num_classes);
            for (std::size_t i = 0; i < n_lab; ++i) {
                for (std::size_t c = 0; c < ncls; ++c) {
                    d_logits.data[i * ncls + c] +=
                        cfg.loss.classification_weight * cls_grad.data[i * ncls + c];
                }
            }
            if (cons_count > 0 && w_cons != 0.0) {
                for (std::size_t i = 0; i < cons_count; ++i) {
                    for (std::size_t c = 0; c < ncls; ++c) {
                        d_logits.data[(cons_begin + i) * ncls + c] += w_cons * cons_grad.data[i * ncls + c];
                    }
                }
            }
            Tensor d_proj({static_cast<int>(n), model_config.proj_dim});
            if (n_lab >= 2 && cfg.loss.supcon_weight != 0.0) {
                const std::size_t pdim = static_cast<std::size_t>(model_config.proj_dim);
                for (std::size_t i = 0; i < n_lab; ++i) {
                    for (std::size_t d = 0; d < pdim; ++d) {
                        d_proj.data[i * pdim + d] = cfg.loss.supcon_weight * sup_grad.data[i * pdim + d];
                    }
                }
            }

            const ParamGrads grads =
                backward(result.student, model_config, cache, Tensor(), d_proj, d_logits);
            update_running_stats(result.student, cache);
            sgd_step(result.student, grads, cfg.lr, cfg.momentum, result.velocity);
            ema_update(result.teacher, result.student, cfg.ema_alpha);
            ++global_step;
        }

        EpochRecord record;
        record.epoch = epoch;
        const double denom = static_cast<double>(steps_per_epoch);
        record.losses.classification = sum_cls / denom;
        record.losses.consistency = sum_cons / denom;
        record.losses.supcontrast = sum_sup / denom;
        record.losses.total = sum_total / denom;
        if (!val.empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
            record.val = evaluate_checkpoint(result.teacher, val, model_config);
            record.evaluated = true;
        }
        record.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
        if (record.evaluated && on_eval) {
            on_eval(record, result.student, result.teacher, result.velocity, global_step);
        }
        result.history.epochs.push_back(std::move(record));
    }
    result.steps = global_step;
    return result;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(ErrorCode::Io, "cannot write history file: " + path);
    out << "epoch,classification,consistency,supcontrast,total,val_accuracy,val_macro_precision,"
           "val_macro_recall,val_macro_f1\n";
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const EpochRecord& r : history.epochs) {
        out << r.epoch << ',' << fmt(r.losses.classification) << ',' << fmt(r.losses.consistency) << ','
            << fmt(r.losses.supcontrast) << ',' << fmt(r.losses.total);
        if (r.evaluated) {
            out << ',' << fmt(r.val.accuracy) << ',' << fmt(r.val.macro_precision) << ','
                << fmt(r.val.macro_recall) << ',' << fmt(r.val.macro_f1);
        } else {
            out << ",nan,nan,nan,nan";
        }
        out << '\n';
    }
    if (!out) raise(ErrorCode::Io, "write failure on " + path);
}

}  // namespace waferssl
