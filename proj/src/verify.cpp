#include "waferssl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "waferssl/dataset.hpp"
#include "waferssl/errors.hpp"
#include "waferssl/losses.hpp"
#include "waferssl/model.hpp"
#include "waferssl/resample.hpp"
#include "waferssl/rng.hpp"

namespace waferssl {

namespace {

constexpr double kFdStep = 1e-5;

double rel_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1.0});
    return std::fabs(analytic - numeric) / denom;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.input_height = 8;
    cfg.input_width = 8;
    cfg.stem_channels = 4;
    cfg.blocks = 1;
    cfg.embed_dim = 8;
    cfg.proj_dim = 4;
    return cfg;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Scalar probe: fixed random linear functional over the three model outputs.
struct Probe {
    Tensor c_emb, c_proj, c_logits;

    double operator()(const BatchOutput& out) const {
        double s = 0.0;
        for (std::size_t i = 0; i < c_emb.data.size(); ++i) s += c_emb.data[i] * out.embeddings.data[i];
        for (std::size_t i = 0; i < c_proj.data.size(); ++i) s += c_proj.data[i] * out.projections.data[i];
        for (std::size_t i = 0; i < c_logits.data.size(); ++i) s += c_logits.data[i] * out.logits.data[i];
        return s;
    }
};

double model_gradient_worst_error(bool inject_fault) {
    const ModelConfig cfg = tiny_config();
    Rng rng(20240811);
    ParamSet params = init_params(cfg, 77);
    const int batch = 3;
    const Tensor inputs = random_tensor({batch, 3, cfg.input_height, cfg.input_width}, rng, 0.0, 1.0);
    Probe probe{random_tensor({batch, cfg.embed_dim}, rng), random_tensor({batch, cfg.proj_dim}, rng),
                random_tensor({batch, cfg.num_classes}, rng)};

    ForwardCache cache;
    forward(params, cfg, inputs, /*train_mode=*/true, &cache);
    ParamGrads analytic = backward(params, cfg, cache, probe.c_emb, probe.c_proj, probe.c_logits);
    if (inject_fault && !analytic.empty() && !analytic[0].data.empty()) {
        analytic[0].data[0] = -analytic[0].data[0] - 1.0;
    }

    double worst = 0.0;
    for (std::size_t e = 0; e < params.entries.size(); ++e) {
        if (params.entries[e].is_buffer) continue;
        Tensor& value = params.entries[e].value;
        for (std::size_t i = 0; i < value.data.size(); ++i) {
            const double saved = value.data[i];
            value.data[i] = saved + kFdStep;
            const double up = probe(forward(params, cfg, inputs, true, nullptr));
            value.data[i] = saved - kFdStep;
            const double down = probe(forward(params, cfg, inputs, true, nullptr));
            value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * kFdStep);
            worst = std::max(worst, rel_error(analytic[e].data[i], numeric));
        }
    }
    return worst;
}

template <typename LossFn>
double loss_fd_worst_error(Tensor& inputs, LossFn&& fn, const Tensor& analytic_grad) {
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.data.size(); ++i) {
        const double saved = inputs.data[i];
        inputs.data[i] = saved + kFdStep;
        const double up = fn(inputs);
        inputs.data[i] = saved - kFdStep;
        const double down = fn(inputs);
        inputs.data[i] = saved;
        const double numeric = (up - down) / (2.0 * kFdStep);
        worst = std::max(worst, rel_error(analytic_grad.data[i], numeric));
    }
    return worst;
}

double loss_gradients_worst_error(bool inject_fault) {
    Rng rng(555);
    double worst = 0.0;

    {
        Tensor logits = random_tensor({4, 9}, rng, -2.0, 2.0);
        std::vector<int> labels = {3, 0, 8, 5};
        auto [loss, grad] = softmax_cross_entropy(logits, labels);
        (void)loss;
        if (inject_fault) grad.data[0] = -grad.data[0] - 1.0;
        worst = std::max(worst, loss_fd_worst_error(
                                    logits,
                                    [&](const Tensor& t) { return softmax_cross_entropy(t, labels).first; },
                                    grad));
    }
    {
        Tensor student = random_tensor({4, 9}, rng, -2.0, 2.0);
        const Tensor teacher = random_tensor({4, 9}, rng, -2.0, 2.0);
        auto [loss, grad] = consistency_loss(student, teacher);
        (void)loss;
        worst = std::max(worst, loss_fd_worst_error(
                                    student,
                                    [&](const Tensor& t) { return consistency_loss(t, teacher).first; },
                                    grad));
    }
    {
        LossConfig lcfg;
        lcfg.temperature = 0.1;
        Tensor proj = random_tensor({6, 5}, rng, -1.0, 1.0);
        const std::vector<int> labels = {0, 0, 0, 1, 1, 2};
        auto [loss, grad] = supcon_loss(proj, labels, lcfg);
        (void)loss;
        worst = std::max(worst, loss_fd_worst_error(
                                    proj,
                                    [&](const Tensor& t) { return supcon_loss(t, labels, lcfg).first; },
                                    grad));
    }
    return worst;
}

}  // namespace

SuiteResult verify_model_gradients(bool inject_fault) {
    SuiteResult result;
    result.name = "grad-model";
    result.threshold = 1e-4;
    result.worst_error = model_gradient_worst_error(inject_fault);
    result.pass = result.worst_error < result.threshold;
    return result;
}

SuiteResult verify_loss_gradients(bool inject_fault) {
    SuiteResult result;
    result.name = "grad-losses";
    result.threshold = 1e-6;
    result.worst_error = loss_gradients_worst_error(inject_fault);
    result.pass = result.worst_error < result.threshold;
    return result;
}

// Literal transcription of the contrastive objective: explicit double loop,
// unstabilized exponentials. Kept deliberately independent of supcon_loss.
double supcon_naive(const Tensor& projections, const std::vector<int>& labels, double temperature,
                    bool include_anchor) {
    const std::size_t batch = static_cast<std::size_t>(projections.shape[0]);
    const std::size_t dim = static_cast<std::size_t>(projections.shape[1]);
    std::vector<std::vector<double>> z(batch, std::vector<double>(dim));
    for (std::size_t i = 0; i < batch; ++i) {
        double norm = 0.0;
        for (std::size_t d = 0; d < dim; ++d) norm += projections.data[i * dim + d] * projections.data[i * dim + d];
        norm = std::sqrt(norm);
        for (std::size_t d = 0; d < dim; ++d) z[i][d] = projections.data[i * dim + d] / norm;
    }
    auto dot = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t d = 0; d < dim; ++d) s += z[a][d] * z[b][d];
        return s;
    };
    double total = 0.0;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < batch; ++i) {
        std::vector<std::size_t> positives;
        for (std::size_t p = 0; p < batch; ++p) {
            if (p != i && labels[p] == labels[i]) positives.push_back(p);
        }
        if (positives.empty()) continue;
        double term = 0.0;
        for (std::size_t p : positives) {
            double denom = 0.0;
            for (std::size_t a = 0; a < batch; ++a) {
                if (a == i && !include_anchor) continue;
                denom += std::exp(dot(i, a) / temperature);
            }
            term += -std::log(std::exp(dot(i, p) / temperature) / denom);
        }
        total += term / static_cast<double>(positives.size());
        ++valid;
    }
    return valid == 0 ? 0.0 : total / static_cast<double>(valid);
}

SuiteResult verify_supcon_oracle(bool inject_fault) {
    SuiteResult result;
    result.name = "supcon-oracle";
    result.threshold = 1e-9;
    Rng rng(31415);
    double worst = 0.0;

    auto check = [&](std::size_t batch, std::size_t dim, const std::vector<int>& labels, double tau,
                     bool include_anchor) {
        LossConfig cfg;
        cfg.temperature = tau;
        cfg.include_anchor_in_denominator = include_anchor;
        Tensor proj({static_cast<int>(batch), static_cast<int>(dim)});
        for (double& v : proj.data) v = rng.uniform(-1.0, 1.0);
        const double fast = supcon_loss(proj, labels, cfg).first;
        double naive = supcon_naive(proj, labels, tau, include_anchor);
        if (inject_fault) naive += 1e-3;
        worst = std::max(worst, std::fabs(fast - naive));
    };

    // Edge cases: B=2 same label (exactly zero) and all-distinct labels (zero).
    {
        LossConfig cfg;
        Tensor proj({2, 4});
        for (double& v : proj.data) v = rng.uniform(-1.0, 1.0);
        worst = std::max(worst, std::fabs(supcon_loss(proj, {4, 4}, cfg).first));
        Tensor proj6({6, 4});
        for (double& v : proj6.data) v = rng.uniform(-1.0, 1.0);
        worst = std::max(worst, std::fabs(supcon_loss(proj6, {0, 1, 2, 3, 4, 5}, cfg).first));
    }

    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t batch = 2 + rng.uniform_below(15);   // 2..16
        const std::size_t dim = 2 + rng.uniform_below(7);      // 2..8
        std::vector<int> labels(batch);
        const int pattern = static_cast<int>(rng.uniform_below(4));
        for (std::size_t i = 0; i < batch; ++i) {
            switch (pattern) {
                case 0: labels[i] = static_cast<int>(rng.uniform_below(3)); break;       // few classes
                case 1: labels[i] = static_cast<int>(rng.uniform_below(9)); break;       // many classes
                case 2: labels[i] = static_cast<int>(i) % 2; break;                      // two halves
                default: labels[i] = static_cast<int>(i); break;                         // all distinct
            }
        }
        const double tau = trial % 2 == 0 ? 0.1 : 0.5;
        check(batch, dim, labels, tau, trial % 3 == 0);
    }
    result.worst_error = worst;
    result.pass = worst < result.threshold;
    return result;
}

SuiteResult verify_ema_contraction(bool inject_fault) {
    SuiteResult result;
    result.name = "ema-contraction";
    result.threshold = 1e-12;
    const ModelConfig cfg = tiny_config();
    const double alpha = 0.99;
    const ParamSet initial_teacher = init_params(cfg, 11);
    const ParamSet student = init_params(cfg, 22);

    double worst = 0.0;
    for (int t : {1, 10, 100}) {
        ParamSet teacher = initial_teacher;
        for (int step = 0; step < t; ++step) ema_update(teacher, student, alpha);
        const double decay = std::pow(alpha, t);
        for (std::size_t e = 0; e < teacher.entries.size(); ++e) {
            const auto& got = teacher.entries[e].value.data;
            const auto& s = student.entries[e].value.data;
            const auto& t0 = initial_teacher.entries[e].value.data;
            for (std::size_t i = 0; i < got.size(); ++i) {
                const double expected = s[i] + decay * (t0[i] - s[i]);
                worst = std::max(worst, std::fabs(got[i] - expected));
            }
        }
    }
    if (inject_fault) worst += 1e-6;
    result.worst_error = worst;
    result.pass = worst < result.threshold;
    return result;
}

namespace {

// Full-sort O(n^2) neighbor oracle; ties broken by index, matching the
// implementation's ordering contract.
std::vector<std::vector<std::size_t>> knn_bruteforce(const std::vector<std::vector<double>>& points,
                                                     std::size_t k) {
    std::vector<std::vector<std::size_t>> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t j = 0; j < points.size(); ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (std::size_t d = 0; d < points[i].size(); ++d) {
                const double diff = points[i][d] - points[j][d];
                d2 += diff * diff;
            }
            all.emplace_back(d2, j);
        }
        std::sort(all.begin(), all.end());
        for (std::size_t j = 0; j < k; ++j) out[i].push_back(all[j].second);
    }
    return out;
}

}  // namespace

SuiteResult verify_smote_properties(bool inject_fault) {
    SuiteResult result;
    result.name = "smote";
    result.threshold = 1e-9;
    Rng rng(2718);
    double worst = 0.0;

    // 1,000 synthetic points from 2-D clusters must lie on a segment between
    // some sample and one of its k nearest neighbors.
    {
        std::vector<std::vector<double>> samples;
        const double centers[3][2] = {{0.0, 0.0}, {5.0, 1.0}, {-2.0, 4.0}};
        for (const auto& center : centers) {
            for (int i = 0; i < 40; ++i) {
                samples.push_back({center[0] + rng.uniform(-1.0, 1.0), center[1] + rng.uniform(-1.0, 1.0)});
            }
        }
        const std::size_t k = 5;
        const auto synthetic = smote_oversample(samples, 1000, k, 99);
        const auto neighbors = knn_indices(samples, k);
        for (const auto& p : synthetic) {
            double best = 1e300;
            for (std::size_t i = 0; i < samples.size() && best > 0.0; ++i) {
                for (std::size_t nn : neighbors[i]) {
                    const auto& a = samples[i];
                    const auto& b = samples[nn];
                    // residual: distance from the segment [a, b] plus any
                    // per-coordinate convexity violation
                    double residual = std::fabs((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]));
                    for (int d = 0; d < 2; ++d) {
                        residual = std::max(residual, std::min(a[d], b[d]) - p[d]);
                        residual = std::max(residual, p[d] - std::max(a[d], b[d]));
                    }
                    best = std::min(best, residual);
                }
            }
            worst = std::max(worst, best);
        }
    }

    // k-NN against the full-sort oracle.
    {
        double mismatches = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t n = 2 + rng.uniform_below(63);  // 2..64
            const std::size_t dim = 1 + rng.uniform_below(4);
            const std::size_t k = 1 + rng.uniform_below(std::min<std::size_t>(8, n - 1));
            std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
            for (auto& p : pts) {
                for (double& v : p) v = rng.uniform(-3.0, 3.0);
            }
            const auto fast = knn_indices(pts, k);
            const auto brute = knn_bruteforce(pts, k);
            if (fast != brute) mismatches += 1.0;
        }
        worst = std::max(worst, mismatches);
    }

    // balance_dataset must produce exactly uniform class counts.
    {
        std::array<std::size_t, kNumClasses> counts{};
        counts.fill(10);
        counts[static_cast<std::size_t>(ClassLabel::None)] = 30;
        counts[static_cast<std::size_t>(ClassLabel::Donut)] = 4;
        Dataset skewed = generate_synthetic_dataset(counts, 16, 16, 5, 0.02);
        ResamplePlan plan;
        plan.target_per_class = 12;
        plan.smote_k = 3;
        plan.seed = 7;
        const Dataset balanced = balance_dataset(skewed, plan);
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const double deviation = std::fabs(static_cast<double>(balanced.counts_per_class[c]) - 12.0);
            worst = std::max(worst, deviation);
        }
        balanced.validate();
    }

    if (inject_fault) worst += 1.0;
    result.worst_error = worst;
    result.pass = worst < result.threshold;
    return result;
}

bool run_verification(const std::string& suite, bool inject_fault, std::ostream& out) {
    std::vector<SuiteResult> results;
    const bool all = suite.empty() || suite == "all";
    if (all || suite == "grad") {
        results.push_back(verify_model_gradients(inject_fault));
        results.push_back(verify_loss_gradients(inject_fault));
    }
    if (all || suite == "supcon") results.push_back(verify_supcon_oracle(inject_fault));
    if (all || suite == "ema") results.push_back(verify_ema_contraction(inject_fault));
    if (all || suite == "smote") results.push_back(verify_smote_properties(inject_fault));
    if (results.empty()) {
        raise(ErrorCode::ConfigInvalid, "unknown suite '" + suite + "' (grad, supcon, ema, smote, all)");
    }
    bool ok = true;
    char buf[160];
    for (const SuiteResult& r : results) {
        std::snprintf(buf, sizeof(buf), "%-14s %-4s worst-case error %.3e (threshold %.1e)",
                      r.name.c_str(), r.pass ? "PASS" : "FAIL", r.worst_error, r.threshold);
        out << buf << '\n';
        ok = ok && r.pass;
    }
    return ok;
}

}  // namespace waferssl
