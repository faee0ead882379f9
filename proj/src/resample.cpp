#include "waferssl/resample.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace waferssl {

void ResamplePlan::validate() const {
    if (target_per_class < 1) raise(ErrorCode::ConfigInvalid, "target_per_class must be >= 1");
    if (smote_k < 1) raise(ErrorCode::ConfigInvalid, "smote_k must be >= 1");
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

std::vector<std::vector<std::size_t>> knn_indices(const std::vector<std::vector<double>>& points,
                                                  std::size_t k) {
    const std::size_t n = points.size();
    if (k < 1 || k >= n) {
        raise(ErrorCode::BadK, "k must satisfy 1 <= k <= n-1 (k=" + std::to_string(k) +
                                   ", n=" + std::to_string(n) + ")");
    }
    std::vector<std::vector<std::size_t>> result(n);
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t i = 0; i < n; ++i) {
        cand.clear();
        cand.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            cand.emplace_back(squared_distance(points[i], points[j]), j);
        }
        auto mid = cand.begin() + static_cast<std::ptrdiff_t>(k);
        std::nth_element(cand.begin(), mid - 1, cand.end());
        std::sort(cand.begin(), mid);
        result[i].reserve(k);
        for (auto it = cand.begin(); it != mid; ++it) result[i].push_back(it->second);
    }
    return result;
}

std::vector<std::vector<double>> smote_oversample(const std::vector<std::vector<double>>& class_samples,
                                                  std::size_t n_synthetic, std::size_t k,
                                                  std::uint64_t seed) {
    if (class_samples.size() < 2) {
        raise(ErrorCode::TooFewSamples, "SMOTE needs at least 2 samples, got " +
                                            std::to_string(class_samples.size()));
    }
    if (k < 1 || k >= class_samples.size()) {
        raise(ErrorCode::BadK, "k must satisfy 1 <= k <= n-1 (k=" + std::to_string(k) +
                                   ", n=" + std::to_string(class_samples.size()) + ")");
    }
    const std::size_t dim = class_samples.front().size();
    for (const auto& v : class_samples) {
        if (v.size() != dim) raise(ErrorCode::ShapeMismatch, "class samples have mixed dimensions");
    }
    std::vector<std::vector<double>> out;
    out.reserve(n_synthetic);
    if (n_synthetic == 0) return out;

    const auto neighbors = knn_indices(class_samples, k);
    Rng rng(derive_seed(seed, {0x514e3a9bd2c7ULL}));
    for (std::size_t s = 0; s < n_synthetic; ++s) {
        const std::size_t i = static_cast<std::size_t>(rng.uniform_below(class_samples.size()));
        const std::size_t nn = neighbors[i][static_cast<std::size_t>(rng.uniform_below(k))];
        const double lambda = rng.uniform();
        std::vector<double> v(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            v[d] = class_samples[i][d] + lambda * (class_samples[nn][d] - class_samples[i][d]);
        }
        out.push_back(std::move(v));
    }
    return out;
}

namespace {

// Inverse of the one-hot flattening used for SMOTE: per die, pick the state
// with the largest channel value, ties going to the lower state.
WaferMap discretize_encoding(const std::vector<double>& flat, int height, int width, int label) {
    WaferMap w;
    w.height = height;
    w.width = width;
    w.label = label;
    const std::size_t plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    w.grid.resize(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        int best = 0;
        double best_v = flat[p];
        for (int s = 1; s < 3; ++s) {
            const double v = flat[s * plane + p];
            if (v > best_v) {
                best_v = v;
                best = s;
            }
        }
        w.grid[p] = static_cast<std::uint8_t>(best);
    }
    return w;
}

}  // namespace

Dataset balance_dataset(const Dataset& dataset, const ResamplePlan& plan) {
    plan.validate();
    if (dataset.unlabeled_count > 0) {
        raise(ErrorCode::UnlabeledInput, "balance_dataset requires a fully labeled dataset");
    }
    std::array<std::vector<WaferMap>, kNumClasses> by_class;
    for (const WaferMap& w : dataset.records) {
        by_class[static_cast<std::size_t>(*w.label)].push_back(w);
    }

    Dataset out;
    for (int c = 0; c < kNumClasses; ++c) {
        auto& members = by_class[static_cast<std::size_t>(c)];
        const std::size_t count = members.size();
        if (count == 0) continue;  // absent classes stay absent
        const std::uint64_t class_seed = derive_seed(plan.seed, {0xba1a9ceULL, static_cast<std::uint64_t>(c)});
        if (count == plan.target_per_class) {
            for (auto& w : members) out.push(std::move(w));
        } else if (count > plan.target_per_class) {
            for (auto& w : undersample(members, plan.target_per_class, class_seed)) out.push(std::move(w));
        } else {
            if (count < 2) {
                raise(ErrorCode::TooFewSamples, "class " + class_name(c) + " has " + std::to_string(count) +
                                                    " record(s); over-sampling needs at least 2");
            }
            std::size_t k = plan.smote_k;
            if (k >= count) {
                if (!plan.allow_k_clamp) {
                    raise(ErrorCode::BadK, "class " + class_name(c) + ": k=" + std::to_string(k) +
                                               " >= class count " + std::to_string(count) +
                                               " (enable k clamping or lower k)");
                }
                k = count - 1;
                std::cerr << "warning: clamping SMOTE k to " << k << " for class " << class_name(c) << "\n";
            }
            const int h = members.front().height;
            const int wdt = members.front().width;
            std::vector<std::vector<double>> vectors;
            vectors.reserve(count);
            for (const WaferMap& w : members) {
                Tensor t = encode_input(w, h, wdt);
                vectors.push_back(std::move(t.data));
            }
            const auto synthetic =
                smote_oversample(vectors, plan.target_per_class - count, k, class_seed);
            for (auto& w : members) out.push(std::move(w));
            for (const auto& flat : synthetic) {
                out.push(discretize_encoding(flat, h, wdt, c));
            }
        }
    }
    return out;
}

}  // namespace waferssl
