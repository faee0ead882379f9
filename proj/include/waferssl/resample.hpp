#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waferssl/dataset.hpp"
#include "waferssl/errors.hpp"
#include "waferssl/rng.hpp"

namespace waferssl {

struct ResamplePlan {
    std::size_t target_per_class = 0;
    std::size_t smote_k = 5;
    std::uint64_t seed = 0;
    bool allow_k_clamp = false;  // clamp k to class_count-1 (with a warning) instead of failing

    void validate() const;
};

// Indices of the k Euclidean nearest neighbors of each point (self excluded),
// ties broken by lower index. Selection-based; the O(n^2) full-sort oracle
// lives in the test suite.
std::vector<std::vector<std::size_t>> knn_indices(const std::vector<std::vector<double>>& points,
                                                  std::size_t k);

// SMOTE: each synthetic vector is x_i + lambda * (x_nn - x_i) with lambda
// uniform in [0,1] and x_nn one of the k nearest neighbors of a randomly
// chosen x_i. Deterministic in seed.
std::vector<std::vector<double>> smote_oversample(const std::vector<std::vector<double>>& class_samples,
                                                  std::size_t n_synthetic, std::size_t k,
                                                  std::uint64_t seed);

// Uniform random subset without replacement of size target, preserving the
// relative order of the survivors (selection sampling).
template <typename T>
std::vector<T> undersample(const std::vector<T>& class_samples, std::size_t target, std::uint64_t seed) {
    if (target > class_samples.size()) {
        raise(ErrorCode::TargetTooLarge, "target " + std::to_string(target) + " exceeds sample count " +
                                             std::to_string(class_samples.size()));
    }
    Rng rng(derive_seed(seed, {0x7c6e2aa14ff1ULL}));
    std::vector<T> out;
    out.reserve(target);
    std::size_t remaining = class_samples.size();
    std::size_t needed = target;
    for (std::size_t i = 0; i < class_samples.size() && needed > 0; ++i, --remaining) {
        if (rng.uniform_below(remaining) < needed) {
            out.push_back(class_samples[i]);
            --needed;
        }
    }
    return out;
}

// Rebalances every class to exactly target_per_class records. Minority classes
// are filled with SMOTE over flattened one-hot encodings, re-discretized per
// die by channel argmax (ties -> lower state); majority classes are randomly
// under-sampled.
Dataset balance_dataset(const Dataset& dataset, const ResamplePlan& plan);

}  // namespace waferssl
