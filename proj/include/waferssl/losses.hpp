#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "waferssl/tensor.hpp"

namespace waferssl {

struct LossConfig {
    double temperature = 0.1;
    double consistency_weight_max = 1.0;
    double supcon_weight = 1.0;
    double classification_weight = 1.0;
    bool include_anchor_in_denominator = false;
    std::size_t rampup_steps = 0;  // 0 = constant consistency weight

    void validate() const;
};

// The three raw loss terms plus their weighted total.
struct LossBreakdown {
    double classification = 0.0;
    double consistency = 0.0;
    double supcontrast = 0.0;
    double total = 0.0;
};

// B x B binary positive-pair mask; M[i][j] = 1 iff labels i and j are equal.
// Identity when no labels are given (the unsupervised / SimCLR reading).
struct SupConMask {
    std::size_t batch = 0;
    std::vector<std::uint8_t> m;  // row-major

    std::uint8_t at(std::size_t i, std::size_t j) const { return m[i * batch + j]; }
};

// Mean over the batch of -log softmax(logits)[label]; gradient is
// (softmax - onehot) / B. Max-subtraction stabilized.
std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// MSE between softmax(student) and softmax(teacher), averaged over batch and
// classes. Gradient flows to the student logits only.
std::pair<double, Tensor> consistency_loss(const Tensor& student_logits, const Tensor& teacher_logits);

// Row-wise Euclidean normalization. Rows with norm < 1e-12 raise ZeroNorm.
Tensor l2_normalize(const Tensor& vectors);

// Supervised contrastive loss over l2-normalized projections. Positives are
// same-label rows (anchor excluded); the denominator set excludes the anchor
// unless config.include_anchor_in_denominator. Anchors without positives
// contribute zero and are excluded from the average. The gradient is taken
// with respect to the raw (pre-normalization) projections.
std::pair<double, Tensor> supcon_loss(const Tensor& projections, const std::vector<int>& labels,
                                      const LossConfig& config);

SupConMask build_mask(const std::optional<std::vector<int>>& labels, std::size_t batch);

// Sigmoid-shaped consistency ramp: exp(-5 (1 - min(step/rampup, 1))^2),
// or 1 when rampup_steps == 0.
double consistency_ramp(std::size_t step, std::size_t rampup_steps);

LossBreakdown total_loss(double classification, double consistency, double supcontrast,
                         const LossConfig& config, std::size_t step);

}  // namespace waferssl
