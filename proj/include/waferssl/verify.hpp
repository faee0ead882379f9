#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "waferssl/tensor.hpp"

namespace waferssl {

struct SuiteResult {
    std::string name;
    double worst_error = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

// Analytic model backward (and, separately, each loss gradient) vs central
// finite differences (64-bit, step 1e-5). inject_fault flips the sign of one
// analytic component so the failure path is testable.
SuiteResult verify_model_gradients(bool inject_fault = false);
SuiteResult verify_loss_gradients(bool inject_fault = false);

// Vectorized supcon vs a naive double-loop transcription over random batches
// (B <= 16, D <= 8) plus the all-distinct and B=2-same-label edge cases.
SuiteResult verify_supcon_oracle(bool inject_fault = false);

// Frozen-student EMA after t in {1, 10, 100} updates vs the closed form
// theta_s + alpha^t (theta_0 - theta_s).
SuiteResult verify_ema_contraction(bool inject_fault = false);

// SMOTE segment membership for 1,000 synthetic 2-D points, k-NN vs an O(n^2)
// full-sort oracle on 50 inputs of size <= 64, and exact-uniform counts out
// of balance_dataset.
SuiteResult verify_smote_properties(bool inject_fault = false);

// Runs the selected suites ("all", "grad", "supcon", "ema", "smote"),
// printing one line per suite with its worst-case error. Returns true iff
// every selected suite passed.
bool run_verification(const std::string& suite, bool inject_fault, std::ostream& out);

// The double-loop transcription used as the supcon oracle. Exposed so the
// test suites can drive it directly with their own batches.
double supcon_naive(const Tensor& projections, const std::vector<int>& labels, double temperature,
                    bool include_anchor);

}  // namespace waferssl
