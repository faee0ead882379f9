#include "waferssl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "waferssl/errors.hpp"

namespace waferssl {

void LossConfig::validate() const {
    if (!(temperature > 0.0)) raise(ErrorCode::ConfigInvalid, "temperature must be > 0");
    if (consistency_weight_max < 0.0 || supcon_weight < 0.0 || classification_weight < 0.0) {
        raise(ErrorCode::ConfigInvalid, "loss weights must be >= 0");
    }
}

namespace {

void softmax_rows(const Tensor& logits, Tensor& probs) {
    const std::size_t batch = static_cast<std::size_t>(logits.shape[0]);
    const std::size_t classes = static_cast<std::size_t>(logits.shape[1]);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = &logits.data[b * classes];
        double* out = &probs.data[b * classes];
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            out[c] = std::exp(row[c] - mx);
            sum += out[c];
        }
        for (std::size_t c = 0; c < classes; ++c) out[c] /= sum;
    }
}

}  // namespace

std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.shape.size() != 2) raise(ErrorCode::ShapeMismatch, "logits must be B x C");
    const std::size_t batch = static_cast<std::size_t>(logits.shape[0]);
    const std::size_t classes = static_cast<std::size_t>(logits.shape[1]);
    if (labels.size() != batch) raise(ErrorCode::LengthMismatch, "labels length must equal batch size");
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= classes) {
            raise(ErrorCode::BadLabel, "label " + std::to_string(l) + " outside 0.." + std::to_string(classes - 1));
        }
    }
    Tensor grad(logits.shape);
    softmax_rows(logits, grad);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        double* row = &grad.data[b * classes];
        const std::size_t y = static_cast<std::size_t>(labels[b]);
        loss -= std::log(std::max(row[y], 1e-300));
        row[y] -= 1.0;
        for (std::size_t c = 0; c < classes; ++c) row[c] /= static_cast<double>(batch);
    }
    return {loss / static_cast<double>(batch), std::move(grad)};
}

std::pair<double, Tensor> consistency_loss(const Tensor& student_logits, const Tensor& teacher_logits) {
    if (student_logits.shape != teacher_logits.shape || student_logits.shape.size() != 2) {
        raise(ErrorCode::ShapeMismatch, "student and teacher logits must share a B x C shape");
    }
    const std::size_t batch = static_cast<std::size_t>(student_logits.shape[0]);
    const std::size_t classes = static_cast<std::size_t>(student_logits.shape[1]);
    Tensor p(student_logits.shape), q(teacher_logits.shape);
    softmax_rows(student_logits, p);
    softmax_rows(teacher_logits, q);

    const double denom = static_cast<double>(batch * classes);
    double loss = 0.0;
    Tensor grad(student_logits.shape);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* pr = &p.data[b * classes];
        const double* qr = &q.data[b * classes];
        double* gr = &grad.data[b * classes];
        // dL/dp, then through the softmax Jacobian: dL/dz = p * (g - <g, p>).
        double inner = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double d = pr[c] - qr[c];
            loss += d * d;
            gr[c] = 2.0 * d / denom;
            inner += gr[c] * pr[c];
        }
        for (std::size_t c = 0; c < classes; ++c) {
            gr[c] = pr[c] * (gr[c] - inner);
        }
    }
    return {loss / denom, std::move(grad)};
}

Tensor l2_normalize(const Tensor& vectors) {
    if (vectors.shape.size() != 2) raise(ErrorCode::ShapeMismatch, "expected a B x D matrix");
    const std::size_t batch = static_cast<std::size_t>(vectors.shape[0]);
    const std::size_t dim = static_cast<std::size_t>(vectors.shape[1]);
    Tensor out(vectors.shape);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = &vectors.data[b * dim];
        double norm2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) norm2 += row[d] * row[d];
        const double norm = std::sqrt(norm2);
        if (norm < 1e-12) raise(ErrorCode::ZeroNorm, "row " + std::to_string(b) + " has (near-)zero norm");
        for (std::size_t d = 0; d < dim; ++d) out.data[b * dim + d] = row[d] / norm;
    }
    return out;
}

std::pair<double, Tensor> supcon_loss(const Tensor& projections, const std::vector<int>& labels,
                                      const LossConfig& config) {
    config.validate();
    if (projections.shape.size() != 2) raise(ErrorCode::ShapeMismatch, "projections must be B x D");
    const std::size_t batch = static_cast<std::size_t>(projections.shape[0]);
    const std::size_t dim = static_cast<std::size_t>(projections.shape[1]);
    if (batch < 2) raise(ErrorCode::BatchTooSmall, "supcon needs a batch of at least 2");
    if (labels.size() != batch) raise(ErrorCode::LengthMismatch, "labels length must equal batch size");

    const Tensor z = l2_normalize(projections);
    const double inv_tau = 1.0 / config.temperature;

    // Similarity matrix s[i][j] = z_i . z_j / tau.
    std::vector<double> sim(batch * batch, 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = i; j < batch; ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) dot += z.data[i * dim + d] * z.data[j * dim + d];
            sim[i * batch + j] = dot * inv_tau;
            sim[j * batch + i] = dot * inv_tau;
        }
    }

    std::vector<std::size_t> pos_count(batch, 0);
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < batch; ++j) {
            if (j != i && labels[j] == labels[i]) pos_count[i]++;
        }
    }
    std::size_t n_valid = 0;
    for (std::size_t i = 0; i < batch; ++i) {
        if (pos_count[i] > 0) n_valid++;
    }
    Tensor grad(projections.shape);
    if (n_valid == 0) {
        return {0.0, std::move(grad)};
    }

    // Per valid anchor: term_i = (1/|P|) sum_p (lse_i - s_ip); loss = mean of terms.
    double loss = 0.0;
    std::vector<double> dz(batch * dim, 0.0);
    std::vector<double> softmax_row(batch, 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
        if (pos_count[i] == 0) continue;
        const bool include_self = config.include_anchor_in_denominator;
        double mx = -1e300;
        for (std::size_t j = 0; j < batch; ++j) {
            if (j == i && !include_self) continue;
            mx = std::max(mx, sim[i * batch + j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < batch; ++j) {
            if (j == i && !include_self) continue;
            sum += std::exp(sim[i * batch + j] - mx);
        }
        const double lse = mx + std::log(sum);
        const double inv_pos = 1.0 / static_cast<double>(pos_count[i]);
        for (std::size_t j = 0; j < batch; ++j) {
            softmax_row[j] = 0.0;
            if (j == i && !include_self) continue;
            softmax_row[j] = std::exp(sim[i * batch + j] - lse);
        }
        for (std::size_t j = 0; j < batch; ++j) {
            if (j != i && labels[j] == labels[i]) {
                loss += inv_pos * (lse - sim[i * batch + j]);
            }
        }
        // dL/ds_ij = (softmax_ij - [j in P(i)]/|P(i)|) / n_valid, accumulated
        // into dz via s_ij = z_i . z_j / tau.
        for (std::size_t j = 0; j < batch; ++j) {
            if (j == i && !include_self) continue;
            double coeff = softmax_row[j];
            if (j != i && labels[j] == labels[i]) coeff -= inv_pos;
            coeff *= inv_tau / static_cast<double>(n_valid);
            if (coeff == 0.0) continue;
            for (std::size_t d = 0; d < dim; ++d) {
                dz[i * dim + d] += coeff * z.data[j * dim + d];
                dz[j * dim + d] += coeff * z.data[i * dim + d];
            }
        }
    }
    loss /= static_cast<double>(n_valid);

    // Chain rule through normalization: dx = (dz - (dz . z) z) / ||x||.
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = &projections.data[b * dim];
        double norm2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) norm2 += row[d] * row[d];
        const double norm = std::sqrt(norm2);
        double inner = 0.0;
        for (std::size_t d = 0; d < dim; ++d) inner += dz[b * dim + d] * z.data[b * dim + d];
        for (std::size_t d = 0; d < dim; ++d) {
            grad.data[b * dim + d] = (dz[b * dim + d] - inner * z.data[b * dim + d]) / norm;
        }
    }
    return {loss, std::move(grad)};
}

SupConMask build_mask(const std::optional<std::vector<int>>& labels, std::size_t batch) {
    SupConMask mask;
    mask.batch = batch;
    mask.m.assign(batch * batch, 0);
    if (labels) {
        if (labels->size() != batch) raise(ErrorCode::LengthMismatch, "labels length must equal batch size");
        for (std::size_t i = 0; i < batch; ++i) {
            for (std::size_t j = 0; j < batch; ++j) {
                mask.m[i * batch + j] = ((*labels)[i] == (*labels)[j]) ? 1 : 0;
            }
        }
    } else {
        for (std::size_t i = 0; i < batch; ++i) mask.m[i * batch + i] = 1;
    }
    return mask;
}

double consistency_ramp(std::size_t step, std::size_t rampup_steps) {
    if (rampup_steps == 0) return 1.0;
    const double phase = 1.0 - std::min(1.0, static_cast<double>(step) / static_cast<double>(rampup_steps));
    return std::exp(-5.0 * phase * phase);
}

LossBreakdown total_loss(double classification, double consistency, double supcontrast,
                         const LossConfig& config, std::size_t step) {
    config.validate();
    if (!std::isfinite(classification) || !std::isfinite(consistency) || !std::isfinite(supcontrast)) {
        raise(ErrorCode::NonFinite, "loss terms must be finite");
    }
    LossBreakdown breakdown;
    breakdown.classification = classification;
    breakdown.consistency = consistency;
    breakdown.supcontrast = supcontrast;
    const double w_cons = config.consistency_weight_max * consistency_ramp(step, config.rampup_steps);
    breakdown.total = config.classification_weight * classification + w_cons * consistency +
                      config.supcon_weight * supcontrast;
    return breakdown;
}

}  // namespace waferssl
