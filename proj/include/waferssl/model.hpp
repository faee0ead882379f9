#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waferssl/tensor.hpp"

namespace waferssl {

// Compact residual classifier: conv stem, `blocks` residual blocks (channels
// double and the grid halves from the second block on), global average pool,
// then an embedding layer feeding a classification head and a two-layer
// projection head.
struct ModelConfig {
    int input_channels = 3;
    int input_height = 32;
    int input_width = 32;
    int stem_channels = 16;
    int blocks = 2;
    int embed_dim = 64;
    int proj_dim = 32;
    int num_classes = 9;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct ParamTensor {
    std::string name;
    bool is_buffer = false;  // normalization running statistics; no gradient
    Tensor value;
};

// Flat, name-ordered parameter collection for one network instance. Student
// and teacher instances of the same config have identical names and shapes.
struct ParamSet {
    std::vector<ParamTensor> entries;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool all_finite() const;
};

// Gradients / optimizer velocity, aligned entry-for-entry with a ParamSet.
using ParamGrads = std::vector<Tensor>;

ParamGrads zero_grads(const ParamSet& params);

struct BatchOutput {
    Tensor embeddings;   // B x embed_dim
    Tensor projections;  // B x proj_dim, pre-normalization
    Tensor logits;       // B x num_classes
};

struct BnCache {
    bool train_mode = false;
    std::vector<double> mean;    // per channel; batch stats in train mode
    std::vector<double> invstd;  // 1 / sqrt(var + eps)
    std::vector<double> var;
    Tensor input;   // pre-normalization activations
    Tensor output;  // gamma * xhat + beta (pre-rectifier)
};

struct BlockCache {
    Tensor input;
    Tensor conv1_out;
    BnCache bn1;
    Tensor relu1_out;
    Tensor conv2_out;
    BnCache bn2;
    Tensor skip_conv_out;  // empty for identity skips
    BnCache skip_bn;
    Tensor sum_out;  // skip + residual, pre-rectifier
    Tensor out;
};

struct ForwardCache {
    Tensor input;
    Tensor stem_conv_out;
    BnCache stem_bn;
    Tensor stem_out;
    std::vector<BlockCache> blocks;
    Tensor pooled;       // B x C_final
    Tensor embeddings;   // B x embed_dim
    Tensor proj_hidden;  // pre-rectifier
    Tensor proj_hidden_relu;
};

ParamSet init_params(const ModelConfig& config, std::uint64_t seed);

// train_mode selects batch statistics (train) or running statistics (eval)
// for the normalization layers. Pure: never mutates params. cache may be
// null when no backward pass will follow.
BatchOutput forward(const ParamSet& params, const ModelConfig& config, const Tensor& inputs,
                    bool train_mode, ForwardCache* cache);

// Exact gradients w.r.t. every trainable parameter of a scalar loss whose
// gradients w.r.t. the three outputs are given. Any of the three may be an
// empty tensor (treated as zero).
ParamGrads backward(const ParamSet& params, const ModelConfig& config, const ForwardCache& cache,
                    const Tensor& grad_embeddings, const Tensor& grad_projections,
                    const Tensor& grad_logits);

// Folds the batch statistics recorded in a train-mode cache into the running
// statistics. The one place besides the optimizer that writes to params.
void update_running_stats(ParamSet& params, const ForwardCache& cache, double update_rate = 0.1);

// v <- momentum * v + grads; params <- params - lr * v. Buffers are skipped.
void sgd_step(ParamSet& params, const ParamGrads& grads, double lr, double momentum,
              ParamGrads& velocity);

// theta_t <- alpha * theta_t + (1 - alpha) * theta_s, every entry including
// running statistics.
void ema_update(ParamSet& teacher, const ParamSet& student, double alpha);

// Single-file checkpoint: config, both networks, optimizer velocity, step.
struct Checkpoint {
    ModelConfig config;
    ParamSet student;
    ParamSet teacher;
    ParamGrads velocity;
    std::uint64_t step = 0;
};

// Text format, version tag "waferssl-ckpt-v1", hex floats for exact
// round-trips. See README for the layout.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace waferssl
