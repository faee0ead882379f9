#include "waferssl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "waferssl/errors.hpp"
#include "waferssl/rng.hpp"

namespace waferssl {

namespace {

constexpr double kBnEps = 1e-5;

int block_in_channels(const ModelConfig& cfg, int b) {
    return b == 1 ? cfg.stem_channels : cfg.stem_channels << (b - 2);
}

int block_out_channels(const ModelConfig& cfg, int b) { return cfg.stem_channels << (b - 1); }

int conv_out_extent(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

}  // namespace

void ModelConfig::validate() const {
    if (input_channels != 3) raise(ErrorCode::ConfigInvalid, "input_channels must be 3");
    if (num_classes != 9) raise(ErrorCode::ConfigInvalid, "num_classes must be 9");
    if (input_height < 8 || input_width < 8) raise(ErrorCode::ConfigInvalid, "input dims must be >= 8");
    if (stem_channels < 1 || blocks < 1 || embed_dim < 1 || proj_dim < 1) {
        raise(ErrorCode::ConfigInvalid, "all model dimensions must be positive");
    }
    int h = input_height, w = input_width;
    for (int b = 2; b <= blocks; ++b) {
        h = conv_out_extent(h, 3, 2, 1);
        w = conv_out_extent(w, 3, 2, 1);
    }
    if (h < 1 || w < 1) raise(ErrorCode::ConfigInvalid, "too many blocks for the input size");
}

Tensor& ParamSet::at(const std::string& name) {
    for (auto& e : entries) {
        if (e.name == name) return e.value;
    }
    raise(ErrorCode::ShapeMismatch, "no parameter named " + name);
}

const Tensor& ParamSet::at(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return e.value;
    }
    raise(ErrorCode::ShapeMismatch, "no parameter named " + name);
}

bool ParamSet::all_finite() const {
    for (const auto& e : entries) {
        if (!e.value.all_finite()) return false;
    }
    return true;
}

ParamGrads zero_grads(const ParamSet& params) {
    ParamGrads grads;
    grads.reserve(params.entries.size());
    for (const auto& e : params.entries) grads.push_back(zeros_like(e.value));
    return grads;
}

namespace {

void add_weight(ParamSet& ps, Rng& rng, const std::string& name, std::vector<int> shape, int fan_in) {
    ParamTensor p;
    p.name = name;
    p.value = Tensor(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : p.value.data) v = rng.uniform(-bound, bound);
    ps.entries.push_back(std::move(p));
}

void add_const(ParamSet& ps, const std::string& name, std::vector<int> shape, double fill, bool buffer) {
    ParamTensor p;
    p.name = name;
    p.is_buffer = buffer;
    p.value = Tensor(std::move(shape), fill);
    ps.entries.push_back(std::move(p));
}

void add_bn(ParamSet& ps, const std::string& prefix, int channels) {
    add_const(ps, prefix + ".gamma", {channels}, 1.0, false);
    add_const(ps, prefix + ".beta", {channels}, 0.0, false);
    add_const(ps, prefix + ".rmean", {channels}, 0.0, true);
    add_const(ps, prefix + ".rvar", {channels}, 1.0, true);
}

}  // namespace

ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, {0x1217b2f3aa91ULL}));
    ParamSet ps;
    add_weight(ps, rng, "stem.conv.w", {cfg.stem_channels, cfg.input_channels, 3, 3},
               cfg.input_channels * 9);
    add_bn(ps, "stem.bn", cfg.stem_channels);
    for (int b = 1; b <= cfg.blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b);
        const int in_ch = block_in_channels(cfg, b);
        const int out_ch = block_out_channels(cfg, b);
        add_weight(ps, rng, prefix + ".conv1.w", {out_ch, in_ch, 3, 3}, in_ch * 9);
        add_bn(ps, prefix + ".bn1", out_ch);
        add_weight(ps, rng, prefix + ".conv2.w", {out_ch, out_ch, 3, 3}, out_ch * 9);
        add_bn(ps, prefix + ".bn2", out_ch);
        if (b >= 2) {
            add_weight(ps, rng, prefix + ".down.conv.w", {out_ch, in_ch, 1, 1}, in_ch);
            add_bn(ps, prefix + ".down.bn", out_ch);
        }
    }
    const int final_ch = block_out_channels(cfg, cfg.blocks);
    add_weight(ps, rng, "embed.w", {cfg.embed_dim, final_ch}, final_ch);
    add_const(ps, "embed.b", {cfg.embed_dim}, 0.0, false);
    add_weight(ps, rng, "proj1.w", {cfg.embed_dim, cfg.embed_dim}, cfg.embed_dim);
    add_const(ps, "proj1.b", {cfg.embed_dim}, 0.0, false);
    add_weight(ps, rng, "proj2.w", {cfg.proj_dim, cfg.embed_dim}, cfg.embed_dim);
    add_const(ps, "proj2.b", {cfg.proj_dim}, 0.0, false);
    add_weight(ps, rng, "cls.w", {cfg.num_classes, cfg.embed_dim}, cfg.embed_dim);
    add_const(ps, "cls.b", {cfg.num_classes}, 0.0, false);
    return ps;
}

// ---------------------------------------------------------------------------
// Layer primitives
// ---------------------------------------------------------------------------

namespace {

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    const int B = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int Co = w.shape[0], K = w.shape[2];
    const int Ho = conv_out_extent(H, K, stride, pad);
    const int Wo = conv_out_extent(W, K, stride, pad);
    Tensor y({B, Co, Ho, Wo});
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < Co; ++oc) {
            double* yplane = &y.data[(static_cast<std::size_t>(b) * Co + oc) * Ho * Wo];
            for (int ic = 0; ic < Ci; ++ic) {
                const double* xplane = &x.data[(static_cast<std::size_t>(b) * Ci + ic) * H * W];
                const double* wk = &w.data[(static_cast<std::size_t>(oc) * Ci + ic) * K * K];
                for (int kh = 0; kh < K; ++kh) {
                    for (int kw = 0; kw < K; ++kw) {
                        const double wv = wk[kh * K + kw];
                        const int shift = kw - pad;
                        const int ow_lo = std::max(0, (pad - kw + stride - 1) / stride);
                        const int ow_hi = std::min(Wo - 1, (W - 1 + pad - kw) / stride);
                        for (int oh = 0; oh < Ho; ++oh) {
                            const int ih = oh * stride - pad + kh;
                            if (ih < 0 || ih >= H) continue;
                            const double* xrow = xplane + static_cast<std::size_t>(ih) * W;
                            double* yrow = yplane + static_cast<std::size_t>(oh) * Wo;
                            if (stride == 1) {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow) yrow[ow] += wv * xrow[ow + shift];
                            } else {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                                    yrow[ow] += wv * xrow[ow * stride + shift];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, int stride, int pad,
                     Tensor* dx, Tensor& dw) {
    const int B = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int Co = w.shape[0], K = w.shape[2];
    const int Ho = dy.shape[2], Wo = dy.shape[3];
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < Co; ++oc) {
            const double* gplane = &dy.data[(static_cast<std::size_t>(b) * Co + oc) * Ho * Wo];
            for (int ic = 0; ic < Ci; ++ic) {
                const double* xplane = &x.data[(static_cast<std::size_t>(b) * Ci + ic) * H * W];
                double* dxplane =
                    dx ? &dx->data[(static_cast<std::size_t>(b) * Ci + ic) * H * W] : nullptr;
                const double* wk = &w.data[(static_cast<std::size_t>(oc) * Ci + ic) * K * K];
                double* dwk = &dw.data[(static_cast<std::size_t>(oc) * Ci + ic) * K * K];
                for (int kh = 0; kh < K; ++kh) {
                    for (int kw = 0; kw < K; ++kw) {
                        const double wv = wk[kh * K + kw];
                        const int shift = kw - pad;
                        double wacc = 0.0;
                        const int ow_lo = std::max(0, (pad - kw + stride - 1) / stride);
                        const int ow_hi = std::min(Wo - 1, (W - 1 + pad - kw) / stride);
                        for (int oh = 0; oh < Ho; ++oh) {
                            const int ih = oh * stride - pad + kh;
                            if (ih < 0 || ih >= H) continue;
                            const double* xrow = xplane + static_cast<std::size_t>(ih) * W;
                            const double* grow = gplane + static_cast<std::size_t>(oh) * Wo;
                            double* dxrow = dxplane ? dxplane + static_cast<std::size_t>(ih) * W : nullptr;
                            if (dxrow) {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                                    const int iw = ow * stride + shift;
                                    wacc += grow[ow] * xrow[iw];
                                    dxrow[iw] += wv * grow[ow];
                                }
                            } else {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                                    wacc += grow[ow] * xrow[ow * stride + shift];
                                }
                            }
                        }
                        dwk[kh * K + kw] += wacc;
                    }
                }
            }
        }
    }
}

void bn_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& rmean,
                const Tensor& rvar, bool train_mode, BnCache& cache) {
    const int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const double n = static_cast<double>(B) * static_cast<double>(plane);
    cache.train_mode = train_mode;
    cache.mean.assign(static_cast<std::size_t>(C), 0.0);
    cache.var.assign(static_cast<std::size_t>(C), 0.0);
    cache.invstd.assign(static_cast<std::size_t>(C), 0.0);
    cache.input = x;
    cache.output = Tensor(x.shape);
    for (int c = 0; c < C; ++c) {
        double mean, var;
        if (train_mode) {
            double sum = 0.0, sumsq = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* xp = &x.data[(static_cast<std::size_t>(b) * C + c) * plane];
                for (std::size_t i = 0; i < plane; ++i) {
                    sum += xp[i];
                    sumsq += xp[i] * xp[i];
                }
            }
            mean = sum / n;
            var = std::max(0.0, sumsq / n - mean * mean);
        } else {
            mean = rmean.data[static_cast<std::size_t>(c)];
            var = rvar.data[static_cast<std::size_t>(c)];
        }
        const double invstd = 1.0 / std::sqrt(var + kBnEps);
        cache.mean[static_cast<std::size_t>(c)] = mean;
        cache.var[static_cast<std::size_t>(c)] = var;
        cache.invstd[static_cast<std::size_t>(c)] = invstd;
        const double g = gamma.data[static_cast<std::size_t>(c)];
        const double bt = beta.data[static_cast<std::size_t>(c)];
        for (int b = 0; b < B; ++b) {
            const double* xp = &x.data[(static_cast<std::size_t>(b) * C + c) * plane];
            double* yp = &cache.output.data[(static_cast<std::size_t>(b) * C + c) * plane];
            for (std::size_t i = 0; i < plane; ++i) {
                yp[i] = g * (xp[i] - mean) * invstd + bt;
            }
        }
    }
}

void bn_backward(const BnCache& cache, const Tensor& gamma, const Tensor& dy, Tensor& dgamma,
                 Tensor& dbeta, Tensor& dx) {
    const int B = cache.input.shape[0], C = cache.input.shape[1];
    const std::size_t plane = static_cast<std::size_t>(cache.input.shape[2]) * cache.input.shape[3];
    const double n = static_cast<double>(B) * static_cast<double>(plane);
    for (int c = 0; c < C; ++c) {
        const double mean = cache.mean[static_cast<std::size_t>(c)];
        const double invstd = cache.invstd[static_cast<std::size_t>(c)];
        const double g = gamma.data[static_cast<std::size_t>(c)];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int b = 0; b < B; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * C + c) * plane;
            const double* dyp = &dy.data[off];
            const double* xp = &cache.input.data[off];
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += dyp[i];
                sum_dy_xhat += dyp[i] * (xp[i] - mean) * invstd;
            }
        }
        dgamma.data[static_cast<std::size_t>(c)] += sum_dy_xhat;
        dbeta.data[static_cast<std::size_t>(c)] += sum_dy;
        if (cache.train_mode) {
            const double mean_dy = sum_dy / n;
            const double mean_dy_xhat = sum_dy_xhat / n;
            for (int b = 0; b < B; ++b) {
                const std::size_t off = (static_cast<std::size_t>(b) * C + c) * plane;
                const double* dyp = &dy.data[off];
                const double* xp = &cache.input.data[off];
                double* dxp = &dx.data[off];
                for (std::size_t i = 0; i < plane; ++i) {
                    const double xhat = (xp[i] - mean) * invstd;
                    dxp[i] += g * invstd * (dyp[i] - mean_dy - xhat * mean_dy_xhat);
                }
            }
        } else {
            for (int b = 0; b < B; ++b) {
                const std::size_t off = (static_cast<std::size_t>(b) * C + c) * plane;
                const double* dyp = &dy.data[off];
                double* dxp = &dx.data[off];
                for (std::size_t i = 0; i < plane; ++i) dxp[i] += g * invstd * dyp[i];
            }
        }
    }
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = std::max(0.0, v);
    return y;
}

// dx = dy where pre > 0. pre is the pre-rectifier tensor.
void relu_backward(const Tensor& pre, const Tensor& dy, Tensor& dx) {
    for (std::size_t i = 0; i < dy.data.size(); ++i) {
        if (pre.data[i] > 0.0) dx.data[i] += dy.data[i];
    }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    const int B = x.shape[0], In = x.shape[1], Out = w.shape[0];
    Tensor y({B, Out});
    for (int b = 0; b < B; ++b) {
        const double* xr = &x.data[static_cast<std::size_t>(b) * In];
        double* yr = &y.data[static_cast<std::size_t>(b) * Out];
        for (int o = 0; o < Out; ++o) {
            const double* wr = &w.data[static_cast<std::size_t>(o) * In];
            double acc = bias.data[static_cast<std::size_t>(o)];
            for (int i = 0; i < In; ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }
    return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx, Tensor& dw,
                     Tensor& db) {
    const int B = x.shape[0], In = x.shape[1], Out = w.shape[0];
    for (int b = 0; b < B; ++b) {
        const double* xr = &x.data[static_cast<std::size_t>(b) * In];
        const double* dyr = &dy.data[static_cast<std::size_t>(b) * Out];
        double* dxr = &dx.data[static_cast<std::size_t>(b) * In];
        for (int o = 0; o < Out; ++o) {
            const double g = dyr[o];
            if (g == 0.0) continue;
            const double* wr = &w.data[static_cast<std::size_t>(o) * In];
            double* dwr = &dw.data[static_cast<std::size_t>(o) * In];
            db.data[static_cast<std::size_t>(o)] += g;
            for (int i = 0; i < In; ++i) {
                dxr[i] += g * wr[i];
                dwr[i] += g * xr[i];
            }
        }
    }
}

Tensor global_avg_pool(const Tensor& x) {
    const int B = x.shape[0], C = x.shape[1];
    const std::size_t plane = static_cast<std::size_t>(x.shape[2]) * x.shape[3];
    Tensor y({B, C});
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const double* xp = &x.data[(static_cast<std::size_t>(b) * C + c) * plane];
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += xp[i];
            y.data[static_cast<std::size_t>(b) * C + c] = s / static_cast<double>(plane);
        }
    }
    return y;
}

void global_avg_pool_backward(const std::vector<int>& x_shape, const Tensor& dy, Tensor& dx) {
    const int B = x_shape[0], C = x_shape[1];
    const std::size_t plane = static_cast<std::size_t>(x_shape[2]) * x_shape[3];
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const double g = dy.data[static_cast<std::size_t>(b) * C + c] / static_cast<double>(plane);
            double* dxp = &dx.data[(static_cast<std::size_t>(b) * C + c) * plane];
            for (std::size_t i = 0; i < plane; ++i) dxp[i] += g;
        }
    }
}

void add_into(Tensor& acc, const Tensor& other) {
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += other.data[i];
}

}  // namespace

BatchOutput forward(const ParamSet& params, const ModelConfig& cfg, const Tensor& inputs,
                    bool train_mode, ForwardCache* cache) {
    cfg.validate();
    if (inputs.shape.size() != 4 || inputs.shape[1] != cfg.input_channels ||
        inputs.shape[2] != cfg.input_height || inputs.shape[3] != cfg.input_width) {
        raise(ErrorCode::ShapeMismatch, "input tensor does not match the model config");
    }
    ForwardCache local;
    ForwardCache& cc = cache ? *cache : local;

    cc.input = inputs;
    cc.stem_conv_out = conv2d(inputs, params.at("stem.conv.w"), 1, 1);
    bn_forward(cc.stem_conv_out, params.at("stem.bn.gamma"), params.at("stem.bn.beta"),
               params.at("stem.bn.rmean"), params.at("stem.bn.rvar"), train_mode, cc.stem_bn);
    cc.stem_out = relu(cc.stem_bn.output);

    cc.blocks.clear();
    cc.blocks.resize(static_cast<std::size_t>(cfg.blocks));
    const Tensor* cur = &cc.stem_out;
    for (int b = 1; b <= cfg.blocks; ++b) {
        BlockCache& bc = cc.blocks[static_cast<std::size_t>(b - 1)];
        const std::string prefix = "block" + std::to_string(b);
        const int stride = b == 1 ? 1 : 2;
        bc.input = *cur;
        bc.conv1_out = conv2d(bc.input, params.at(prefix + ".conv1.w"), stride, 1);
        bn_forward(bc.conv1_out, params.at(prefix + ".bn1.gamma"), params.at(prefix + ".bn1.beta"),
                   params.at(prefix + ".bn1.rmean"), params.at(prefix + ".bn1.rvar"), train_mode,
                   bc.bn1);
        bc.relu1_out = relu(bc.bn1.output);
        bc.conv2_out = conv2d(bc.relu1_out, params.at(prefix + ".conv2.w"), 1, 1);
        bn_forward(bc.conv2_out, params.at(prefix + ".bn2.gamma"), params.at(prefix + ".bn2.beta"),
                   params.at(prefix + ".bn2.rmean"), params.at(prefix + ".bn2.rvar"), train_mode,
                   bc.bn2);
        bc.sum_out = bc.bn2.output;
        if (b == 1) {
            add_into(bc.sum_out, bc.input);
        } else {
            bc.skip_conv_out = conv2d(bc.input, params.at(prefix + ".down.conv.w"), 2, 0);
            bn_forward(bc.skip_conv_out, params.at(prefix + ".down.bn.gamma"),
                       params.at(prefix + ".down.bn.beta"), params.at(prefix + ".down.bn.rmean"),
                       params.at(prefix + ".down.bn.rvar"), train_mode, bc.skip_bn);
            add_into(bc.sum_out, bc.skip_bn.output);
        }
        bc.out = relu(bc.sum_out);
        cur = &bc.out;
    }

    cc.pooled = global_avg_pool(*cur);
    cc.embeddings = linear(cc.pooled, params.at("embed.w"), params.at("embed.b"));
    cc.proj_hidden = linear(cc.embeddings, params.at("proj1.w"), params.at("proj1.b"));
    cc.proj_hidden_relu = relu(cc.proj_hidden);

    BatchOutput out;
    out.embeddings = cc.embeddings;
    out.projections = linear(cc.proj_hidden_relu, params.at("proj2.w"), params.at("proj2.b"));
    out.logits = linear(cc.embeddings, params.at("cls.w"), params.at("cls.b"));
    return out;
}

namespace {

// Index lookup that mirrors ParamSet::at but returns the entry position so
// gradients can be addressed by the same name.
std::size_t entry_index(const ParamSet& params, const std::string& name) {
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        if (params.entries[i].name == name) return i;
    }
    raise(ErrorCode::ShapeMismatch, "no parameter named " + name);
}

}  // namespace

ParamGrads backward(const ParamSet& params, const ModelConfig& cfg, const ForwardCache& cache,
                    const Tensor& grad_embeddings, const Tensor& grad_projections,
                    const Tensor& grad_logits) {
    ParamGrads grads = zero_grads(params);
    auto g = [&](const std::string& name) -> Tensor& { return grads[entry_index(params, name)]; };

    const int B = cache.input.shape[0];
    Tensor d_emb({B, cfg.embed_dim});
    if (!grad_embeddings.data.empty()) {
        if (!grad_embeddings.same_shape(d_emb)) raise(ErrorCode::ShapeMismatch, "grad_embeddings shape");
        d_emb = grad_embeddings;
    }

    if (!grad_logits.data.empty()) {
        Tensor expect({B, cfg.num_classes});
        if (!grad_logits.same_shape(expect)) raise(ErrorCode::ShapeMismatch, "grad_logits shape");
        linear_backward(cache.embeddings, params.at("cls.w"), grad_logits, d_emb, g("cls.w"), g("cls.b"));
    }
    if (!grad_projections.data.empty()) {
        Tensor expect({B, cfg.proj_dim});
        if (!grad_projections.same_shape(expect)) raise(ErrorCode::ShapeMismatch, "grad_projections shape");
        Tensor d_hidden_relu({B, cfg.embed_dim});
        linear_backward(cache.proj_hidden_relu, params.at("proj2.w"), grad_projections, d_hidden_relu,
                        g("proj2.w"), g("proj2.b"));
        Tensor d_hidden({B, cfg.embed_dim});
        relu_backward(cache.proj_hidden, d_hidden_relu, d_hidden);
        linear_backward(cache.embeddings, params.at("proj1.w"), d_hidden, d_emb, g("proj1.w"),
                        g("proj1.b"));
    }

    Tensor d_pooled({B, cache.pooled.shape[1]});
    linear_backward(cache.pooled, params.at("embed.w"), d_emb, d_pooled, g("embed.w"), g("embed.b"));

    const Tensor& last_out = cache.blocks.back().out;
    Tensor d_cur(last_out.shape);
    global_avg_pool_backward(last_out.shape, d_pooled, d_cur);

    for (int b = cfg.blocks; b >= 1; --b) {
        const BlockCache& bc = cache.blocks[static_cast<std::size_t>(b - 1)];
        const std::string prefix = "block" + std::to_string(b);
        const int stride = b == 1 ? 1 : 2;

        Tensor d_sum(bc.sum_out.shape);
        relu_backward(bc.sum_out, d_cur, d_sum);

        Tensor d_input(bc.input.shape);
        // Skip path.
        if (b == 1) {
            add_into(d_input, d_sum);
        } else {
            Tensor d_skip_conv(bc.skip_conv_out.shape);
            bn_backward(bc.skip_bn, params.at(prefix + ".down.bn.gamma"), d_sum,
                        g(prefix + ".down.bn.gamma"), g(prefix + ".down.bn.beta"), d_skip_conv);
            conv2d_backward(bc.input, params.at(prefix + ".down.conv.w"), d_skip_conv, 2, 0, &d_input,
                            g(prefix + ".down.conv.w"));
        }
        // Residual path.
        Tensor d_conv2(bc.conv2_out.shape);
        bn_backward(bc.bn2, params.at(prefix + ".bn2.gamma"), d_sum, g(prefix + ".bn2.gamma"),
                    g(prefix + ".bn2.beta"), d_conv2);
        Tensor d_relu1(bc.relu1_out.shape);
        conv2d_backward(bc.relu1_out, params.at(prefix + ".conv2.w"), d_conv2, 1, 1, &d_relu1,
                        g(prefix + ".conv2.w"));
        Tensor d_bn1(bc.bn1.output.shape);
        relu_backward(bc.bn1.output, d_relu1, d_bn1);
        Tensor d_conv1(bc.conv1_out.shape);
        bn_backward(bc.bn1, params.at(prefix + ".bn1.gamma"), d_bn1, g(prefix + ".bn1.gamma"),
                    g(prefix + ".bn1.beta"), d_conv1);
        conv2d_backward(bc.input, params.at(prefix + ".conv1.w"), d_conv1, stride, 1, &d_input,
                        g(prefix + ".conv1.w"));

        d_cur = std::move(d_input);
    }

    Tensor d_stem_bn(cache.stem_bn.output.shape);
    relu_backward(cache.stem_bn.output, d_cur, d_stem_bn);
    Tensor d_stem_conv(cache.stem_conv_out.shape);
    bn_backward(cache.stem_bn, params.at("stem.bn.gamma"), d_stem_bn, g("stem.bn.gamma"),
                g("stem.bn.beta"), d_stem_conv);
    conv2d_backward(cache.input, params.at("stem.conv.w"), d_stem_conv, 1, 1, nullptr,
                    g("stem.conv.w"));
    return grads;
}

void update_running_stats(ParamSet& params, const ForwardCache& cache, double update_rate) {
    if (!cache.stem_bn.train_mode) {
        raise(ErrorCode::ConfigInvalid, "running stats can only be updated from a train-mode cache");
    }
    auto fold = [&](const std::string& prefix, const BnCache& bn) {
        Tensor& rmean = params.at(prefix + ".rmean");
        Tensor& rvar = params.at(prefix + ".rvar");
        for (std::size_t c = 0; c < bn.mean.size(); ++c) {
            rmean.data[c] = (1.0 - update_rate) * rmean.data[c] + update_rate * bn.mean[c];
            rvar.data[c] = (1.0 - update_rate) * rvar.data[c] + update_rate * bn.var[c];
        }
    };
    fold("stem.bn", cache.stem_bn);
    for (std::size_t b = 0; b < cache.blocks.size(); ++b) {
        const std::string prefix = "block" + std::to_string(b + 1);
        fold(prefix + ".bn1", cache.blocks[b].bn1);
        fold(prefix + ".bn2", cache.blocks[b].bn2);
        if (!cache.blocks[b].skip_conv_out.data.empty()) {
            fold(prefix + ".down.bn", cache.blocks[b].skip_bn);
        }
    }
}

void sgd_step(ParamSet& params, const ParamGrads& grads, double lr, double momentum,
              ParamGrads& velocity) {
    if (!(lr >= 0.0)) raise(ErrorCode::ConfigInvalid, "lr must be nonnegative");
    if (!(momentum >= 0.0 && momentum < 1.0)) raise(ErrorCode::ConfigInvalid, "momentum must be in [0,1)");
    if (grads.size() != params.entries.size() || velocity.size() != params.entries.size()) {
        raise(ErrorCode::ShapeMismatch, "gradient/velocity count differs from parameter count");
    }
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        ParamTensor& p = params.entries[i];
        if (p.is_buffer) continue;
        const Tensor& grad = grads[i];
        if (!grad.same_shape(p.value)) {
            raise(ErrorCode::ShapeMismatch, "gradient shape differs for " + p.name);
        }
        if (!grad.all_finite()) {
            raise(ErrorCode::NonFiniteGradient, "non-finite gradient for " + p.name);
        }
        Tensor& v = velocity[i];
        for (std::size_t j = 0; j < p.value.data.size(); ++j) {
            v.data[j] = momentum * v.data[j] + grad.data[j];
            p.value.data[j] -= lr * v.data[j];
        }
    }
}

void ema_update(ParamSet& teacher, const ParamSet& student, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) raise(ErrorCode::ConfigInvalid, "alpha must be in [0,1]");
    if (teacher.entries.size() != student.entries.size()) {
        raise(ErrorCode::ShapeMismatch, "teacher/student parameter counts differ");
    }
    for (std::size_t i = 0; i < teacher.entries.size(); ++i) {
        ParamTensor& t = teacher.entries[i];
        const ParamTensor& s = student.entries[i];
        if (t.name != s.name || !t.value.same_shape(s.value)) {
            raise(ErrorCode::ShapeMismatch, "teacher/student mismatch at " + t.name);
        }
        for (std::size_t j = 0; j < t.value.data.size(); ++j) {
            t.value.data[j] = alpha * t.value.data[j] + (1.0 - alpha) * s.value.data[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointTag = "waferssl-ckpt-v1";

void write_tensor_line(std::ostream& out, const Tensor& t) {
    out << t.shape.size();
    for (int d : t.shape) out << ' ' << d;
    out << " :";
    char buf[40];
    for (double v : t.data) {
        std::snprintf(buf, sizeof(buf), " %a", v);
        out << buf;
    }
    out << '\n';
}

Tensor read_tensor_body(std::istringstream& ls, const std::string& path) {
    std::size_t ndim = 0;
    if (!(ls >> ndim)) raise(ErrorCode::Format, "bad tensor line in " + path);
    std::vector<int> shape(ndim);
    for (auto& d : shape) {
        if (!(ls >> d) || d <= 0) raise(ErrorCode::Format, "bad tensor shape in " + path);
    }
    std::string colon;
    ls >> colon;
    if (colon != ":") raise(ErrorCode::Format, "bad tensor separator in " + path);
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        std::string tok;
        if (!(ls >> tok)) raise(ErrorCode::Format, "truncated tensor data in " + path);
        t.data[i] = std::strtod(tok.c_str(), nullptr);
    }
    return t;
}

void write_param_set(std::ostream& out, const std::string& section, const ParamSet& ps) {
    out << section << ' ' << ps.entries.size() << '\n';
    for (const auto& e : ps.entries) {
        out << e.name << ' ' << (e.is_buffer ? 1 : 0) << ' ';
        write_tensor_line(out, e.value);
    }
}

ParamSet read_param_set(std::istream& in, const std::string& section, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) raise(ErrorCode::Format, "missing section " + section + " in " + path);
    std::istringstream hs(line);
    std::string name;
    std::size_t count = 0;
    hs >> name >> count;
    if (name != section) raise(ErrorCode::Format, "expected section " + section + " in " + path);
    ParamSet ps;
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) raise(ErrorCode::Format, "truncated section " + section);
        std::istringstream ls(line);
        ParamTensor p;
        int buffer = 0;
        ls >> p.name >> buffer;
        p.is_buffer = buffer != 0;
        p.value = read_tensor_body(ls, path);
        ps.entries.push_back(std::move(p));
    }
    return ps;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(ErrorCode::Io, "cannot write checkpoint: " + path);
    out << kCheckpointTag << '\n';
    out << "step " << ckpt.step << '\n';
    const ModelConfig& c = ckpt.config;
    out << "config " << c.input_channels << ' ' << c.input_height << ' ' << c.input_width << ' '
        << c.stem_channels << ' ' << c.blocks << ' ' << c.embed_dim << ' ' << c.proj_dim << ' '
        << c.num_classes << '\n';
    write_param_set(out, "student", ckpt.student);
    write_param_set(out, "teacher", ckpt.teacher);
    out << "velocity " << ckpt.velocity.size() << '\n';
    for (const auto& t : ckpt.velocity) write_tensor_line(out, t);
    if (!out) raise(ErrorCode::Io, "write failure on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::Io, "cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointTag) {
        raise(ErrorCode::Format, "not a " + std::string(kCheckpointTag) + " file: " + path);
    }
    Checkpoint ckpt;
    if (!std::getline(in, line)) raise(ErrorCode::Format, "missing step line in " + path);
    {
        std::istringstream ls(line);
        std::string key;
        ls >> key >> ckpt.step;
        if (key != "step") raise(ErrorCode::Format, "missing step line in " + path);
    }
    if (!std::getline(in, line)) raise(ErrorCode::Format, "missing config line in " + path);
    {
        std::istringstream ls(line);
        std::string key;
        ModelConfig& c = ckpt.config;
        ls >> key >> c.input_channels >> c.input_height >> c.input_width >> c.stem_channels >>
            c.blocks >> c.embed_dim >> c.proj_dim >> c.num_classes;
        if (key != "config" || ls.fail()) raise(ErrorCode::Format, "bad config line in " + path);
    }
    ckpt.config.validate();
    ckpt.student = read_param_set(in, "student", path);
    ckpt.teacher = read_param_set(in, "teacher", path);
    if (!std::getline(in, line)) raise(ErrorCode::Format, "missing velocity section in " + path);
    {
        std::istringstream ls(line);
        std::string key;
        std::size_t count = 0;
        ls >> key >> count;
        if (key != "velocity") raise(ErrorCode::Format, "missing velocity section in " + path);
        for (std::size_t i = 0; i < count; ++i) {
            if (!std::getline(in, line)) raise(ErrorCode::Format, "truncated velocity section");
            std::istringstream ts(line);
            ckpt.velocity.push_back(read_tensor_body(ts, path));
        }
    }
    return ckpt;
}

}  // namespace waferssl
