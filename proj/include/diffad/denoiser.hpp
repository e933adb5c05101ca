#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "diffad/rng.hpp"
#include "diffad/tape.hpp"
#include "diffad/tensor.hpp"

namespace diffad {

// ============================================================================
// Sinusoidal timestep embedding
// ============================================================================

// emb[2i] = sin(t * w_i), emb[2i+1] = cos(t * w_i), w_i = 10000^(-2i/dim).
inline Tensor time_embedding(long t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) {
        throw ContractError("time_embedding: dim must be even and positive, got " +
                            std::to_string(dim));
    }
    if (t < 0) throw ContractError("time_embedding: timestep must be >= 0");
    Tensor out({dim});
    const double td = static_cast<double>(t);
    for (std::size_t i = 0; i < dim / 2; ++i) {
        const double freq =
            std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        out[2 * i] = std::sin(td * freq);
        out[2 * i + 1] = std::cos(td * freq);
    }
    return out;
}

// One embedding row per timestep, stacked into a [batch x dim] matrix.
inline Tensor time_embedding_rows(std::span<const int> ts, std::size_t dim) {
    if (ts.empty()) throw ContractError("time_embedding_rows: empty timestep batch");
    Tensor out({ts.size(), dim});
    for (std::size_t r = 0; r < ts.size(); ++r) {
        Tensor e = time_embedding(ts[r], dim);
        for (std::size_t j = 0; j < dim; ++j) out(r, j) = e[j];
    }
    return out;
}

// ============================================================================
// Common denoiser interface
// ============================================================================

enum class Backbone : std::uint8_t { Mlp = 0, Dit = 1 };

enum class Activation : std::uint8_t { Relu = 0, Gelu = 1 };

namespace detail {

inline Tensor fan_in_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                             RngStream& rng) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
}

} // namespace detail

// A denoiser predicts the noise component of a partially noised batch. The
// graph-building overload records the computation on the caller's tape so
// gradients flow to the supplied parameter leaves; param_nodes must follow
// the order of params(). The plain overload is a convenience for inference.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual Backbone backbone() const = 0;
    virtual std::size_t data_dim() const = 0;

    virtual std::vector<Tensor>& params() = 0;
    virtual const std::vector<Tensor>& params() const = 0;

    virtual NodeId predict_noise(Tape& tape, std::span<const NodeId> param_nodes, NodeId x_t,
                                 std::span<const int> timesteps) const = 0;

    Tensor predict_noise(const Tensor& x_t, std::span<const int> timesteps) const {
        Tape tape;
        std::vector<NodeId> ids;
        ids.reserve(params().size());
        for (const Tensor& p : params()) ids.push_back(tape.leaf(p));
        const NodeId out = predict_noise(tape, ids, tape.leaf(x_t), timesteps);
        return tape.value(out);
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const Tensor& p : params()) n += p.size();
        return n;
    }

protected:
    void check_inputs(const Tape& tape, std::span<const NodeId> param_nodes, NodeId x_t,
                      std::span<const int> timesteps) const {
        if (param_nodes.size() != params().size()) {
            throw ContractError("denoiser: expected " + std::to_string(params().size()) +
                                " parameter nodes, got " + std::to_string(param_nodes.size()));
        }
        const Tensor& xv = tape.value(x_t);
        if (xv.ndim() != 2 || xv.cols() != data_dim()) {
            throw ShapeError("denoiser: input must be [batch x " + std::to_string(data_dim()) +
                             "], got " + xv.shape_str());
        }
        if (timesteps.size() != xv.rows()) {
            throw ShapeError("denoiser: timestep count must match batch size");
        }
    }
};

// ============================================================================
// MLP backbone
// ============================================================================

// Layers run [d + e -> hidden... -> d]; the time embedding is concatenated to
// the input columns. Parameters alternate weight, bias per layer.
struct MlpConfig {
    std::size_t data_dim = 0;
    std::size_t embed_dim = 32;
    std::vector<std::size_t> hidden = {128, 128};
    Activation activation = Activation::Relu;
};

class MlpDenoiser final : public Denoiser {
public:
    MlpDenoiser(MlpConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        if (cfg_.data_dim == 0) throw ConfigError("mlp: data_dim must be positive");
        if (cfg_.embed_dim == 0 || cfg_.embed_dim % 2 != 0) {
            throw ConfigError("mlp: embed_dim must be even and positive");
        }
        for (std::size_t h : cfg_.hidden) {
            if (h == 0) throw ConfigError("mlp: hidden widths must be positive");
        }
        RngStream rng(seed);
        std::size_t in = cfg_.data_dim + cfg_.embed_dim;
        for (std::size_t h : cfg_.hidden) {
            params_.push_back(detail::fan_in_uniform({in, h}, in, rng));
            params_.push_back(detail::fan_in_uniform({h}, in, rng));
            in = h;
        }
        params_.push_back(detail::fan_in_uniform({in, cfg_.data_dim}, in, rng));
        params_.push_back(detail::fan_in_uniform({cfg_.data_dim}, in, rng));
    }

    Backbone backbone() const override { return Backbone::Mlp; }
    std::size_t data_dim() const override { return cfg_.data_dim; }
    const MlpConfig& config() const { return cfg_; }

    std::vector<Tensor>& params() override { return params_; }
    const std::vector<Tensor>& params() const override { return params_; }

    using Denoiser::predict_noise;

    NodeId predict_noise(Tape& tape, std::span<const NodeId> ps, NodeId x_t,
                         std::span<const int> timesteps) const override {
        check_inputs(tape, ps, x_t, timesteps);
        NodeId h = tape.concat_cols(x_t, tape.leaf(time_embedding_rows(timesteps,
                                                                       cfg_.embed_dim)));
        std::size_t pi = 0;
        for (std::size_t l = 0; l < cfg_.hidden.size(); ++l) {
            const NodeId pre = tape.add(tape.matmul(h, ps[pi]), ps[pi + 1]);
            h = cfg_.activation == Activation::Relu ? tape.relu(pre) : tape.gelu(pre);
            pi += 2;
        }
        return tape.add(tape.matmul(h, ps[pi]), ps[pi + 1]);
    }

private:
    MlpConfig cfg_;
    std::vector<Tensor> params_;
};

// ============================================================================
// Mini diffusion transformer backbone
// ============================================================================

constexpr double kLayerNormEps = 1e-5;

// Scaled dot-product self-attention over a [batch*seq x width] token matrix.
// Returns the attended tokens plus the softmax nodes (one per example and
// head) so callers can inspect the attention weights.
struct AttentionNodes {
    NodeId out;
    std::vector<NodeId> weights;
};

inline AttentionNodes self_attention(Tape& tape, NodeId q, NodeId k, NodeId v,
                                     std::size_t batch, std::size_t seq, std::size_t heads) {
    const Tensor& qv = tape.value(q);
    const std::size_t width = qv.cols();
    if (qv.rows() != batch * seq) throw ShapeError("self_attention: bad token count");
    if (!tape.value(k).same_shape(qv) || !tape.value(v).same_shape(qv)) {
        throw ShapeError("self_attention: q/k/v shapes differ");
    }
    if (heads == 0 || width % heads != 0) {
        throw ShapeError("self_attention: width must be divisible by head count");
    }
    const std::size_t dh = width / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    AttentionNodes res;
    std::vector<NodeId> outs;
    outs.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const NodeId qb = tape.slice_rows(q, b * seq, seq);
        const NodeId kb = tape.slice_rows(k, b * seq, seq);
        const NodeId vb = tape.slice_rows(v, b * seq, seq);
        NodeId merged = 0;
        for (std::size_t h = 0; h < heads; ++h) {
            const NodeId qh = heads == 1 ? qb : tape.slice_cols(qb, h * dh, dh);
            const NodeId kh = heads == 1 ? kb : tape.slice_cols(kb, h * dh, dh);
            const NodeId vh = heads == 1 ? vb : tape.slice_cols(vb, h * dh, dh);
            const NodeId attn = tape.softmax(tape.scale(tape.matmul(qh, tape.transpose(kh)), sc));
            res.weights.push_back(attn);
            const NodeId oh = tape.matmul(attn, vh);
            merged = h == 0 ? oh : tape.concat_cols(merged, oh);
        }
        outs.push_back(merged);
    }
    res.out = tape.stack_rows(outs);
    return res;
}

// The input vector is cut into `patch`-length segments, each projected to a
// `width`-wide token. A projected time embedding is added to every token,
// plus (optionally) a fixed sinusoidal token-index embedding. Each block is
// pre-norm: LN -> self-attention -> residual, LN -> gelu FFN -> residual.
// A final LN and a linear projection map tokens back to patch values.
//
// Parameter order: token projection (W, b); time projection (W, b); per block
// ln1 (gain, bias), Wq, bq, Wk, bk, Wv, bv, Wo, bo, ln2 (gain, bias),
// ffn (W1, b1, W2, b2); final ln (gain, bias); output projection (W, b).
struct DitConfig {
    std::size_t data_dim = 0;
    std::size_t patch = 2;
    std::size_t width = 32;
    std::size_t blocks = 2;
    std::size_t heads = 1;
    std::size_t ffn_hidden = 0; // 0 = 2 * width
    std::size_t embed_dim = 32;
    bool pos_embedding = true; // fixed sinusoidal token-index embedding
};

class DitDenoiser final : public Denoiser {
public:
    DitDenoiser(DitConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        if (cfg_.data_dim == 0) throw ConfigError("dit: data_dim must be positive");
        if (cfg_.patch == 0 || cfg_.data_dim % cfg_.patch != 0) {
            throw ConfigError("dit: data_dim must be divisible by patch size");
        }
        if (cfg_.width == 0 || cfg_.blocks == 0) {
            throw ConfigError("dit: width and block count must be positive");
        }
        if (cfg_.heads == 0 || cfg_.width % cfg_.heads != 0) {
            throw ConfigError("dit: width must be divisible by head count");
        }
        if (cfg_.embed_dim == 0 || cfg_.embed_dim % 2 != 0) {
            throw ConfigError("dit: embed_dim must be even and positive");
        }
        if (cfg_.pos_embedding && cfg_.width % 2 != 0) {
            throw ConfigError("dit: sinusoidal position embedding needs an even width");
        }
        if (cfg_.ffn_hidden == 0) cfg_.ffn_hidden = 2 * cfg_.width;

        RngStream rng(seed);
        const std::size_t w = cfg_.width, f = cfg_.ffn_hidden;
        auto linear = [&](std::size_t in, std::size_t out) {
            params_.push_back(detail::fan_in_uniform({in, out}, in, rng));
            params_.push_back(detail::fan_in_uniform({out}, in, rng));
        };
        auto norm = [&] {
            params_.push_back(Tensor::full({w}, 1.0));
            params_.push_back(Tensor::zeros({w}));
        };
        linear(cfg_.patch, w); // token projection
        linear(cfg_.embed_dim, w); // time projection
        for (std::size_t b = 0; b < cfg_.blocks; ++b) {
            norm();
            linear(w, w); // Wq
            linear(w, w); // Wk
            linear(w, w); // Wv
            linear(w, w); // Wo
            norm();
            linear(w, f);
            linear(f, w);
        }
        norm();
        linear(w, cfg_.patch); // output projection
    }

    Backbone backbone() const override { return Backbone::Dit; }
    std::size_t data_dim() const override { return cfg_.data_dim; }
    const DitConfig& config() const { return cfg_; }

    std::vector<Tensor>& params() override { return params_; }
    const std::vector<Tensor>& params() const override { return params_; }

    using Denoiser::predict_noise;

    NodeId predict_noise(Tape& tape, std::span<const NodeId> ps, NodeId x_t,
                         std::span<const int> timesteps) const override {
        check_inputs(tape, ps, x_t, timesteps);
        const std::size_t batch = tape.value(x_t).rows();
        const std::size_t seq = cfg_.data_dim / cfg_.patch;

        std::size_t pi = 0;
        auto linear = [&](NodeId in) {
            const NodeId out = tape.add(tape.matmul(in, ps[pi]), ps[pi + 1]);
            pi += 2;
            return out;
        };
        auto norm = [&](NodeId in) {
            const NodeId out = tape.layer_norm(in, ps[pi], ps[pi + 1], kLayerNormEps);
            pi += 2;
            return out;
        };

        NodeId h = linear(tape.reshape(x_t, {batch * seq, cfg_.patch}));
        const NodeId temb = tape.leaf(time_embedding_rows(timesteps, cfg_.embed_dim));
        h = tape.add(h, tape.repeat_rows(linear(temb), seq));
        if (cfg_.pos_embedding) h = tape.add(h, tape.leaf(position_rows(batch, seq)));

        for (std::size_t b = 0; b < cfg_.blocks; ++b) {
            const NodeId a = norm(h);
            const NodeId q = linear(a), k = linear(a), v = linear(a);
            const AttentionNodes att = self_attention(tape, q, k, v, batch, seq, cfg_.heads);
            h = tape.add(h, linear(att.out));
            h = tape.add(h, linear(tape.gelu(linear(norm(h)))));
        }
        return tape.reshape(linear(norm(h)), {batch, cfg_.data_dim});
    }

private:
    // Token-index embedding, tiled across the batch.
    Tensor position_rows(std::size_t batch, std::size_t seq) const {
        Tensor out({batch * seq, cfg_.width});
        for (std::size_t s = 0; s < seq; ++s) {
            const Tensor e = time_embedding(static_cast<long>(s), cfg_.width);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t j = 0; j < cfg_.width; ++j) out(b * seq + s, j) = e[j];
        }
        return out;
    }

    DitConfig cfg_;
    std::vector<Tensor> params_;
};

} // namespace diffad
