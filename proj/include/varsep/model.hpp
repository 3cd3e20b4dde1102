#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "nets.hpp"

namespace varsep {

// ---------------------------------------------------------------------------
// Forecasting model with disentangled latents: a static code S and a dynamic
// code T are encoded from a conditioning window of tau+1 consecutive frames
// (concatenated along the feature axis), T evolves under a learned
// discrete-time flow (residual network or GRU), and each frame is decoded
// from the combination of S with the current T.

enum class Combination : std::uint8_t { Concatenate = 0, ElementwiseProduct = 1 };
enum class DynamicsKind : std::uint8_t { Residual = 0, Gru = 1 };

inline const char* combination_name(Combination c) {
    return c == Combination::Concatenate ? "concat" : "product";
}

inline const char* dynamics_kind_name(DynamicsKind k) {
    return k == DynamicsKind::Residual ? "residual" : "gru";
}

struct ModelConfig {
    std::size_t m = 100;  // observation dim
    std::size_t d = 32;   // static code dim; 0 disables the static path
    std::size_t p = 32;   // dynamic code dim
    std::size_t tau = 4;  // conditioning window holds tau+1 frames
    Combination combination = Combination::ElementwiseProduct;
    std::vector<std::size_t> enc_hidden = {2400, 150};
    std::vector<std::size_t> dec_hidden = {2400, 150};
    DynamicsKind dynamics = DynamicsKind::Residual;
    std::size_t dyn_blocks = 3;
    std::size_t dyn_hidden = 512;
    double dyn_gain = 0.71;

    std::size_t window_frames() const { return tau + 1; }
    std::size_t window_width() const { return (tau + 1) * m; }
    bool has_static() const { return d > 0; }

    std::size_t combined_width() const {
        if (!has_static()) return p;
        return combination == Combination::Concatenate ? d + p : p;
    }

    void validate() const {
        if (m == 0 || p == 0) throw ContractError("model: m and p must be positive");
        if (combination == Combination::ElementwiseProduct && has_static() && d != p)
            throw ContractError("model: elementwise product requires d == p, got d=" +
                                std::to_string(d) + " p=" + std::to_string(p));
        if (dynamics == DynamicsKind::Residual) residual_spec().validate();
        if (has_static()) static_encoder_spec().validate();
        dynamic_encoder_spec().validate();
        decoder_spec().validate();
    }

    MlpSpec static_encoder_spec() const {
        std::vector<std::size_t> w{window_width()};
        w.insert(w.end(), enc_hidden.begin(), enc_hidden.end());
        w.push_back(d);
        return {w, OutputActivation::None};
    }

    MlpSpec dynamic_encoder_spec() const {
        std::vector<std::size_t> w{window_width()};
        w.insert(w.end(), enc_hidden.begin(), enc_hidden.end());
        w.push_back(p);
        return {w, OutputActivation::None};
    }

    MlpSpec decoder_spec() const {
        std::vector<std::size_t> w{combined_width()};
        w.insert(w.end(), dec_hidden.begin(), dec_hidden.end());
        w.push_back(m);
        return {w, OutputActivation::Sigmoid};
    }

    DynamicsSpec residual_spec() const { return {dyn_blocks, dyn_hidden, p, dyn_gain}; }
    GruSpec gru_spec() const { return {p}; }
};

struct ModelParams {
    MlpParams static_encoder;  // empty when the static path is disabled
    MlpParams dynamic_encoder;
    ResidualParams residual;
    GruParams gru;
    MlpParams decoder;
};

// Zero-filled parameters with the configured shapes (checkpoint loading,
// shape probes). Not a usable initialization for training.
inline ModelParams zero_model_params(const ModelConfig& cfg) {
    cfg.validate();
    auto zero_mlp = [](const MlpSpec& spec) {
        MlpParams p;
        for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
            p.weights.push_back(Tensor::zeros({spec.widths[l], spec.widths[l + 1]}));
            p.biases.push_back(Tensor::zeros({1, spec.widths[l + 1]}));
        }
        return p;
    };
    ModelParams params;
    if (cfg.has_static()) params.static_encoder = zero_mlp(cfg.static_encoder_spec());
    params.dynamic_encoder = zero_mlp(cfg.dynamic_encoder_spec());
    if (cfg.dynamics == DynamicsKind::Residual) {
        MlpSpec block = residual_block_spec(cfg.residual_spec());
        for (std::size_t k = 0; k < cfg.dyn_blocks; ++k)
            params.residual.blocks.push_back(zero_mlp(block));
    } else {
        std::size_t p = cfg.p;
        for (Tensor* t : {&params.gru.wz, &params.gru.uz, &params.gru.wr,
                          &params.gru.ur, &params.gru.wh, &params.gru.uh})
            *t = Tensor::zeros({p, p});
        for (Tensor* t : {&params.gru.bz, &params.gru.br, &params.gru.bh})
            *t = Tensor::zeros({1, p});
    }
    params.decoder = zero_mlp(cfg.decoder_spec());
    return params;
}

inline ModelParams init_model(const ModelConfig& cfg, const Rng& root) {
    cfg.validate();
    ModelParams params;
    if (cfg.has_static()) {
        Rng r = root.derive("static-encoder");
        params.static_encoder = init_encoder_decoder(cfg.static_encoder_spec(), r);
    }
    {
        Rng r = root.derive("dynamic-encoder");
        params.dynamic_encoder = init_encoder_decoder(cfg.dynamic_encoder_spec(), r);
    }
    {
        Rng r = root.derive("dynamics");
        if (cfg.dynamics == DynamicsKind::Residual)
            params.residual = init_residual(cfg.residual_spec(), r);
        else
            params.gru = init_gru(cfg.gru_spec(), cfg.dyn_gain, r);
    }
    {
        Rng r = root.derive("decoder");
        params.decoder = init_encoder_decoder(cfg.decoder_spec(), r);
    }
    return params;
}

// Visits every parameter tensor in a stable order with a dotted name.
template <typename P, typename F>
void visit_model_params(P& params, const ModelConfig& cfg, F&& f) {
    if (cfg.has_static()) visit_params(params.static_encoder, "static_encoder", f);
    visit_params(params.dynamic_encoder, "dynamic_encoder", f);
    if (cfg.dynamics == DynamicsKind::Residual)
        visit_params(params.residual, "dynamics", f);
    else
        visit_params(params.gru, "dynamics", f);
    visit_params(params.decoder, "decoder", f);
}

// ---------------------------------------------------------------------------
// Tape bindings

struct ModelBinding {
    const ModelConfig* config = nullptr;
    MlpBinding static_encoder;
    MlpBinding dynamic_encoder;
    ResidualBinding residual;
    GruBinding gru;
    MlpBinding decoder;
};

inline ModelBinding bind_model(Tape& tape, const ModelParams& params,
                               const ModelConfig& cfg, bool requires_grad = true) {
    ModelBinding b;
    b.config = &cfg;
    if (cfg.has_static())
        b.static_encoder = bind_mlp(tape, params.static_encoder, requires_grad);
    b.dynamic_encoder = bind_mlp(tape, params.dynamic_encoder, requires_grad);
    if (cfg.dynamics == DynamicsKind::Residual)
        b.residual = bind_residual(tape, params.residual, requires_grad);
    else
        b.gru = bind_gru(tape, params.gru, requires_grad);
    b.decoder = bind_mlp(tape, params.decoder, requires_grad);
    return b;
}

// Rebuilds a binding from leaves laid out in visit_model_params order,
// starting at ids[offset]. Callers that create the leaves themselves (e.g.
// gradient checking) use this to agree with the canonical parameter order.
inline ModelBinding binding_from_leaves(const ModelConfig& cfg,
                                        const std::vector<ValueId>& ids,
                                        std::size_t offset = 0) {
    ModelBinding b;
    b.config = &cfg;
    std::size_t k = offset;
    auto take = [&]() {
        if (k >= ids.size())
            throw ContractError("binding_from_leaves: ran out of leaf ids");
        return ids[k++];
    };
    auto take_mlp = [&](const MlpSpec& spec) {
        MlpBinding mb;
        for (std::size_t l = 0; l < spec.layers(); ++l) {
            mb.weights.push_back(take());
            mb.biases.push_back(take());
        }
        return mb;
    };
    if (cfg.has_static()) b.static_encoder = take_mlp(cfg.static_encoder_spec());
    b.dynamic_encoder = take_mlp(cfg.dynamic_encoder_spec());
    if (cfg.dynamics == DynamicsKind::Residual) {
        MlpSpec block = residual_block_spec(cfg.residual_spec());
        for (std::size_t i = 0; i < cfg.dyn_blocks; ++i)
            b.residual.blocks.push_back(take_mlp(block));
    } else {
        b.gru.wz = take(); b.gru.uz = take(); b.gru.bz = take();
        b.gru.wr = take(); b.gru.ur = take(); b.gru.br = take();
        b.gru.wh = take(); b.gru.uh = take(); b.gru.bh = take();
    }
    b.decoder = take_mlp(cfg.decoder_spec());
    return b;
}

namespace detail {

inline void check_window(const Tape& tape, const ModelConfig& cfg, ValueId window) {
    const Tensor& w = tape.value(window);
    if (w.rank() != 2 || w.cols() != cfg.window_width())
        throw ShapeError("conditioning window must be (batch, " +
                         std::to_string(cfg.window_width()) + "), got " +
                         shape_str(w.shape));
}

}  // namespace detail

inline ValueId encode_static(Tape& tape, const ModelBinding& b, ValueId window) {
    if (!b.config->has_static())
        throw ContractError("encode_static: model has no static path (d = 0)");
    detail::check_window(tape, *b.config, window);
    return mlp_apply(tape, b.config->static_encoder_spec(), b.static_encoder, window);
}

inline ValueId encode_dynamic(Tape& tape, const ModelBinding& b, ValueId window) {
    detail::check_window(tape, *b.config, window);
    return mlp_apply(tape, b.config->dynamic_encoder_spec(), b.dynamic_encoder, window);
}

inline ValueId dynamics_step(Tape& tape, const ModelBinding& b, ValueId state) {
    if (b.config->dynamics == DynamicsKind::Residual)
        return residual_step(tape, b.config->residual_spec(), b.residual, state);
    return gru_step(tape, b.config->gru_spec(), b.gru, state);
}

// Rows [T_0, T_1, ..., T_n]; row 0 is the initial condition itself.
inline std::vector<ValueId> integrate_latent(Tape& tape, const ModelBinding& b,
                                             ValueId t0, std::size_t n_steps) {
    std::vector<ValueId> rows{t0};
    rows.reserve(n_steps + 1);
    for (std::size_t k = 0; k < n_steps; ++k)
        rows.push_back(dynamics_step(tape, b, rows.back()));
    return rows;
}

inline ValueId combine(Tape& tape, const ModelConfig& cfg,
                       std::optional<ValueId> s, ValueId t) {
    if (!cfg.has_static()) return t;
    if (!s) throw ContractError("combine: static code required but missing");
    if (cfg.combination == Combination::Concatenate) return tape.concat({*s, t});
    return tape.mul(*s, t);
}

inline ValueId decode(Tape& tape, const ModelBinding& b, ValueId z) {
    return mlp_apply(tape, b.config->decoder_spec(), b.decoder, z);
}

// ---------------------------------------------------------------------------
// Forecasting: frame k is decoded from (S, T_k) for k = 0..horizon.

struct ForecastGraph {
    std::optional<ValueId> s;
    std::vector<ValueId> latent;  // horizon+1 rows of T
    std::vector<ValueId> frames;  // horizon+1 decoded frames
};

// s_override replaces the window's own static code (content swap); the latent
// trajectory is unaffected by it.
inline ForecastGraph forecast(Tape& tape, const ModelBinding& b, ValueId window,
                              std::size_t horizon,
                              std::optional<ValueId> s_override = std::nullopt) {
    const ModelConfig& cfg = *b.config;
    ForecastGraph g;
    if (cfg.has_static())
        g.s = s_override ? *s_override : encode_static(tape, b, window);
    ValueId t0 = encode_dynamic(tape, b, window);
    g.latent = integrate_latent(tape, b, t0, horizon);
    g.frames.reserve(horizon + 1);
    for (ValueId t : g.latent)
        g.frames.push_back(decode(tape, b, combine(tape, cfg, g.s, t)));
    return g;
}

// Gradient-free forecast returning plain frame tensors.
inline std::vector<Tensor> forecast_frames(const ModelParams& params,
                                           const ModelConfig& cfg,
                                           const Tensor& window,
                                           std::size_t horizon) {
    Tape tape;
    ModelBinding b = bind_model(tape, params, cfg, /*requires_grad=*/false);
    ForecastGraph g = forecast(tape, b, tape.constant(window), horizon);
    std::vector<Tensor> out;
    out.reserve(g.frames.size());
    for (ValueId id : g.frames) out.push_back(tape.value(id));
    return out;
}

// ---------------------------------------------------------------------------
// Window assembly from datasets: tau+1 consecutive frames concatenated along
// the feature axis, one row per requested (sequence, start) pair.

inline Tensor window_batch(const Dataset& ds,
                           const std::vector<std::pair<std::size_t, std::size_t>>& starts,
                           std::size_t tau) {
    std::size_t m = ds.frame_numel();
    Tensor out({starts.size(), (tau + 1) * m});
    for (std::size_t r = 0; r < starts.size(); ++r) {
        auto [seq, start] = starts[r];
        if (start + tau >= ds.n_frames)
            throw ContractError("window: frames " + std::to_string(start) + ".." +
                                std::to_string(start + tau) + " exceed sequence length " +
                                std::to_string(ds.n_frames));
        for (std::size_t f = 0; f <= tau; ++f) {
            const float* src = ds.frame(seq, start + f);
            double* dst = out.data.data() + r * out.cols() + f * m;
            for (std::size_t i = 0; i < m; ++i) dst[i] = double(src[i]);
        }
    }
    return out;
}

inline Tensor conditioning_window(const Dataset& ds, std::size_t seq,
                                  std::size_t start, std::size_t tau) {
    return window_batch(ds, {{seq, start}}, tau);
}

// One row per (sequence, frame) pair, each of extent frame_numel.
inline Tensor frame_batch(const Dataset& ds,
                          const std::vector<std::pair<std::size_t, std::size_t>>& picks) {
    std::size_t m = ds.frame_numel();
    Tensor out({picks.size(), m});
    for (std::size_t r = 0; r < picks.size(); ++r) {
        auto [seq, fr] = picks[r];
        const float* src = ds.frame(seq, fr);
        for (std::size_t i = 0; i < m; ++i) out.data[r * m + i] = double(src[i]);
    }
    return out;
}

}  // namespace varsep
