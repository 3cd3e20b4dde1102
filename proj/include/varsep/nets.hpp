#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace varsep {

// ---------------------------------------------------------------------------
// Multi-layer perceptrons

enum class OutputActivation { None, Sigmoid };

struct MlpSpec {
    std::vector<std::size_t> widths;  // input, hidden..., output
    OutputActivation output_activation = OutputActivation::None;

    void validate() const {
        if (widths.size() < 3)
            throw ContractError("mlp: need at least one hidden layer");
        for (std::size_t w : widths)
            if (w == 0) throw ContractError("mlp: layer width must be >= 1");
    }

    std::size_t input_width() const { return widths.front(); }
    std::size_t output_width() const { return widths.back(); }
    std::size_t layers() const { return widths.size() - 1; }
};

struct MlpParams {
    std::vector<Tensor> weights;  // layer l: (widths[l], widths[l+1])
    std::vector<Tensor> biases;   // layer l: (1, widths[l+1])
};

// Stable iteration order for optimizers and serialization.
template <typename F>
void visit_params(MlpParams& p, const std::string& prefix, F&& f) {
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        f(prefix + ".w" + std::to_string(l), p.weights[l]);
        f(prefix + ".b" + std::to_string(l), p.biases[l]);
    }
}

// ---------------------------------------------------------------------------
// Initializers. All draw from the rng in a fixed documented order, so a given
// (spec, seed) pair always produces bit-identical parameters.

// Gaussian draw with the smaller side orthonormalized (modified Gram-Schmidt,
// applied twice for numerical orthogonality), then scaled. For rows <= cols
// the result satisfies W W^T = gain^2 I; otherwise W^T W = gain^2 I. Either
// way every singular value equals gain.
inline Tensor init_orthogonal(std::size_t rows, std::size_t cols, double gain,
                              Rng& rng) {
    if (rows == 0 || cols == 0) throw ContractError("init_orthogonal: empty matrix");
    if (gain <= 0.0) throw ContractError("init_orthogonal: gain must be positive");
    Tensor a({rows, cols});
    for (double& v : a.data) v = rng.normal();
    bool wide = rows <= cols;
    std::size_t nvec = wide ? rows : cols;
    std::size_t dim = wide ? cols : rows;
    auto at = [&](std::size_t v, std::size_t i) -> double& {
        return wide ? a.at(v, i) : a.at(i, v);
    };
    for (std::size_t v = 0; v < nvec; ++v) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t u = 0; u < v; ++u) {
                double dot = 0.0;
                for (std::size_t i = 0; i < dim; ++i) dot += at(u, i) * at(v, i);
                for (std::size_t i = 0; i < dim; ++i) at(v, i) -= dot * at(u, i);
            }
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < dim; ++i) norm += at(v, i) * at(v, i);
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < dim; ++i) at(v, i) /= norm;
    }
    for (double& v : a.data) v *= gain;
    return a;
}

// Encoder/decoder convention: weights N(0, 0.02^2) drawn layer by layer in
// row-major element order, biases exactly zero.
inline MlpParams init_encoder_decoder(const MlpSpec& spec, Rng& rng) {
    spec.validate();
    MlpParams p;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        Tensor w({spec.widths[l], spec.widths[l + 1]});
        for (double& v : w.data) v = rng.normal(0.0, 0.02);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Tensor::zeros({1, spec.widths[l + 1]}));
    }
    return p;
}

// Orthogonal weights with a shared gain, zero biases.
inline MlpParams init_mlp_orthogonal(const MlpSpec& spec, double gain, Rng& rng) {
    spec.validate();
    MlpParams p;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        p.weights.push_back(
            init_orthogonal(spec.widths[l], spec.widths[l + 1], gain, rng));
        p.biases.push_back(Tensor::zeros({1, spec.widths[l + 1]}));
    }
    return p;
}

// ---------------------------------------------------------------------------
// MLP application on a tape

struct MlpBinding {
    std::vector<ValueId> weights, biases;
};

inline MlpBinding bind_mlp(Tape& tape, const MlpParams& p, bool requires_grad = true) {
    MlpBinding b;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        b.weights.push_back(tape.leaf(p.weights[l], requires_grad));
        b.biases.push_back(tape.leaf(p.biases[l], requires_grad));
    }
    return b;
}

inline ValueId mlp_apply(Tape& tape, const MlpSpec& spec, const MlpBinding& b,
                         ValueId x) {
    ValueId h = x;
    for (std::size_t l = 0; l + 1 < spec.layers(); ++l)
        h = tape.relu(tape.affine(h, b.weights[l], b.biases[l]));
    h = tape.affine(h, b.weights.back(), b.biases.back());
    if (spec.output_activation == OutputActivation::Sigmoid) h = tape.sigmoid(h);
    return h;
}

inline Tensor mlp_eval(const MlpSpec& spec, const MlpParams& p, const Tensor& x) {
    Tape tape;
    ValueId ix = tape.leaf(x, false);
    MlpBinding b = bind_mlp(tape, p, false);
    return tape.value(mlp_apply(tape, spec, b, ix));
}

// ---------------------------------------------------------------------------
// Latent dynamics: residual network integrator. One step of the state
// advances through K blocks, block i computing x <- x + g_i(x) with g_i a
// two-hidden-layer relu MLP of width H.

struct DynamicsSpec {
    std::size_t blocks = 3;      // K
    std::size_t hidden = 512;    // H
    std::size_t state_dim = 32;  // p
    double gain = 0.71;

    void validate() const {
        if (blocks < 1) throw ContractError("dynamics: need at least one block");
        if (hidden < 1) throw ContractError("dynamics: hidden width must be >= 1");
        if (state_dim < 1) throw ContractError("dynamics: state dim must be >= 1");
        if (gain <= 0.0) throw ContractError("dynamics: gain must be positive");
    }
};

inline MlpSpec residual_block_spec(const DynamicsSpec& d) {
    return MlpSpec{{d.state_dim, d.hidden, d.hidden, d.state_dim},
                   OutputActivation::None};
}

struct ResidualParams {
    std::vector<MlpParams> blocks;
};

template <typename F>
void visit_params(ResidualParams& p, const std::string& prefix, F&& f) {
    for (std::size_t k = 0; k < p.blocks.size(); ++k)
        visit_params(p.blocks[k], prefix + ".block" + std::to_string(k), f);
}

inline ResidualParams init_residual(const DynamicsSpec& d, Rng& rng) {
    d.validate();
    ResidualParams p;
    MlpSpec bs = residual_block_spec(d);
    for (std::size_t k = 0; k < d.blocks; ++k)
        p.blocks.push_back(init_mlp_orthogonal(bs, d.gain, rng));
    return p;
}

struct ResidualBinding {
    std::vector<MlpBinding> blocks;
};

inline ResidualBinding bind_residual(Tape& tape, const ResidualParams& p,
                                     bool requires_grad = true) {
    ResidualBinding b;
    for (const MlpParams& mp : p.blocks) b.blocks.push_back(bind_mlp(tape, mp, requires_grad));
    return b;
}

inline ValueId residual_step(Tape& tape, const DynamicsSpec& d,
                             const ResidualBinding& b, ValueId state) {
    MlpSpec bs = residual_block_spec(d);
    ValueId x = state;
    for (std::size_t k = 0; k < d.blocks; ++k)
        x = tape.add(x, mlp_apply(tape, bs, b.blocks[k], x));
    return x;
}

inline Tensor residual_eval(const DynamicsSpec& d, const ResidualParams& p,
                            const Tensor& state) {
    Tape tape;
    ValueId s = tape.leaf(state, false);
    ResidualBinding b = bind_residual(tape, p, false);
    return tape.value(residual_step(tape, d, b, s));
}

// ---------------------------------------------------------------------------
// GRU alternative for the dynamics ablation. Autonomous: the "input" of the
// cell is the previous state itself. Update convention:
//   z = sigmoid(h Wz + h Uz + bz)          (keep gate)
//   r = sigmoid(h Wr + h Ur + br)
//   hc = tanh(h Wh + (r . h) Uh + bh)
//   h' = z . h + (1 - z) . hc
// so zero parameters halve the state and a large update bias keeps it.

struct GruSpec {
    std::size_t state_dim = 32;

    void validate() const {
        if (state_dim < 1) throw ContractError("gru: state dim must be >= 1");
    }
};

struct GruParams {
    Tensor wz, uz, bz;
    Tensor wr, ur, br;
    Tensor wh, uh, bh;
};

template <typename F>
void visit_params(GruParams& p, const std::string& prefix, F&& f) {
    f(prefix + ".wz", p.wz);
    f(prefix + ".uz", p.uz);
    f(prefix + ".bz", p.bz);
    f(prefix + ".wr", p.wr);
    f(prefix + ".ur", p.ur);
    f(prefix + ".br", p.br);
    f(prefix + ".wh", p.wh);
    f(prefix + ".uh", p.uh);
    f(prefix + ".bh", p.bh);
}

// All six matrices orthogonal with the same gain (standard recurrent choice;
// with the input tied to the state every matrix is effectively recurrent),
// biases zero. Draw order: wz, uz, wr, ur, wh, uh.
inline GruParams init_gru(const GruSpec& s, double gain, Rng& rng) {
    s.validate();
    std::size_t p = s.state_dim;
    GruParams g;
    g.wz = init_orthogonal(p, p, gain, rng);
    g.uz = init_orthogonal(p, p, gain, rng);
    g.wr = init_orthogonal(p, p, gain, rng);
    g.ur = init_orthogonal(p, p, gain, rng);
    g.wh = init_orthogonal(p, p, gain, rng);
    g.uh = init_orthogonal(p, p, gain, rng);
    g.bz = Tensor::zeros({1, p});
    g.br = Tensor::zeros({1, p});
    g.bh = Tensor::zeros({1, p});
    return g;
}

struct GruBinding {
    ValueId wz, uz, bz;
    ValueId wr, ur, br;
    ValueId wh, uh, bh;
};

inline GruBinding bind_gru(Tape& tape, const GruParams& p, bool requires_grad = true) {
    GruBinding b;
    b.wz = tape.leaf(p.wz, requires_grad);
    b.uz = tape.leaf(p.uz, requires_grad);
    b.bz = tape.leaf(p.bz, requires_grad);
    b.wr = tape.leaf(p.wr, requires_grad);
    b.ur = tape.leaf(p.ur, requires_grad);
    b.br = tape.leaf(p.br, requires_grad);
    b.wh = tape.leaf(p.wh, requires_grad);
    b.uh = tape.leaf(p.uh, requires_grad);
    b.bh = tape.leaf(p.bh, requires_grad);
    return b;
}

// state must be (batch, p).
inline ValueId gru_step(Tape& tape, const GruSpec& s, const GruBinding& b,
                        ValueId state) {
    const Tensor& hv = tape.value(state);
    if (hv.rank() != 2 || hv.last_extent() != s.state_dim)
        throw ShapeError("gru_step: state must be (batch, " +
                         std::to_string(s.state_dim) + "), got " + shape_str(hv.shape));
    ValueId z = tape.sigmoid(
        tape.add(tape.affine(state, b.wz, b.bz), tape.matmul(state, b.uz)));
    ValueId r = tape.sigmoid(
        tape.add(tape.affine(state, b.wr, b.br), tape.matmul(state, b.ur)));
    ValueId hc = tape.tanh(tape.add(tape.affine(state, b.wh, b.bh),
                                    tape.matmul(tape.mul(r, state), b.uh)));
    ValueId ones = tape.constant(Tensor::full(tape.value(z).shape, 1.0));
    return tape.add(tape.mul(z, state), tape.mul(tape.sub(ones, z), hc));
}

inline Tensor gru_eval(const GruSpec& s, const GruParams& p, const Tensor& state) {
    Tape tape;
    ValueId h = tape.leaf(state, false);
    GruBinding b = bind_gru(tape, p, false);
    return tape.value(gru_step(tape, s, b, h));
}

}  // namespace varsep
