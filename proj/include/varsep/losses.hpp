#pragma once

#include <string>
#include <utility>
#include <vector>

#include "model.hpp"

namespace varsep {

// ---------------------------------------------------------------------------
// Training objective: a weighted sum of four terms, each reported as a batch
// mean so the weighted combination equals the batch mean of the per-sequence
// weighted sums.
//   prediction   mean_i mean_entries (v_hat - v)^2 over the forecast frames
//   autoencoding decode(S_t0, E_T(window at random offset)) vs that frame
//   static reg   squared distance between E_S at the chunk's two ends / d
//   dynamic reg  squared norm of E_T at the chunk start / p

struct LossWeights {
    double pred = 45.0;
    double ae = 1.0;
    double reg_s = 45.0;
    double reg_t = 0.016;  // 0.5 * p * 1e-3 at p = 32

    void validate() const {
        if (pred < 0.0 || ae < 0.0 || reg_s < 0.0 || reg_t < 0.0)
            throw ContractError("loss weights must be nonnegative");
    }

    static double default_reg_t(std::size_t p) { return 0.5 * double(p) * 1e-3; }
};

// One training batch: B chunks of nu+1 consecutive frames. Row b of every
// member tensor belongs to chunk b.
struct ChunkBatch {
    std::size_t horizon = 0;        // nu: forecast steps past the chunk start
    Tensor windows;                 // (B, (tau+1) m) conditioning at t0
    std::vector<Tensor> targets;    // nu+1 tensors (B, m): frames t0+k
    Tensor ae_windows;              // (B, (tau+1) m) at t0 + i_b
    Tensor ae_targets;              // (B, m): frame t0 + i_b
    Tensor end_windows;             // (B, (tau+1) m) at t0 + nu - tau
    std::vector<std::size_t> ae_offsets;  // the drawn i_b, one per chunk

    std::size_t batch_size() const { return windows.rows(); }
};

// Gathers the tensors for the given (sequence, start frame) chunks. Each chunk
// must provide nu+1 frames. The autoencoding offset i_b ~ U{0..nu-tau} is
// drawn from `rng` once per chunk, in order.
inline ChunkBatch assemble_chunk_batch(
    const Dataset& ds, const std::vector<std::pair<std::size_t, std::size_t>>& chunks,
    std::size_t tau, std::size_t nu, Rng& rng) {
    if (nu < tau)
        throw ContractError("chunk batch: nu = " + std::to_string(nu) +
                            " shorter than conditioning tau = " + std::to_string(tau));
    if (chunks.empty()) throw ContractError("chunk batch: empty batch");
    for (auto [seq, start] : chunks) {
        if (seq >= ds.n_sequences)
            throw ContractError("chunk batch: sequence " + std::to_string(seq) +
                                " out of range");
        if (start + nu >= ds.n_frames)
            throw ContractError("chunk batch: chunk at frame " + std::to_string(start) +
                                " needs " + std::to_string(nu + 1) +
                                " frames, sequence has " + std::to_string(ds.n_frames));
    }

    ChunkBatch batch;
    batch.horizon = nu;
    batch.windows = window_batch(ds, chunks, tau);

    std::vector<std::pair<std::size_t, std::size_t>> picks(chunks.size());
    batch.targets.reserve(nu + 1);
    for (std::size_t k = 0; k <= nu; ++k) {
        for (std::size_t b = 0; b < chunks.size(); ++b)
            picks[b] = {chunks[b].first, chunks[b].second + k};
        batch.targets.push_back(frame_batch(ds, picks));
    }

    batch.ae_offsets.resize(chunks.size());
    std::vector<std::pair<std::size_t, std::size_t>> ae_starts(chunks.size());
    for (std::size_t b = 0; b < chunks.size(); ++b) {
        std::size_t i = std::size_t(rng.uniform_int(0, nu - tau));
        batch.ae_offsets[b] = i;
        ae_starts[b] = {chunks[b].first, chunks[b].second + i};
        picks[b] = ae_starts[b];
    }
    batch.ae_windows = window_batch(ds, ae_starts, tau);
    batch.ae_targets = frame_batch(ds, picks);

    std::vector<std::pair<std::size_t, std::size_t>> ends(chunks.size());
    for (std::size_t b = 0; b < chunks.size(); ++b)
        ends[b] = {chunks[b].first, chunks[b].second + nu - tau};
    batch.end_windows = window_batch(ds, ends, tau);
    return batch;
}

// Mean over frames of the mean squared entry error. With (B, m) frames this
// equals the batch mean of the per-sequence (1/m) squared-norm error.
inline ValueId loss_pred(Tape& tape, const std::vector<ValueId>& predicted,
                         const std::vector<ValueId>& target) {
    if (predicted.size() != target.size() || predicted.empty())
        throw ContractError("loss_pred: need matching nonempty frame lists");
    ValueId acc = tape.mean(tape.square(tape.sub(predicted[0], target[0])));
    for (std::size_t k = 1; k < predicted.size(); ++k)
        acc = tape.add(acc,
                       tape.mean(tape.square(tape.sub(predicted[k], target[k]))));
    return tape.mul(acc, tape.constant(1.0 / double(predicted.size())));
}

struct LossGraph {
    ValueId total;
    ValueId pred, ae, reg_s, reg_t;  // unweighted per-term batch means
    ForecastGraph forecast;          // reused by callers needing the frames
};

// Builds the full objective for one batch on the given tape. Per-term nodes
// are always built (they are reported even at weight zero); a zero weight
// contributes nothing to `total` or its gradient.
inline LossGraph total_loss(Tape& tape, const ModelBinding& binding,
                            const ChunkBatch& batch, const LossWeights& weights) {
    weights.validate();
    const ModelConfig& cfg = *binding.config;
    LossGraph g;

    g.forecast = varsep::forecast(tape, binding, tape.constant(batch.windows),
                                  batch.horizon);
    std::vector<ValueId> targets;
    targets.reserve(batch.targets.size());
    for (const Tensor& t : batch.targets) targets.push_back(tape.constant(t));
    g.pred = loss_pred(tape, g.forecast.frames, targets);

    ValueId ae_t = encode_dynamic(tape, binding, tape.constant(batch.ae_windows));
    ValueId ae_hat = decode(tape, binding, combine(tape, cfg, g.forecast.s, ae_t));
    g.ae = tape.mean(tape.square(tape.sub(ae_hat, tape.constant(batch.ae_targets))));

    if (cfg.has_static()) {
        ValueId s_end =
            encode_static(tape, binding, tape.constant(batch.end_windows));
        g.reg_s = tape.mean(tape.square(tape.sub(*g.forecast.s, s_end)));
    } else {
        g.reg_s = tape.constant(0.0);
    }

    g.reg_t = tape.mean(tape.square(g.forecast.latent[0]));

    ValueId total = tape.mul(g.pred, tape.constant(weights.pred));
    total = tape.add(total, tape.mul(g.ae, tape.constant(weights.ae)));
    total = tape.add(total, tape.mul(g.reg_s, tape.constant(weights.reg_s)));
    total = tape.add(total, tape.mul(g.reg_t, tape.constant(weights.reg_t)));
    g.total = total;
    return g;
}

// Plain-number view of the per-term batch means.
struct LossReport {
    double total = 0.0, pred = 0.0, ae = 0.0, reg_s = 0.0, reg_t = 0.0;
};

inline LossReport report_losses(const Tape& tape, const LossGraph& g) {
    LossReport r;
    r.total = tape.value(g.total).data[0];
    r.pred = tape.value(g.pred).data[0];
    r.ae = tape.value(g.ae).data[0];
    r.reg_s = tape.value(g.reg_s).data[0];
    r.reg_t = tape.value(g.reg_t).data[0];
    return r;
}

// Leaf ids of every model parameter in visit_model_params order, mirroring
// how bind_model created them.
inline std::vector<ValueId> model_leaf_ids(const ModelBinding& b) {
    const ModelConfig& cfg = *b.config;
    std::vector<ValueId> ids;
    auto push_mlp = [&](const MlpBinding& mb) {
        for (std::size_t l = 0; l < mb.weights.size(); ++l) {
            ids.push_back(mb.weights[l]);
            ids.push_back(mb.biases[l]);
        }
    };
    if (cfg.has_static()) push_mlp(b.static_encoder);
    push_mlp(b.dynamic_encoder);
    if (cfg.dynamics == DynamicsKind::Residual) {
        for (const MlpBinding& blk : b.residual.blocks) push_mlp(blk);
    } else {
        ids.insert(ids.end(), {b.gru.wz, b.gru.uz, b.gru.bz, b.gru.wr, b.gru.ur,
                               b.gru.br, b.gru.wh, b.gru.uh, b.gru.bh});
    }
    push_mlp(b.decoder);
    return ids;
}

}  // namespace varsep
