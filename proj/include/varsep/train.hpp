#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "losses.hpp"
#include "optim.hpp"
#include "text.hpp"

namespace varsep {

// ---------------------------------------------------------------------------
// Training loop. One epoch draws one random chunk of nu+1 frames from every
// training sequence (in a fresh shuffled order), steps the optimizer once per
// batch, and logs the chunk-weighted mean of each loss term.
//
// Determinism: epoch e consumes only Rng(seed).derive("train", e), so a
// resumed run replays the exact stream of the epochs it continues.

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    LossReport losses;
};

inline std::string train_csv_header() {
    return "epoch,lr,loss_total,loss_pred,loss_ae,loss_reg_s,loss_reg_t";
}

inline std::string train_csv_row(const EpochLog& e) {
    return std::to_string(e.epoch) + "," + fmt_double(e.lr) + "," +
           fmt_double(e.losses.total) + "," + fmt_double(e.losses.pred) + "," +
           fmt_double(e.losses.ae) + "," + fmt_double(e.losses.reg_s) + "," +
           fmt_double(e.losses.reg_t);
}

// Learning rate for a 1-based epoch: base times every multiplier whose
// scheduled epoch has been reached.
inline double scheduled_lr(double base,
                           const std::vector<std::pair<std::size_t, double>>& schedule,
                           std::size_t epoch) {
    double lr = base;
    for (auto [at, mult] : schedule)
        if (epoch >= at) lr *= mult;
    return lr;
}

// Called after each completed epoch; return false to stop early (tests).
using EpochHook = std::function<bool(const EpochLog&, ModelParams&, AdamState&)>;

struct TrainRun {
    std::vector<EpochLog> log;
    std::size_t epochs_done = 0;  // absolute count, includes resumed epochs
};

// Runs epochs start_epoch+1 .. cfg.epochs. `opt` carries Adam moments across
// calls (resume); it must match the model's parameter count.
inline TrainRun train_model(ModelParams& params, const ExperimentConfig& cfg,
                            const Dataset& ds, AdamState& opt,
                            std::size_t start_epoch = 0,
                            const EpochHook& hook = nullptr) {
    cfg.validate();
    const ModelConfig mcfg = cfg.model_config();
    mcfg.validate();
    if (ds.frame_numel() != mcfg.m)
        throw ContractError("train: dataset frames have " +
                            std::to_string(ds.frame_numel()) + " values, model expects " +
                            std::to_string(mcfg.m));
    const std::size_t n_train = ds.train_count();
    if (n_train == 0 || n_train > ds.n_sequences)
        throw ContractError("train: dataset train_count " + std::to_string(n_train) +
                            " invalid for " + std::to_string(ds.n_sequences) +
                            " sequences");
    const std::size_t nu = cfg.nu(), tau = cfg.tau();
    if (ds.n_frames < nu + 1)
        throw ContractError("train: sequences have " + std::to_string(ds.n_frames) +
                            " frames, chunks need " + std::to_string(nu + 1));

    std::vector<Tensor*> param_ptrs;
    visit_model_params(params, mcfg,
                       [&](const std::string&, Tensor& t) { param_ptrs.push_back(&t); });
    if (opt.m.empty() && opt.step == 0) opt = init_adam(param_ptrs);
    if (opt.m.size() != param_ptrs.size())
        throw ContractError("train: optimizer state tracks " +
                            std::to_string(opt.m.size()) + " tensors, model has " +
                            std::to_string(param_ptrs.size()));

    const Rng root(cfg.seed);
    const LossWeights weights = cfg.loss_weights();
    const AdamConfig adam = cfg.adam_config();
    TrainRun run;
    run.epochs_done = start_epoch;

    std::vector<std::size_t> order(n_train);
    for (std::size_t epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
        Rng er = root.derive("train", epoch);
        for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
        er.shuffle(order);
        const double lr = scheduled_lr(cfg.lr, cfg.schedule, epoch);

        LossReport epoch_mean;
        for (std::size_t begin = 0; begin < n_train; begin += cfg.batch) {
            std::size_t end = std::min(begin + cfg.batch, n_train);
            std::vector<std::pair<std::size_t, std::size_t>> chunks;
            chunks.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                std::size_t start = std::size_t(er.uniform_int(0, ds.n_frames - 1 - nu));
                chunks.push_back({order[i], start});
            }
            ChunkBatch batch = assemble_chunk_batch(ds, chunks, tau, nu, er);

            Tape tape;
            ModelBinding binding = bind_model(tape, params, mcfg);
            LossGraph graph = total_loss(tape, binding, batch, weights);
            LossReport r = report_losses(tape, graph);
            GradientSet grads = tape.gradients(graph.total);
            std::vector<ValueId> ids = model_leaf_ids(binding);
            std::vector<const Tensor*> grad_ptrs;
            grad_ptrs.reserve(ids.size());
            for (ValueId id : ids) grad_ptrs.push_back(&grads.at(id));
            adam_step(adam, lr, opt, param_ptrs, grad_ptrs);

            double w = double(end - begin) / double(n_train);
            epoch_mean.total += w * r.total;
            epoch_mean.pred += w * r.pred;
            epoch_mean.ae += w * r.ae;
            epoch_mean.reg_s += w * r.reg_s;
            epoch_mean.reg_t += w * r.reg_t;
        }

        EpochLog entry{epoch, lr, epoch_mean};
        run.log.push_back(entry);
        run.epochs_done = epoch;
        if (hook && !hook(entry, params, opt)) break;
    }
    return run;
}

}  // namespace varsep
