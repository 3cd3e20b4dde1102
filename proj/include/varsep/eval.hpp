#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dataset.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "sprites.hpp"
#include "tensor.hpp"

namespace varsep {

// ---------------------------------------------------------------------------
// Forecast evaluation over test chunks. A chunk of length tau+1+max(horizon)
// starts with the conditioning window; the frame compared at horizon h is
// chunk frame tau+h, i.e. h steps past the last conditioned frame.

struct EvalOptions {
    std::vector<std::size_t> horizons{40};
    double data_range = 1.0;
    std::size_t batch = 128;   // forecast batch; does not affect results
    std::size_t workers = 1;   // data-parallel batches; does not affect results
};

namespace detail {

inline std::vector<std::size_t> canonical_horizons(std::vector<std::size_t> hs) {
    if (hs.empty()) throw ContractError("eval: empty horizon list");
    std::sort(hs.begin(), hs.end());
    hs.erase(std::unique(hs.begin(), hs.end()), hs.end());
    return hs;
}

// Frames carry their spatial shape for windowed metrics; SSIM is only
// defined when that shape is a two-dimensional image at least window-sized.
inline bool ssim_applicable(const Shape& frame_shape, const SsimOptions& opt) {
    return frame_shape.size() == 2 && frame_shape[0] >= opt.window &&
           frame_shape[1] >= opt.window;
}

inline Tensor frame_image(const Dataset& ds, std::size_t seq, std::size_t fr) {
    Tensor t(ds.frame_shape);
    const float* src = ds.frame(seq, fr);
    for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = double(src[i]);
    return t;
}

inline Tensor row_as_image(const Tensor& batch, std::size_t row,
                           const Shape& frame_shape) {
    Tensor t(frame_shape);
    const double* src = batch.data.data() + row * batch.cols();
    std::copy(src, src + t.numel(), t.data.begin());
    return t;
}

}  // namespace detail

// Per-chunk metric samples; reduced serially so worker count never changes
// the result.
struct ChunkMetricTable {
    std::vector<std::size_t> horizons;
    std::vector<double> mse;   // chunk-major: chunk * n_horizons + h
    std::vector<double> ssim;  // NaN when frames are not images
    std::size_t chunks = 0;
    bool has_ssim = false;
};

inline MetricReport reduce_metric_table(const ChunkMetricTable& t, double data_range,
                                        const SsimOptions& sopt = {}) {
    if (t.chunks == 0) throw ContractError("eval: no chunks evaluated");
    MetricReport rep;
    rep.horizons = t.horizons;
    rep.data_range = data_range;
    rep.ssim_options = sopt;
    rep.chunks = t.chunks;
    std::size_t nh = t.horizons.size();
    rep.mse.assign(nh, 0.0);
    rep.ssim.assign(nh, 0.0);
    for (std::size_t c = 0; c < t.chunks; ++c)
        for (std::size_t h = 0; h < nh; ++h) {
            rep.mse[h] += t.mse[c * nh + h];
            rep.ssim[h] += t.ssim[c * nh + h];
        }
    rep.psnr.resize(nh);
    for (std::size_t h = 0; h < nh; ++h) {
        rep.mse[h] /= double(t.chunks);
        rep.ssim[h] = t.has_ssim ? rep.ssim[h] / double(t.chunks)
                                 : std::numeric_limits<double>::quiet_NaN();
        rep.psnr[h] = psnr_from_mse(rep.mse[h], data_range);
    }
    rep.finalize_aggregates();
    rep.validate();
    return rep;
}

// Evaluates the given (sequence, chunk start) pairs; chunk metrics are
// independent, so batch size and worker count leave results bit-identical.
inline MetricReport evaluate_chunks(
    const ModelParams& params, const ModelConfig& cfg, const Dataset& ds,
    const std::vector<std::pair<std::size_t, std::size_t>>& chunks,
    const EvalOptions& opts) {
    if (ds.frame_numel() != cfg.m)
        throw ContractError("eval: dataset frame size " +
                            std::to_string(ds.frame_numel()) +
                            " does not match model m=" + std::to_string(cfg.m));
    if (chunks.empty()) throw ContractError("eval: no chunks to evaluate");
    std::vector<std::size_t> hs = detail::canonical_horizons(opts.horizons);
    std::size_t max_h = hs.back();
    std::size_t chunk_len = cfg.tau + 1 + max_h;
    for (auto [seq, start] : chunks)
        if (seq >= ds.n_sequences || start + chunk_len > ds.n_frames)
            throw ContractError("eval: chunk at sequence " + std::to_string(seq) +
                                " start " + std::to_string(start) +
                                " needs frames past the sequence end");

    SsimOptions sopt;
    bool image = detail::ssim_applicable(ds.frame_shape, sopt);
    ChunkMetricTable table;
    table.horizons = hs;
    table.chunks = chunks.size();
    table.has_ssim = image;
    table.mse.assign(chunks.size() * hs.size(), 0.0);
    table.ssim.assign(chunks.size() * hs.size(), 0.0);

    std::size_t batch = std::max<std::size_t>(1, opts.batch);
    std::size_t n_batches = (chunks.size() + batch - 1) / batch;
    auto run_batch = [&](std::size_t bi) {
        std::size_t lo = bi * batch, hi = std::min(chunks.size(), lo + batch);
        std::vector<std::pair<std::size_t, std::size_t>> slice(chunks.begin() + lo,
                                                               chunks.begin() + hi);
        Tensor windows = window_batch(ds, slice, cfg.tau);
        std::vector<Tensor> frames =
            forecast_frames(params, cfg, windows, cfg.tau + max_h);
        for (std::size_t h = 0; h < hs.size(); ++h) {
            const Tensor& pred = frames[cfg.tau + hs[h]];
            for (std::size_t r = 0; r < slice.size(); ++r) {
                auto [seq, start] = slice[r];
                Tensor pred_img = detail::row_as_image(pred, r, ds.frame_shape);
                Tensor gt_img = detail::frame_image(ds, seq, start + cfg.tau + hs[h]);
                table.mse[(lo + r) * hs.size() + h] = mse(pred_img, gt_img);
                if (image)
                    table.ssim[(lo + r) * hs.size() + h] =
                        ssim(pred_img, gt_img, opts.data_range, sopt);
            }
        }
    };

    std::size_t workers = std::min(std::max<std::size_t>(1, opts.workers), n_batches);
    if (workers <= 1) {
        for (std::size_t bi = 0; bi < n_batches; ++bi) run_batch(bi);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t bi = w; bi < n_batches; bi += workers)
                        run_batch(bi);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }
    return reduce_metric_table(table, opts.data_range, sopt);
}

// All possible chunks of the test split (sequences past train_count).
inline std::vector<std::pair<std::size_t, std::size_t>> test_chunks(
    const Dataset& ds, std::size_t chunk_len) {
    std::size_t first = ds.train_count();
    if (first >= ds.n_sequences)
        throw ContractError("eval: dataset has no test sequences");
    if (ds.n_frames < chunk_len)
        throw ContractError("eval: sequences of " + std::to_string(ds.n_frames) +
                            " frames are shorter than a " + std::to_string(chunk_len) +
                            "-frame chunk");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t seq = first; seq < ds.n_sequences; ++seq)
        for (std::size_t start = 0; start + chunk_len <= ds.n_frames; ++start)
            out.emplace_back(seq, start);
    return out;
}

inline MetricReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                                   const Dataset& ds, const EvalOptions& opts) {
    std::vector<std::size_t> hs = detail::canonical_horizons(opts.horizons);
    return evaluate_chunks(params, cfg, ds,
                           test_chunks(ds, cfg.tau + 1 + hs.back()), opts);
}

// Plain single-chunk evaluation; the identity content swap must match this
// bit-for-bit.
inline MetricReport chunk_metrics(const ModelParams& params, const ModelConfig& cfg,
                                  const Dataset& ds, std::size_t seq,
                                  std::size_t start, const EvalOptions& opts) {
    return evaluate_chunks(params, cfg, ds, {{seq, start}}, opts);
}

// ---------------------------------------------------------------------------
// Content swap: forecast with the static code of one chunk and the dynamic
// code of another. With multiple interchangeable sprites the swapped sequence
// is ambiguous up to the content-to-track assignment, so every permutation
// is a legitimate ground truth and each metric reports its best value (min
// MSE, max PSNR/SSIM) over them.

struct SwapPair {
    std::size_t content_seq = 0, content_start = 0;  // S comes from here
    std::size_t motion_seq = 0, motion_start = 0;    // T and timing from here
    bool identity() const {
        return content_seq == motion_seq && content_start == motion_start;
    }
};

inline std::vector<Tensor> swap_forecast_frames(const ModelParams& params,
                                                const ModelConfig& cfg,
                                                const Tensor& content_window,
                                                const Tensor& motion_window,
                                                std::size_t horizon) {
    if (!cfg.has_static())
        throw ContractError("swap: model has no static path (d = 0)");
    Tape tape;
    ModelBinding b = bind_model(tape, params, cfg, /*requires_grad=*/false);
    ValueId s = encode_static(tape, b, tape.constant(content_window));
    ForecastGraph g = forecast(tape, b, tape.constant(motion_window), horizon, s);
    std::vector<Tensor> out;
    out.reserve(g.frames.size());
    for (ValueId id : g.frames) out.push_back(tape.value(id));
    return out;
}

// Ground-truth renderings for the swap: the content chunk's sprites moving
// along the motion chunk's trajectories, one sequence per content-to-track
// permutation. An identity pair needs no re-rendering: the stored frames are
// the single ground truth.
inline std::vector<std::vector<Tensor>> sprite_swap_ground_truths(
    const Dataset& ds, const SwapPair& pair, std::size_t chunk_len) {
    if (pair.content_seq >= ds.n_sequences || pair.motion_seq >= ds.n_sequences)
        throw ContractError("swap: sequence index out of range");
    if (pair.motion_start + chunk_len > ds.n_frames ||
        pair.content_start + chunk_len > ds.n_frames)
        throw ContractError("swap: chunk needs frames past the sequence end");
    if (pair.identity()) {
        std::vector<Tensor> gt;
        for (std::size_t k = 0; k < chunk_len; ++k)
            gt.push_back(detail::frame_image(ds, pair.motion_seq,
                                             pair.motion_start + k));
        return {std::move(gt)};
    }
    if (ds.kind != DatasetKind::Sprites || !ds.get("n_sprites"))
        throw ContractError("swap: dataset lacks swap ground truth (no sprite manifest)");
    std::size_t n = std::size_t(parse_int(ds.get_or_throw("n_sprites"), "n_sprites"));
    if (n == 0 || n > 5)
        throw ContractError("swap: unsupported sprite count " + std::to_string(n));
    std::size_t side = std::size_t(parse_int(ds.get_or_throw("frame"), "frame"));

    std::vector<Tensor> bitmaps;
    std::vector<std::vector<std::pair<long long, long long>>> trajs;
    for (std::size_t j = 0; j < n; ++j) {
        bitmaps.push_back(sprite_bitmap_from_manifest(ds, pair.content_seq, j));
        trajs.push_back(sprite_traj_from_manifest(ds, pair.motion_seq, j));
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t j = 0; j < n; ++j) perm[j] = j;
    std::vector<std::vector<Tensor>> out;
    do {
        std::vector<Tensor> seq;
        std::vector<Tensor> assigned;
        for (std::size_t j = 0; j < n; ++j) assigned.push_back(bitmaps[perm[j]]);
        for (std::size_t k = 0; k < chunk_len; ++k) {
            std::vector<std::pair<long long, long long>> pos(n);
            for (std::size_t j = 0; j < n; ++j)
                pos[j] = trajs[j].at(pair.motion_start + k);
            std::vector<float> px = render_sprites_frame(side, assigned, pos);
            Tensor img({side, side});
            for (std::size_t i = 0; i < px.size(); ++i) img.data[i] = double(px[i]);
            seq.push_back(std::move(img));
        }
        out.push_back(std::move(seq));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

// Best-over-ground-truths metrics for one generated chunk. `frames` holds
// chunk frames 0..tau+max(horizon) as produced by the forecast.
inline MetricReport swap_metrics_against(
    const std::vector<Tensor>& frames,
    const std::vector<std::vector<Tensor>>& ground_truths,
    const std::vector<std::size_t>& horizons, std::size_t tau,
    const Shape& frame_shape, double data_range) {
    if (ground_truths.empty()) throw ContractError("swap: missing ground truth");
    std::vector<std::size_t> hs = detail::canonical_horizons(horizons);
    if (frames.size() < tau + hs.back() + 1)
        throw ContractError("swap: forecast shorter than the longest horizon");
    SsimOptions sopt;
    bool image = detail::ssim_applicable(frame_shape, sopt);

    MetricReport rep;
    rep.horizons = hs;
    rep.data_range = data_range;
    rep.ssim_options = sopt;
    rep.chunks = 1;
    for (std::size_t h : hs) {
        Tensor pred = frames[tau + h];
        if (pred.rank() == 2 && pred.rows() == 1)
            pred = detail::row_as_image(pred, 0, frame_shape);
        double best_mse = std::numeric_limits<double>::infinity();
        double best_ssim = -std::numeric_limits<double>::infinity();
        for (const std::vector<Tensor>& gt : ground_truths) {
            if (gt.size() <= tau + h)
                throw ContractError("swap: ground truth shorter than the chunk");
            best_mse = std::min(best_mse, mse(pred, gt[tau + h]));
            if (image)
                best_ssim = std::max(best_ssim, ssim(pred, gt[tau + h], data_range, sopt));
        }
        rep.mse.push_back(best_mse);
        rep.psnr.push_back(psnr_from_mse(best_mse, data_range));
        rep.ssim.push_back(image ? best_ssim
                                 : std::numeric_limits<double>::quiet_NaN());
    }
    rep.finalize_aggregates();
    rep.validate();
    return rep;
}

struct SwapEvalResult {
    MetricReport report;
    std::size_t ground_truths = 0;
};

inline SwapEvalResult content_swap_eval(const ModelParams& params,
                                        const ModelConfig& cfg, const Dataset& ds,
                                        const SwapPair& pair,
                                        const EvalOptions& opts) {
    std::vector<std::size_t> hs = detail::canonical_horizons(opts.horizons);
    std::size_t chunk_len = cfg.tau + 1 + hs.back();
    Tensor wc = conditioning_window(ds, pair.content_seq, pair.content_start, cfg.tau);
    Tensor wm = conditioning_window(ds, pair.motion_seq, pair.motion_start, cfg.tau);
    std::vector<Tensor> frames =
        swap_forecast_frames(params, cfg, wc, wm, cfg.tau + hs.back());
    std::vector<std::vector<Tensor>> gts = sprite_swap_ground_truths(ds, pair, chunk_len);
    SwapEvalResult res;
    res.ground_truths = gts.size();
    res.report = swap_metrics_against(frames, gts, hs, cfg.tau, ds.frame_shape,
                                      opts.data_range);
    return res;
}

// ---------------------------------------------------------------------------
// Side-by-side variant table (e.g. full model vs. the no-static ablation).

struct AblationVariant {
    std::string name;
    const ModelParams* params = nullptr;
    const ModelConfig* config = nullptr;
};

inline std::string ablation_report(const std::vector<AblationVariant>& variants,
                                   const Dataset& ds, const EvalOptions& opts) {
    if (variants.empty()) throw ContractError("ablation: no variants");
    std::string out = metric_csv_header() + "\n";
    for (const AblationVariant& v : variants) {
        if (!v.params || !v.config)
            throw ContractError("ablation: variant '" + v.name + "' has no checkpoint");
        out += metric_csv_rows(v.name, evaluate_model(*v.params, *v.config, ds, opts));
    }
    return out;
}

}  // namespace varsep
