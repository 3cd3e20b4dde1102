#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "dataset.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "text.hpp"

namespace varsep {

// ---------------------------------------------------------------------------
// Five-point second-derivative stencils (fourth-order accurate in the
// interior; one-sided variants of the same width at the edges, exact through
// quartics). Coefficients are in units of 1/h^2.

namespace detail {

struct StencilRow {
    int first_offset;
    double w[5];
};

inline const StencilRow& stencil_for(std::size_t i, std::size_t n) {
    static const StencilRow edge0{0, {35.0 / 12, -26.0 / 3, 19.0 / 2, -14.0 / 3, 11.0 / 12}};
    static const StencilRow edge1{-1, {11.0 / 12, -5.0 / 3, 1.0 / 2, 1.0 / 3, -1.0 / 12}};
    static const StencilRow interior{-2, {-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12}};
    static const StencilRow edge_n2{-3, {-1.0 / 12, 1.0 / 3, 1.0 / 2, -5.0 / 3, 11.0 / 12}};
    static const StencilRow edge_n1{-4, {11.0 / 12, -14.0 / 3, 19.0 / 2, -26.0 / 3, 35.0 / 12}};
    if (i == 0) return edge0;
    if (i == 1) return edge1;
    if (i + 1 == n) return edge_n1;
    if (i + 2 == n) return edge_n2;
    return interior;
}

// Zero-Neumann (reflecting) boundary: ghost values mirror the interior across
// the boundary node (w[-k] = w[k]), folded into the centered stencil. The
// folded rows only read inward and make the operator self-adjoint in the
// boundary-weighted inner product, so its spectrum is real and non-positive —
// which keeps the wave system neutrally stable, including with pinned cells.
inline const StencilRow& neumann_stencil_for(std::size_t i, std::size_t n) {
    static const StencilRow edge0{0, {-5.0 / 2, 8.0 / 3, -1.0 / 6, 0.0, 0.0}};
    static const StencilRow edge1{-1, {4.0 / 3, -31.0 / 12, 4.0 / 3, -1.0 / 12, 0.0}};
    static const StencilRow interior{-2, {-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12}};
    static const StencilRow edge_n2{-3, {0.0, -1.0 / 12, 4.0 / 3, -31.0 / 12, 4.0 / 3}};
    static const StencilRow edge_n1{-4, {0.0, 0.0, -1.0 / 6, 8.0 / 3, -5.0 / 2}};
    if (i == 0) return edge0;
    if (i == 1) return edge1;
    if (i + 1 == n) return edge_n1;
    if (i + 2 == n) return edge_n2;
    return interior;
}

using StencilSelect = const StencilRow& (*)(std::size_t, std::size_t);

// Accumulates the second derivative along one axis of a row-major field.
inline void second_derivative_axis(const double* f, std::size_t rows, std::size_t cols,
                                   bool along_rows, double inv_h2, double* out,
                                   StencilSelect select = &stencil_for) {
    std::size_t n = along_rows ? rows : cols;
    std::size_t line_count = along_rows ? cols : rows;
    std::size_t stride = along_rows ? cols : 1;
    for (std::size_t line = 0; line < line_count; ++line) {
        const double* base = f + (along_rows ? line : line * cols);
        double* obase = out + (along_rows ? line : line * cols);
        for (std::size_t i = 0; i < n; ++i) {
            const StencilRow& row = select(i, n);
            double acc = 0.0;
            for (int k = 0; k < 5; ++k)
                acc += row.w[k] * base[(i + std::size_t(row.first_offset + k)) * stride];
            obase[i * stride] += acc * inv_h2;
        }
    }
}

}  // namespace detail

inline void laplacian_into(const double* field, std::size_t rows, std::size_t cols,
                           double h, double* out) {
    if (rows < 5 || cols < 5)
        throw ShapeError("laplacian: need at least 5 points per axis, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    double inv_h2 = 1.0 / (h * h);
    for (std::size_t i = 0; i < rows * cols; ++i) out[i] = 0.0;
    detail::second_derivative_axis(field, rows, cols, true, inv_h2, out);
    detail::second_derivative_axis(field, rows, cols, false, inv_h2, out);
}

inline Tensor laplacian_stencil(const Tensor& field, double h) {
    if (field.rank() != 2)
        throw ShapeError("laplacian: expected a rank-2 field, got " +
                         shape_str(field.shape));
    Tensor out(field.shape);
    laplacian_into(field.data.data(), field.rows(), field.cols(), h, out.data.data());
    return out;
}

// Laplacian with zero-Neumann (reflecting) boundaries; see neumann_stencil_for.
inline void laplacian_neumann_into(const double* field, std::size_t rows,
                                   std::size_t cols, double h, double* out) {
    if (rows < 5 || cols < 5)
        throw ShapeError("laplacian: need at least 5 points per axis, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    double inv_h2 = 1.0 / (h * h);
    for (std::size_t i = 0; i < rows * cols; ++i) out[i] = 0.0;
    detail::second_derivative_axis(field, rows, cols, true, inv_h2, out,
                                   &detail::neumann_stencil_for);
    detail::second_derivative_axis(field, rows, cols, false, inv_h2, out,
                                   &detail::neumann_stencil_for);
}

inline Tensor laplacian_neumann(const Tensor& field, double h) {
    if (field.rank() != 2)
        throw ShapeError("laplacian: expected a rank-2 field, got " +
                         shape_str(field.shape));
    Tensor out(field.shape);
    laplacian_neumann_into(field.data.data(), field.rows(), field.cols(), h,
                           out.data.data());
    return out;
}

// ---------------------------------------------------------------------------
// Runge-Kutta 4 with the 3/8 rule: nodes (0, 1/3, 2/3, 1), weights
// (1/8, 3/8, 3/8, 1/8). The trajectory contains the state after every step,
// starting with the initial state; the last step is shortened so the final
// entry lands exactly on t1.

using OdeRhs =
    std::function<void(double t, const std::vector<double>& y, std::vector<double>& dydt)>;
using OdePostStep = std::function<void(double t, std::vector<double>& y)>;

inline std::vector<std::vector<double>> rk4_38_integrate(
    const OdeRhs& rhs, std::vector<double> y, double t0, double t1, double step,
    const OdePostStep& post_step = nullptr) {
    if (step <= 0.0) throw ContractError("rk4: step must be positive");
    if (t1 < t0) throw ContractError("rk4: t1 must be >= t0");
    std::vector<std::vector<double>> trajectory;
    trajectory.push_back(y);
    std::size_t n = y.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), stage(n);
    std::size_t i = 0;
    while (true) {
        double t = t0 + double(i) * step;
        if (t >= t1 - 1e-12 * std::max(1.0, std::fabs(t1))) break;
        double h = std::min(step, t1 - t);
        rhs(t, y, k1);
        for (std::size_t j = 0; j < n; ++j) stage[j] = y[j] + h / 3.0 * k1[j];
        rhs(t + h / 3.0, stage, k2);
        for (std::size_t j = 0; j < n; ++j)
            stage[j] = y[j] - h / 3.0 * k1[j] + h * k2[j];
        rhs(t + 2.0 * h / 3.0, stage, k3);
        for (std::size_t j = 0; j < n; ++j)
            stage[j] = y[j] + h * (k1[j] - k2[j] + k3[j]);
        rhs(t + h, stage, k4);
        for (std::size_t j = 0; j < n; ++j)
            y[j] += h / 8.0 * (k1[j] + 3.0 * k2[j] + 3.0 * k3[j] + k4[j]);
        ++i;
        double t_next = std::min(t0 + double(i) * step, t1);
        for (std::size_t j = 0; j < n; ++j)
            if (!std::isfinite(y[j]))
                throw NumericError("rk4: non-finite state at t=" + fmt_double(t_next) +
                                   " (step " + std::to_string(i) + ", component " +
                                   std::to_string(j) + ")");
        if (post_step) post_step(t_next, y);
        trajectory.push_back(y);
    }
    return trajectory;
}

// ---------------------------------------------------------------------------
// Two-dimensional wave problem: w_tt = c^2 lap(w) + f(x,y,t) on an n x n grid
// of unit spacing with reflecting (zero-Neumann) borders, f = f0 e^{-t/T0}
// inside the disk of radius 5 around (32,32). First-order state layout:
// [w, w_t], each n^2 long. Grid points (0,0) and (32,32) are held at exactly
// zero (field and velocity): their derivative rows are zeroed inside the
// right-hand side, so the constraint holds through every integrator stage,
// and the pins are re-asserted after each step. Both choices are load-
// bearing for stability: enforcing pins only as a post-step projection, or
// pairing them with the unconstrained one-sided boundary rows, produces
// measured exponential blow-up at production parameters.

struct WaveProblem {
    std::size_t n = 64;
    double c = 300.0;
    double f0 = 1.0;
    double t0_decay = 0.05;  // T0
    double source_cx = 32.0, source_cy = 32.0, source_radius = 5.0;

    std::size_t cells() const { return n * n; }

    bool in_source_disk(std::size_t row, std::size_t col) const {
        double dr = double(row) - source_cy;
        double dc = double(col) - source_cx;
        return dr * dr + dc * dc <= source_radius * source_radius;
    }

    std::vector<std::size_t> pin_cells() const {
        std::vector<std::size_t> pins{0};  // grid point (0,0)
        if (32 < n) pins.push_back(32 * n + 32);
        return pins;
    }
};

inline void wave_rhs(const WaveProblem& p, double t, const std::vector<double>& state,
                     std::vector<double>& dydt) {
    std::size_t cells = p.cells();
    if (state.size() != 2 * cells)
        throw ShapeError("wave_rhs: state must hold w and w_t");
    dydt.resize(2 * cells);
    for (std::size_t i = 0; i < cells; ++i) dydt[i] = state[cells + i];
    laplacian_neumann_into(state.data(), p.n, p.n, 1.0, dydt.data() + cells);
    double c2 = p.c * p.c;
    double source = p.f0 * std::exp(-t / p.t0_decay);
    for (std::size_t r = 0; r < p.n; ++r)
        for (std::size_t col = 0; col < p.n; ++col) {
            std::size_t i = r * p.n + col;
            dydt[cells + i] *= c2;
            if (p.in_source_disk(r, col)) dydt[cells + i] += source;
        }
    for (std::size_t i : p.pin_cells()) {
        dydt[i] = 0.0;
        dydt[cells + i] = 0.0;
    }
}

inline OdePostStep wave_pins(const WaveProblem& p) {
    std::size_t cells = p.cells();
    std::vector<std::size_t> pins = p.pin_cells();
    return [cells, pins](double, std::vector<double>& y) {
        for (std::size_t i : pins) {
            y[i] = 0.0;
            y[cells + i] = 0.0;
        }
    };
}

// ---------------------------------------------------------------------------
// Dataset generation. Each sequence derives its own random stream from
// (seed, "waveeq", index), so parallel and serial generation agree
// bit-for-bit; a rejected sequence (blow-up) retries on the sub-stream
// (seed, "waveeq", index, "attempt", k) and logs the attempt in the manifest.

struct WaveDatasetOptions {
    std::size_t n_sequences = 300;
    std::size_t train_count = 240;
    std::size_t grid = 64;
    double c_min = 300.0, c_max = 400.0;
    double f0_min = 1.0, f0_max = 30.0;
    double step = 0.001;
    double t_end = 0.298;
    std::size_t frame_stride = 2;  // sample every 0.002
    double source_cx = 32.0, source_cy = 32.0, source_radius = 5.0;
    double blow_up_limit = 1e8;
    std::size_t max_attempts = 20;
    std::size_t workers = 1;
};

namespace detail {

struct WaveSeqResult {
    std::vector<double> frames;  // n_frames * grid^2, pre-normalization
    double c = 0.0, f0 = 0.0;
    double lo = 0.0, hi = 0.0;
    std::vector<std::string> attempt_log;
};

inline WaveSeqResult generate_wave_sequence(std::uint64_t seed,
                                            const WaveDatasetOptions& opt,
                                            std::size_t index) {
    Rng seq_rng = Rng(seed).derive("waveeq", index);
    WaveSeqResult res;
    for (std::size_t attempt = 0; attempt < opt.max_attempts; ++attempt) {
        Rng rng = seq_rng.derive("attempt", attempt);
        WaveProblem p;
        p.n = opt.grid;
        p.source_cx = opt.source_cx;
        p.source_cy = opt.source_cy;
        p.source_radius = opt.source_radius;
        p.c = rng.uniform(opt.c_min, opt.c_max);
        p.f0 = rng.uniform(opt.f0_min, opt.f0_max);
        std::vector<double> y(2 * p.cells(), 0.0);
        OdeRhs rhs = [&p](double t, const std::vector<double>& s,
                          std::vector<double>& d) { wave_rhs(p, t, s, d); };
        bool rejected = false;
        std::string reason;
        try {
            auto traj = rk4_38_integrate(rhs, std::move(y), 0.0, opt.t_end, opt.step,
                                         wave_pins(p));
            std::size_t n_frames = (traj.size() + opt.frame_stride - 1) / opt.frame_stride;
            res.frames.assign(n_frames * p.cells(), 0.0);
            for (std::size_t f = 0; f < n_frames; ++f) {
                const std::vector<double>& s = traj[f * opt.frame_stride];
                for (std::size_t i = 0; i < p.cells(); ++i) {
                    double v = s[i];
                    if (std::fabs(v) > opt.blow_up_limit) {
                        rejected = true;
                        reason = "amplitude " + fmt_double(v);
                    }
                    res.frames[f * p.cells() + i] = v;
                }
            }
        } catch (const NumericError& e) {
            rejected = true;
            reason = e.what();
        }
        if (!rejected) {
            res.c = p.c;
            res.f0 = p.f0;
            res.lo = res.frames[0];
            res.hi = res.frames[0];
            for (double v : res.frames) {
                res.lo = std::min(res.lo, v);
                res.hi = std::max(res.hi, v);
            }
            return res;
        }
        res.attempt_log.push_back("attempt" + std::to_string(attempt) + " c=" +
                                  fmt_double(p.c) + " f0=" + fmt_double(p.f0) +
                                  " rejected: " + reason);
    }
    throw ContractError("wave generation: sequence " + std::to_string(index) +
                        " rejected " + std::to_string(opt.max_attempts) +
                        " times (seed " + std::to_string(seed) + ")");
}

}  // namespace detail

inline Dataset generate_waveeq(std::uint64_t seed, const WaveDatasetOptions& opt) {
    if (opt.train_count > opt.n_sequences)
        throw ContractError("wave generation: train_count exceeds n_sequences");
    std::size_t cells = opt.grid * opt.grid;
    std::size_t n_frames = 0;
    {
        // Frame count is a pure function of (t_end, step, stride).
        std::size_t steps = std::size_t(std::ceil(opt.t_end / opt.step - 1e-9));
        n_frames = (steps + 1 + opt.frame_stride - 1) / opt.frame_stride;
    }
    Dataset ds;
    ds.kind = DatasetKind::WaveField;
    ds.n_sequences = opt.n_sequences;
    ds.n_frames = n_frames;
    ds.frame_shape = {opt.grid, opt.grid};
    ds.payload.resize(opt.n_sequences * n_frames * cells);
    std::vector<detail::WaveSeqResult> results(opt.n_sequences);

    std::size_t workers = std::max<std::size_t>(1, opt.workers);
    if (workers == 1) {
        for (std::size_t i = 0; i < opt.n_sequences; ++i)
            results[i] = detail::generate_wave_sequence(seed, opt, i);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < opt.n_sequences; i += workers)
                        results[i] = detail::generate_wave_sequence(seed, opt, i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }

    for (std::size_t i = 0; i < opt.n_sequences; ++i) {
        detail::WaveSeqResult& r = results[i];
        double span = r.hi - r.lo;
        if (span <= 0.0)
            throw ContractError("wave generation: constant sequence " +
                                std::to_string(i) + " cannot be normalized");
        float* dst = ds.payload.data() + i * n_frames * cells;
        for (std::size_t j = 0; j < r.frames.size(); ++j)
            dst[j] = float((r.frames[j] - r.lo) / span);
        std::string prefix = "seq" + std::to_string(i);
        ds.set(prefix + ".c", fmt_double(r.c));
        ds.set(prefix + ".f0", fmt_double(r.f0));
        ds.set(prefix + ".min", fmt_double(r.lo));
        ds.set(prefix + ".max", fmt_double(r.hi));
        for (std::size_t k = 0; k < r.attempt_log.size(); ++k)
            ds.set(prefix + ".retry" + std::to_string(k), r.attempt_log[k]);
    }
    ds.set("kind", dataset_kind_name(ds.kind));
    ds.set("seed", std::to_string(seed));
    ds.set("n_sequences", std::to_string(opt.n_sequences));
    ds.set("n_frames", std::to_string(n_frames));
    ds.set("grid", std::to_string(opt.grid));
    ds.set("step", fmt_double(opt.step));
    ds.set("t_end", fmt_double(opt.t_end));
    ds.set("frame_stride", std::to_string(opt.frame_stride));
    ds.set("train_count", std::to_string(opt.train_count));
    ds.validate();
    return ds;
}

// Projects every frame onto 100 fixed pixels drawn once from the seed. The
// stored 32-bit values are copied untouched, so reapplying the indices to the
// parent reproduces the vectors bit-exactly.
inline Dataset subsample_waveeq100(const Dataset& parent, std::uint64_t seed,
                                   std::size_t n_pixels = 100) {
    if (parent.kind != DatasetKind::WaveField)
        throw ContractError("waveeq100: parent dataset must be the full field");
    std::size_t cells = parent.frame_numel();
    if (n_pixels > cells) throw ContractError("waveeq100: more pixels than cells");
    std::vector<std::size_t> all(cells);
    for (std::size_t i = 0; i < cells; ++i) all[i] = i;
    Rng rng = Rng(seed).derive("waveeq100-pixels");
    rng.shuffle(all);
    std::vector<std::size_t> pixels(all.begin(), all.begin() + n_pixels);

    Dataset ds;
    ds.kind = DatasetKind::WavePixels;
    ds.n_sequences = parent.n_sequences;
    ds.n_frames = parent.n_frames;
    ds.frame_shape = {n_pixels};
    ds.payload.resize(ds.n_sequences * ds.n_frames * n_pixels);
    for (std::size_t s = 0; s < ds.n_sequences; ++s)
        for (std::size_t f = 0; f < ds.n_frames; ++f) {
            const float* src = parent.frame(s, f);
            float* dst = ds.frame(s, f);
            for (std::size_t k = 0; k < n_pixels; ++k) dst[k] = src[pixels[k]];
        }
    ds.manifest = parent.manifest;
    ds.set("kind", dataset_kind_name(ds.kind));
    ds.set("parent_kind", dataset_kind_name(parent.kind));
    ds.set("pixel_seed", std::to_string(seed));
    std::string joined;
    for (std::size_t k = 0; k < pixels.size(); ++k) {
        if (k) joined += ",";
        joined += std::to_string(pixels[k]);
    }
    ds.set("pixels", joined);
    ds.validate();
    return ds;
}

}  // namespace varsep
