#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dataset.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace varsep {

// Analytic solutions of the 1-D diffusion problem u_t = c^2 u_xx on [0, L]
// with zero endpoints, plus the change of variables that removes an advection
// term. These provide exact reference fields for the finite-difference
// residual checks and a fully analytic dataset.

struct HeatProblem {
    double length = M_PI;                 // L
    double c = 1.0;                       // diffusion constant (enters as c^2)
    std::vector<double> coefficients;     // B_n for modes n = 1..N

    void validate() const {
        if (length <= 0.0) throw ContractError("heat: length must be positive");
        if (c <= 0.0) throw ContractError("heat: c must be positive");
    }
};

// Single product-separable mode: B sin(n pi x / L) exp(-(c n pi / L)^2 t).
// The sine factor vanishes identically at both endpoints; returning the exact
// zero there keeps the boundary condition assertable in floating point.
inline double heat_separable_solution(double L, double c, int n, double B, double x,
                                      double t) {
    if (x == 0.0 || x == L) return 0.0;
    double k = double(n) * M_PI / L;
    return B * std::sin(k * x) * std::exp(-(c * k) * (c * k) * t);
}

inline double heat_superposition(const HeatProblem& p, double x, double t) {
    double u = 0.0;
    for (std::size_t i = 0; i < p.coefficients.size(); ++i)
        u += heat_separable_solution(p.length, p.c, int(i) + 1, p.coefficients[i], x, t);
    return u;
}

// Fourier sine coefficient of f on [0, L] for mode n, by composite Simpson
// quadrature: (2/L) * integral f(x) sin(n pi x / L) dx.
template <typename F>
double fourier_sine_coefficient(F&& f, double L, int n, std::size_t panels = 2048) {
    double h = L / double(2 * panels);
    double acc = 0.0;
    auto g = [&](double x) { return f(x) * std::sin(double(n) * M_PI * x / L); };
    for (std::size_t i = 0; i < panels; ++i) {
        double a = double(2 * i) * h;
        acc += g(a) + 4.0 * g(a + h) + g(a + 2.0 * h);
    }
    return (2.0 / L) * acc * h / 3.0;
}

// ---------------------------------------------------------------------------
// Advection reduction: u_t + c u_x = chi u_xx transforms into pure diffusion
// v_t = chi v_xx through u(x,t) = v(x,t) e^{alpha x + beta t} with
// alpha = c / (2 chi) and beta = alpha^2 chi - c alpha.

struct AdvectionProblem {
    double c = 1.0;    // advection speed
    double chi = 1.0;  // diffusion constant

    void validate() const {
        if (chi <= 0.0) throw ContractError("advection: chi must be positive");
    }

    double alpha() const { return c / (2.0 * chi); }
    double beta() const {
        double a = alpha();
        return a * a * chi - c * a;
    }

    // The algebraic identities the derivation rests on; both are exactly zero.
    double constraint_beta() const { return beta() + c * alpha() - alpha() * alpha() * chi; }
    double constraint_alpha() const { return c - 2.0 * alpha() * chi; }
};

// u built from a diffusion solution v with matching constant (c_v^2 = chi).
inline double advection_solution(const AdvectionProblem& a, const HeatProblem& v,
                                 double x, double t) {
    return heat_superposition(v, x, t) * std::exp(a.alpha() * x + a.beta() * t);
}

// Max |u_t + c u_x - chi u_xx| over an interior sample grid, all derivatives
// by central differences at step h.
inline double advection_reduction_check(const AdvectionProblem& a, const HeatProblem& v,
                                        std::size_t nx, std::size_t nt,
                                        double h = 1e-4) {
    a.validate();
    v.validate();
    double worst = 0.0;
    for (std::size_t ix = 0; ix < nx; ++ix) {
        double x = v.length * (0.1 + 0.8 * double(ix) / double(nx - 1));
        for (std::size_t it = 0; it < nt; ++it) {
            double t = 0.05 + 0.45 * double(it) / double(nt - 1);
            auto u = [&](double xx, double tt) { return advection_solution(a, v, xx, tt); };
            double ut = (u(x, t + h) - u(x, t - h)) / (2.0 * h);
            double ux = (u(x + h, t) - u(x - h, t)) / (2.0 * h);
            double uxx = (u(x + h, t) - 2.0 * u(x, t) + u(x - h, t)) / (h * h);
            worst = std::max(worst, std::fabs(ut + a.c * ux - a.chi * uxx));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Analytic diffusion dataset: sequences of 1-D profiles sampled on an
// interior grid, each sequence drawn as a random finite mode combination.

struct HeatDatasetOptions {
    std::size_t n_sequences = 60;
    std::size_t n_frames = 50;
    std::size_t n_x = 64;      // spatial samples (interior of [0, L])
    std::size_t n_modes = 4;   // random B_n ~ U[-1, 1]
    double dt = 0.02;
    double length = M_PI;
    double c = 1.0;
    double train_fraction = 0.8;
};

inline Dataset generate_heat_dataset(std::uint64_t seed, const HeatDatasetOptions& opt) {
    Dataset ds;
    ds.kind = DatasetKind::HeatBar;
    ds.n_sequences = opt.n_sequences;
    ds.n_frames = opt.n_frames;
    ds.frame_shape = {opt.n_x};
    ds.payload.resize(opt.n_sequences * opt.n_frames * opt.n_x);
    Rng root(seed);
    for (std::size_t s = 0; s < opt.n_sequences; ++s) {
        Rng rng = root.derive("heat", s);
        HeatProblem p;
        p.length = opt.length;
        p.c = opt.c;
        std::string coeffs;
        for (std::size_t n = 0; n < opt.n_modes; ++n) {
            p.coefficients.push_back(rng.uniform(-1.0, 1.0));
            if (n) coeffs += ",";
            coeffs += fmt_double(p.coefficients.back());
        }
        ds.set("seq" + std::to_string(s) + ".coefficients", coeffs);
        for (std::size_t f = 0; f < opt.n_frames; ++f) {
            double t = double(f) * opt.dt;
            float* out = ds.frame(s, f);
            for (std::size_t ix = 0; ix < opt.n_x; ++ix) {
                double x = opt.length * double(ix + 1) / double(opt.n_x + 1);
                out[ix] = float(heat_superposition(p, x, t));
            }
        }
    }
    ds.set("kind", dataset_kind_name(ds.kind));
    ds.set("seed", std::to_string(seed));
    ds.set("n_sequences", std::to_string(opt.n_sequences));
    ds.set("n_frames", std::to_string(opt.n_frames));
    ds.set("length", fmt_double(opt.length));
    ds.set("c", fmt_double(opt.c));
    ds.set("dt", fmt_double(opt.dt));
    ds.set("train_count",
           std::to_string(std::size_t(double(opt.n_sequences) * opt.train_fraction)));
    ds.validate();
    return ds;
}

}  // namespace varsep
