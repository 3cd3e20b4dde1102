#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tensor.hpp"
#include "text.hpp"

namespace varsep {

// ---------------------------------------------------------------------------
// Image/sequence quality metrics. All operate in the data's normalized space;
// `data_range` is the nominal peak value R (1.0 for [0,1] data).

inline double mse(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        throw ShapeError("mse: shapes differ, " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    if (a.numel() == 0) throw ContractError("mse: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / double(a.numel());
}

// Peak signal-to-noise ratio in dB. Written exactly as the difference of the
// two base-10 terms so psnr == 10*log10(R^2) - 10*log10(mse) bit-for-bit;
// mse = 0 yields +infinity (the "perfect" flag).
inline double psnr_from_mse(double mse_value, double data_range) {
    if (data_range <= 0.0) throw ContractError("psnr: data range must be positive");
    if (mse_value < 0.0) throw ContractError("psnr: negative mse");
    return 10.0 * std::log10(data_range * data_range) - 10.0 * std::log10(mse_value);
}

inline double psnr(const Tensor& a, const Tensor& b, double data_range = 1.0) {
    return psnr_from_mse(mse(a, b), data_range);
}

// ---------------------------------------------------------------------------
// Structural similarity with the conventional Gaussian window. The constants
// are fixed here and echoed in MetricReport so results are reproducible.

struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

namespace detail {

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> w(size * size);
    double c = (double(size) - 1.0) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) {
            double di = double(i) - c, dj = double(j) - c;
            double v = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
            w[i * size + j] = v;
            sum += v;
        }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace detail

// Mean SSIM over all fully interior windows of two equal-shape rank-2 images.
inline double ssim(const Tensor& a, const Tensor& b, double data_range = 1.0,
                   const SsimOptions& opt = {}) {
    if (a.shape != b.shape)
        throw ShapeError("ssim: shapes differ, " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    if (a.rank() != 2)
        throw ShapeError("ssim: needs rank-2 images, got " + shape_str(a.shape));
    if (data_range <= 0.0) throw ContractError("ssim: data range must be positive");
    const std::size_t rows = a.rows(), cols = a.cols(), w = opt.window;
    if (rows < w || cols < w)
        throw ContractError("ssim: image " + shape_str(a.shape) +
                            " is smaller than the " + std::to_string(w) + "x" +
                            std::to_string(w) + " window");
    const std::vector<double> win = detail::gaussian_window(w, opt.sigma);
    const double c1 = (opt.k1 * data_range) * (opt.k1 * data_range);
    const double c2 = (opt.k2 * data_range) * (opt.k2 * data_range);

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r0 = 0; r0 + w <= rows; ++r0) {
        for (std::size_t c0 = 0; c0 + w <= cols; ++c0) {
            double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
            for (std::size_t i = 0; i < w; ++i) {
                const double* ra = a.data.data() + (r0 + i) * cols + c0;
                const double* rb = b.data.data() + (r0 + i) * cols + c0;
                const double* rw = win.data() + i * w;
                for (std::size_t j = 0; j < w; ++j) {
                    double x = ra[j], y = rb[j], g = rw[j];
                    mx += g * x;
                    my += g * y;
                    xx += g * x * x;
                    yy += g * y * y;
                    xy += g * x * y;
                }
            }
            double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
            double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
            double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / double(count);
}

// ---------------------------------------------------------------------------
// Per-horizon metric table for one evaluated model variant.

struct MetricReport {
    std::vector<std::size_t> horizons;  // sorted ascending
    std::vector<double> mse;            // aggregated over all test chunks
    std::vector<double> psnr;           // from the aggregated mse
    std::vector<double> ssim;           // mean per-chunk ssim; NaN: not an image
    double data_range = 1.0;
    SsimOptions ssim_options;  // echoed so the constants are on record
    std::size_t chunks = 0;    // pairs aggregated per horizon
    double aggregate_mse = 0.0;  // means over the horizon list
    double aggregate_psnr = 0.0;
    double aggregate_ssim = 0.0;

    void finalize_aggregates() {
        aggregate_mse = aggregate_psnr = aggregate_ssim = 0.0;
        for (std::size_t i = 0; i < horizons.size(); ++i) {
            aggregate_mse += mse.at(i);
            aggregate_psnr += psnr.at(i);
            aggregate_ssim += ssim.at(i);
        }
        double n = double(horizons.size());
        aggregate_mse /= n;
        aggregate_psnr /= n;
        aggregate_ssim /= n;
    }

    void validate() const {
        if (horizons.empty()) throw ContractError("metric report: no horizons");
        for (std::size_t i = 1; i < horizons.size(); ++i)
            if (horizons[i] <= horizons[i - 1])
                throw ContractError("metric report: horizons must be strictly ascending");
        if (mse.size() != horizons.size() || psnr.size() != horizons.size() ||
            ssim.size() != horizons.size())
            throw ContractError("metric report: column lengths differ");
    }
};

inline std::string metric_csv_header() { return "variant,horizon,mse,psnr,ssim"; }

// Rows for one variant; +infinity prints as `inf`, undefined SSIM as `nan`.
inline std::string metric_csv_rows(const std::string& variant,
                                   const MetricReport& report) {
    report.validate();
    std::string out;
    for (std::size_t i = 0; i < report.horizons.size(); ++i)
        out += variant + "," + std::to_string(report.horizons[i]) + "," +
               fmt_double(report.mse[i]) + "," + fmt_double(report.psnr[i]) + "," +
               fmt_double(report.ssim[i]) + "\n";
    return out;
}

}  // namespace varsep
