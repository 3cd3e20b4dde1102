#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "idx.hpp"
#include "tensor.hpp"

namespace varsep {

// Binary graymap (P5, maxval 255). Values are expected in [0,1]; anything
// outside is clamped. Used for frame dumps during evaluation.
template <typename Scalar>
void write_pgm(const std::string& path, std::size_t rows, std::size_t cols,
               const Scalar* values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("pgm: cannot open for writing: " + path);
    out << "P5\n" << cols << " " << rows << "\n255\n";
    for (std::size_t i = 0; i < rows * cols; ++i) {
        double v = double(values[i]);
        long pixel = std::lround(255.0 * v);
        if (pixel < 0) pixel = 0;
        if (pixel > 255) pixel = 255;
        out.put(char(std::uint8_t(pixel)));
    }
    if (!out) throw FormatError("pgm: write failed: " + path);
}

inline void write_pgm(const std::string& path, const Tensor& frame) {
    if (frame.rank() != 2)
        throw ShapeError("pgm: expected a rank-2 frame, got " + shape_str(frame.shape));
    write_pgm(path, frame.rows(), frame.cols(), frame.data.data());
}

}  // namespace varsep
