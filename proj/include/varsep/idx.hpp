#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace varsep {

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Big-endian IDX image/label container (the classic digit-dataset layout).
// Images: magic 0x00000803, dims (count, rows, cols), unsigned bytes scaled
// to [0,1]. Labels: magic 0x00000801, dims (count), raw bytes.

namespace detail {

inline std::string hex_u32(std::uint32_t v) {
    char buf[12];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

inline std::uint32_t read_be_u32(const std::vector<std::uint8_t>& bytes,
                                 std::size_t offset) {
    if (offset + 4 > bytes.size())
        throw FormatError("idx: truncated header at byte offset " +
                          std::to_string(offset));
    return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
           (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

}  // namespace detail

inline Tensor parse_idx_images(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t magic = detail::read_be_u32(bytes, 0);
    if (magic != 0x00000803u)
        throw FormatError("idx: bad image magic " + detail::hex_u32(magic) +
                          " at byte offset 0");
    std::size_t count = detail::read_be_u32(bytes, 4);
    std::size_t rows = detail::read_be_u32(bytes, 8);
    std::size_t cols = detail::read_be_u32(bytes, 12);
    std::size_t need = 16 + count * rows * cols;
    if (bytes.size() < need)
        throw FormatError("idx: payload truncated, need " + std::to_string(need) +
                          " bytes but file ends at byte offset " +
                          std::to_string(bytes.size()));
    Tensor t({count, rows, cols});
    for (std::size_t i = 0; i < count * rows * cols; ++i)
        t.data[i] = double(bytes[16 + i]) / 255.0;
    return t;
}

inline std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t magic = detail::read_be_u32(bytes, 0);
    if (magic != 0x00000801u)
        throw FormatError("idx: bad label magic " + detail::hex_u32(magic) +
                          " at byte offset 0");
    std::size_t count = detail::read_be_u32(bytes, 4);
    if (bytes.size() < 8 + count)
        throw FormatError("idx: label payload truncated at byte offset " +
                          std::to_string(bytes.size()));
    return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.begin() + 8 + count);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file: " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

}  // namespace varsep
