#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "idx.hpp"

namespace varsep {

// Sequence-set container, little-endian throughout:
//   "SVSF" | u16 version | u8 kind | u8 ndims | ndims x u32 dims
//   | f32 payload (sequence-major) | u32 manifest length | manifest bytes
// dims = (n_sequences, n_frames, frame dims...). The manifest is UTF-8
// `key=value` lines separated by '\n'.

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct ByteReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;
    const char* ctx = "svsf";

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size())
            throw FormatError(std::string(ctx) + ": truncated while reading " + what +
                              " at byte offset " + std::to_string(pos));
    }

    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }

    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = std::uint16_t(bytes[pos]) | (std::uint16_t(bytes[pos + 1]) << 8);
        pos += 2;
        return v;
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }

    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }

    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes.data()) + pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

inline constexpr std::uint16_t kSvsfVersion = 1;

inline void write_dataset(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("svsf: cannot open for writing: " + path);
    std::string head = "SVSF";
    detail::put_u16(head, kSvsfVersion);
    head.push_back(char(std::uint8_t(ds.kind)));
    std::vector<std::uint32_t> dims;
    dims.push_back(std::uint32_t(ds.n_sequences));
    dims.push_back(std::uint32_t(ds.n_frames));
    for (std::size_t e : ds.frame_shape) dims.push_back(std::uint32_t(e));
    head.push_back(char(std::uint8_t(dims.size())));
    for (std::uint32_t d : dims) detail::put_u32(head, d);
    out.write(head.data(), std::streamsize(head.size()));

    std::string buf;
    buf.reserve(1 << 18);
    for (float f : ds.payload) {
        detail::put_u32(buf, std::bit_cast<std::uint32_t>(f));
        if (buf.size() >= (1 << 18)) {
            out.write(buf.data(), std::streamsize(buf.size()));
            buf.clear();
        }
    }
    out.write(buf.data(), std::streamsize(buf.size()));

    std::string manifest;
    for (const auto& kv : ds.manifest) manifest += kv.first + "=" + kv.second + "\n";
    std::string tail;
    detail::put_u32(tail, std::uint32_t(manifest.size()));
    out.write(tail.data(), std::streamsize(tail.size()));
    out.write(manifest.data(), std::streamsize(manifest.size()));
    if (!out) throw FormatError("svsf: write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    detail::ByteReader r{bytes};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), "SVSF", 4) != 0)
        throw FormatError("svsf: bad magic at byte offset 0 in " + path);
    r.pos = 4;
    std::uint16_t version = r.u16("version");
    if (version != kSvsfVersion)
        throw FormatError("svsf: unsupported version " + std::to_string(version));
    Dataset ds;
    ds.kind = DatasetKind(r.u8("kind"));
    std::size_t ndims = r.u8("ndims");
    if (ndims < 3)
        throw FormatError("svsf: need at least 3 dims, got " + std::to_string(ndims));
    std::vector<std::uint32_t> dims(ndims);
    for (std::size_t i = 0; i < ndims; ++i) dims[i] = r.u32("dims");
    ds.n_sequences = dims[0];
    ds.n_frames = dims[1];
    ds.frame_shape.assign(dims.begin() + 2, dims.end());
    std::size_t count = ds.n_sequences * ds.n_frames * ds.frame_numel();
    r.need(4 * count, "payload");
    ds.payload.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        ds.payload[i] = std::bit_cast<float>(r.u32("payload"));
    std::uint32_t mlen = r.u32("manifest length");
    r.need(mlen, "manifest");
    std::string manifest(bytes.begin() + std::ptrdiff_t(r.pos),
                         bytes.begin() + std::ptrdiff_t(r.pos + mlen));
    for (const std::string& line : split(manifest, '\n')) {
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("svsf: manifest line without '=': " + line);
        ds.manifest.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    ds.validate();
    return ds;
}

}  // namespace varsep
