#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "model.hpp"
#include "optim.hpp"
#include "svsf.hpp"

namespace varsep {

// ---------------------------------------------------------------------------
// SVCK checkpoint: model parameters by name plus optimizer state.
//
//   "SVCK" | u16 version | u32 config length, config text |
//   u32 epochs completed | u32 parameter count |
//   per parameter: u16 name length, name, u8 ndims, u32 dims..., f64 entries |
//   u8 has_optimizer | if set: u64 step, then first and second moments as
//   f64 runs matching each parameter's shape, in the same order.
//
// All integers little-endian; floats are IEEE-754 bit patterns.

inline constexpr std::uint16_t kSvckVersion = 1;

struct Checkpoint {
    std::string config_text;  // resolved experiment config
    std::uint32_t epoch = 0;  // epochs completed
    std::vector<std::pair<std::string, Tensor>> params;
    bool has_optimizer = false;
    AdamState opt;  // moments parallel to `params`
};

inline Checkpoint make_checkpoint(const std::string& config_text, std::uint32_t epoch,
                                  ModelParams& params, const ModelConfig& cfg,
                                  const AdamState* opt = nullptr) {
    Checkpoint ck;
    ck.config_text = config_text;
    ck.epoch = epoch;
    visit_model_params(params, cfg, [&](const std::string& name, Tensor& t) {
        ck.params.emplace_back(name, t);
    });
    if (opt) {
        if (opt->m.size() != ck.params.size())
            throw ContractError("checkpoint: optimizer tracks " +
                                std::to_string(opt->m.size()) + " tensors, model has " +
                                std::to_string(ck.params.size()));
        ck.has_optimizer = true;
        ck.opt = *opt;
    }
    return ck;
}

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::string out = "SVCK";
    detail::put_u16(out, kSvckVersion);
    detail::put_u32(out, std::uint32_t(ck.config_text.size()));
    out += ck.config_text;
    detail::put_u32(out, ck.epoch);
    detail::put_u32(out, std::uint32_t(ck.params.size()));
    for (const auto& [name, t] : ck.params) {
        detail::put_u16(out, std::uint16_t(name.size()));
        out += name;
        out.push_back(char(std::uint8_t(t.rank())));
        for (std::size_t d : t.shape) detail::put_u32(out, std::uint32_t(d));
        for (double v : t.data) detail::put_f64(out, v);
    }
    out.push_back(ck.has_optimizer ? char(1) : char(0));
    if (ck.has_optimizer) {
        detail::put_u64(out, ck.opt.step);
        for (std::size_t k = 0; k < ck.params.size(); ++k)
            for (double v : ck.opt.m[k].data) detail::put_f64(out, v);
        for (std::size_t k = 0; k < ck.params.size(); ++k)
            for (double v : ck.opt.v[k].data) detail::put_f64(out, v);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("svck: cannot open for writing: " + path);
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw FormatError("svck: write failed: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    detail::ByteReader r{bytes, 0, "svck"};
    std::string magic = r.str(4, "magic");
    if (magic != "SVCK")
        throw FormatError("svck: bad magic at offset 0 (not a checkpoint file)");
    std::uint16_t version = r.u16("version");
    if (version != kSvckVersion)
        throw FormatError("svck: unsupported version " + std::to_string(version));
    Checkpoint ck;
    std::uint32_t cfg_len = r.u32("config length");
    ck.config_text = r.str(cfg_len, "config text");
    ck.epoch = r.u32("epoch counter");
    std::uint32_t n = r.u32("parameter count");
    ck.params.reserve(n);
    for (std::uint32_t k = 0; k < n; ++k) {
        std::uint16_t name_len = r.u16("parameter name length");
        std::string name = r.str(name_len, "parameter name");
        std::uint8_t ndims = r.u8("parameter rank");
        Shape shape(ndims);
        for (std::uint8_t d = 0; d < ndims; ++d)
            shape[d] = r.u32("parameter dimension");
        Tensor t(shape);
        for (double& v : t.data) v = r.f64("parameter entry");
        ck.params.emplace_back(std::move(name), std::move(t));
    }
    ck.has_optimizer = r.u8("optimizer flag") != 0;
    if (ck.has_optimizer) {
        ck.opt.step = r.u64("optimizer step");
        ck.opt.m.reserve(n);
        ck.opt.v.reserve(n);
        for (std::uint32_t k = 0; k < n; ++k) {
            Tensor t(ck.params[k].second.shape);
            for (double& v : t.data) v = r.f64("first moment entry");
            ck.opt.m.push_back(std::move(t));
        }
        for (std::uint32_t k = 0; k < n; ++k) {
            Tensor t(ck.params[k].second.shape);
            for (double& v : t.data) v = r.f64("second moment entry");
            ck.opt.v.push_back(std::move(t));
        }
    }
    if (r.pos != bytes.size())
        throw FormatError("svck: " + std::to_string(bytes.size() - r.pos) +
                          " trailing bytes at offset " + std::to_string(r.pos));
    return ck;
}

// Copies checkpointed tensors into a freshly shaped ModelParams, verifying
// that names and shapes match the configuration exactly.
inline ModelParams model_from_checkpoint(const Checkpoint& ck, const ModelConfig& cfg) {
    ModelParams params = zero_model_params(cfg);
    std::size_t k = 0;
    visit_model_params(params, cfg, [&](const std::string& name, Tensor& t) {
        if (k >= ck.params.size())
            throw ContractError("checkpoint: missing parameter '" + name + "'");
        const auto& [ck_name, ck_t] = ck.params[k];
        if (ck_name != name)
            throw ContractError("checkpoint: parameter " + std::to_string(k) +
                                " is '" + ck_name + "', model expects '" + name + "'");
        if (ck_t.shape != t.shape)
            throw ContractError("checkpoint: parameter '" + name + "' has shape " +
                                shape_str(ck_t.shape) + ", model expects " +
                                shape_str(t.shape));
        t = ck_t;
        ++k;
    });
    if (k != ck.params.size())
        throw ContractError("checkpoint: holds " + std::to_string(ck.params.size()) +
                            " parameters, model expects " + std::to_string(k));
    return params;
}

}  // namespace varsep
