#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"
#include "text.hpp"

namespace varsep {

enum class DatasetKind : std::uint8_t {
    WaveField = 0,   // 64x64 scalar field sequences
    WavePixels = 1,  // 100 fixed pixels of the field sequences
    Sprites = 2,     // bouncing-sprite frames
    HeatBar = 3,     // 1-D analytic diffusion profiles
};

inline const char* dataset_kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::WaveField: return "waveeq";
        case DatasetKind::WavePixels: return "waveeq100";
        case DatasetKind::Sprites: return "sprites";
        case DatasetKind::HeatBar: return "heat-analytic";
    }
    return "?";
}

// In-memory sequence collection. Values are canonically 32-bit floats (what
// the on-disk format stores), converted to doubles only when tensors are
// built for the model. The manifest is an ordered list of key=value strings
// carrying generation parameters, normalization constants, splits, and
// anything needed to reproduce or re-render the data.
struct Dataset {
    DatasetKind kind = DatasetKind::WaveField;
    std::size_t n_sequences = 0;
    std::size_t n_frames = 0;
    Shape frame_shape;
    std::vector<float> payload;  // [sequence][frame][frame dims...]
    std::vector<std::pair<std::string, std::string>> manifest;

    std::size_t frame_numel() const { return shape_numel(frame_shape); }

    std::size_t frame_offset(std::size_t seq, std::size_t frame) const {
        return (seq * n_frames + frame) * frame_numel();
    }

    const float* frame(std::size_t seq, std::size_t fr) const {
        return payload.data() + frame_offset(seq, fr);
    }

    float* frame(std::size_t seq, std::size_t fr) {
        return payload.data() + frame_offset(seq, fr);
    }

    void validate() const {
        if (payload.size() != n_sequences * n_frames * frame_numel())
            throw ContractError("dataset: payload size does not match dims");
    }

    void set(const std::string& key, const std::string& value) {
        for (auto& kv : manifest)
            if (kv.first == key) {
                kv.second = value;
                return;
            }
        manifest.emplace_back(key, value);
    }

    const std::string* get(const std::string& key) const {
        for (const auto& kv : manifest)
            if (kv.first == key) return &kv.second;
        return nullptr;
    }

    std::string get_or_throw(const std::string& key) const {
        const std::string* v = get(key);
        if (!v) throw ContractError("dataset manifest: missing key '" + key + "'");
        return *v;
    }

    // First train_count sequences train, the rest test.
    std::size_t train_count() const {
        return std::size_t(parse_int(get_or_throw("train_count"), "train_count"));
    }

    // Frame as a row vector (1, frame_numel), widened to double.
    Tensor frame_tensor(std::size_t seq, std::size_t fr) const {
        Tensor t({1, frame_numel()});
        const float* src = frame(seq, fr);
        for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = double(src[i]);
        return t;
    }
};

}  // namespace varsep
