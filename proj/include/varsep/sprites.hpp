#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dataset.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "text.hpp"

namespace varsep {

// Bouncing-sprite sequences: small bitmaps move with constant integer
// velocity and reflect off the frame borders; overlaps composite by
// per-pixel max. The manifest stores every sprite bitmap and per-frame
// trajectory, so frames can be re-rendered exactly — including with sprite
// identities exchanged between sequences for the content-swap protocol.

struct SpriteDatasetOptions {
    std::size_t n_sequences = 60;
    std::size_t train_count = 48;
    std::size_t frame = 64;        // frame side F
    std::size_t sprite = 16;       // sprite side (ignored when a bank is given)
    std::size_t n_sprites = 2;
    std::size_t n_frames = 20;
    long long max_speed = 3;       // per-axis velocity drawn from {-3..3}
    std::vector<Tensor> sprite_bank;  // optional bitmaps (e.g. parsed digits)
};

// Reflection on [0, limit]: positions fold back and velocity flips sign.
inline void reflect_step(long long& pos, long long& vel, long long limit) {
    pos += vel;
    while (pos < 0 || pos > limit) {
        if (pos < 0) {
            pos = -pos;
            vel = -vel;
        } else {
            pos = 2 * limit - pos;
            vel = -vel;
        }
    }
}

// positions[j] = (x, y) of sprite j's top-left corner.
inline std::vector<float> render_sprites_frame(
    std::size_t frame, const std::vector<Tensor>& bitmaps,
    const std::vector<std::pair<long long, long long>>& positions) {
    std::vector<float> out(frame * frame, 0.0f);
    for (std::size_t j = 0; j < bitmaps.size(); ++j) {
        const Tensor& bm = bitmaps[j];
        std::size_t sr = bm.rows(), sc = bm.cols();
        long long px = positions[j].first, py = positions[j].second;
        for (std::size_t r = 0; r < sr; ++r)
            for (std::size_t c = 0; c < sc; ++c) {
                std::size_t fr = std::size_t(py) + r;
                std::size_t fc = std::size_t(px) + c;
                float v = float(bm.at(r, c));
                float& dst = out[fr * frame + fc];
                if (v > dst) dst = v;
            }
    }
    return out;
}

namespace detail {

inline Tensor synthetic_sprite(std::size_t s, Rng& rng) {
    Tensor bm = Tensor::zeros({s, s});
    std::size_t kind = std::size_t(rng.uniform_int(0, 3));
    double intensity = rng.uniform(0.5, 1.0);
    double mid = double(s - 1) / 2.0;
    std::size_t thick = std::max<std::size_t>(1, s / 8);
    for (std::size_t r = 0; r < s; ++r)
        for (std::size_t c = 0; c < s; ++c) {
            bool on = false;
            switch (kind) {
                case 0: {  // filled disk
                    double dr = double(r) - mid, dc = double(c) - mid;
                    on = dr * dr + dc * dc <= mid * mid;
                    break;
                }
                case 1:  // hollow square
                    on = r < thick || c < thick || r >= s - thick || c >= s - thick;
                    break;
                case 2: {  // plus sign
                    std::size_t arm = std::max<std::size_t>(1, s / 4);
                    std::size_t lo = (s - arm) / 2, hi = lo + arm;
                    on = (r >= lo && r < hi) || (c >= lo && c < hi);
                    break;
                }
                default: {  // checkerboard
                    std::size_t block = std::max<std::size_t>(1, s / 4);
                    on = ((r / block) + (c / block)) % 2 == 0;
                    break;
                }
            }
            if (on) bm.at(r, c) = intensity;
        }
    return bm;
}

inline std::string join_bitmap(const Tensor& bm) {
    std::string out;
    for (std::size_t i = 0; i < bm.numel(); ++i) {
        if (i) out += ",";
        out += fmt_double(bm.data[i]);
    }
    return out;
}

}  // namespace detail

inline Dataset generate_bouncing_sprites(std::uint64_t seed,
                                         const SpriteDatasetOptions& opt) {
    std::size_t sprite_side = opt.sprite;
    if (!opt.sprite_bank.empty()) {
        sprite_side = opt.sprite_bank[0].rows();
        for (const Tensor& bm : opt.sprite_bank)
            if (bm.rank() != 2 || bm.rows() != sprite_side || bm.cols() != sprite_side)
                throw ContractError("sprites: bank bitmaps must be square and equal-sized");
    }
    if (sprite_side >= opt.frame)
        throw ContractError("sprites: sprite must be smaller than the frame");
    if (opt.train_count > opt.n_sequences)
        throw ContractError("sprites: train_count exceeds n_sequences");
    long long limit = (long long)(opt.frame - sprite_side);

    Dataset ds;
    ds.kind = DatasetKind::Sprites;
    ds.n_sequences = opt.n_sequences;
    ds.n_frames = opt.n_frames;
    ds.frame_shape = {opt.frame, opt.frame};
    ds.payload.resize(opt.n_sequences * opt.n_frames * opt.frame * opt.frame);

    Rng root(seed);
    for (std::size_t i = 0; i < opt.n_sequences; ++i) {
        Rng rng = root.derive("sprites", i);
        std::vector<Tensor> bitmaps;
        std::vector<std::pair<long long, long long>> pos(opt.n_sprites);
        std::vector<std::pair<long long, long long>> vel(opt.n_sprites);
        for (std::size_t j = 0; j < opt.n_sprites; ++j) {
            if (opt.sprite_bank.empty()) {
                bitmaps.push_back(detail::synthetic_sprite(sprite_side, rng));
            } else {
                std::size_t pick =
                    std::size_t(rng.uniform_int(0, opt.sprite_bank.size() - 1));
                bitmaps.push_back(opt.sprite_bank[pick]);
            }
            pos[j].first = (long long)rng.uniform_int(0, std::uint64_t(limit));
            pos[j].second = (long long)rng.uniform_int(0, std::uint64_t(limit));
            vel[j].first =
                (long long)rng.uniform_int(0, 2 * std::uint64_t(opt.max_speed)) -
                opt.max_speed;
            vel[j].second =
                (long long)rng.uniform_int(0, 2 * std::uint64_t(opt.max_speed)) -
                opt.max_speed;
        }
        std::vector<std::string> trajs(opt.n_sprites);
        for (std::size_t f = 0; f < opt.n_frames; ++f) {
            for (std::size_t j = 0; j < opt.n_sprites; ++j) {
                if (f > 0) {
                    reflect_step(pos[j].first, vel[j].first, limit);
                    reflect_step(pos[j].second, vel[j].second, limit);
                }
                if (f) trajs[j] += ";";
                trajs[j] += std::to_string(pos[j].first) + ":" +
                            std::to_string(pos[j].second);
            }
            std::vector<float> frame = render_sprites_frame(opt.frame, bitmaps, pos);
            float* dst = ds.frame(i, f);
            for (std::size_t k = 0; k < frame.size(); ++k) dst[k] = frame[k];
        }
        std::string prefix = "seq" + std::to_string(i);
        for (std::size_t j = 0; j < opt.n_sprites; ++j) {
            std::string sp = prefix + ".sprite" + std::to_string(j);
            ds.set(sp + ".bitmap", detail::join_bitmap(bitmaps[j]));
            ds.set(sp + ".traj", trajs[j]);
        }
    }
    ds.set("kind", dataset_kind_name(ds.kind));
    ds.set("seed", std::to_string(seed));
    ds.set("n_sequences", std::to_string(opt.n_sequences));
    ds.set("n_frames", std::to_string(opt.n_frames));
    ds.set("frame", std::to_string(opt.frame));
    ds.set("sprite", std::to_string(sprite_side));
    ds.set("n_sprites", std::to_string(opt.n_sprites));
    ds.set("train_count", std::to_string(opt.train_count));
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Manifest readers used by the content-swap re-rendering.

inline Tensor sprite_bitmap_from_manifest(const Dataset& ds, std::size_t seq,
                                          std::size_t j) {
    std::size_t side = std::size_t(parse_int(ds.get_or_throw("sprite"), "sprite"));
    std::string key = "seq" + std::to_string(seq) + ".sprite" + std::to_string(j) +
                      ".bitmap";
    std::vector<std::string> parts = split(ds.get_or_throw(key), ',');
    if (parts.size() != side * side)
        throw ContractError("sprites: bitmap length mismatch for " + key);
    Tensor bm({side, side});
    for (std::size_t k = 0; k < parts.size(); ++k)
        bm.data[k] = parse_double(parts[k], key);
    return bm;
}

inline std::vector<std::pair<long long, long long>> sprite_traj_from_manifest(
    const Dataset& ds, std::size_t seq, std::size_t j) {
    std::string key = "seq" + std::to_string(seq) + ".sprite" + std::to_string(j) +
                      ".traj";
    std::vector<std::pair<long long, long long>> traj;
    for (const std::string& entry : split(ds.get_or_throw(key), ';')) {
        std::vector<std::string> xy = split(entry, ':');
        if (xy.size() != 2) throw ContractError("sprites: bad trajectory entry " + entry);
        traj.emplace_back(parse_int(xy[0], key), parse_int(xy[1], key));
    }
    return traj;
}

}  // namespace varsep
