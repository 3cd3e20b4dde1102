// varsep: batch entry point for dataset generation, training, evaluation,
// content swaps, and numerical verification. Every command is a pure function
// of (config, input files): re-running with the same inputs reproduces every
// artifact byte for byte, and each run writes the fully resolved
// configuration next to its outputs.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "varsep/checkpoint.hpp"
#include "varsep/config.hpp"
#include "varsep/eval.hpp"
#include "varsep/heat.hpp"
#include "varsep/pgm.hpp"
#include "varsep/sprites.hpp"
#include "varsep/svsf.hpp"
#include "varsep/train.hpp"
#include "varsep/verify.hpp"
#include "varsep/wave.hpp"

namespace varsep {
namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path.string());
    f.write(text.data(), std::streamsize(text.size()));
    if (!f) throw FormatError("write failed: " + path.string());
}

std::string read_text(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

// Frames are stored flat; images dump at their native shape, vector-valued
// frames as a single pixel row.
void dump_frame(const fs::path& path, const Tensor& frame, const Shape& frame_shape) {
    if (frame_shape.size() == 2)
        write_pgm(path.string(), frame_shape[0], frame_shape[1], frame.data.data());
    else
        write_pgm(path.string(), 1, frame.numel(), frame.data.data());
}

std::string dataset_summary(const Dataset& ds, const fs::path& path) {
    return "wrote " + path.string() + " (" + std::to_string(ds.n_sequences) +
           " sequences x " + std::to_string(ds.n_frames) + " frames, frame " +
           shape_str(ds.frame_shape) + ", train " +
           std::to_string(ds.train_count()) + ")";
}

// ---------------------------------------------------------------------------
// gen-data

struct GenArgs {
    std::string kind;
    std::uint64_t seed = 0;
    std::string out = "out";
    std::size_t sequences = 0;    // 0: kind default
    std::size_t train_count = 0;  // 0: four fifths of sequences
    std::size_t frames = 0;       // 0: kind default (sprites, heat-analytic)
    std::size_t n_sprites = 2;
    std::size_t pixels = 100;
    std::string parent;           // waveeq100: existing parent dataset
    std::size_t workers = 1;
};

void require_kind(bool ok, const std::string& flag, const std::string& kind) {
    if (!ok)
        throw ContractError("gen-data: " + flag + " does not apply to kind '" +
                            kind + "'");
}

int cmd_gen_data(const GenArgs& a) {
    fs::create_directories(a.out);
    bool is_sprites = a.kind == "sprites";
    bool is_heat = a.kind == "heat-analytic";
    bool is_wave100 = a.kind == "waveeq100";
    if (a.frames) require_kind(is_sprites || is_heat, "--frames", a.kind);
    if (a.n_sprites != 2) require_kind(is_sprites, "--n-sprites", a.kind);
    if (a.pixels != 100) require_kind(is_wave100, "--pixels", a.kind);
    if (!a.parent.empty()) require_kind(is_wave100, "--parent", a.kind);

    std::string echo = "kind=" + a.kind + "\nseed=" + std::to_string(a.seed) + "\n";
    Dataset ds;
    if (a.kind == "waveeq" || is_wave100) {
        Dataset parent;
        std::string parent_note;
        if (!a.parent.empty()) {
            parent = read_dataset(a.parent);
            parent_note = "parent=" + a.parent + "\n";
        } else {
            WaveDatasetOptions opt;
            if (a.sequences) {
                opt.n_sequences = a.sequences;
                opt.train_count = a.sequences * 4 / 5;
            }
            if (a.train_count) opt.train_count = a.train_count;
            opt.workers = a.workers;
            parent = generate_waveeq(a.seed, opt);
            parent_note = "sequences=" + std::to_string(opt.n_sequences) +
                          "\ntrain_count=" + std::to_string(opt.train_count) + "\n";
            if (is_wave100) {
                fs::path ppath = fs::path(a.out) / "waveeq.svsf";
                write_dataset(parent, ppath.string());
                std::cout << dataset_summary(parent, ppath) << "\n";
                parent_note += "parent=" + ppath.string() + "\n";
            }
        }
        if (is_wave100) {
            ds = subsample_waveeq100(parent, a.seed, a.pixels);
            echo += parent_note + "pixels=" + std::to_string(a.pixels) + "\n";
        } else {
            ds = std::move(parent);
            echo += parent_note;
        }
    } else if (is_sprites) {
        SpriteDatasetOptions opt;
        if (a.sequences) {
            opt.n_sequences = a.sequences;
            opt.train_count = a.sequences * 4 / 5;
        }
        if (a.train_count) opt.train_count = a.train_count;
        if (a.frames) opt.n_frames = a.frames;
        opt.n_sprites = a.n_sprites;
        ds = generate_bouncing_sprites(a.seed, opt);
        echo += "sequences=" + std::to_string(opt.n_sequences) +
                "\ntrain_count=" + std::to_string(opt.train_count) +
                "\nframes=" + std::to_string(opt.n_frames) +
                "\nn_sprites=" + std::to_string(opt.n_sprites) + "\n";
    } else if (is_heat) {
        HeatDatasetOptions opt;
        if (a.sequences) opt.n_sequences = a.sequences;
        if (a.frames) opt.n_frames = a.frames;
        ds = generate_heat_dataset(a.seed, opt);
        std::size_t tc = a.train_count ? a.train_count : ds.train_count();
        if (tc > ds.n_sequences)
            throw ContractError("gen-data: train_count exceeds n_sequences");
        ds.set("train_count", std::to_string(tc));
        echo += "sequences=" + std::to_string(opt.n_sequences) +
                "\ntrain_count=" + std::to_string(tc) +
                "\nframes=" + std::to_string(opt.n_frames) + "\n";
    } else {
        throw ContractError("gen-data: unknown kind '" + a.kind + "'");
    }

    fs::path dpath = fs::path(a.out) / (a.kind + ".svsf");
    write_dataset(ds, dpath.string());
    write_text(fs::path(a.out) / (a.kind + ".options.txt"), echo);
    std::cout << dataset_summary(ds, dpath) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string config;
    std::string resume;
    std::string dataset_override, out_override;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t workers = 0;
};

int cmd_train(const TrainArgs& a) {
    ExperimentConfig cfg = parse_experiment_config(read_text(a.config));
    if (a.seed_set) cfg.seed = a.seed;
    if (!a.dataset_override.empty()) cfg.dataset = a.dataset_override;
    if (!a.out_override.empty()) cfg.out = a.out_override;
    if (a.workers) cfg.workers = a.workers;
    if (cfg.dataset.empty())
        throw ContractError("train: config gives no dataset path");

    Dataset ds = read_dataset(cfg.dataset);
    cfg.resolve(ds.frame_numel());
    const ModelConfig mcfg = cfg.model_config();
    const std::string resolved = serialize_experiment_config(cfg);

    ModelParams params;
    AdamState opt;
    std::size_t start_epoch = 0;
    if (!a.resume.empty()) {
        Checkpoint ck = read_checkpoint(a.resume);
        params = model_from_checkpoint(ck, mcfg);
        if (!ck.has_optimizer)
            throw ContractError("train: checkpoint " + a.resume +
                                " carries no optimizer state to resume from");
        opt = ck.opt;
        start_epoch = ck.epoch;
        if (start_epoch >= cfg.epochs)
            throw ContractError("train: checkpoint already at epoch " +
                                std::to_string(start_epoch) + ", config stops at " +
                                std::to_string(cfg.epochs));
    } else {
        params = init_model(mcfg, Rng(cfg.seed));
    }

    fs::create_directories(cfg.out);
    write_text(fs::path(cfg.out) / "config.txt", resolved);

    std::string csv = train_csv_header() + "\n";
    EpochHook hook = [&](const EpochLog& e, ModelParams& p, AdamState& o) {
        csv += train_csv_row(e) + "\n";
        std::cout << "epoch " << e.epoch << "/" << cfg.epochs << " lr=" << e.lr
                  << " loss=" << e.losses.total << "\n";
        if (cfg.checkpoint_every && e.epoch % cfg.checkpoint_every == 0 &&
            e.epoch < cfg.epochs) {
            Checkpoint snap = make_checkpoint(resolved, std::uint32_t(e.epoch), p,
                                              mcfg, &o);
            write_checkpoint(snap,
                             (fs::path(cfg.out) /
                              ("model_epoch" + std::to_string(e.epoch) + ".svck"))
                                 .string());
        }
        return true;
    };
    TrainRun run = train_model(params, cfg, ds, opt, start_epoch, hook);

    Checkpoint final_ck = make_checkpoint(resolved, std::uint32_t(run.epochs_done),
                                          params, mcfg, &opt);
    fs::path ck_path = fs::path(cfg.out) / "model.svck";
    write_checkpoint(final_ck, ck_path.string());
    write_text(fs::path(cfg.out) / "train.csv", csv);
    std::cout << "wrote " << ck_path.string() << " (epoch "
              << run.epochs_done << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string checkpoint, dataset;
    std::string horizons;  // CSV override; empty keeps the config's list
    std::string out_override;
    std::string variant = "model";
    bool dump_frames = false;
    std::size_t workers = 0, batch = 0;
};

// Checkpoint config + command-line overrides, revalidated.
ExperimentConfig eval_config(const Checkpoint& ck, const std::string& horizons,
                             const std::string& out_override, std::size_t workers,
                             const Dataset& ds) {
    ExperimentConfig cfg = parse_experiment_config(ck.config_text);
    if (!horizons.empty())
        cfg.horizons = detail::parse_size_list(horizons, "horizons");
    if (!out_override.empty()) cfg.out = out_override;
    if (workers) cfg.workers = workers;
    cfg.resolve(ds.frame_numel());
    return cfg;
}

int cmd_eval(const EvalArgs& a) {
    Checkpoint ck = read_checkpoint(a.checkpoint);
    Dataset ds = read_dataset(a.dataset);
    ExperimentConfig cfg = eval_config(ck, a.horizons, a.out_override, a.workers, ds);
    const ModelConfig mcfg = cfg.model_config();
    ModelParams params = model_from_checkpoint(ck, mcfg);

    EvalOptions opts;
    opts.horizons = cfg.horizons;
    opts.workers = cfg.workers;
    if (a.batch) opts.batch = a.batch;
    MetricReport rep = evaluate_model(params, mcfg, ds, opts);

    fs::create_directories(cfg.out);
    write_text(fs::path(cfg.out) / "eval_config.txt", serialize_experiment_config(cfg));
    std::string csv = metric_csv_header() + "\n" + metric_csv_rows(a.variant, rep);
    fs::path csv_path = fs::path(cfg.out) / "metrics.csv";
    write_text(csv_path, csv);
    std::cout << csv;

    if (a.dump_frames) {
        // First test chunk: predictions against stored frames per horizon.
        fs::path dir = fs::path(cfg.out) / "frames";
        fs::create_directories(dir);
        std::size_t seq = ds.train_count();
        Tensor window = conditioning_window(ds, seq, 0, mcfg.tau);
        std::size_t max_h = rep.horizons.back();
        std::vector<Tensor> frames =
            forecast_frames(params, mcfg, window, mcfg.tau + max_h);
        for (std::size_t h : rep.horizons) {
            dump_frame(dir / ("pred_h" + std::to_string(h) + ".pgm"),
                       frames[mcfg.tau + h], ds.frame_shape);
            dump_frame(dir / ("gt_h" + std::to_string(h) + ".pgm"),
                       ds.frame_tensor(seq, mcfg.tau + h), ds.frame_shape);
        }
        std::cout << "wrote " << dir.string() << "/ ("
                  << 2 * rep.horizons.size() << " graymaps)\n";
    }
    std::cout << "wrote " << csv_path.string() << " (" << rep.chunks
              << " chunks)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// swap

struct SwapArgs {
    std::string checkpoint, dataset;
    std::string horizons;
    std::string out_override;
    std::uint64_t seed = 0;
    std::vector<std::size_t> pair;  // content_seq,content_start,motion_seq,motion_start
    bool dump_frames = false;
};

SwapPair select_swap_pair(const Dataset& ds, std::uint64_t seed,
                          std::size_t chunk_len) {
    std::size_t lo = ds.train_count();
    if (lo >= ds.n_sequences)
        throw ContractError("swap: dataset has no test sequences");
    if (ds.n_frames < chunk_len)
        throw ContractError("swap: sequences shorter than one evaluation chunk");
    std::size_t max_start = ds.n_frames - chunk_len;
    Rng rng = Rng(seed).derive("swap-pair");
    SwapPair pair;
    pair.content_seq = lo + rng.uniform_int(0, ds.n_sequences - 1 - lo);
    pair.content_start = rng.uniform_int(0, max_start);
    pair.motion_seq = lo + rng.uniform_int(0, ds.n_sequences - 1 - lo);
    pair.motion_start = rng.uniform_int(0, max_start);
    return pair;
}

int cmd_swap(const SwapArgs& a) {
    Checkpoint ck = read_checkpoint(a.checkpoint);
    Dataset ds = read_dataset(a.dataset);
    ExperimentConfig cfg = eval_config(ck, a.horizons, a.out_override, 0, ds);
    if (!a.pair.empty() && a.pair.size() != 4)
        throw ContractError("swap: --pair needs content_seq,content_start,"
                            "motion_seq,motion_start");
    const ModelConfig mcfg = cfg.model_config();
    ModelParams params = model_from_checkpoint(ck, mcfg);

    EvalOptions opts;
    opts.horizons = cfg.horizons;
    std::size_t max_h = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
    std::size_t chunk_len = mcfg.tau + 1 + max_h;
    SwapPair pair;
    if (!a.pair.empty())
        pair = SwapPair{a.pair[0], a.pair[1], a.pair[2], a.pair[3]};
    else
        pair = select_swap_pair(ds, a.seed, chunk_len);
    std::cout << "pair: content " << pair.content_seq << "@" << pair.content_start
              << ", motion " << pair.motion_seq << "@" << pair.motion_start << "\n";

    SwapEvalResult res = content_swap_eval(params, mcfg, ds, pair, opts);

    fs::create_directories(cfg.out);
    write_text(fs::path(cfg.out) / "swap_config.txt", serialize_experiment_config(cfg));
    std::string csv = metric_csv_header() + "\n" + metric_csv_rows("swap", res.report);
    fs::path csv_path = fs::path(cfg.out) / "swap.csv";
    write_text(csv_path, csv);
    std::cout << csv;

    if (a.dump_frames) {
        // Swap render plus every permutation ground truth per horizon.
        fs::path dir = fs::path(cfg.out) / "frames";
        fs::create_directories(dir);
        Tensor wc = conditioning_window(ds, pair.content_seq, pair.content_start,
                                        mcfg.tau);
        Tensor wm = conditioning_window(ds, pair.motion_seq, pair.motion_start,
                                        mcfg.tau);
        std::vector<Tensor> frames =
            swap_forecast_frames(params, mcfg, wc, wm, mcfg.tau + max_h);
        std::vector<std::vector<Tensor>> gts =
            sprite_swap_ground_truths(ds, pair, chunk_len);
        std::size_t count = 0;
        for (std::size_t h : res.report.horizons) {
            dump_frame(dir / ("swap_h" + std::to_string(h) + ".pgm"),
                       frames[mcfg.tau + h], ds.frame_shape);
            ++count;
            for (std::size_t g = 0; g < gts.size(); ++g) {
                dump_frame(dir / ("gt" + std::to_string(g) + "_h" +
                                  std::to_string(h) + ".pgm"),
                           gts[g][mcfg.tau + h], ds.frame_shape);
                ++count;
            }
        }
        std::cout << "wrote " << dir.string() << "/ (" << count << " graymaps)\n";
    }
    std::cout << "wrote " << csv_path.string() << " (" << res.ground_truths
              << " ground truths)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const std::string& suite, std::uint64_t seed, std::size_t partition) {
    std::vector<VerifyReport> reports;
    std::vector<std::size_t> sizes = partition ? std::vector<std::size_t>{partition}
                                               : std::vector<std::size_t>{1, 2, 4};
    if (suite == "heat" || suite == "all") reports.push_back(verify_heat());
    if (suite == "bound" || suite == "all") reports.push_back(verify_bound(seed, sizes));
    if (suite == "flow" || suite == "all") reports.push_back(verify_flow(seed));
    if (suite == "wave" || suite == "all") reports.push_back(verify_wave());
    bool ok = true;
    for (const VerifyReport& r : reports) {
        std::cout << r.text();
        ok = ok && r.all_pass();
    }
    return ok ? 0 : 1;
}

}  // namespace
}  // namespace varsep

int main(int argc, char** argv) {
    using namespace varsep;
    CLI::App app{"varsep: separation-of-variables forecasting laboratory"};
    app.require_subcommand(1);

    GenArgs ga;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a dataset file");
    gen->add_option("kind", ga.kind, "waveeq|waveeq100|sprites|heat-analytic")
        ->required()
        ->check(CLI::IsMember({"waveeq", "waveeq100", "sprites", "heat-analytic"}));
    gen->add_option("--seed", ga.seed, "Generation seed");
    gen->add_option("--out", ga.out, "Output directory");
    gen->add_option("--sequences", ga.sequences, "Sequence count (0: kind default)");
    gen->add_option("--train-count", ga.train_count,
                    "Training split size (0: four fifths)");
    gen->add_option("--frames", ga.frames, "Frames per sequence (sprites, heat)");
    gen->add_option("--n-sprites", ga.n_sprites, "Sprites per sequence");
    gen->add_option("--pixels", ga.pixels, "Pixel count for waveeq100");
    gen->add_option("--parent", ga.parent, "Existing parent dataset for waveeq100");
    gen->add_option("--workers", ga.workers, "Generation threads (same output)");

    TrainArgs ta;
    CLI::App* train = app.add_subcommand("train", "Train a model from a config");
    CLI::Option* train_seed = train->add_option("--seed", ta.seed, "Override config seed");
    train->add_option("--config", ta.config, "key=value experiment config")->required();
    train->add_option("--resume", ta.resume, "Checkpoint to continue from");
    train->add_option("--dataset", ta.dataset_override, "Override config dataset path");
    train->add_option("--out", ta.out_override, "Override config output directory");
    train->add_option("--workers", ta.workers, "Override config workers");

    EvalArgs ea;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on test chunks");
    eval->add_option("--checkpoint", ea.checkpoint, "SVCK checkpoint")->required();
    eval->add_option("--dataset", ea.dataset, "SVSF dataset")->required();
    eval->add_option("--horizons", ea.horizons, "Comma-separated horizons");
    eval->add_option("--out", ea.out_override, "Override output directory");
    eval->add_option("--variant", ea.variant, "Variant label for the CSV");
    eval->add_option("--workers", ea.workers, "Evaluation threads (same results)");
    eval->add_option("--batch", ea.batch, "Forecast batch size (same results)");
    eval->add_flag("--dump-frames", ea.dump_frames, "Write P5 graymap frame dumps");

    SwapArgs sa;
    CLI::App* swap = app.add_subcommand("swap", "Content swap between two chunks");
    swap->add_option("--checkpoint", sa.checkpoint, "SVCK checkpoint")->required();
    swap->add_option("--dataset", sa.dataset, "SVSF dataset")->required();
    swap->add_option("--horizons", sa.horizons, "Comma-separated horizons");
    swap->add_option("--out", sa.out_override, "Override output directory");
    swap->add_option("--seed", sa.seed, "Deterministic pair selection seed");
    swap->add_option("--pair", sa.pair,
                     "content_seq,content_start,motion_seq,motion_start")
        ->delimiter(',');
    swap->add_flag("--dump-frames", sa.dump_frames, "Write swap render and ground truths");

    std::string suite;
    std::uint64_t vseed = 0;
    std::size_t vpartition = 0;
    CLI::App* verify = app.add_subcommand("verify", "Run a numerical check suite");
    verify->add_option("suite", suite, "heat|bound|flow|wave|all")
        ->required()
        ->check(CLI::IsMember({"heat", "bound", "flow", "wave", "all"}));
    verify->add_option("--seed", vseed, "Random draw seed");
    verify->add_option("--partition", vpartition,
                       "Single partition size for the bound suite");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_gen_data(ga);
        if (*train) {
            ta.seed_set = train_seed->count() > 0;
            return cmd_train(ta);
        }
        if (*eval) return cmd_eval(ea);
        if (*swap) return cmd_swap(sa);
        if (*verify) return cmd_verify(suite, vseed, vpartition);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
