#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "varsep/checkpoint.hpp"
#include "varsep/config.hpp"
#include "varsep/train.hpp"

using namespace varsep;

namespace {

std::string temp_path(const std::string& name) {
    return ::testing::TempDir() + name;
}

ExperimentConfig toy_experiment() {
    ExperimentConfig cfg;
    cfg.dataset = "unused.svsf";
    cfg.seed = 9;
    cfg.obs_dim = 5;
    cfg.static_dim = 3;
    cfg.dynamic_dim = 3;
    cfg.cond_frames = 2;  // tau = 1
    cfg.seq_frames = 5;   // nu = 4
    cfg.enc_hidden = {6};
    cfg.dec_hidden = {6};
    cfg.dyn_blocks = 1;
    cfg.dyn_hidden = 6;
    cfg.lambda_reg_t = 0.0015;
    cfg.lr = 0.01;
    cfg.epochs = 3;
    cfg.batch = 2;
    return cfg;
}

Dataset toy_dataset(std::size_t n_seq, std::size_t n_frames, std::size_t m,
                    std::uint64_t seed) {
    Dataset ds;
    ds.kind = DatasetKind::WavePixels;
    ds.n_sequences = n_seq;
    ds.n_frames = n_frames;
    ds.frame_shape = {m};
    ds.payload.resize(n_seq * n_frames * m);
    Rng rng(seed);
    for (float& v : ds.payload) v = float(rng.uniform());
    ds.set("train_count", std::to_string(n_seq));
    return ds;
}

bool params_bit_equal(ModelParams& a, ModelParams& b, const ModelConfig& cfg) {
    std::vector<Tensor*> ta, tb;
    visit_model_params(a, cfg, [&](const std::string&, Tensor& t) { ta.push_back(&t); });
    visit_model_params(b, cfg, [&](const std::string&, Tensor& t) { tb.push_back(&t); });
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i)
        if (!bit_equal(*ta[i], *tb[i])) return false;
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Experiment configuration

TEST(Config, SerializeParseRoundTrip) {
    ExperimentConfig cfg = toy_experiment();
    cfg.schedule = {{300, 0.5}, {700, 0.5}};
    cfg.horizons = {10, 40};
    cfg.dyn_gain = 1.41;
    std::string text = serialize_experiment_config(cfg);
    ExperimentConfig back = parse_experiment_config(text);
    EXPECT_EQ(serialize_experiment_config(back), text);
    EXPECT_EQ(back.schedule.size(), 2u);
    EXPECT_EQ(back.schedule[0].first, 300u);
    EXPECT_EQ(back.schedule[1].second, 0.5);
    EXPECT_EQ(back.horizons, (std::vector<std::size_t>{10, 40}));
    EXPECT_EQ(back.enc_hidden, (std::vector<std::size_t>{6}));
    EXPECT_EQ(back.dyn_gain, 1.41);
}

TEST(Config, RejectsUnknownAndDuplicateKeys) {
    EXPECT_THROW(parse_experiment_config("nonsense_key=3\n"), ContractError);
    EXPECT_THROW(parse_experiment_config("seed=1\nseed=2\n"), ContractError);
    EXPECT_THROW(parse_experiment_config("just a line\n"), ContractError);
}

TEST(Config, SkipsCommentsAndBlankLines) {
    ExperimentConfig cfg =
        parse_experiment_config("# a comment\n\n  seed=4 \n\n# end\n");
    EXPECT_EQ(cfg.seed, 4u);
}

TEST(Config, RejectsMalformedValues) {
    EXPECT_THROW(parse_experiment_config("combination=mix\n"), ContractError);
    EXPECT_THROW(parse_experiment_config("dynamics=lstm\n"), ContractError);
    EXPECT_THROW(parse_experiment_config("schedule=5\n"), ContractError);
    EXPECT_THROW(parse_experiment_config("epochs=ten\n"), ContractError);
    EXPECT_THROW(parse_experiment_config("lr=fast\n"), ContractError);
}

TEST(Config, ResolveInfersObsDimAndRegularizerWeight) {
    ExperimentConfig cfg = toy_experiment();
    cfg.obs_dim = 0;
    cfg.lambda_reg_t = -1.0;
    cfg.dynamic_dim = 32;
    cfg.static_dim = 32;
    cfg.resolve(100);
    EXPECT_EQ(cfg.obs_dim, 100u);
    EXPECT_EQ(cfg.lambda_reg_t, 0.016);

    ExperimentConfig fixed = toy_experiment();
    fixed.obs_dim = 100;
    EXPECT_THROW(fixed.resolve(64), ContractError);
}

TEST(Config, ValidationCatchesBadGeometry) {
    ExperimentConfig cfg = toy_experiment();
    cfg.batch = 0;
    EXPECT_THROW(cfg.validate(), ContractError);
    cfg = toy_experiment();
    cfg.seq_frames = 1;  // shorter than cond_frames
    EXPECT_THROW(cfg.validate(), ContractError);
    cfg = toy_experiment();
    cfg.schedule = {{0, 0.5}};
    EXPECT_THROW(cfg.validate(), ContractError);
    cfg = toy_experiment();
    cfg.horizons.clear();
    EXPECT_THROW(cfg.validate(), ContractError);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripIsBitExactIncludingOptimizer) {
    ExperimentConfig ecfg = toy_experiment();
    ModelConfig cfg = ecfg.model_config();
    ModelParams params = init_model(cfg, Rng(5));
    std::vector<Tensor*> ptrs;
    visit_model_params(params, cfg,
                       [&](const std::string&, Tensor& t) { ptrs.push_back(&t); });
    AdamState opt = init_adam(ptrs);
    // One synthetic optimizer step so the moments are nonzero.
    std::vector<Tensor> grads;
    for (Tensor* p : ptrs) {
        Tensor g(p->shape);
        Rng rg(p->numel());
        for (double& v : g.data) v = rg.normal();
        grads.push_back(std::move(g));
    }
    std::vector<const Tensor*> gptr;
    for (const Tensor& g : grads) gptr.push_back(&g);
    adam_step(ecfg.adam_config(), ecfg.lr, opt, ptrs, gptr);

    std::string cfg_text = serialize_experiment_config(ecfg);
    Checkpoint ck = make_checkpoint(cfg_text, 7, params, cfg, &opt);
    std::string path = temp_path("roundtrip.svck");
    write_checkpoint(ck, path);
    Checkpoint back = read_checkpoint(path);

    EXPECT_EQ(back.config_text, cfg_text);
    EXPECT_EQ(back.epoch, 7u);
    ASSERT_EQ(back.params.size(), ck.params.size());
    for (std::size_t k = 0; k < ck.params.size(); ++k) {
        EXPECT_EQ(back.params[k].first, ck.params[k].first);
        EXPECT_TRUE(bit_equal(back.params[k].second, ck.params[k].second));
    }
    ASSERT_TRUE(back.has_optimizer);
    EXPECT_EQ(back.opt.step, 1u);
    for (std::size_t k = 0; k < opt.m.size(); ++k) {
        EXPECT_TRUE(bit_equal(back.opt.m[k], opt.m[k]));
        EXPECT_TRUE(bit_equal(back.opt.v[k], opt.v[k]));
    }

    // Writing again produces a byte-identical file.
    std::string path2 = temp_path("roundtrip2.svck");
    write_checkpoint(ck, path2);
    std::vector<std::uint8_t> b1 = read_file_bytes(path);
    std::vector<std::uint8_t> b2 = read_file_bytes(path2);
    EXPECT_EQ(b1, b2);

    // And the stored tensors reload into a model that matches exactly.
    ModelParams loaded = model_from_checkpoint(back, cfg);
    EXPECT_TRUE(params_bit_equal(params, loaded, cfg));
}

TEST(Checkpoint, GruParametersRoundTrip) {
    ExperimentConfig ecfg = toy_experiment();
    ecfg.dynamics = DynamicsKind::Gru;
    ModelConfig cfg = ecfg.model_config();
    ModelParams params = init_model(cfg, Rng(11));
    Checkpoint ck = make_checkpoint("", 1, params, cfg, nullptr);
    std::string path = temp_path("gru.svck");
    write_checkpoint(ck, path);
    ModelParams loaded = model_from_checkpoint(read_checkpoint(path), cfg);
    EXPECT_TRUE(params_bit_equal(params, loaded, cfg));
}

TEST(Checkpoint, RejectsBadMagicVersionAndTruncation) {
    ExperimentConfig ecfg = toy_experiment();
    ModelConfig cfg = ecfg.model_config();
    ModelParams params = init_model(cfg, Rng(13));
    Checkpoint ck = make_checkpoint("cfg", 2, params, cfg, nullptr);
    std::string path = temp_path("good.svck");
    write_checkpoint(ck, path);
    std::vector<std::uint8_t> bytes = read_file_bytes(path);

    auto write_bytes = [](const std::string& p, const std::vector<std::uint8_t>& b) {
        std::ofstream f(p, std::ios::binary);
        f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
    };

    std::vector<std::uint8_t> bad = bytes;
    bad[0] = 'X';
    std::string bad_path = temp_path("badmagic.svck");
    write_bytes(bad_path, bad);
    try {
        read_checkpoint(bad_path);
        FAIL() << "bad magic accepted";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }

    bad = bytes;
    bad[4] = 99;
    std::string ver_path = temp_path("badver.svck");
    write_bytes(ver_path, bad);
    try {
        read_checkpoint(ver_path);
        FAIL() << "bad version accepted";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("version 99"), std::string::npos);
    }

    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 40);
    std::string cut_path = temp_path("cut.svck");
    write_bytes(cut_path, cut);
    try {
        read_checkpoint(cut_path);
        FAIL() << "truncated file accepted";
    } catch (const FormatError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("truncated"), std::string::npos);
        EXPECT_NE(msg.find("offset"), std::string::npos);
    }

    std::vector<std::uint8_t> padded = bytes;
    padded.push_back(0);
    std::string pad_path = temp_path("pad.svck");
    write_bytes(pad_path, padded);
    EXPECT_THROW(read_checkpoint(pad_path), FormatError);
}

TEST(Checkpoint, LoaderRejectsMismatchedConfig) {
    ExperimentConfig ecfg = toy_experiment();
    ModelConfig cfg = ecfg.model_config();
    ModelParams params = init_model(cfg, Rng(17));
    Checkpoint ck = make_checkpoint("", 0, params, cfg, nullptr);
    ModelConfig other = cfg;
    other.enc_hidden = {7};
    EXPECT_THROW(model_from_checkpoint(ck, other), ContractError);
    ModelConfig fewer = cfg;
    fewer.d = 0;
    EXPECT_THROW(model_from_checkpoint(ck, fewer), ContractError);
}

// ---------------------------------------------------------------------------
// Schedule and CSV plumbing

TEST(Schedule, MultipliersCompound) {
    std::vector<std::pair<std::size_t, double>> sched{{2, 0.5}, {3, 0.1}};
    EXPECT_DOUBLE_EQ(scheduled_lr(0.4, sched, 1), 0.4);
    EXPECT_DOUBLE_EQ(scheduled_lr(0.4, sched, 2), 0.2);
    EXPECT_DOUBLE_EQ(scheduled_lr(0.4, sched, 3), 0.02);
    EXPECT_DOUBLE_EQ(scheduled_lr(0.4, sched, 9), 0.02);
}

TEST(TrainCsv, HeaderAndRowFormat) {
    EXPECT_EQ(train_csv_header(),
              "epoch,lr,loss_total,loss_pred,loss_ae,loss_reg_s,loss_reg_t");
    EpochLog e{3, 0.25, LossReport{1.5, 0.5, 0.25, 0.125, 0.0625}};
    EXPECT_EQ(train_csv_row(e), "3,0.25,1.5,0.5,0.25,0.125,0.0625");
}

// ---------------------------------------------------------------------------
// Training loop

TEST(Train, OneEpochSmokeRunsAndLogsFiniteLoss) {
    ExperimentConfig cfg = toy_experiment();
    cfg.epochs = 1;
    Dataset ds = toy_dataset(2, 6, cfg.obs_dim, 21);
    ModelParams params = init_model(cfg.model_config(), Rng(cfg.seed));
    AdamState opt;
    TrainRun run = train_model(params, cfg, ds, opt);
    ASSERT_EQ(run.log.size(), 1u);
    EXPECT_EQ(run.log[0].epoch, 1u);
    EXPECT_EQ(run.log[0].lr, cfg.lr);
    EXPECT_TRUE(std::isfinite(run.log[0].losses.total));
    EXPECT_GT(run.log[0].losses.total, 0.0);
    EXPECT_EQ(run.epochs_done, 1u);
    EXPECT_EQ(opt.step, 1u);  // 2 sequences in one batch of 2
}

TEST(Train, SameSeedGivesBitIdenticalRun) {
    ExperimentConfig cfg = toy_experiment();
    Dataset ds = toy_dataset(3, 7, cfg.obs_dim, 23);
    ModelConfig mcfg = cfg.model_config();
    ModelParams pa = init_model(mcfg, Rng(cfg.seed));
    ModelParams pb = init_model(mcfg, Rng(cfg.seed));
    AdamState oa, ob;
    TrainRun ra = train_model(pa, cfg, ds, oa);
    TrainRun rb = train_model(pb, cfg, ds, ob);
    ASSERT_EQ(ra.log.size(), rb.log.size());
    for (std::size_t i = 0; i < ra.log.size(); ++i)
        EXPECT_EQ(train_csv_row(ra.log[i]), train_csv_row(rb.log[i]));
    EXPECT_TRUE(params_bit_equal(pa, pb, mcfg));
}

TEST(Train, ResumeMatchesStraightRun) {
    ExperimentConfig cfg = toy_experiment();
    cfg.epochs = 4;
    Dataset ds = toy_dataset(3, 7, cfg.obs_dim, 29);
    ModelConfig mcfg = cfg.model_config();

    ModelParams straight = init_model(mcfg, Rng(cfg.seed));
    AdamState so;
    TrainRun sr = train_model(straight, cfg, ds, so);

    ModelParams resumed = init_model(mcfg, Rng(cfg.seed));
    AdamState ro;
    ExperimentConfig first_half = cfg;
    first_half.epochs = 2;
    train_model(resumed, first_half, ds, ro);
    TrainRun second = train_model(resumed, cfg, ds, ro, /*start_epoch=*/2);

    EXPECT_TRUE(params_bit_equal(straight, resumed, mcfg));
    ASSERT_EQ(second.log.size(), 2u);
    EXPECT_EQ(train_csv_row(second.log[0]), train_csv_row(sr.log[2]));
    EXPECT_EQ(train_csv_row(second.log[1]), train_csv_row(sr.log[3]));
    EXPECT_EQ(so.step, ro.step);
}

TEST(Train, ScheduleShowsUpInTheLog) {
    ExperimentConfig cfg = toy_experiment();
    cfg.epochs = 3;
    cfg.schedule = {{2, 0.1}};
    Dataset ds = toy_dataset(2, 6, cfg.obs_dim, 31);
    ModelParams params = init_model(cfg.model_config(), Rng(cfg.seed));
    AdamState opt;
    TrainRun run = train_model(params, cfg, ds, opt);
    ASSERT_EQ(run.log.size(), 3u);
    EXPECT_DOUBLE_EQ(run.log[0].lr, cfg.lr);
    EXPECT_DOUBLE_EQ(run.log[1].lr, cfg.lr * 0.1);
    EXPECT_DOUBLE_EQ(run.log[2].lr, cfg.lr * 0.1);
}

TEST(Train, HookCanStopEarly) {
    ExperimentConfig cfg = toy_experiment();
    cfg.epochs = 10;
    Dataset ds = toy_dataset(2, 6, cfg.obs_dim, 37);
    ModelParams params = init_model(cfg.model_config(), Rng(cfg.seed));
    AdamState opt;
    std::size_t calls = 0;
    TrainRun run = train_model(params, cfg, ds, opt, 0,
                               [&](const EpochLog&, ModelParams&, AdamState&) {
                                   ++calls;
                                   return calls < 2;
                               });
    EXPECT_EQ(calls, 2u);
    EXPECT_EQ(run.epochs_done, 2u);
}

TEST(Train, LossTrendsDownOnLearnableData) {
    ExperimentConfig cfg = toy_experiment();
    cfg.epochs = 30;
    cfg.lr = 0.003;
    Dataset ds = toy_dataset(4, 8, cfg.obs_dim, 41);
    ModelParams params = init_model(cfg.model_config(), Rng(cfg.seed));
    AdamState opt;
    TrainRun run = train_model(params, cfg, ds, opt);
    double first = run.log.front().losses.total;
    double last = run.log.back().losses.total;
    EXPECT_LT(last, first);
}

TEST(Train, RejectsMismatchedDatasetAndState) {
    ExperimentConfig cfg = toy_experiment();
    Dataset wrong = toy_dataset(2, 6, cfg.obs_dim + 1, 43);
    ModelParams params = init_model(cfg.model_config(), Rng(1));
    AdamState opt;
    EXPECT_THROW(train_model(params, cfg, wrong, opt), ContractError);

    Dataset short_ds = toy_dataset(2, 3, cfg.obs_dim, 47);  // nu+1 = 5 frames needed
    EXPECT_THROW(train_model(params, cfg, short_ds, opt), ContractError);

    Dataset ok = toy_dataset(2, 6, cfg.obs_dim, 53);
    AdamState bad;
    bad.step = 5;  // claims progress but holds no moments
    EXPECT_THROW(train_model(params, cfg, ok, bad), ContractError);
}
