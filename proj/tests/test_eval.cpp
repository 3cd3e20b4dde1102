#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "varsep/eval.hpp"
#include "varsep/verify.hpp"

using namespace varsep;

namespace {

Dataset make_dataset(std::size_t n_seq, std::size_t n_frames, const Shape& frame_shape,
                     std::size_t train_count, float fill) {
    Dataset ds;
    ds.kind = DatasetKind::WavePixels;
    ds.n_sequences = n_seq;
    ds.n_frames = n_frames;
    ds.frame_shape = frame_shape;
    std::size_t m = 1;
    for (std::size_t e : frame_shape) m *= e;
    ds.payload.assign(n_seq * n_frames * m, fill);
    ds.set("kind", dataset_kind_name(ds.kind));
    ds.set("train_count", std::to_string(train_count));
    return ds;
}

ModelConfig tiny_config(std::size_t m) {
    ModelConfig cfg;
    cfg.m = m;
    cfg.d = 3;
    cfg.p = 3;
    cfg.tau = 1;
    cfg.enc_hidden = {8};
    cfg.dec_hidden = {8};
    cfg.dyn_blocks = 1;
    cfg.dyn_hidden = 4;
    cfg.dyn_gain = 0.7;
    cfg.validate();
    return cfg;
}

ModelParams zero_params(const ModelConfig& cfg) {
    ModelParams p = zero_model_params(cfg);
    return p;
}

bool reports_bit_equal(const MetricReport& a, const MetricReport& b) {
    if (a.horizons != b.horizons || a.chunks != b.chunks) return false;
    for (std::size_t i = 0; i < a.horizons.size(); ++i) {
        if (a.mse[i] != b.mse[i]) return false;
        if (a.psnr[i] != b.psnr[i] && !(std::isinf(a.psnr[i]) && std::isinf(b.psnr[i])))
            return false;
        bool both_nan = std::isnan(a.ssim[i]) && std::isnan(b.ssim[i]);
        if (a.ssim[i] != b.ssim[i] && !both_nan) return false;
    }
    return true;
}

SpriteDatasetOptions sprite_options() {
    SpriteDatasetOptions opt;
    opt.n_sequences = 4;
    opt.train_count = 2;
    opt.frame = 16;
    opt.sprite = 6;
    opt.n_sprites = 2;
    opt.n_frames = 12;
    opt.max_speed = 2;
    return opt;
}

}  // namespace

// ---------------------------------------------------------------------------
// Chunked evaluation

TEST(Evaluate, PerfectConstantModelScoresPerfectly) {
    // Zero parameters decode to sigmoid(0) = 0.5 exactly; on a constant-0.5
    // dataset every metric is at its perfect value.
    Dataset ds = make_dataset(3, 10, {12, 12}, 2, 0.5f);
    ModelConfig cfg = tiny_config(144);
    ModelParams params = zero_params(cfg);
    EvalOptions opts;
    opts.horizons = {1, 4};
    MetricReport rep = evaluate_model(params, cfg, ds, opts);
    ASSERT_EQ(rep.horizons, (std::vector<std::size_t>{1, 4}));
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(rep.mse[i], 0.0);
        EXPECT_TRUE(std::isinf(rep.psnr[i]));
        EXPECT_EQ(rep.ssim[i], 1.0);
    }
    EXPECT_EQ(rep.chunks, 10u - (cfg.tau + 1 + 4) + 1);  // one test sequence
}

TEST(Evaluate, EnumeratesEveryChunkOfEveryTestSequence) {
    Dataset ds = make_dataset(5, 20, {6}, 3, 0.25f);
    ModelConfig cfg = tiny_config(6);
    ModelParams params = zero_params(cfg);
    EvalOptions opts;
    opts.horizons = {2, 5};
    MetricReport rep = evaluate_model(params, cfg, ds, opts);
    // chunk length 1+1+5 = 7, starts 0..13 -> 14 chunks, 2 test sequences
    EXPECT_EQ(rep.chunks, 28u);
}

TEST(Evaluate, HorizonsAreSortedAndDeduplicated) {
    Dataset ds = make_dataset(2, 12, {6}, 1, 0.5f);
    ModelConfig cfg = tiny_config(6);
    ModelParams params = zero_params(cfg);
    EvalOptions opts;
    opts.horizons = {5, 2, 5, 2};
    MetricReport rep = evaluate_model(params, cfg, ds, opts);
    EXPECT_EQ(rep.horizons, (std::vector<std::size_t>{2, 5}));
}

TEST(Evaluate, VectorFramesGetNanSsim) {
    Dataset ds = make_dataset(2, 10, {6}, 1, 0.5f);
    ModelConfig cfg = tiny_config(6);
    ModelParams params = zero_params(cfg);
    EvalOptions opts;
    opts.horizons = {3};
    MetricReport rep = evaluate_model(params, cfg, ds, opts);
    EXPECT_TRUE(std::isnan(rep.ssim[0]));
    EXPECT_EQ(rep.mse[0], 0.0);
}

TEST(Evaluate, MatchesManualSingleChunkOracle) {
    Rng root(11);
    Dataset ds = make_dataset(2, 9, {6}, 1, 0.0f);
    Rng payload = root.derive("payload");
    for (float& v : ds.payload) v = float(payload.uniform());
    ModelConfig cfg = tiny_config(6);
    ModelParams params = init_model(cfg, root);
    EvalOptions opts;
    opts.horizons = {3};

    MetricReport rep = chunk_metrics(params, cfg, ds, 1, 2, opts);
    Tensor window = conditioning_window(ds, 1, 2, cfg.tau);
    std::vector<Tensor> frames = forecast_frames(params, cfg, window, cfg.tau + 3);
    Tensor pred = frames[cfg.tau + 3];
    Tensor gt = ds.frame_tensor(1, 2 + cfg.tau + 3);
    EXPECT_DOUBLE_EQ(rep.mse[0], mse(pred, gt));
    EXPECT_DOUBLE_EQ(rep.psnr[0], psnr_from_mse(mse(pred, gt), 1.0));
}

TEST(Evaluate, BatchSizeAndWorkersDoNotChangeResults) {
    Rng root(13);
    Dataset ds = make_dataset(4, 14, {6}, 1, 0.0f);
    Rng payload = root.derive("payload");
    for (float& v : ds.payload) v = float(payload.uniform());
    ModelConfig cfg = tiny_config(6);
    ModelParams params = init_model(cfg, root);
    EvalOptions a;
    a.horizons = {1, 4};
    a.batch = 128;
    a.workers = 1;
    EvalOptions b = a;
    b.batch = 3;
    EvalOptions c = a;
    c.batch = 5;
    c.workers = 4;
    MetricReport ra = evaluate_model(params, cfg, ds, a);
    MetricReport rb = evaluate_model(params, cfg, ds, b);
    MetricReport rc = evaluate_model(params, cfg, ds, c);
    EXPECT_TRUE(reports_bit_equal(ra, rb));
    EXPECT_TRUE(reports_bit_equal(ra, rc));
}

TEST(Evaluate, RejectsBadInputs) {
    Dataset ds = make_dataset(3, 10, {6}, 3, 0.5f);  // no test sequences
    ModelConfig cfg = tiny_config(6);
    ModelParams params = zero_params(cfg);
    EvalOptions opts;
    EXPECT_THROW(evaluate_model(params, cfg, ds, opts), ContractError);

    Dataset short_ds = make_dataset(3, 10, {6}, 2, 0.5f);
    opts.horizons = {40};  // chunk length 42 > 10 frames
    EXPECT_THROW(evaluate_model(params, cfg, short_ds, opts), ContractError);

    opts.horizons = {};
    EXPECT_THROW(evaluate_model(params, cfg, short_ds, opts), ContractError);

    ModelConfig wrong = tiny_config(7);
    EXPECT_THROW(
        evaluate_chunks(zero_params(wrong), wrong, short_ds, {{2, 0}}, EvalOptions{}),
        ContractError);
}

// ---------------------------------------------------------------------------
// Content swap

TEST(ContentSwap, IdentitySwapMatchesPlainEvaluationBitForBit) {
    Rng root(17);
    Dataset ds = generate_bouncing_sprites(21, sprite_options());
    ModelConfig cfg = tiny_config(ds.frame_numel());
    ModelParams params = init_model(cfg, root);
    EvalOptions opts;
    opts.horizons = {1, 3};
    SwapPair pair;
    pair.content_seq = pair.motion_seq = 2;
    pair.content_start = pair.motion_start = 4;
    SwapEvalResult res = content_swap_eval(params, cfg, ds, pair, opts);
    MetricReport plain = chunk_metrics(params, cfg, ds, 2, 4, opts);
    EXPECT_EQ(res.ground_truths, 1u);
    ASSERT_EQ(res.report.horizons, plain.horizons);
    for (std::size_t i = 0; i < plain.horizons.size(); ++i) {
        EXPECT_EQ(res.report.mse[i], plain.mse[i]);
        EXPECT_EQ(res.report.psnr[i], plain.psnr[i]);
        EXPECT_EQ(res.report.ssim[i], plain.ssim[i]);
    }
}

TEST(ContentSwap, TwoSpritesYieldBothPermutationGroundTruths) {
    Dataset ds = generate_bouncing_sprites(22, sprite_options());
    SwapPair pair;
    pair.content_seq = 0;
    pair.content_start = 1;
    pair.motion_seq = 1;
    pair.motion_start = 2;
    auto gts = sprite_swap_ground_truths(ds, pair, 5);
    EXPECT_EQ(gts.size(), 2u);
    ASSERT_EQ(gts[0].size(), 5u);
    for (const auto& gt : gts) EXPECT_EQ(gt[0].shape, (Shape{16, 16}));
}

TEST(ContentSwap, SingleSpriteHasSingleGroundTruth) {
    SpriteDatasetOptions opt = sprite_options();
    opt.n_sprites = 1;
    Dataset ds = generate_bouncing_sprites(23, opt);
    SwapPair pair;
    pair.content_seq = 0;
    pair.motion_seq = 1;
    auto gts = sprite_swap_ground_truths(ds, pair, 4);
    EXPECT_EQ(gts.size(), 1u);
}

TEST(ContentSwap, IdentityGroundTruthIsTheStoredFrames) {
    Dataset ds = generate_bouncing_sprites(24, sprite_options());
    SwapPair pair;
    pair.content_seq = pair.motion_seq = 1;
    pair.content_start = pair.motion_start = 3;
    auto gts = sprite_swap_ground_truths(ds, pair, 4);
    ASSERT_EQ(gts.size(), 1u);
    for (std::size_t k = 0; k < 4; ++k) {
        Tensor stored({16, 16});
        const float* src = ds.frame(1, 3 + k);
        for (std::size_t i = 0; i < 256; ++i) stored.data[i] = double(src[i]);
        EXPECT_TRUE(bit_equal(gts[0][k], stored));
    }
}

TEST(ContentSwap, OracleSwapRenderIsPerfectUnderTheMinMaxRule) {
    Dataset ds = generate_bouncing_sprites(25, sprite_options());
    SwapPair pair;
    pair.content_seq = 0;
    pair.content_start = 0;
    pair.motion_seq = 1;
    pair.motion_start = 1;
    std::vector<std::size_t> horizons = {1, 3};
    std::size_t tau = 1, chunk_len = tau + 1 + 3;
    auto gts = sprite_swap_ground_truths(ds, pair, chunk_len);
    ASSERT_EQ(gts.size(), 2u);
    // The two permutations must actually disagree somewhere for this to
    // exercise the selection rule.
    double gap = 0.0;
    for (std::size_t k = 0; k < chunk_len; ++k) gap += mse(gts[0][k], gts[1][k]);
    ASSERT_GT(gap, 0.0);

    // A perfect oracle that renders the second permutation.
    MetricReport rep = swap_metrics_against(gts[1], gts, horizons, tau,
                                            ds.frame_shape, 1.0);
    for (std::size_t i = 0; i < rep.horizons.size(); ++i) {
        EXPECT_EQ(rep.mse[i], 0.0);
        EXPECT_TRUE(std::isinf(rep.psnr[i]));
        EXPECT_DOUBLE_EQ(rep.ssim[i], 1.0);
    }
}

TEST(ContentSwap, SelectionPicksTheBetterValuePerMetric) {
    Dataset ds = generate_bouncing_sprites(26, sprite_options());
    SwapPair pair;
    pair.content_seq = 0;
    pair.motion_seq = 1;
    std::size_t tau = 1;
    std::vector<std::size_t> horizons = {2};
    auto gts = sprite_swap_ground_truths(ds, pair, tau + 1 + 2);
    ASSERT_EQ(gts.size(), 2u);
    MetricReport rep =
        swap_metrics_against(gts[0], gts, horizons, tau, ds.frame_shape, 1.0);
    double vs_other = mse(gts[0][tau + 2], gts[1][tau + 2]);
    EXPECT_EQ(rep.mse[0], std::min(0.0, vs_other));
    EXPECT_DOUBLE_EQ(rep.ssim[0], 1.0);  // max over {1, ssim(other)}
}

TEST(ContentSwap, RequiresStaticPathAndGroundTruth) {
    Dataset ds = generate_bouncing_sprites(27, sprite_options());
    ModelConfig no_static = tiny_config(ds.frame_numel());
    no_static.d = 0;
    no_static.validate();
    ModelParams params = zero_model_params(no_static);
    SwapPair pair;
    pair.content_seq = 0;
    pair.motion_seq = 1;
    EvalOptions opts;
    opts.horizons = {1};
    EXPECT_THROW(content_swap_eval(params, no_static, ds, pair, opts), ContractError);

    Dataset plain = make_dataset(3, 8, {6}, 1, 0.5f);
    EXPECT_THROW(sprite_swap_ground_truths(plain, pair, 3), ContractError);
    EXPECT_THROW(
        swap_metrics_against({}, {}, {1}, 1, Shape{6}, 1.0), ContractError);
}

// ---------------------------------------------------------------------------
// Ablation report

TEST(Ablation, IdenticalCheckpointsGiveIdenticalRowsInStableOrder) {
    Rng root(31);
    Dataset ds = make_dataset(3, 12, {6}, 2, 0.0f);
    Rng payload = root.derive("payload");
    for (float& v : ds.payload) v = float(payload.uniform());
    ModelConfig cfg = tiny_config(6);
    ModelParams params = init_model(cfg, root);
    EvalOptions opts;
    opts.horizons = {1, 3};
    std::vector<AblationVariant> variants{{"full", &params, &cfg},
                                          {"copy", &params, &cfg}};
    std::string csv = ablation_report(variants, ds, opts);
    std::vector<std::string> lines = split(csv, '\n');
    ASSERT_EQ(lines.size(), 6u);  // header + 2 variants x 2 horizons + trailing
    EXPECT_EQ(lines[0], "variant,horizon,mse,psnr,ssim");
    EXPECT_EQ(lines[1].substr(0, 5), "full,");
    EXPECT_EQ(lines[3].substr(0, 5), "copy,");
    EXPECT_EQ(lines[1].substr(5), lines[3].substr(5));
    EXPECT_EQ(lines[2].substr(5), lines[4].substr(5));
    EXPECT_EQ(ablation_report(variants, ds, opts), csv);
}

TEST(Ablation, RejectsEmptyOrMissingVariants) {
    Dataset ds = make_dataset(2, 10, {6}, 1, 0.5f);
    EXPECT_THROW(ablation_report({}, ds, EvalOptions{}), ContractError);
    std::vector<AblationVariant> missing{{"ghost", nullptr, nullptr}};
    EXPECT_THROW(ablation_report(missing, ds, EvalOptions{}), ContractError);
}

// ---------------------------------------------------------------------------
// Time-regularizer bound

namespace {

// Frames at exact multiples of 0.25 so interpolation stays exact in fp.
Dataset linear_ramp_dataset(std::size_t n_frames, std::size_t m) {
    Dataset ds;
    ds.kind = DatasetKind::WavePixels;
    ds.n_sequences = 1;
    ds.n_frames = n_frames;
    ds.frame_shape = {m};
    ds.payload.resize(n_frames * m);
    for (std::size_t f = 0; f < n_frames; ++f)
        for (std::size_t i = 0; i < m; ++i)
            ds.payload[f * m + i] = 0.25f * float(f);
    ds.set("kind", dataset_kind_name(ds.kind));
    ds.set("train_count", "1");
    return ds;
}

WindowEncoder sum_encoder() {
    return [](const Tensor& w) {
        double acc = 0.0;
        for (double v : w.data) acc += v;
        return Tensor({1, 1}, {acc});
    };
}

}  // namespace

TEST(BoundCheck, InterpolatedWindowBlendsNeighbourFrames) {
    Dataset ds = linear_ramp_dataset(6, 3);
    Tensor w0 = interpolated_window(ds, 0, 2.0, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(w0.data[i], 0.5);       // frame 2
        EXPECT_EQ(w0.data[3 + i], 0.75);  // frame 3
    }
    Tensor wh = interpolated_window(ds, 0, 2.5, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(wh.data[i], 0.625);
        EXPECT_EQ(wh.data[3 + i], 0.875);
    }
    EXPECT_THROW(interpolated_window(ds, 0, -0.5, 1), ContractError);
    EXPECT_THROW(interpolated_window(ds, 0, 4.5, 1), ContractError);  // t_max = 4
}

TEST(BoundCheck, ConstantEncoderGivesZeroOnBothSides) {
    Dataset ds = linear_ramp_dataset(8, 3);
    WindowEncoder constant = [](const Tensor&) { return Tensor::full({1, 2}, 3.5); };
    BoundCheckResult r =
        regularizer_bound_check(constant, ds, 0, 1, {0.0, 2.0, 5.0});
    EXPECT_EQ(r.lhs, 0.0);
    EXPECT_EQ(r.rhs, 0.0);
    EXPECT_TRUE(r.holds);
}

TEST(BoundCheck, LinearPathIsTheEqualityCase) {
    Dataset ds = linear_ramp_dataset(10, 4);
    BoundCheckResult r =
        regularizer_bound_check(sum_encoder(), ds, 0, 1, {0.5, 3.0, 7.5});
    EXPECT_TRUE(r.holds);
    EXPECT_NEAR(r.lhs, r.rhs, 1e-9 * std::max(1.0, r.rhs));
    EXPECT_GT(r.rhs, 0.0);
}

TEST(BoundCheck, SingleSegmentMatchesPenaltyOverLength) {
    Dataset ds = linear_ramp_dataset(10, 4);
    WindowEncoder enc = sum_encoder();
    double t0 = 1.0, t1 = 6.0;
    BoundCheckResult r = regularizer_bound_check(enc, ds, 0, 1, {t0, t1});
    Tensor e0 = enc(interpolated_window(ds, 0, t0, 1));
    Tensor e1 = enc(interpolated_window(ds, 0, t1, 1));
    double d = e0.data[0] - e1.data[0];
    EXPECT_DOUBLE_EQ(r.rhs, d * d / (t1 - t0));
}

TEST(BoundCheck, HoldsForRandomSmoothEncoders) {
    HeatDatasetOptions opt;
    opt.n_sequences = 2;
    opt.n_frames = 24;
    opt.n_x = 12;
    Dataset ds = generate_heat_dataset(5, opt);
    Rng root(41);
    std::size_t tau = 2;
    for (std::size_t draw = 0; draw < 10; ++draw) {
        Rng rng = root.derive("draw", draw);
        MlpSpec spec{{(tau + 1) * ds.frame_numel(), 10, 3}, OutputActivation::None};
        MlpParams mp = init_encoder_decoder(spec, rng);
        for (Tensor& w : mp.weights)
            for (double& v : w.data) v *= 50.0;
        WindowEncoder enc = [&](const Tensor& w) { return mlp_eval(spec, mp, w); };
        std::vector<double> part{0.0, rng.uniform(2.0, 8.0), rng.uniform(10.0, 15.0),
                                 rng.uniform(16.0, 21.0)};
        BoundCheckResult r = regularizer_bound_check(enc, ds, draw % 2, tau, part);
        EXPECT_TRUE(r.holds) << "draw " << draw << " lhs=" << r.lhs
                             << " rhs=" << r.rhs;
        EXPECT_GE(r.lhs, r.rhs - 1e-6);
    }
}

TEST(BoundCheck, RejectsDegeneratePartitions) {
    Dataset ds = linear_ramp_dataset(8, 3);
    WindowEncoder enc = sum_encoder();
    EXPECT_THROW(regularizer_bound_check(enc, ds, 0, 1, {2.0}), ContractError);
    EXPECT_THROW(regularizer_bound_check(enc, ds, 0, 1, {2.0, 2.0}), ContractError);
    EXPECT_THROW(regularizer_bound_check(enc, ds, 0, 1, {3.0, 1.0}), ContractError);
    EXPECT_THROW(regularizer_bound_check(enc, ds, 0, 1, {0.0, 9.5}), ContractError);
    EXPECT_THROW(regularizer_bound_check(enc, ds, 9, 1, {0.0, 2.0}), ContractError);
    EXPECT_THROW(regularizer_bound_check(enc, ds, 0, 1, {0.0, 2.0}, 0), ContractError);
}

// ---------------------------------------------------------------------------
// Flow round trip

namespace {

// Dense p x p matrix exponential by plain Taylor series; the test matrices
// have small norms so 30 terms reach machine precision.
std::vector<double> matrix_exponential(const std::vector<double>& a, std::size_t p) {
    std::vector<double> result(p * p, 0.0), term(p * p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        result[i * p + i] = 1.0;
        term[i * p + i] = 1.0;
    }
    for (int k = 1; k <= 30; ++k) {
        std::vector<double> next(p * p, 0.0);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < p; ++l)
                    acc += term[i * p + l] * a[l * p + j];
                next[i * p + j] = acc / double(k);
            }
        term = next;
        for (std::size_t i = 0; i < p * p; ++i) result[i] += term[i];
    }
    return result;
}

VectorField linear_field(const std::vector<double>& a, std::size_t p) {
    return [a, p](const Tensor& x) {
        Tensor out({1, p});
        for (std::size_t j = 0; j < p; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < p; ++i) acc += x.data[i] * a[i * p + j];
            out.data[j] = acc;
        }
        return out;
    };
}

}  // namespace

TEST(Flow, ZeroFieldRoundTripsExactly) {
    VectorField zero = [](const Tensor& x) { return Tensor::zeros(x.shape); };
    Tensor s({1, 4}, {0.3, -1.2, 0.0, 5.5});
    EXPECT_EQ(flow_roundtrip_check(zero, {s}, 1.0, 0.01), 0.0);
    EXPECT_TRUE(bit_equal(flow_integrate(zero, s, 1.0, 0.01), s));
}

TEST(Flow, LinearFieldMatchesMatrixExponentialOracle) {
    std::size_t p = 3;
    Rng rng(51);
    std::vector<double> a(p * p);
    for (double& v : a) v = rng.uniform(-0.5, 0.5);
    VectorField f = linear_field(a, p);
    Tensor x0({1, p}, {1.0, -0.5, 0.25});
    double t = 1.0;

    std::vector<double> at(p * p);
    for (std::size_t i = 0; i < p * p; ++i) at[i] = a[i] * t;
    std::vector<double> e = matrix_exponential(at, p);
    Tensor expected({1, p});
    for (std::size_t j = 0; j < p; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < p; ++i) acc += x0.data[i] * e[i * p + j];
        expected.data[j] = acc;
    }
    Tensor got = flow_integrate(f, x0, t, 1e-3);
    EXPECT_LT(max_abs_diff(got, expected), 1e-8);
    EXPECT_LT(flow_roundtrip_check(f, {x0}, t, 1e-3), 1e-8);
}

TEST(Flow, RoundTripErrorScalesAtLeastFourthOrder) {
    // The backward pass's leading truncation term cancels the forward one
    // (the order-5 elementary differentials are odd in f), so the round trip
    // typically superconverges to ~O(h^5); the contract is "at least O(h^4)".
    std::size_t p = 3;
    Rng rng(52);
    std::vector<double> a(p * p);
    for (double& v : a) v = rng.uniform(-2.0, 2.0);
    VectorField f = linear_field(a, p);
    std::vector<Tensor> samples{Tensor({1, p}, {1.0, 0.5, -0.75})};
    double e1 = flow_roundtrip_check(f, samples, 1.0, 0.1);
    double e2 = flow_roundtrip_check(f, samples, 1.0, 0.05);
    double e3 = flow_roundtrip_check(f, samples, 1.0, 0.025);
    double s1 = std::log(e1 / e2) / std::log(2.0);
    double s2 = std::log(e2 / e3) / std::log(2.0);
    EXPECT_GE(0.5 * (s1 + s2), 3.5) << "e1=" << e1 << " e2=" << e2 << " e3=" << e3;
    EXPECT_LE(0.5 * (s1 + s2), 6.5) << "e1=" << e1 << " e2=" << e2 << " e3=" << e3;
}

TEST(Flow, ResidualFieldRoundTripIsTiny) {
    ModelConfig cfg;
    cfg.m = 4;
    cfg.d = 0;
    cfg.p = 6;
    cfg.enc_hidden = {8};
    cfg.dec_hidden = {8};
    cfg.dyn_blocks = 2;
    cfg.dyn_hidden = 16;
    cfg.dyn_gain = 0.71;
    Rng root(53);
    ModelParams params = init_model(cfg, root);
    VectorField f = residual_vector_field(params, cfg);
    Rng sampler = root.derive("samples");
    std::vector<Tensor> samples;
    for (int i = 0; i < 3; ++i) {
        Tensor s({1, cfg.p});
        for (double& v : s.data) v = sampler.normal();
        samples.push_back(std::move(s));
    }
    EXPECT_LT(flow_roundtrip_check(f, samples, 0.5, 1e-3), 1e-6);
}

TEST(Flow, BlowUpRaisesNumericError) {
    VectorField cubic = [](const Tensor& x) {
        Tensor out = x;
        double n2 = 0.0;
        for (double v : x.data) n2 += v * v;
        for (double& v : out.data) v *= (1.0 + n2);
        return out;
    };
    Tensor s({1, 2}, {2.0, 2.0});
    EXPECT_THROW(flow_roundtrip_check(cubic, {s}, 5.0, 0.01), NumericError);
}

TEST(Flow, VectorFieldReadingRejectsGruDynamics) {
    ModelConfig cfg;
    cfg.m = 4;
    cfg.d = 0;
    cfg.p = 6;
    cfg.enc_hidden = {8};
    cfg.dec_hidden = {8};
    cfg.dynamics = DynamicsKind::Gru;
    Rng root(54);
    ModelParams params = init_model(cfg, root);
    EXPECT_THROW(residual_vector_field(params, cfg), ContractError);
}

// ---------------------------------------------------------------------------
// Verification suites

TEST(VerifySuites, HeatSuitePasses) {
    VerifyReport rep = verify_heat();
    EXPECT_TRUE(rep.all_pass()) << rep.text();
    EXPECT_NE(rep.text().find("heat-interior-residual"), std::string::npos);
    EXPECT_NE(rep.text().find("suite heat: PASS"), std::string::npos);
}

TEST(VerifySuites, BoundSuitePasses) {
    VerifyReport rep = verify_bound(101);
    EXPECT_TRUE(rep.all_pass()) << rep.text();
    EXPECT_EQ(rep.lines.size(), 3u);  // partition sizes 1, 2, 4
}

TEST(VerifySuites, FlowSuitePasses) {
    VerifyReport rep = verify_flow(102);
    EXPECT_TRUE(rep.all_pass()) << rep.text();
}

TEST(VerifySuites, WaveSuitePasses) {
    VerifyReport rep = verify_wave();
    EXPECT_TRUE(rep.all_pass()) << rep.text();
}

TEST(VerifySuites, FailingLineRendersAsFail) {
    VerifyReport rep;
    rep.suite = "demo";
    rep.lines.push_back(check_upper("too-big", 2.0, 1.0));
    EXPECT_FALSE(rep.all_pass());
    EXPECT_NE(rep.text().find("FAIL  too-big"), std::string::npos);
    EXPECT_NE(rep.text().find("suite demo: FAIL"), std::string::npos);
    VerifyReport empty;
    empty.suite = "empty";
    EXPECT_FALSE(empty.all_pass());
}
