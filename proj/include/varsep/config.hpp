#pragma once

#include <string>
#include <utility>
#include <vector>

#include "losses.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "text.hpp"

namespace varsep {

// ---------------------------------------------------------------------------
// Flat key=value experiment configuration. Unknown keys are rejected; every
// run writes the fully resolved form next to its outputs so a run can be
// reproduced from that file alone.

struct ExperimentConfig {
    // Data and placement
    std::string dataset;        // path to an SVSF dataset file
    std::string out = "out";    // output directory
    std::uint64_t seed = 0;

    // Model geometry
    std::size_t obs_dim = 0;    // m; 0 means "infer from the dataset"
    std::size_t static_dim = 32;
    std::size_t dynamic_dim = 32;
    std::size_t cond_frames = 5;   // tau + 1
    std::size_t seq_frames = 25;   // nu + 1 (training chunk length)
    Combination combination = Combination::ElementwiseProduct;
    std::vector<std::size_t> enc_hidden = {2400, 150};
    std::vector<std::size_t> dec_hidden = {2400, 150};
    DynamicsKind dynamics = DynamicsKind::Residual;
    std::size_t dyn_blocks = 3;
    std::size_t dyn_hidden = 512;
    double dyn_gain = 0.71;

    // Objective; lambda_reg_t < 0 means "use the 0.5 p 1e-3 default"
    double lambda_pred = 45.0;
    double lambda_ae = 1.0;
    double lambda_reg_s = 45.0;
    double lambda_reg_t = -1.0;

    // Optimizer and schedule
    double lr = 4e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
    std::vector<std::pair<std::size_t, double>> schedule;  // (epoch, multiplier)
    std::size_t epochs = 250;
    std::size_t batch = 128;
    std::size_t checkpoint_every = 0;  // 0: final checkpoint only

    // Evaluation
    std::vector<std::size_t> horizons = {40};
    std::size_t workers = 1;

    std::size_t tau() const { return cond_frames - 1; }
    std::size_t nu() const { return seq_frames - 1; }

    void validate() const {
        if (cond_frames < 1) throw ContractError("config: cond_frames must be >= 1");
        if (seq_frames < cond_frames)
            throw ContractError("config: seq_frames must be >= cond_frames");
        if (batch < 1) throw ContractError("config: batch must be >= 1");
        if (workers < 1) throw ContractError("config: workers must be >= 1");
        if (dynamic_dim < 1) throw ContractError("config: dynamic_dim must be >= 1");
        if (lambda_pred < 0 || lambda_ae < 0 || lambda_reg_s < 0)
            throw ContractError("config: loss weights must be nonnegative");
        for (auto [epoch, mult] : schedule)
            if (epoch < 1 || mult <= 0.0)
                throw ContractError("config: schedule entries need epoch >= 1 and "
                                    "positive multiplier");
        if (horizons.empty()) throw ContractError("config: horizons must be nonempty");
    }

    // Fills inferred fields. Called once the dataset geometry is known.
    void resolve(std::size_t dataset_obs_dim) {
        if (obs_dim == 0) obs_dim = dataset_obs_dim;
        if (obs_dim != dataset_obs_dim)
            throw ContractError("config: obs_dim " + std::to_string(obs_dim) +
                                " does not match dataset frame size " +
                                std::to_string(dataset_obs_dim));
        if (lambda_reg_t < 0.0) lambda_reg_t = LossWeights::default_reg_t(dynamic_dim);
        validate();
    }

    ModelConfig model_config() const {
        ModelConfig m;
        m.m = obs_dim;
        m.d = static_dim;
        m.p = dynamic_dim;
        m.tau = tau();
        m.combination = combination;
        m.enc_hidden = enc_hidden;
        m.dec_hidden = dec_hidden;
        m.dynamics = dynamics;
        m.dyn_blocks = dyn_blocks;
        m.dyn_hidden = dyn_hidden;
        m.dyn_gain = dyn_gain;
        return m;
    }

    LossWeights loss_weights() const {
        if (lambda_reg_t < 0.0)
            throw ContractError("config: lambda_reg_t unresolved; call resolve()");
        return LossWeights{lambda_pred, lambda_ae, lambda_reg_s, lambda_reg_t};
    }

    AdamConfig adam_config() const { return AdamConfig{lr, beta1, beta2, epsilon}; }
};

namespace detail {

inline std::vector<std::size_t> parse_size_list(const std::string& s,
                                                const std::string& what) {
    std::vector<std::size_t> out;
    if (trim(s).empty()) return out;
    for (const std::string& part : split(s, ',')) {
        long long v = parse_int(trim(part), what);
        if (v < 0) throw ContractError(what + ": negative entry " + part);
        out.push_back(std::size_t(v));
    }
    return out;
}

inline std::string fmt_size_list(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

inline std::vector<std::pair<std::size_t, double>> parse_schedule(
    const std::string& s) {
    std::vector<std::pair<std::size_t, double>> out;
    if (trim(s).empty()) return out;
    for (const std::string& part : split(s, ',')) {
        std::vector<std::string> kv = split(part, ':');
        if (kv.size() != 2)
            throw ContractError("schedule: entry '" + part +
                                "' is not epoch:multiplier");
        out.emplace_back(std::size_t(parse_int(trim(kv[0]), "schedule epoch")),
                         parse_double(trim(kv[1]), "schedule multiplier"));
    }
    return out;
}

inline std::string fmt_schedule(
    const std::vector<std::pair<std::size_t, double>>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i].first) + ":" + fmt_double(v[i].second);
    }
    return s;
}

}  // namespace detail

inline Combination parse_combination(const std::string& s) {
    if (s == "concat") return Combination::Concatenate;
    if (s == "product") return Combination::ElementwiseProduct;
    throw ContractError("config: combination must be concat|product, got '" + s + "'");
}

inline DynamicsKind parse_dynamics_kind(const std::string& s) {
    if (s == "residual") return DynamicsKind::Residual;
    if (s == "gru") return DynamicsKind::Gru;
    throw ContractError("config: dynamics must be residual|gru, got '" + s + "'");
}

// Parses `key=value` lines. Blank lines and lines starting with '#' are
// skipped. Unknown and duplicate keys are errors.
inline ExperimentConfig parse_experiment_config(const std::string& text) {
    ExperimentConfig cfg;
    std::vector<std::string> seen;
    for (const std::string& raw : split(text, '\n')) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ContractError("config: line '" + line + "' is not key=value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        for (const std::string& s : seen)
            if (s == key) throw ContractError("config: duplicate key '" + key + "'");
        seen.push_back(key);

        if (key == "dataset") cfg.dataset = value;
        else if (key == "out") cfg.out = value;
        else if (key == "seed") cfg.seed = std::uint64_t(parse_int(value, key));
        else if (key == "obs_dim") cfg.obs_dim = std::size_t(parse_int(value, key));
        else if (key == "static_dim") cfg.static_dim = std::size_t(parse_int(value, key));
        else if (key == "dynamic_dim") cfg.dynamic_dim = std::size_t(parse_int(value, key));
        else if (key == "cond_frames") cfg.cond_frames = std::size_t(parse_int(value, key));
        else if (key == "seq_frames") cfg.seq_frames = std::size_t(parse_int(value, key));
        else if (key == "combination") cfg.combination = parse_combination(value);
        else if (key == "enc_hidden") cfg.enc_hidden = detail::parse_size_list(value, key);
        else if (key == "dec_hidden") cfg.dec_hidden = detail::parse_size_list(value, key);
        else if (key == "dynamics") cfg.dynamics = parse_dynamics_kind(value);
        else if (key == "dyn_blocks") cfg.dyn_blocks = std::size_t(parse_int(value, key));
        else if (key == "dyn_hidden") cfg.dyn_hidden = std::size_t(parse_int(value, key));
        else if (key == "dyn_gain") cfg.dyn_gain = parse_double(value, key);
        else if (key == "lambda_pred") cfg.lambda_pred = parse_double(value, key);
        else if (key == "lambda_ae") cfg.lambda_ae = parse_double(value, key);
        else if (key == "lambda_reg_s") cfg.lambda_reg_s = parse_double(value, key);
        else if (key == "lambda_reg_t") cfg.lambda_reg_t = parse_double(value, key);
        else if (key == "lr") cfg.lr = parse_double(value, key);
        else if (key == "beta1") cfg.beta1 = parse_double(value, key);
        else if (key == "beta2") cfg.beta2 = parse_double(value, key);
        else if (key == "epsilon") cfg.epsilon = parse_double(value, key);
        else if (key == "schedule") cfg.schedule = detail::parse_schedule(value);
        else if (key == "epochs") cfg.epochs = std::size_t(parse_int(value, key));
        else if (key == "batch") cfg.batch = std::size_t(parse_int(value, key));
        else if (key == "checkpoint_every")
            cfg.checkpoint_every = std::size_t(parse_int(value, key));
        else if (key == "horizons") cfg.horizons = detail::parse_size_list(value, key);
        else if (key == "workers") cfg.workers = std::size_t(parse_int(value, key));
        else throw ContractError("config: unknown key '" + key + "'");
    }
    return cfg;
}

// Canonical serialization: every key, fixed order, exact float round-trip.
inline std::string serialize_experiment_config(const ExperimentConfig& cfg) {
    std::string s;
    auto put = [&](const std::string& k, const std::string& v) {
        s += k + "=" + v + "\n";
    };
    put("dataset", cfg.dataset);
    put("out", cfg.out);
    put("seed", std::to_string(cfg.seed));
    put("obs_dim", std::to_string(cfg.obs_dim));
    put("static_dim", std::to_string(cfg.static_dim));
    put("dynamic_dim", std::to_string(cfg.dynamic_dim));
    put("cond_frames", std::to_string(cfg.cond_frames));
    put("seq_frames", std::to_string(cfg.seq_frames));
    put("combination", combination_name(cfg.combination));
    put("enc_hidden", detail::fmt_size_list(cfg.enc_hidden));
    put("dec_hidden", detail::fmt_size_list(cfg.dec_hidden));
    put("dynamics", dynamics_kind_name(cfg.dynamics));
    put("dyn_blocks", std::to_string(cfg.dyn_blocks));
    put("dyn_hidden", std::to_string(cfg.dyn_hidden));
    put("dyn_gain", fmt_double(cfg.dyn_gain));
    put("lambda_pred", fmt_double(cfg.lambda_pred));
    put("lambda_ae", fmt_double(cfg.lambda_ae));
    put("lambda_reg_s", fmt_double(cfg.lambda_reg_s));
    put("lambda_reg_t", fmt_double(cfg.lambda_reg_t));
    put("lr", fmt_double(cfg.lr));
    put("beta1", fmt_double(cfg.beta1));
    put("beta2", fmt_double(cfg.beta2));
    put("epsilon", fmt_double(cfg.epsilon));
    put("schedule", detail::fmt_schedule(cfg.schedule));
    put("epochs", std::to_string(cfg.epochs));
    put("batch", std::to_string(cfg.batch));
    put("checkpoint_every", std::to_string(cfg.checkpoint_every));
    put("horizons", detail::fmt_size_list(cfg.horizons));
    put("workers", std::to_string(cfg.workers));
    return s;
}

}  // namespace varsep
