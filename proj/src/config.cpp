// mant - learned pilot, feedback, and antenna placement for movable-antenna downlink
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "mant/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace mant {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& block) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + block + "." + it.key() + "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key))
        out = j.at(key).get<T>();
}

Eigen::Vector2d interval_from(const json& j) {
    if (!j.is_array() || j.size() != 2)
        throw std::invalid_argument("config: intervals must be [lo, hi]");
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

Eigen::Vector3d vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3)
        throw std::invalid_argument("config: positions must be [x, y, z]");
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

json scenario_to_json(const Scenario& sc) {
    return json{{"region_x", {sc.region_x_m(0), sc.region_x_m(1)}},
                {"region_y", {sc.region_y_m(0), sc.region_y_m(1)}},
                {"region_z", {sc.region_z_m(0), sc.region_z_m(1)}},
                {"bs_position", {sc.bs_position(0), sc.bs_position(1), sc.bs_position(2)}},
                {"wavelength", sc.wavelength},
                {"num_users", sc.num_users},
                {"num_mas", sc.num_mas},
                {"tx_paths", sc.tx_paths},
                {"rx_paths", sc.rx_paths},
                {"rician_factor", sc.rician_factor},
                {"measurement_spacing", sc.measurement_spacing},
                {"grid_spacing", sc.grid_spacing},
                {"region_size_x", sc.region_size_x},
                {"region_size_z", sc.region_size_z},
                {"noise_power", sc.noise_power},
                {"max_power", sc.max_power},
                {"los_path_power", sc.los_path_power},
                {"nlos_entry_power", sc.nlos_entry_power},
                {"seed", sc.rng_seed}};
}

Scenario scenario_from_json(const json& j) {
    static const std::set<std::string> allowed = {
        "region_x",  "region_y",  "region_z",      "bs_position",
        "wavelength", "num_users", "num_mas",       "tx_paths",
        "rx_paths",  "rician_factor", "measurement_spacing", "grid_spacing",
        "region_size_x", "region_size_z", "noise_power", "max_power",
        "los_path_power", "nlos_entry_power", "seed"};
    reject_unknown_keys(j, allowed, "scenario");
    Scenario sc;
    if (j.contains("region_x"))
        sc.region_x_m = interval_from(j.at("region_x"));
    if (j.contains("region_y"))
        sc.region_y_m = interval_from(j.at("region_y"));
    if (j.contains("region_z"))
        sc.region_z_m = interval_from(j.at("region_z"));
    if (j.contains("bs_position"))
        sc.bs_position = vec3_from(j.at("bs_position"));
    get_if(j, "wavelength", sc.wavelength);
    get_if(j, "num_users", sc.num_users);
    get_if(j, "num_mas", sc.num_mas);
    get_if(j, "tx_paths", sc.tx_paths);
    get_if(j, "rx_paths", sc.rx_paths);
    get_if(j, "rician_factor", sc.rician_factor);
    // spacings default to wavelength fractions unless given explicitly
    sc.measurement_spacing = sc.wavelength / 2.0;
    sc.grid_spacing = sc.wavelength / 4.0;
    get_if(j, "measurement_spacing", sc.measurement_spacing);
    get_if(j, "grid_spacing", sc.grid_spacing);
    get_if(j, "region_size_x", sc.region_size_x);
    get_if(j, "region_size_z", sc.region_size_z);
    get_if(j, "noise_power", sc.noise_power);
    get_if(j, "max_power", sc.max_power);
    get_if(j, "los_path_power", sc.los_path_power);
    get_if(j, "nlos_entry_power", sc.nlos_entry_power);
    get_if(j, "seed", sc.rng_seed);
    sc.validate();
    return sc;
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["scenario"] = scenario_to_json(cfg.scenario);
    j["dataset"] = {{"num_samples", cfg.num_samples},
                    {"val_fraction", cfg.val_fraction},
                    {"regime", regime_name(cfg.regime)},
                    {"episode_len", cfg.episode_len},
                    {"path", cfg.dataset_path}};
    j["model"] = {{"feedback_bits", cfg.feedback_bits},
                  {"pilot_len", cfg.pilot_len},
                  {"tau", cfg.tau},
                  {"enc_hidden", cfg.sizes.enc_hidden},
                  {"trunk_channels", cfg.sizes.trunk_channels},
                  {"trunk_fc", cfg.sizes.trunk_fc},
                  {"head_hidden", cfg.sizes.head_hidden},
                  {"stat_d_model", cfg.stat_encoder.d_model},
                  {"stat_heads", cfg.stat_encoder.heads},
                  {"stat_layers", cfg.stat_encoder.layers},
                  {"stat_ff_mult", cfg.stat_encoder.ff_mult},
                  {"stat_positional_encoding", cfg.stat_encoder.positional_encoding},
                  {"history_slots", cfg.history_slots}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"lr0", cfg.train.lr0},
                  {"omega0", cfg.train.omega0},
                  {"beta_dist", cfg.train.beta_dist},
                  {"alternate_period", cfg.train.alternate_period},
                  {"feasibility", cfg.train.feasibility},
                  {"seed", cfg.train.seed},
                  {"checkpoint", cfg.checkpoint_path},
                  {"metrics", cfg.metrics_path}};
    j["baseline"] = {{"estimator", cfg.estimator},
                     {"quant_bits_total", cfg.quant_bits_total},
                     {"gradient_steps", cfg.gradient_steps},
                     {"gradient_restarts", cfg.gradient_restarts}};
    j["output"] = {{"dir", cfg.out_dir}};
    if (!cfg.sweep_name.empty())
        j["sweep"] = {{"name", cfg.sweep_name}, {"values", cfg.sweep_values}};
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    static const std::set<std::string> blocks = {"scenario", "dataset", "model",
                                                 "train",    "baseline", "output", "sweep"};
    reject_unknown_keys(j, blocks, "<root>");
    ExperimentConfig cfg;
    if (j.contains("scenario"))
        cfg.scenario = scenario_from_json(j.at("scenario"));

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        reject_unknown_keys(d, {"num_samples", "val_fraction", "regime", "episode_len", "path"},
                            "dataset");
        get_if(d, "num_samples", cfg.num_samples);
        get_if(d, "val_fraction", cfg.val_fraction);
        if (d.contains("regime"))
            cfg.regime = regime_from_name(d.at("regime").get<std::string>());
        get_if(d, "episode_len", cfg.episode_len);
        get_if(d, "path", cfg.dataset_path);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown_keys(m,
                            {"feedback_bits", "pilot_len", "tau", "enc_hidden", "trunk_channels",
                             "trunk_fc", "head_hidden", "stat_d_model", "stat_heads",
                             "stat_layers", "stat_ff_mult", "stat_positional_encoding",
                             "history_slots"},
                            "model");
        get_if(m, "feedback_bits", cfg.feedback_bits);
        get_if(m, "pilot_len", cfg.pilot_len);
        get_if(m, "tau", cfg.tau);
        get_if(m, "enc_hidden", cfg.sizes.enc_hidden);
        get_if(m, "trunk_channels", cfg.sizes.trunk_channels);
        get_if(m, "trunk_fc", cfg.sizes.trunk_fc);
        get_if(m, "head_hidden", cfg.sizes.head_hidden);
        get_if(m, "stat_d_model", cfg.stat_encoder.d_model);
        get_if(m, "stat_heads", cfg.stat_encoder.heads);
        get_if(m, "stat_layers", cfg.stat_encoder.layers);
        get_if(m, "stat_ff_mult", cfg.stat_encoder.ff_mult);
        get_if(m, "stat_positional_encoding", cfg.stat_encoder.positional_encoding);
        get_if(m, "history_slots", cfg.history_slots);
        if (cfg.sizes.enc_hidden.size() != 2)
            throw std::invalid_argument("config: enc_hidden must list two hidden sizes");
        if (cfg.sizes.trunk_channels.size() != 3)
            throw std::invalid_argument("config: trunk_channels must list three channel counts");
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown_keys(t,
                            {"epochs", "batch_size", "lr0", "omega0", "beta_dist",
                             "alternate_period", "feasibility", "seed", "checkpoint", "metrics"},
                            "train");
        get_if(t, "epochs", cfg.train.epochs);
        get_if(t, "batch_size", cfg.train.batch_size);
        get_if(t, "lr0", cfg.train.lr0);
        get_if(t, "omega0", cfg.train.omega0);
        get_if(t, "beta_dist", cfg.train.beta_dist);
        get_if(t, "alternate_period", cfg.train.alternate_period);
        get_if(t, "feasibility", cfg.train.feasibility);
        get_if(t, "seed", cfg.train.seed);
        get_if(t, "checkpoint", cfg.checkpoint_path);
        get_if(t, "metrics", cfg.metrics_path);
        if (cfg.train.epochs < 1)
            throw std::invalid_argument("config: train.epochs must be >= 1");
    }
    if (j.contains("baseline")) {
        const json& b = j.at("baseline");
        reject_unknown_keys(
            b, {"estimator", "quant_bits_total", "gradient_steps", "gradient_restarts"},
            "baseline");
        get_if(b, "estimator", cfg.estimator);
        get_if(b, "quant_bits_total", cfg.quant_bits_total);
        get_if(b, "gradient_steps", cfg.gradient_steps);
        get_if(b, "gradient_restarts", cfg.gradient_restarts);
        if (cfg.estimator != "ls" && cfg.estimator != "lmmse")
            throw std::invalid_argument("config: baseline.estimator must be 'ls' or 'lmmse'");
    }
    if (j.contains("output")) {
        const json& o = j.at("output");
        reject_unknown_keys(o, {"dir"}, "output");
        get_if(o, "dir", cfg.out_dir);
    }
    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        reject_unknown_keys(s, {"name", "values"}, "sweep");
        get_if(s, "name", cfg.sweep_name);
        get_if(s, "values", cfg.sweep_values);
    }
    if (cfg.val_fraction < 0.0 || cfg.val_fraction >= 1.0)
        throw std::invalid_argument("config: dataset.val_fraction must be in [0, 1)");
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument("config: parse error in " + path + ": " + e.what());
    }
    ExperimentConfig cfg = config_from_json(j);
    if (const char* seed_env = std::getenv("MANT_SEED")) {
        const std::uint64_t s = std::strtoull(seed_env, nullptr, 10);
        cfg.train.seed = s;
        cfg.scenario.rng_seed = s;
    }
    if (const char* out_env = std::getenv("MANT_OUT_DIR"))
        cfg.out_dir = out_env;
    return cfg;
}

ExperimentConfig apply_sweep_value(const ExperimentConfig& cfg, const std::string& name,
                                   double value) {
    ExperimentConfig out = cfg;
    if (name == "feedback_bits") {
        out.feedback_bits = static_cast<int>(value);
    } else if (name == "region_size") {
        out.scenario.region_size_x = value;
    } else if (name == "paths") {
        out.scenario.tx_paths = static_cast<int>(value);
        out.scenario.rx_paths = static_cast<int>(value);
    } else if (name == "num_users") {
        out.scenario.num_users = static_cast<int>(value);
    } else {
        throw std::invalid_argument("sweep: unknown variable '" + name +
                                    "' (feedback_bits, region_size, paths, num_users)");
    }
    // keep per-point outputs distinct
    const std::string tag = "_" + name + "_" + std::to_string(value);
    out.dataset_path = cfg.dataset_path + tag;
    out.checkpoint_path = cfg.checkpoint_path + tag;
    out.metrics_path = cfg.metrics_path + tag;
    return out;
}

}  // namespace mant
