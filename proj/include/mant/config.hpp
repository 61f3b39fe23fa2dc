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

#pragma once

#include "mant/channel.hpp"
#include "mant/e2e.hpp"
#include "mant/transformer.hpp"

#include <json.hpp>

#include <string>

namespace mant {

enum class Regime { kInstantaneous, kStatistical };

inline std::string regime_name(Regime r) {
    return r == Regime::kInstantaneous ? "instantaneous" : "statistical";
}
inline Regime regime_from_name(const std::string& s) {
    if (s == "instantaneous")
        return Regime::kInstantaneous;
    if (s == "statistical")
        return Regime::kStatistical;
    throw std::invalid_argument("unknown regime: " + s);
}

/// Training hyperparameters. Defaults follow the reference operating point
/// (1000 epochs, batch 32, lr 1e-4, annealing from 1); desk-scale configs
/// override them.
struct TrainConfig {
    int epochs = 1000;
    int batch_size = 32;
    double lr0 = 1e-4;
    double omega0 = 1.0;
    double beta_dist = 1.0;
    int alternate_period = 2;
    bool feasibility = false;
    std::uint64_t seed = 1;
};

/// Everything one experiment needs, parsed from a JSON config file with
/// strict schema validation. Units: meters for lengths, watts for powers.
struct ExperimentConfig {
    Scenario scenario;

    // dataset block
    std::uint64_t num_samples = 2000;
    double val_fraction = 0.1;
    Regime regime = Regime::kInstantaneous;
    int episode_len = 8;
    std::string dataset_path = "out/data.mantds";

    // model block
    int feedback_bits = 10;
    int pilot_len = 8;
    double tau = 1.0;
    ModelSizes sizes;
    EncoderConfig stat_encoder;
    int history_slots = 8;

    // train block
    TrainConfig train;
    std::string checkpoint_path = "out/model.ckpt";
    std::string metrics_path = "out/metrics.csv";

    // baseline block
    std::string estimator = "lmmse";
    long quant_bits_total = 64;
    int gradient_steps = 40;
    int gradient_restarts = 4;

    // sweep block (optional)
    std::string sweep_name;
    std::vector<double> sweep_values;

    std::string out_dir = "out";
};

nlohmann::json scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Load a config file, apply env overrides (MANT_SEED, MANT_OUT_DIR), and
/// validate. Unknown keys are rejected.
ExperimentConfig load_config(const std::string& path);

/// Apply one sweep point to a copy of the config (variable name from the
/// sweep block: feedback_bits, region_size, paths, num_users).
ExperimentConfig apply_sweep_value(const ExperimentConfig& cfg, const std::string& name,
                                   double value);

}  // namespace mant
