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

#include "mant/evaluate.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace mant;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

ExperimentConfig load_config_checked(const std::string& path, std::uint64_t seed_override,
                                     bool seed_given) {
    if (!fs::exists(path))
        throw CLI::FileError::Missing(path);
    ExperimentConfig cfg = load_config(path);
    if (seed_given) {
        cfg.train.seed = seed_override;
        cfg.scenario.rng_seed = seed_override;
    }
    return cfg;
}

void echo_config(const ExperimentConfig& cfg) {
    std::cout << "effective config:\n" << config_to_json(cfg).dump(2) << "\n";
}

int cmd_gen_data(const std::string& config_path, std::uint64_t seed, bool seed_given) {
    const ExperimentConfig cfg = load_config_checked(config_path, seed, seed_given);
    echo_config(cfg);
    generate_dataset(cfg.scenario, cfg.num_samples, cfg.regime, cfg.episode_len,
                     cfg.dataset_path);
    const Dataset ds = Dataset::load(cfg.dataset_path);
    std::cout << "wrote " << cfg.dataset_path << ": " << ds.size() << " samples, G="
              << ds.header().grid_points << ", M=" << ds.header().meas_points
              << ", K=" << ds.header().num_users << ", regime=" << regime_name(ds.header().regime)
              << "\n";
    return kExitOk;
}

/// Train one point: dataset (regenerated), model, loop, best-checkpoint eval.
MethodReport train_point(const ExperimentConfig& cfg, TrainOutcome* outcome_out) {
    generate_dataset(cfg.scenario, cfg.num_samples, cfg.regime, cfg.episode_len,
                     cfg.dataset_path);
    const Dataset ds = Dataset::load(cfg.dataset_path);
    MethodReport learned;
    if (cfg.regime == Regime::kInstantaneous) {
        auto model = build_e2e_model(cfg);
        TrainOutcome out =
            run_training(*model, ds, cfg, cfg.checkpoint_path, cfg.metrics_path);
        load_checkpoint(cfg.checkpoint_path, model->store());
        const auto val = split_train_val(ds, cfg.val_fraction).second;
        learned = evaluate_e2e(*model, val, cfg);
        if (outcome_out != nullptr)
            *outcome_out = out;
    } else {
        auto model = build_stat_model(cfg);
        TrainOutcome out =
            run_training(*model, ds, cfg, cfg.checkpoint_path, cfg.metrics_path);
        load_checkpoint(cfg.checkpoint_path, model->store());
        const auto val = split_train_val_aligned(ds, cfg.val_fraction, cfg.episode_len).second;
        learned = evaluate_stat(*model, val, cfg);
        if (outcome_out != nullptr)
            *outcome_out = out;
    }
    return learned;
}

int cmd_train(const std::string& config_path, std::uint64_t seed, bool seed_given,
              const std::string& report_path) {
    const ExperimentConfig cfg = load_config_checked(config_path, seed, seed_given);
    echo_config(cfg);

    if (!cfg.sweep_name.empty()) {
        std::vector<CsvTable> tables;
        for (const double value : cfg.sweep_values) {
            const ExperimentConfig point = apply_sweep_value(cfg, cfg.sweep_name, value);
            std::cout << "sweep " << cfg.sweep_name << " = " << value << "\n";
            TrainOutcome out;
            const MethodReport learned = train_point(point, &out);
            std::cout << "  best validation rate " << out.best_val << " (epoch "
                      << out.best_epoch << ")\n";
            tables.push_back(report_table({learned}, point, cfg.sweep_name, value));
        }
        CsvTable merged = tables.front();
        for (std::size_t i = 1; i < tables.size(); ++i)
            for (const auto& row : tables[i].rows)
                merged.rows.push_back(row);
        const std::string out_path = report_path.empty()
                                         ? cfg.out_dir + "/sweep_" + cfg.sweep_name + ".csv"
                                         : report_path;
        write_csv(out_path, merged);
        std::cout << "sweep report: " << out_path << "\n";
        return kExitOk;
    }

    TrainOutcome out;
    const MethodReport learned = train_point(cfg, &out);
    std::cout << "best validation rate " << out.best_val << " at epoch " << out.best_epoch
              << "\n";
    std::cout << "checkpoint: " << cfg.checkpoint_path << "\nmetrics: " << cfg.metrics_path
              << "\n";
    std::cout << "constraint exactness: max pilot column dev " << out.max_pilot_dev
              << ", max precoder power dev " << out.max_power_dev << "\n";
    if (!report_path.empty())
        write_csv(report_path, report_table({learned}, cfg));
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_path,
             bool ablation_random_bits, const std::string& out_path,
             const std::string& traces_path) {
    if (!fs::exists(checkpoint_path))
        throw CLI::FileError::Missing(checkpoint_path);
    const nlohmann::json meta = read_checkpoint_meta(checkpoint_path);
    ExperimentConfig cfg = config_from_json(meta.at("config"));
    const std::string kind = meta.at("kind").get<std::string>();
    const Dataset ds = Dataset::load(dataset_path.empty() ? cfg.dataset_path : dataset_path);

    std::vector<MethodReport> reports;
    if (kind == "e2e") {
        auto model = build_e2e_model(cfg);
        load_checkpoint(checkpoint_path, model->store());
        const auto val = split_train_val(ds, cfg.val_fraction).second;
        std::vector<RVec<double>> rates;
        std::vector<Eigen::Matrix<double, Eigen::Dynamic, 2>> positions;
        reports.push_back(evaluate_e2e(*model, val, cfg, ablation_random_bits,
                                       traces_path.empty() ? nullptr : &rates,
                                       traces_path.empty() ? nullptr : &positions));
        if (!traces_path.empty()) {
            CsvTable t;
            t.columns = {"sample", "sum_rate"};
            for (int k = 0; k < cfg.scenario.num_users; ++k)
                t.columns.push_back("rate_u" + std::to_string(k));
            for (int i = 0; i < cfg.scenario.num_mas; ++i) {
                t.columns.push_back("pos" + std::to_string(i) + "_x");
                t.columns.push_back("pos" + std::to_string(i) + "_z");
            }
            for (std::size_t i = 0; i < rates.size(); ++i) {
                std::vector<std::string> row{std::to_string(i), fmt_double(rates[i].sum())};
                for (Eigen::Index k = 0; k < rates[i].size(); ++k)
                    row.push_back(fmt_double(rates[i](k)));
                for (Eigen::Index r = 0; r < positions[i].rows(); ++r) {
                    row.push_back(fmt_double(positions[i](r, 0)));
                    row.push_back(fmt_double(positions[i](r, 1)));
                }
                t.rows.push_back(std::move(row));
            }
            write_csv(traces_path, t);
            std::cout << "traces: " << traces_path << "\n";
        }
        std::cout << "stored checkpoint val rate: "
                  << fmt_double(meta.at("val_rate").get<double>()) << "\n";
        std::cout << "evaluated mean sum rate:    " << fmt_double(reports.back().mean_sum_rate)
                  << (ablation_random_bits ? "  (ablation: random feedback bits)" : "") << "\n";
    } else {
        auto model = build_stat_model(cfg);
        load_checkpoint(checkpoint_path, model->store());
        const auto val = split_train_val_aligned(ds, cfg.val_fraction, cfg.episode_len).second;
        reports.push_back(evaluate_stat(*model, val, cfg));
        std::cout << "evaluated mean per-slot sum rate: " << reports.back().mean_sum_rate << "\n";
    }
    if (!out_path.empty()) {
        write_csv(out_path, report_table(reports, cfg));
        std::cout << "report: " << out_path << "\n";
    }
    return kExitOk;
}

int cmd_baseline(const std::string& method, const std::string& config_path, std::uint64_t seed,
                 bool seed_given, const std::string& out_path) {
    static const std::vector<std::string> known = {
        "fixed-zf", "fixed-zf-perfect", "zf-perfect", "as-zf",
        "gradient-zf", "gradient-zf-perfect", "quantized-zf", "random-zf"};
    if (std::find(known.begin(), known.end(), method) == known.end()) {
        std::cerr << "unknown method '" << method << "'; options:";
        for (const auto& m : known)
            std::cerr << " " << m;
        std::cerr << "\n";
        return kExitUsage;
    }
    const ExperimentConfig cfg = load_config_checked(config_path, seed, seed_given);
    if (!fs::exists(cfg.dataset_path))
        generate_dataset(cfg.scenario, cfg.num_samples, cfg.regime, cfg.episode_len,
                         cfg.dataset_path);
    const Dataset ds = Dataset::load(cfg.dataset_path);
    const auto [train_view, val_view] =
        cfg.regime == Regime::kStatistical
            ? split_train_val_aligned(ds, cfg.val_fraction, cfg.episode_len)
            : split_train_val(ds, cfg.val_fraction);
    const Estimator kind = (cfg.estimator == "ls") ? Estimator::kLS : Estimator::kLMMSE;

    MethodReport rep;
    if (method == "fixed-zf")
        rep = run_fixed_zf(ds, val_view, cfg, false, kind, &train_view);
    else if (method == "fixed-zf-perfect" || method == "zf-perfect")
        rep = run_fixed_zf(ds, val_view, cfg, true);
    else if (method == "as-zf")
        rep = run_as_zf(ds, val_view, cfg, kind, &train_view);
    else if (method == "gradient-zf")
        rep = run_gradient_zf(ds, val_view, cfg, false);
    else if (method == "gradient-zf-perfect")
        rep = run_gradient_zf(ds, val_view, cfg, true);
    else if (method == "quantized-zf")
        rep = run_quantized_zf(ds, val_view, cfg, kind, &train_view, cfg.quant_bits_total);
    else if (method == "random-zf")
        rep = run_random_zf(ds, val_view, cfg);

    std::cout << method << ": mean sum rate " << rep.mean_sum_rate << " over " << rep.samples
              << " samples (zf residual " << rep.zf_residual << ")\n";
    write_csv(out_path.empty() ? cfg.out_dir + "/baseline_" + method + ".csv" : out_path,
              report_table({rep}, cfg));
    return kExitOk;
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    const fs::path p(pattern);
    const fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    const std::string file_pat = p.filename().string();
    // '*' wildcards in the filename component only
    const auto matches = [&](const std::string& name) {
        std::size_t pi = 0, ni = 0, star = std::string::npos, mark = 0;
        while (ni < name.size()) {
            if (pi < file_pat.size() && (file_pat[pi] == name[ni])) {
                ++pi;
                ++ni;
            } else if (pi < file_pat.size() && file_pat[pi] == '*') {
                star = pi++;
                mark = ni;
            } else if (star != std::string::npos) {
                pi = star + 1;
                ni = ++mark;
            } else {
                return false;
            }
        }
        while (pi < file_pat.size() && file_pat[pi] == '*')
            ++pi;
        return pi == file_pat.size();
    };
    std::vector<std::string> out;
    if (!fs::exists(dir))
        return out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && matches(entry.path().filename().string()))
            out.push_back(entry.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

int cmd_report(const std::string& pattern, const std::string& out_path) {
    const auto files = expand_glob(pattern);
    if (files.empty()) {
        std::cerr << "report: no files match '" << pattern << "'\n";
        return kExitData;
    }
    std::vector<CsvTable> tables;
    for (const auto& f : files)
        tables.push_back(read_csv(f));
    write_csv(out_path, merge_reports(tables));
    std::cout << "merged " << files.size() << " reports into " << out_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"movable-antenna downlink simulator and learned pipeline"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, dataset_path, method, pattern;
    std::string out_path, traces_path, report_path;
    std::uint64_t seed = 0;
    bool ablation = false;

    auto* gen = app.add_subcommand("gen-data", "generate a channel dataset");
    gen->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    auto* gen_seed = gen->add_option("--seed", seed, "override scenario/train seed");

    auto* train = app.add_subcommand("train", "train the learned pipeline (honors sweep block)");
    train->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    auto* train_seed = train->add_option("--seed", seed, "override scenario/train seed");
    train->add_option("--report", report_path, "also write an evaluation report CSV");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--dataset", dataset_path, "dataset file (default: config's path)");
    eval->add_flag("--ablation-random-bits", ablation, "replace feedback with random bits");
    eval->add_option("--out", out_path, "report CSV path");
    eval->add_option("--dump-traces", traces_path, "per-sample trace CSV path");

    auto* base = app.add_subcommand("baseline", "run a classical baseline");
    base->add_option("-m,--method", method, "baseline method")->required();
    base->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    auto* base_seed = base->add_option("--seed", seed, "override scenario/train seed");
    base->add_option("--out", out_path, "report CSV path");

    auto* report = app.add_subcommand("report", "merge evaluation CSVs for sweep figures");
    report->add_option("-g,--glob", pattern, "input pattern, e.g. out/*.csv")->required();
    report->add_option("-o,--out", out_path, "merged CSV path")->required();

    try {
        app.parse(argc, argv);
        if (gen->parsed())
            return cmd_gen_data(config_path, seed, !gen_seed->empty());
        if (train->parsed())
            return cmd_train(config_path, seed, !train_seed->empty(), report_path);
        if (eval->parsed())
            return cmd_eval(checkpoint_path, dataset_path, ablation, out_path, traces_path);
        if (base->parsed())
            return cmd_baseline(method, config_path, seed, !base_seed->empty(), out_path);
        if (report->parsed())
            return cmd_report(pattern, out_path);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
