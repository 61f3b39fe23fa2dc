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
//
// Training loop: alternating position/precoder epochs, slope annealing and
// learning-rate decay, validation-gated checkpoints, CSV metric logs.

#pragma once

#include "mant/csv.hpp"
#include "mant/dataset.hpp"
#include "mant/twotimescale.hpp"

namespace mant {

/// Per-epoch schedule updates: the annealing slope grows 1% per epoch up to
/// 10, the learning rate decays 1% per epoch down to 1e-6.
inline std::pair<double, double> anneal_update(double omega, double eta) {
    return {std::min(1.01 * omega, 10.0), std::max(0.99 * eta, 1e-6)};
}

/// Epoch mode: 'P' trains everything but the selection parameters, 'J'
/// trains all parameters jointly. Training starts in 'P'.
inline char epoch_mode(int epoch, int alternate_period) {
    if (alternate_period < 1)
        return 'J';
    return ((epoch / alternate_period) % 2 == 0) ? 'P' : 'J';
}

struct EpochRow {
    int epoch = 0;
    char mode = 'P';
    double train_loss = 0.0;
    double train_rate = 0.0;
    double val_rate = 0.0;
    double violation_frac = 0.0;
    double omega = 0.0;
    double eta = 0.0;
};

inline CsvTable metrics_table(const std::vector<EpochRow>& log) {
    CsvTable t;
    t.columns = {"epoch",       "mode",  "train_loss", "train_rate",
                 "val_rate",    "spacing_violation_frac", "omega", "eta"};
    for (const auto& r : log)
        t.rows.push_back({std::to_string(r.epoch), std::string(1, r.mode),
                          fmt_double(r.train_loss), fmt_double(r.train_rate),
                          fmt_double(r.val_rate), fmt_double(r.violation_frac),
                          fmt_double(r.omega), fmt_double(r.eta)});
    return t;
}

struct TrainOutcome {
    std::vector<EpochRow> log;
    double best_val = -std::numeric_limits<double>::infinity();
    double best_val_saved = 0.0;  // recomputed on the float32-rounded weights
    int best_epoch = -1;
    double max_power_dev = 0.0;
    double max_pilot_dev = 0.0;
    bool pilot_support_ok = true;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic, length-prefixed JSON manifest (names, shapes, meta),
// raw little-endian float32 in declaration order (parameters then buffers).
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'N', 'T', 'C', 'K', '1', '\n'};

void save_checkpoint(const std::string& path, const ParamStore<double>& store,
                     const nlohmann::json& meta);
nlohmann::json load_checkpoint(const std::string& path, ParamStore<double>& store);
nlohmann::json read_checkpoint_meta(const std::string& path);

/// Quantize all parameters and buffers to float32 in place (what the
/// checkpoint file will hold).
inline void round_store_to_f32(ParamStore<double>& store) {
    for (auto& p : store.params())
        p.value() = p.value().cast<float>().cast<double>();
    for (auto& b : store.buffers())
        b.second = b.second.cast<float>().cast<double>();
}

inline std::vector<RMat<double>> snapshot_store(const ParamStore<double>& store) {
    std::vector<RMat<double>> snap;
    for (const auto& p : store.params())
        snap.push_back(p.value());
    for (const auto& b : store.buffers())
        snap.push_back(b.second);
    return snap;
}

inline void restore_store(ParamStore<double>& store, const std::vector<RMat<double>>& snap) {
    std::size_t i = 0;
    for (auto& p : store.params())
        p.value() = snap[i++];
    for (auto& b : store.buffers())
        b.second = snap[i++];
}

// ---------------------------------------------------------------------------
// Validation (eval mode, fixed noise streams derived per sample index)
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kValNoiseTag = 7000003ull;

/// Mean validation sum rate of the instantaneous pipeline; deterministic
/// for a fixed seed.
inline double validate_e2e(E2EModel& model, const DataView& val, const ExperimentConfig& cfg) {
    if (val.count == 0)
        throw std::invalid_argument("validate: empty validation set");
    const std::size_t bs = static_cast<std::size_t>(std::max(cfg.train.batch_size, 1));
    double rate_sum = 0.0;
    for (std::size_t start = 0; start < val.count; start += bs) {
        const std::size_t end = std::min(start + bs, val.count);
        std::vector<const ChannelSample<double>*> batch;
        for (std::size_t i = start; i < end; ++i)
            batch.push_back(&val.sample(i));
        Rng noise(mix_seed(cfg.train.seed, kValNoiseTag + start));
        ForwardOptions opt;
        opt.training = false;
        opt.feasibility = cfg.train.feasibility;
        opt.noise_rng = &noise;
        const ForwardResult fr = model.forward(batch, opt);
        rate_sum += fr.rates.value().sum();
    }
    return rate_sum / static_cast<double>(val.count);
}

/// Mean per-slot validation sum rate of the two-timescale pipeline.
inline double validate_stat(StatModel& model, const DataView& val, const ExperimentConfig& cfg) {
    const auto eps = episodes_of(val, cfg.episode_len);
    if (eps.empty())
        throw std::invalid_argument("validate: empty validation set");
    const std::size_t per_batch =
        std::max<std::size_t>(1, static_cast<std::size_t>(cfg.train.batch_size) /
                                     static_cast<std::size_t>(cfg.episode_len));
    double rate_sum = 0.0;
    std::size_t slots = 0;
    for (std::size_t start = 0; start < eps.size(); start += per_batch) {
        const std::size_t end = std::min(start + per_batch, eps.size());
        std::vector<Episode> batch(eps.begin() + static_cast<std::ptrdiff_t>(start),
                                   eps.begin() + static_cast<std::ptrdiff_t>(end));
        Rng noise(mix_seed(cfg.train.seed, kValNoiseTag + start));
        ForwardOptions opt;
        opt.training = false;
        opt.feasibility = cfg.train.feasibility;
        opt.noise_rng = &noise;
        const StatForwardResult fr = model.forward(batch, opt);
        for (const auto& r : fr.slot_rates) {
            rate_sum += r.value().sum();
            slots += static_cast<std::size_t>(r.value().cols());
        }
    }
    return rate_sum / static_cast<double>(slots);
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint64_t kShuffleTag = 5000011ull;
inline constexpr std::uint64_t kBatchNoiseTag = 6000023ull;
inline constexpr std::uint64_t kInitTag = 4222ull;

inline nlohmann::json base_meta(const ExperimentConfig& cfg, const std::string& kind, int epoch,
                                double best_val, double omega, double eta) {
    nlohmann::json meta;
    meta["kind"] = kind;
    meta["epoch"] = epoch;
    meta["best_val"] = best_val;
    meta["omega"] = omega;
    meta["eta"] = eta;
    meta["config"] = config_to_json(cfg);
    return meta;
}

}  // namespace detail

/// One training epoch of the instantaneous pipeline. Throws on non-finite
/// loss. Returns (mean loss, mean rate, violation fraction).
struct EpochStats {
    double loss = 0.0;
    double rate = 0.0;
    double violation_frac = 0.0;
    double max_power_dev = 0.0;
    double max_pilot_dev = 0.0;
};

inline EpochStats train_epoch_e2e(E2EModel& model, const DataView& train,
                                  const ExperimentConfig& cfg, int epoch, char mode, double omega,
                                  double eta, Adam<double>& adam) {
    model.set_position_trainable(mode == 'J');
    const std::uint64_t pos_hash_before = model.position_param_hash();
    BatchIterator it(train, static_cast<std::size_t>(cfg.train.batch_size),
                     Rng(mix_seed(cfg.train.seed, detail::kShuffleTag + epoch)));
    std::vector<std::vector<const ChannelSample<double>*>> epoch_batches;
    {
        std::vector<const ChannelSample<double>*> b;
        while (it.next(b))
            epoch_batches.push_back(b);
        // a singleton tail cannot feed training-mode batchnorm
        if (epoch_batches.size() > 1 && epoch_batches.back().size() == 1) {
            epoch_batches[epoch_batches.size() - 2].push_back(epoch_batches.back()[0]);
            epoch_batches.pop_back();
        }
    }
    EpochStats stats;
    double loss_weighted = 0.0, rate_weighted = 0.0, viol_weighted = 0.0;
    std::size_t seen = 0, bi = 0;
    for (const auto& batch : epoch_batches) {
        model.store().zero_grad();
        Rng noise(mix_seed(cfg.train.seed,
                           detail::kBatchNoiseTag + 1315423911ull * epoch + bi));
        ForwardOptions opt;
        opt.training = true;
        opt.feasibility = cfg.train.feasibility;
        opt.omega = omega;
        opt.noise_rng = &noise;
        const ForwardResult fr = model.forward(batch, opt);
        const double loss = fr.loss.value()(0, 0);
        if (!std::isfinite(loss))
            throw NumericError("training aborted: non-finite loss at epoch " +
                                     std::to_string(epoch) + ", batch " + std::to_string(bi));
        backward(fr.loss);
        adam.step(model.store(), eta);
        model.pilot().project();
        if (!model.pilot().support_ok())
            throw std::runtime_error("pilot projection violated block support");
        stats.max_pilot_dev = std::max(stats.max_pilot_dev, model.pilot().max_column_energy_dev());
        stats.max_power_dev = std::max(stats.max_power_dev, fr.max_power_dev);
        const double nb = static_cast<double>(batch.size());
        loss_weighted += loss * nb;
        rate_weighted += fr.mean_sum_rate * nb;
        viol_weighted += fr.violation_frac * nb;
        seen += batch.size();
        ++bi;
    }
    if (mode == 'P' && model.position_param_hash() != pos_hash_before)
        throw std::runtime_error("freeze violated: selection parameters changed in mode P");
    stats.loss = loss_weighted / static_cast<double>(seen);
    stats.rate = rate_weighted / static_cast<double>(seen);
    stats.violation_frac = viol_weighted / static_cast<double>(seen);
    return stats;
}

inline EpochStats train_epoch_stat(StatModel& model, const DataView& train,
                                   const ExperimentConfig& cfg, int epoch, char mode,
                                   double omega, double eta, Adam<double>& adam) {
    model.set_position_trainable(mode == 'J');
    const std::uint64_t pos_hash_before = model.position_param_hash();
    auto eps = episodes_of(train, cfg.episode_len);
    std::vector<std::size_t> order(eps.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    Rng shuffle_rng(mix_seed(cfg.train.seed, detail::kShuffleTag + epoch));
    shuffle_rng.shuffle(order);
    const std::size_t per_batch =
        std::max<std::size_t>(1, static_cast<std::size_t>(cfg.train.batch_size) /
                                     static_cast<std::size_t>(cfg.episode_len));
    std::vector<std::vector<Episode>> epoch_batches;
    for (std::size_t start = 0; start < order.size(); start += per_batch) {
        const std::size_t end = std::min(start + per_batch, order.size());
        std::vector<Episode> batch;
        for (std::size_t i = start; i < end; ++i)
            batch.push_back(eps[order[i]]);
        epoch_batches.push_back(std::move(batch));
    }
    // a singleton tail cannot feed training-mode batchnorm
    if (epoch_batches.size() > 1 && epoch_batches.back().size() == 1) {
        epoch_batches[epoch_batches.size() - 2].push_back(epoch_batches.back()[0]);
        epoch_batches.pop_back();
    }
    EpochStats stats;
    double loss_weighted = 0.0, rate_weighted = 0.0, viol_weighted = 0.0;
    std::size_t seen = 0, bi = 0;
    for (const auto& batch : epoch_batches) {
        model.store().zero_grad();
        Rng noise(mix_seed(cfg.train.seed,
                           detail::kBatchNoiseTag + 1315423911ull * epoch + bi));
        ForwardOptions opt;
        opt.training = true;
        opt.feasibility = cfg.train.feasibility;
        opt.omega = omega;
        opt.noise_rng = &noise;
        const StatForwardResult fr = model.forward(batch, opt);
        const double loss = fr.loss.value()(0, 0);
        if (!std::isfinite(loss))
            throw NumericError("training aborted: non-finite loss at epoch " +
                                     std::to_string(epoch) + ", batch " + std::to_string(bi));
        backward(fr.loss);
        adam.step(model.store(), eta);
        model.pilot().project();
        if (!model.pilot().support_ok())
            throw std::runtime_error("pilot projection violated block support");
        stats.max_pilot_dev = std::max(stats.max_pilot_dev, model.pilot().max_column_energy_dev());
        stats.max_power_dev = std::max(stats.max_power_dev, fr.max_power_dev);
        const double ne = static_cast<double>(batch.size());
        loss_weighted += loss * ne;
        rate_weighted += fr.mean_sum_rate * ne;
        viol_weighted += fr.violation_frac * ne;
        seen += batch.size();
        ++bi;
    }
    if (mode == 'P' && model.position_param_hash() != pos_hash_before)
        throw std::runtime_error("freeze violated: selection parameters changed in mode P");
    stats.loss = loss_weighted / static_cast<double>(seen);
    stats.rate = rate_weighted / static_cast<double>(seen);
    stats.violation_frac = viol_weighted / static_cast<double>(seen);
    return stats;
}

/// Full training run for either pipeline; saves the best checkpoint (by
/// validation rate) and a per-epoch metric log.
template <typename Model>
TrainOutcome run_training(Model& model, const Dataset& ds, const ExperimentConfig& cfg,
                          const std::string& checkpoint_path, const std::string& metrics_path) {
    constexpr bool is_stat = std::is_same_v<Model, StatModel>;
    const auto views = is_stat ? split_train_val_aligned(ds, cfg.val_fraction, cfg.episode_len)
                               : split_train_val(ds, cfg.val_fraction);
    const DataView& train_view = views.first;
    const DataView& val_view = views.second;
    if (val_view.count == 0)
        throw std::invalid_argument("training: empty validation split");

    Adam<double> adam;
    double omega = cfg.train.omega0;
    double eta = cfg.train.lr0;
    const std::string kind = is_stat ? "stat" : "e2e";

    TrainOutcome out;
    const auto validate = [&]() {
        if constexpr (is_stat)
            return validate_stat(model, val_view, cfg);
        else
            return validate_e2e(model, val_view, cfg);
    };
    const auto save_best = [&](int epoch) {
        // The file stores float32; record the validation rate of the
        // rounded weights so a reloaded checkpoint reproduces it exactly.
        const auto snap = snapshot_store(model.store());
        round_store_to_f32(model.store());
        const double val32 = validate();
        nlohmann::json meta = detail::base_meta(cfg, kind, epoch, out.best_val, omega, eta);
        meta["val_rate"] = val32;
        save_checkpoint(checkpoint_path, model.store(), meta);
        restore_store(model.store(), snap);
        out.best_val_saved = val32;
    };

    out.best_val = validate();
    out.best_epoch = -1;
    if (!checkpoint_path.empty())
        save_best(-1);

    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const char mode = epoch_mode(epoch, cfg.train.alternate_period);
        EpochStats stats;
        if constexpr (is_stat)
            stats = train_epoch_stat(model, train_view, cfg, epoch, mode, omega, eta, adam);
        else
            stats = train_epoch_e2e(model, train_view, cfg, epoch, mode, omega, eta, adam);
        out.max_power_dev = std::max(out.max_power_dev, stats.max_power_dev);
        out.max_pilot_dev = std::max(out.max_pilot_dev, stats.max_pilot_dev);

        const double val = validate();
        if (val > out.best_val) {
            out.best_val = val;
            out.best_epoch = epoch;
            if (!checkpoint_path.empty())
                save_best(epoch);
        }
        EpochRow row;
        row.epoch = epoch;
        row.mode = mode;
        row.train_loss = stats.loss;
        row.train_rate = stats.rate;
        row.val_rate = val;
        row.violation_frac = stats.violation_frac;
        row.omega = omega;
        row.eta = eta;
        out.log.push_back(row);
        std::tie(omega, eta) = anneal_update(omega, eta);
    }
    if (!metrics_path.empty())
        write_csv(metrics_path, metrics_table(out.log));
    return out;
}

/// Model-construction seed stream (distinct from data and noise streams).
inline Rng model_init_rng(std::uint64_t seed) { return Rng(mix_seed(seed, detail::kInitTag)); }

inline std::unique_ptr<E2EModel> build_e2e_model(const ExperimentConfig& cfg) {
    Rng rng = model_init_rng(cfg.train.seed);
    return std::make_unique<E2EModel>(cfg.scenario, cfg.sizes, cfg.feedback_bits, cfg.pilot_len,
                                      cfg.tau, cfg.train.beta_dist, rng);
}

inline std::unique_ptr<StatModel> build_stat_model(const ExperimentConfig& cfg) {
    Rng rng = model_init_rng(cfg.train.seed);
    return std::make_unique<StatModel>(cfg.scenario, cfg.sizes, cfg.stat_encoder,
                                       cfg.feedback_bits, cfg.pilot_len, cfg.history_slots,
                                       cfg.tau, cfg.train.beta_dist, rng);
}

}  // namespace mant
