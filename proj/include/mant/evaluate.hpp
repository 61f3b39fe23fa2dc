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
// Evaluation of trained pipelines and the classical baselines over dataset
// views, all emitting one shared CSV row schema so reports can be merged.

#pragma once

#include "mant/baselines.hpp"
#include "mant/training.hpp"

namespace mant {

struct MethodReport {
    std::string method;
    double mean_sum_rate = 0.0;
    RVec<double> per_user;          // mean per-user rates
    double zf_residual = 0.0;       // max |h_k^H v_j|, j != k, on the design channel
    double violation_frac = 0.0;
    double est_mse = std::numeric_limits<double>::quiet_NaN();
    std::size_t samples = 0;
};

namespace detail {
inline constexpr std::uint64_t kEvalNoiseTag = 9000011ull;
inline constexpr std::uint64_t kAblationTag = 9100019ull;
inline constexpr std::uint64_t kLayoutTag = 9200023ull;
inline constexpr std::uint64_t kSearchTag = 9300029ull;
}  // namespace detail

// ---------------------------------------------------------------------------
// Learned pipelines
// ---------------------------------------------------------------------------

/// Evaluate the instantaneous pipeline on a view. Uses the same fixed noise
/// streams as validation, so the headline rate matches validate_e2e bit for
/// bit; optionally replaces the feedback with random bits (ablation).
inline MethodReport evaluate_e2e(E2EModel& model, const DataView& view,
                                 const ExperimentConfig& cfg, bool random_bits = false,
                                 std::vector<RVec<double>>* per_sample_rates = nullptr,
                                 std::vector<Eigen::Matrix<double, Eigen::Dynamic, 2>>*
                                     per_sample_positions = nullptr) {
    if (view.count == 0)
        throw std::invalid_argument("evaluate: empty view");
    const std::size_t bs = static_cast<std::size_t>(std::max(cfg.train.batch_size, 1));
    const Eigen::Index k_users = cfg.scenario.num_users;
    MethodReport rep;
    rep.method = random_bits ? "learned-random-bits" : "learned";
    rep.per_user = RVec<double>::Zero(k_users);
    double rate_sum = 0.0;
    double viol = 0.0;
    for (std::size_t start = 0; start < view.count; start += bs) {
        const std::size_t end = std::min(start + bs, view.count);
        std::vector<const ChannelSample<double>*> batch;
        for (std::size_t i = start; i < end; ++i)
            batch.push_back(&view.sample(i));
        Rng noise(mix_seed(cfg.train.seed, kValNoiseTag + start));
        Rng ablation(mix_seed(cfg.train.seed, detail::kAblationTag + start));
        ForwardOptions opt;
        opt.training = false;
        opt.feasibility = cfg.train.feasibility;
        opt.random_bits = random_bits;
        opt.noise_rng = &noise;
        opt.ablation_rng = &ablation;
        const ForwardResult fr = model.forward(batch, opt);
        rate_sum += fr.rates.value().sum();
        rep.per_user += fr.rates.value().rowwise().sum();
        viol += fr.violation_frac * static_cast<double>(batch.size());
        if (per_sample_rates != nullptr)
            for (Eigen::Index b = 0; b < fr.rates.value().cols(); ++b)
                per_sample_rates->push_back(fr.rates.value().col(b));
        if (per_sample_positions != nullptr)
            for (Eigen::Index b = 0; b < fr.mask.value().cols(); ++b)
                per_sample_positions->push_back(
                    positions_from_mask(fr.mask.value().col(b), model.grid()));
    }
    rep.samples = view.count;
    rep.mean_sum_rate = rate_sum / static_cast<double>(view.count);
    rep.per_user /= static_cast<double>(view.count);
    rep.violation_frac = viol / static_cast<double>(view.count);
    return rep;
}

/// Evaluate the two-timescale pipeline (per-slot mean rate over episodes).
inline MethodReport evaluate_stat(StatModel& model, const DataView& view,
                                  const ExperimentConfig& cfg) {
    const auto eps = episodes_of(view, cfg.episode_len);
    if (eps.empty())
        throw std::invalid_argument("evaluate: empty view");
    const std::size_t per_batch =
        std::max<std::size_t>(1, static_cast<std::size_t>(cfg.train.batch_size) /
                                     static_cast<std::size_t>(cfg.episode_len));
    const Eigen::Index k_users = cfg.scenario.num_users;
    MethodReport rep;
    rep.method = "learned-stat";
    rep.per_user = RVec<double>::Zero(k_users);
    double rate_sum = 0.0, viol = 0.0;
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
            rep.per_user += r.value().rowwise().sum();
            slots += static_cast<std::size_t>(r.value().cols());
        }
        viol += fr.violation_frac * static_cast<double>(batch.size());
    }
    rep.samples = slots;
    rep.mean_sum_rate = rate_sum / static_cast<double>(slots);
    rep.per_user /= static_cast<double>(slots);
    rep.violation_frac = viol / static_cast<double>(eps.size());
    return rep;
}

// ---------------------------------------------------------------------------
// Classical baselines
// ---------------------------------------------------------------------------

namespace detail {

inline double offdiag_residual(const CMat<double>& h, const CMat<double>& v) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < h.cols(); ++k)
        for (Eigen::Index j = 0; j < v.cols(); ++j)
            if (j != k)
                worst = std::max(worst, std::abs(h.col(k).dot(v.col(j))));
    return worst;
}

/// Sample covariance of the true channel at a fixed layout over a view,
/// regenerated from the stored scenario.
inline CMat<double> layout_prior(const Dataset& ds, const DataView& view,
                                 const Eigen::Matrix<double, Eigen::Dynamic, 2>& layout) {
    const auto& h = ds.header();
    CMat<double> r = CMat<double>::Zero(layout.rows(), layout.rows());
    std::size_t count = 0;
    for (std::size_t i = 0; i < view.count; ++i) {
        const SampleContext ctx =
            sample_context(h.scenario, h.regime, h.episode_len, view.start + i);
        const CMat<double> hh = channel_at(ctx, layout);
        for (Eigen::Index k = 0; k < hh.cols(); ++k) {
            r += hh.col(k) * hh.col(k).adjoint();
            ++count;
        }
    }
    return r / static_cast<double>(count);
}

/// Per-round sample covariance of the padded measurement blocks.
inline std::vector<CMat<double>> round_priors(const Dataset& ds, const DataView& view) {
    const Eigen::Index n = ds.header().scenario.num_mas;
    const Eigen::Index m = ds.header().meas_points;
    const auto rows = padded_measurement_rows(m, n);
    const Eigen::Index z = static_cast<Eigen::Index>(rows.size()) / n;
    std::vector<CMat<double>> priors(static_cast<std::size_t>(z),
                                     CMat<double>::Zero(n, n));
    std::size_t count = 0;
    for (std::size_t i = 0; i < view.count; ++i) {
        const auto& hm = view.sample(i).h_meas;
        for (Eigen::Index k = 0; k < hm.cols(); ++k) {
            for (Eigen::Index zi = 0; zi < z; ++zi) {
                CVec<double> blk(n);
                for (Eigen::Index r = 0; r < n; ++r)
                    blk(r) = hm(rows[static_cast<std::size_t>(zi * n + r)], k);
                priors[static_cast<std::size_t>(zi)] += blk * blk.adjoint();
            }
            ++count;
        }
    }
    for (auto& p : priors)
        p /= static_cast<double>(count);
    return priors;
}

}  // namespace detail

/// Fixed uniform linear array with ZF precoding; CSI either perfect or
/// LS/LMMSE-estimated from one DFT pilot round at the array itself.
inline MethodReport run_fixed_zf(const Dataset& ds, const DataView& view,
                                 const ExperimentConfig& cfg, bool perfect_csi,
                                 Estimator kind = Estimator::kLMMSE,
                                 const DataView* prior_view = nullptr) {
    const Scenario& sc = ds.header().scenario;
    const auto layout = fixed_array_layout(sc.num_mas, sc.wavelength, sc.region_size_x,
                                           sc.region_size_z);
    const CMat<double> pilot = dft_pilot(sc.num_mas, cfg.pilot_len, sc.max_power);
    CMat<double> prior;
    if (!perfect_csi && kind == Estimator::kLMMSE) {
        if (prior_view == nullptr)
            throw std::invalid_argument("run_fixed_zf: LMMSE needs a prior view");
        prior = detail::layout_prior(ds, *prior_view, layout);
    }
    MethodReport rep;
    rep.method = perfect_csi ? "fixed-zf-perfect" : "fixed-zf";
    rep.per_user = RVec<double>::Zero(sc.num_users);
    double mse = 0.0;
    for (std::size_t i = 0; i < view.count; ++i) {
        const std::size_t gi = view.start + i;
        const SampleContext ctx =
            sample_context(sc, ds.header().regime, ds.header().episode_len, gi);
        const CMat<double> h_true = channel_at(ctx, layout);
        CMat<double> design = h_true;
        if (!perfect_csi) {
            Rng noise(mix_seed(cfg.train.seed, detail::kEvalNoiseTag + gi));
            design = estimate_block(h_true, pilot, sc.noise_power, kind,
                                    kind == Estimator::kLMMSE ? &prior : nullptr, noise);
            mse += (design - h_true).squaredNorm() / static_cast<double>(h_true.size());
        }
        const CMat<double> v = zf_precoder(design, sc.max_power);
        rep.zf_residual = std::max(rep.zf_residual, detail::offdiag_residual(design, v));
        const auto [sum, per_user] = sum_rate(h_true, v, sc.noise_power);
        rep.mean_sum_rate += sum;
        rep.per_user += per_user;
    }
    rep.samples = view.count;
    rep.mean_sum_rate /= static_cast<double>(view.count);
    rep.per_user /= static_cast<double>(view.count);
    if (!perfect_csi)
        rep.est_mse = mse / static_cast<double>(view.count);
    return rep;
}

/// Greedy antenna selection on the estimated measurement-grid channel with
/// ZF precoding at the selected positions.
inline MethodReport run_as_zf(const Dataset& ds, const DataView& view,
                              const ExperimentConfig& cfg, Estimator kind,
                              const DataView* prior_view) {
    const Scenario& sc = ds.header().scenario;
    const Grid<double> meas = measurement_grid(sc);
    const CMat<double> pilot = dft_pilot(sc.num_mas, cfg.pilot_len, sc.max_power);
    std::vector<CMat<double>> priors;
    if (kind == Estimator::kLMMSE) {
        if (prior_view == nullptr)
            throw std::invalid_argument("run_as_zf: LMMSE needs a prior view");
        priors = detail::round_priors(ds, *prior_view);
    }
    MethodReport rep;
    rep.method = "as-zf";
    rep.per_user = RVec<double>::Zero(sc.num_users);
    double mse = 0.0;
    for (std::size_t i = 0; i < view.count; ++i) {
        const std::size_t gi = view.start + i;
        const auto& sample = view.sample(i);
        Rng noise(mix_seed(cfg.train.seed, detail::kEvalNoiseTag + gi));
        const CMat<double> est =
            estimate_grid(sample.h_meas, sc.num_mas, pilot, sc.noise_power, kind,
                          kind == Estimator::kLMMSE ? &priors : nullptr, noise);
        mse += (est - sample.h_meas).squaredNorm() / static_cast<double>(est.size());
        const SelectionResult sel = greedy_antenna_selection(
            est, sc.num_mas, meas.points, sc.wavelength / 2.0, sc.max_power, sc.noise_power);
        CMat<double> design(sc.num_mas, sc.num_users), h_true(sc.num_mas, sc.num_users);
        for (Eigen::Index r = 0; r < sc.num_mas; ++r) {
            design.row(r) = est.row(sel.indices[static_cast<std::size_t>(r)]);
            h_true.row(r) = sample.h_meas.row(sel.indices[static_cast<std::size_t>(r)]);
        }
        CMat<double> v;
        try {
            v = zf_precoder(design, sc.max_power);
        } catch (const std::exception&) {
            v = rzf_precoder(design, sc.max_power, sc.noise_power);
        }
        rep.zf_residual = std::max(rep.zf_residual, detail::offdiag_residual(design, v));
        const auto [sum, per_user] = sum_rate(h_true, v, sc.noise_power);
        rep.mean_sum_rate += sum;
        rep.per_user += per_user;
    }
    rep.samples = view.count;
    rep.mean_sum_rate /= static_cast<double>(view.count);
    rep.per_user /= static_cast<double>(view.count);
    rep.est_mse = mse / static_cast<double>(view.count);
    return rep;
}

/// Continuous gradient positioning with ZF precoding; the position search
/// sees either the true path model or one refit from estimated CSI.
inline MethodReport run_gradient_zf(const Dataset& ds, const DataView& view,
                                    const ExperimentConfig& cfg, bool perfect_csi) {
    const Scenario& sc = ds.header().scenario;
    const Grid<double> meas = measurement_grid(sc);
    const CMat<double> pilot = dft_pilot(sc.num_mas, cfg.pilot_len, sc.max_power);
    GradientSearchConfig gcfg;
    gcfg.steps = cfg.gradient_steps;
    gcfg.restarts = cfg.gradient_restarts;
    MethodReport rep;
    rep.method = perfect_csi ? "gradient-zf-perfect" : "gradient-zf";
    rep.per_user = RVec<double>::Zero(sc.num_users);
    for (std::size_t i = 0; i < view.count; ++i) {
        const std::size_t gi = view.start + i;
        const SampleContext ctx =
            sample_context(sc, ds.header().regime, ds.header().episode_len, gi);
        std::vector<CVec<double>> psis = ctx.psis;
        if (!perfect_csi) {
            // refit per-user path responses from estimated measurement CSI
            Rng noise(mix_seed(cfg.train.seed, detail::kEvalNoiseTag + gi));
            const CMat<double> h_meas_true = channel_at(ctx, meas.points);
            const CMat<double> est = estimate_grid(h_meas_true, sc.num_mas, pilot,
                                                   sc.noise_power, Estimator::kLS, nullptr, noise);
            for (std::size_t k = 0; k < ctx.path_sets.size(); ++k) {
                const auto& ps = ctx.path_sets[k];
                CMat<double> qh(meas.count(), ps.tx_count());
                for (Eigen::Index r = 0; r < meas.count(); ++r) {
                    const CVec<double> q = transmit_frv<double>(
                        meas.points.row(r).transpose(), ps.tx_wavevectors);
                    qh.row(r) = q.adjoint();
                }
                psis[k] = qh.colPivHouseholderQr().solve(
                    est.col(static_cast<Eigen::Index>(k)));
            }
        }
        const ChannelFn channel_fn =
            [&](const Eigen::Matrix<double, Eigen::Dynamic, 2>& a) -> CMat<double> {
            CMat<double> h(a.rows(), static_cast<Eigen::Index>(ctx.path_sets.size()));
            for (std::size_t k = 0; k < ctx.path_sets.size(); ++k)
                h.col(static_cast<Eigen::Index>(k)) = channel_from_path_response<double>(
                    a, ctx.path_sets[k].tx_wavevectors, psis[k]);
            return h;
        };
        Rng search_rng(mix_seed(cfg.train.seed, detail::kSearchTag + gi));
        const auto layout =
            gradient_position_search(channel_fn, sc.num_mas, sc.region_size_x, sc.region_size_z,
                                     sc.wavelength, sc.max_power, sc.noise_power, gcfg, search_rng);
        const CMat<double> design = channel_fn(layout);
        CMat<double> v;
        try {
            v = zf_precoder(design, sc.max_power);
        } catch (const std::exception&) {
            v = rzf_precoder(design, sc.max_power, sc.noise_power);
        }
        rep.zf_residual = std::max(rep.zf_residual, detail::offdiag_residual(design, v));
        const CMat<double> h_true = channel_at(ctx, layout);
        const auto [sum, per_user] = sum_rate(h_true, v, sc.noise_power);
        rep.mean_sum_rate += sum;
        rep.per_user += per_user;
    }
    rep.samples = view.count;
    rep.mean_sum_rate /= static_cast<double>(view.count);
    rep.per_user /= static_cast<double>(view.count);
    return rep;
}

/// Fixed array, estimated CSI pushed through the scalar quantizer before ZF
/// (finite-feedback version of run_fixed_zf).
inline MethodReport run_quantized_zf(const Dataset& ds, const DataView& view,
                                     const ExperimentConfig& cfg, Estimator kind,
                                     const DataView* prior_view, long total_bits) {
    const Scenario& sc = ds.header().scenario;
    const auto layout = fixed_array_layout(sc.num_mas, sc.wavelength, sc.region_size_x,
                                           sc.region_size_z);
    const CMat<double> pilot = dft_pilot(sc.num_mas, cfg.pilot_len, sc.max_power);
    CMat<double> prior;
    if (kind == Estimator::kLMMSE) {
        if (prior_view == nullptr)
            throw std::invalid_argument("run_quantized_zf: LMMSE needs a prior view");
        prior = detail::layout_prior(ds, *prior_view, layout);
    }
    MethodReport rep;
    rep.method = "quantized-zf";
    rep.per_user = RVec<double>::Zero(sc.num_users);
    double mse = 0.0;
    for (std::size_t i = 0; i < view.count; ++i) {
        const std::size_t gi = view.start + i;
        const SampleContext ctx =
            sample_context(sc, ds.header().regime, ds.header().episode_len, gi);
        const CMat<double> h_true = channel_at(ctx, layout);
        Rng noise(mix_seed(cfg.train.seed, detail::kEvalNoiseTag + gi));
        CMat<double> est = estimate_block(h_true, pilot, sc.noise_power, kind,
                                          kind == Estimator::kLMMSE ? &prior : nullptr, noise);
        est = quantize_dequantize_csi(est, total_bits);
        mse += (est - h_true).squaredNorm() / static_cast<double>(h_true.size());
        const CMat<double> v = zf_precoder(est, sc.max_power);
        rep.zf_residual = std::max(rep.zf_residual, detail::offdiag_residual(est, v));
        const auto [sum, per_user] = sum_rate(h_true, v, sc.noise_power);
        rep.mean_sum_rate += sum;
        rep.per_user += per_user;
    }
    rep.samples = view.count;
    rep.mean_sum_rate /= static_cast<double>(view.count);
    rep.per_user /= static_cast<double>(view.count);
    rep.est_mse = mse / static_cast<double>(view.count);
    return rep;
}

/// One random spacing-feasible grid layout held fixed across the view, ZF
/// with perfect CSI at the selected rows.
inline MethodReport run_random_zf(const Dataset& ds, const DataView& view,
                                  const ExperimentConfig& cfg) {
    const Scenario& sc = ds.header().scenario;
    const Grid<double> grid = candidate_grid(sc);
    Rng lrng(mix_seed(cfg.train.seed, detail::kLayoutTag));
    const auto layout = random_layout(grid, sc.num_mas, sc.wavelength, lrng, true);
    // map layout rows back to grid indices for stored-channel lookup
    std::vector<Eigen::Index> idx;
    for (Eigen::Index r = 0; r < layout.rows(); ++r)
        for (Eigen::Index gi = 0; gi < grid.count(); ++gi)
            if ((grid.points.row(gi) - layout.row(r)).norm() < 1e-12) {
                idx.push_back(gi);
                break;
            }
    MethodReport rep;
    rep.method = "random-zf";
    rep.per_user = RVec<double>::Zero(sc.num_users);
    for (std::size_t i = 0; i < view.count; ++i) {
        const auto& sample = view.sample(i);
        CMat<double> h(sc.num_mas, sc.num_users);
        for (Eigen::Index r = 0; r < sc.num_mas; ++r)
            h.row(r) = sample.h_grid.row(idx[static_cast<std::size_t>(r)]);
        CMat<double> v;
        try {
            v = zf_precoder(h, sc.max_power);
        } catch (const std::exception&) {
            v = rzf_precoder(h, sc.max_power, sc.noise_power);
        }
        rep.zf_residual = std::max(rep.zf_residual, detail::offdiag_residual(h, v));
        const auto [sum, per_user] = sum_rate(h, v, sc.noise_power);
        rep.mean_sum_rate += sum;
        rep.per_user += per_user;
    }
    rep.samples = view.count;
    rep.mean_sum_rate /= static_cast<double>(view.count);
    rep.per_user /= static_cast<double>(view.count);
    return rep;
}

// ---------------------------------------------------------------------------
// Report rows
// ---------------------------------------------------------------------------

inline CsvTable report_table(const std::vector<MethodReport>& reports,
                             const ExperimentConfig& cfg, const std::string& sweep_name = "",
                             double sweep_value = 0.0) {
    CsvTable t;
    const int k_users = cfg.scenario.num_users;
    t.columns = {"method", "regime", "sweep_name", "sweep_value", "seed", "samples", "sum_rate"};
    for (int k = 0; k < k_users; ++k)
        t.columns.push_back("rate_u" + std::to_string(k));
    t.columns.push_back("zf_residual");
    t.columns.push_back("violation_frac");
    t.columns.push_back("est_mse");
    for (const auto& r : reports) {
        std::vector<std::string> row = {r.method,
                                        regime_name(cfg.regime),
                                        sweep_name.empty() ? "none" : sweep_name,
                                        fmt_double(sweep_value),
                                        std::to_string(cfg.train.seed),
                                        std::to_string(r.samples),
                                        fmt_double(r.mean_sum_rate)};
        for (int k = 0; k < k_users; ++k)
            row.push_back(fmt_double(k < r.per_user.size() ? r.per_user(k) : 0.0));
        row.push_back(fmt_double(r.zf_residual));
        row.push_back(fmt_double(r.violation_frac));
        row.push_back(fmt_double(r.est_mse));
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace mant
