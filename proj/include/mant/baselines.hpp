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
// Classical comparison methods: pilot-based LS/LMMSE estimation, zero-forcing
// precoding, greedy antenna selection, continuous gradient positioning, the
// fixed uniform linear array, and scalar CSI quantization.

#pragma once

#include "mant/e2e.hpp"

#include <functional>

namespace mant {

enum class Estimator { kLS, kLMMSE };

/// DFT pilot, one column per symbol, column energy exactly p_max. Rows
/// (per-antenna sequences) are mutually orthogonal whenever l >= n, which
/// is what least squares needs.
inline CMat<double> dft_pilot(Eigen::Index n, Eigen::Index l, double p_max) {
    const Eigen::Index f = std::max(n, l);
    const double amp = std::sqrt(p_max / static_cast<double>(n));
    CMat<double> x(n, l);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < l; ++c)
            x(r, c) = std::polar(amp, -kTwoPi * static_cast<double>(r) * static_cast<double>(c) /
                                          static_cast<double>(f));
    return x;
}

/// Least squares for one round: y = h^H X + e observed as (1 x L).
inline CVec<double> ls_estimate_round(const Eigen::Matrix<std::complex<double>, 1, Eigen::Dynamic>& y,
                                      const CMat<double>& pilot) {
    const Eigen::Index n = pilot.rows();
    const Eigen::Index l = pilot.cols();
    if (l < n)
        throw std::invalid_argument(
            "ls_estimate_round: pilot length below antenna count leaves the normal matrix "
            "singular; use the LMMSE estimator");
    const CMat<double> gram = pilot * pilot.adjoint();  // N x N
    Eigen::FullPivLU<CMat<double>> lu(gram);
    if (!lu.isInvertible())
        throw std::runtime_error("ls_estimate_round: singular pilot normal matrix");
    return lu.solve(pilot * y.adjoint());
}

/// Bayesian linear estimator for one round with prior h ~ CN(0, prior).
inline CVec<double> lmmse_estimate_round(
    const Eigen::Matrix<std::complex<double>, 1, Eigen::Dynamic>& y, const CMat<double>& pilot,
    const CMat<double>& prior, double sigma2) {
    const Eigen::Index l = pilot.cols();
    const CMat<double> a = pilot.adjoint();  // L x N observation matrix
    CMat<double> s = a * prior * a.adjoint();
    s.diagonal().array() += sigma2;
    return prior * a.adjoint() * s.ldlt().solve(y.adjoint().eval());
}

/// Noisy pilot observation for one round: y = h^H X + e.
inline Eigen::Matrix<std::complex<double>, 1, Eigen::Dynamic> observe_round(
    const CVec<double>& h, const CMat<double>& pilot, double sigma2, Rng& rng) {
    Eigen::Matrix<std::complex<double>, 1, Eigen::Dynamic> y = h.adjoint() * pilot;
    for (Eigen::Index i = 0; i < y.cols(); ++i)
        y(0, i) += rng.cnormal(sigma2);
    return y;
}

/// Estimate an N x K block channel from one pilot round per user.
inline CMat<double> estimate_block(const CMat<double>& h_true, const CMat<double>& pilot,
                                   double sigma2, Estimator kind, const CMat<double>* prior,
                                   Rng& rng) {
    const Eigen::Index k_users = h_true.cols();
    CMat<double> est(h_true.rows(), k_users);
    for (Eigen::Index k = 0; k < k_users; ++k) {
        const auto y = observe_round(h_true.col(k), pilot, sigma2, rng);
        if (kind == Estimator::kLS) {
            est.col(k) = ls_estimate_round(y, pilot);
        } else {
            if (prior == nullptr)
                throw std::invalid_argument("estimate_block: LMMSE needs a prior covariance");
            est.col(k) = lmmse_estimate_round(y, pilot, *prior, sigma2);
        }
    }
    return est;
}

/// Estimate the whole measurement-grid channel (M x K) over ceil(M/N) pilot
/// rounds of N positions each; re-probed rows take the latest estimate.
inline CMat<double> estimate_grid(const CMat<double>& h_meas_true, Eigen::Index n_antennas,
                                  const CMat<double>& pilot, double sigma2, Estimator kind,
                                  const std::vector<CMat<double>>* priors, Rng& rng) {
    const Eigen::Index m = h_meas_true.rows();
    const auto rows = padded_measurement_rows(m, n_antennas);
    const Eigen::Index z = static_cast<Eigen::Index>(rows.size()) / n_antennas;
    CMat<double> est = CMat<double>::Zero(m, h_meas_true.cols());
    for (Eigen::Index zi = 0; zi < z; ++zi) {
        CMat<double> blk(n_antennas, h_meas_true.cols());
        for (Eigen::Index r = 0; r < n_antennas; ++r)
            blk.row(r) = h_meas_true.row(rows[static_cast<std::size_t>(zi * n_antennas + r)]);
        const CMat<double>* prior =
            (priors != nullptr) ? &priors->at(static_cast<std::size_t>(zi)) : nullptr;
        const CMat<double> bhat = estimate_block(blk, pilot, sigma2, kind, prior, rng);
        for (Eigen::Index r = 0; r < n_antennas; ++r)
            est.row(rows[static_cast<std::size_t>(zi * n_antennas + r)]) = bhat.row(r);
    }
    return est;
}

/// Zero-forcing precoder with equal per-user power: columns of
/// H (H^H H)^{-1} normalized to sqrt(p_max / K).
inline CMat<double> zf_precoder(const CMat<double>& h, double p_max) {
    const Eigen::Index n = h.rows();
    const Eigen::Index k_users = h.cols();
    if (k_users > n)
        throw std::invalid_argument("zf_precoder: more users than antennas");
    const CMat<double> gram = h.adjoint() * h;
    Eigen::FullPivLU<CMat<double>> lu(gram);
    if (!lu.isInvertible())
        throw std::runtime_error("zf_precoder: rank-deficient channel");
    CMat<double> w = h * lu.inverse();
    const double per_user = std::sqrt(p_max / static_cast<double>(k_users));
    for (Eigen::Index k = 0; k < k_users; ++k) {
        const double nn = w.col(k).norm();
        if (!(nn > 0.0))
            throw std::runtime_error("zf_precoder: zero precoding direction");
        w.col(k) *= per_user / nn;
    }
    return w;
}

/// Regularized variant usable for partial selections (fewer antennas than
/// users) where exact zero forcing does not exist.
inline CMat<double> rzf_precoder(const CMat<double>& h, double p_max, double sigma2) {
    const Eigen::Index k_users = h.cols();
    CMat<double> gram = h.adjoint() * h;
    gram.diagonal().array() += sigma2 * static_cast<double>(k_users) / p_max;
    CMat<double> w = h * gram.ldlt().solve(CMat<double>::Identity(k_users, k_users));
    const double per_user = std::sqrt(p_max / static_cast<double>(k_users));
    for (Eigen::Index k = 0; k < k_users; ++k) {
        const double nn = w.col(k).norm();
        if (nn > 0.0)
            w.col(k) *= per_user / nn;
    }
    return w;
}

namespace detail {

/// Sum rate of a candidate subset under ZF (exact when the subset can null
/// interference, regularized otherwise).
inline double selection_score(const CMat<double>& h_cand, const std::vector<Eigen::Index>& subset,
                              double p_max, double sigma2) {
    const Eigen::Index k_users = h_cand.cols();
    CMat<double> hs(static_cast<Eigen::Index>(subset.size()), k_users);
    for (std::size_t i = 0; i < subset.size(); ++i)
        hs.row(static_cast<Eigen::Index>(i)) = h_cand.row(subset[i]);
    CMat<double> v;
    if (static_cast<Eigen::Index>(subset.size()) >= k_users) {
        try {
            v = zf_precoder(hs, p_max);
        } catch (const std::exception&) {
            return -std::numeric_limits<double>::infinity();
        }
    } else {
        v = rzf_precoder(hs, p_max, sigma2);
    }
    return sum_rate(hs, v, sigma2).first;
}

}  // namespace detail

struct SelectionResult {
    std::vector<Eigen::Index> indices;
    Eigen::Matrix<double, Eigen::Dynamic, 2> positions;
};

namespace detail {

inline bool spaced_from_all(const Eigen::Matrix<double, Eigen::Dynamic, 2>& coords,
                            const std::vector<Eigen::Index>& chosen, Eigen::Index cand,
                            double min_dist) {
    for (Eigen::Index s : chosen)
        if ((coords.row(cand) - coords.row(s)).norm() < min_dist)
            return false;
    return true;
}

/// Grow a set greedily from a fixed first element; empty result when the
/// spacing dead-ends before reaching n.
inline std::vector<Eigen::Index> grow_greedy(const CMat<double>& h_cand, Eigen::Index first,
                                             Eigen::Index n,
                                             const Eigen::Matrix<double, Eigen::Dynamic, 2>& coords,
                                             double min_dist, double p_max, double sigma2) {
    std::vector<Eigen::Index> chosen{first};
    while (static_cast<Eigen::Index>(chosen.size()) < n) {
        double best = -std::numeric_limits<double>::infinity();
        Eigen::Index best_idx = -1;
        for (Eigen::Index cand = 0; cand < h_cand.rows(); ++cand) {
            if (std::find(chosen.begin(), chosen.end(), cand) != chosen.end())
                continue;
            if (!spaced_from_all(coords, chosen, cand, min_dist))
                continue;
            std::vector<Eigen::Index> trial = chosen;
            trial.push_back(cand);
            const double score = selection_score(h_cand, trial, p_max, sigma2);
            if (score > best) {
                best = score;
                best_idx = cand;
            }
        }
        if (best_idx < 0)
            return {};
        chosen.push_back(best_idx);
    }
    return chosen;
}

/// One-swap local refinement: replace any selected candidate by any
/// unselected one while the score strictly improves.
inline void refine_by_swaps(const CMat<double>& h_cand, std::vector<Eigen::Index>& chosen,
                            const Eigen::Matrix<double, Eigen::Dynamic, 2>& coords,
                            double min_dist, double p_max, double sigma2, int max_passes = 8) {
    double current = selection_score(h_cand, chosen, p_max, sigma2);
    for (int pass = 0; pass < max_passes; ++pass) {
        bool improved = false;
        for (std::size_t slot = 0; slot < chosen.size(); ++slot)
            for (Eigen::Index cand = 0; cand < h_cand.rows(); ++cand) {
                if (std::find(chosen.begin(), chosen.end(), cand) != chosen.end())
                    continue;
                std::vector<Eigen::Index> trial = chosen;
                trial[slot] = cand;
                std::vector<Eigen::Index> others(trial.begin(), trial.end());
                others.erase(others.begin() + static_cast<std::ptrdiff_t>(slot));
                if (!spaced_from_all(coords, others, cand, min_dist))
                    continue;
                const double score = selection_score(h_cand, trial, p_max, sigma2);
                if (score > current) {
                    chosen = trial;
                    current = score;
                    improved = true;
                }
            }
        if (!improved)
            break;
    }
}

}  // namespace detail

/// Antenna selection by restarted greedy growth plus one-swap refinement:
/// greedy sets are grown from each of the strongest single candidates, then
/// locally improved; the best-scoring spacing-feasible set wins. Ties break
/// to the lowest candidate index throughout.
inline SelectionResult greedy_antenna_selection(
    const CMat<double>& h_cand, Eigen::Index n,
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& coords, double min_dist, double p_max,
    double sigma2, int max_restarts = 8) {
    const Eigen::Index c_count = h_cand.rows();
    if (c_count < n)
        throw std::invalid_argument("greedy_antenna_selection: fewer candidates than antennas");

    // restart anchors: candidates ranked by single-element score
    std::vector<Eigen::Index> anchors(static_cast<std::size_t>(c_count));
    std::iota(anchors.begin(), anchors.end(), Eigen::Index(0));
    std::vector<double> solo(static_cast<std::size_t>(c_count));
    for (Eigen::Index i = 0; i < c_count; ++i)
        solo[static_cast<std::size_t>(i)] =
            detail::selection_score(h_cand, {i}, p_max, sigma2);
    std::stable_sort(anchors.begin(), anchors.end(), [&](Eigen::Index a, Eigen::Index b) {
        return solo[static_cast<std::size_t>(a)] > solo[static_cast<std::size_t>(b)];
    });
    if (static_cast<int>(anchors.size()) > max_restarts)
        anchors.resize(static_cast<std::size_t>(max_restarts));

    std::vector<Eigen::Index> best_set;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Eigen::Index first : anchors) {
        auto chosen = detail::grow_greedy(h_cand, first, n, coords, min_dist, p_max, sigma2);
        if (chosen.empty())
            continue;
        detail::refine_by_swaps(h_cand, chosen, coords, min_dist, p_max, sigma2);
        const double score = detail::selection_score(h_cand, chosen, p_max, sigma2);
        if (score > best_score) {
            best_score = score;
            best_set = chosen;
        }
    }
    if (best_set.empty())
        throw std::runtime_error("greedy_antenna_selection: spacing leaves no feasible selection");
    std::sort(best_set.begin(), best_set.end());
    SelectionResult res;
    res.indices = best_set;
    res.positions.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i)
        res.positions.row(i) = coords.row(res.indices[static_cast<std::size_t>(i)]);
    return res;
}

/// Centered uniform linear array along x at half-wavelength spacing, z at
/// the region center. Throws when the aperture cannot hold it.
inline Eigen::Matrix<double, Eigen::Dynamic, 2> fixed_array_layout(Eigen::Index n,
                                                                   double wavelength,
                                                                   double size_x, double size_z) {
    const double span = static_cast<double>(n - 1) * wavelength / 2.0;
    if (span > size_x + 1e-12)
        throw std::invalid_argument("fixed_array_layout: region too small for the array");
    Eigen::Matrix<double, Eigen::Dynamic, 2> a(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        a(i, 0) = size_x / 2.0 + (static_cast<double>(i) - static_cast<double>(n - 1) / 2.0) *
                                     wavelength / 2.0;
        a(i, 1) = size_z / 2.0;
    }
    return a;
}

/// Objective callback for continuous positioning: true channel at a layout.
using ChannelFn = std::function<CMat<double>(const Eigen::Matrix<double, Eigen::Dynamic, 2>&)>;

struct GradientSearchConfig {
    int steps = 40;
    int restarts = 4;
    double step0 = 0.0;  // 0 -> wavelength / 8
};

namespace detail {

inline double layout_rate(const ChannelFn& channel_fn,
                          const Eigen::Matrix<double, Eigen::Dynamic, 2>& a, double p_max,
                          double sigma2) {
    const CMat<double> h = channel_fn(a);
    CMat<double> v;
    try {
        v = zf_precoder(h, p_max);
    } catch (const std::exception&) {
        v = rzf_precoder(h, p_max, sigma2);
    }
    return sum_rate(h, v, sigma2).first;
}

/// Clip into the region box, then push apart pairs closer than min_dist.
inline void project_layout(Eigen::Matrix<double, Eigen::Dynamic, 2>& a, double size_x,
                           double size_z, double min_dist) {
    for (int pass = 0; pass < 8; ++pass) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            a(i, 0) = std::clamp(a(i, 0), 0.0, size_x);
            a(i, 1) = std::clamp(a(i, 1), 0.0, size_z);
        }
        bool moved = false;
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = i + 1; j < a.rows(); ++j) {
                Eigen::RowVector2d d = a.row(i) - a.row(j);
                double dist = d.norm();
                if (dist >= min_dist)
                    continue;
                moved = true;
                if (dist < 1e-12) {
                    d = Eigen::RowVector2d(min_dist / 2.0, 0.0);
                    dist = d.norm();
                }
                const Eigen::RowVector2d push = d / dist * (min_dist - dist) / 2.0;
                a.row(i) += push;
                a.row(j) -= push;
            }
        if (!moved)
            break;
    }
}

}  // namespace detail

/// Projected ascent on the ZF sum rate over continuous antenna positions,
/// numerically differentiated, with backtracking and deterministic random
/// restarts; returns the best feasible iterate seen.
inline Eigen::Matrix<double, Eigen::Dynamic, 2> gradient_position_search(
    const ChannelFn& channel_fn, Eigen::Index n, double size_x, double size_z, double wavelength,
    double p_max, double sigma2, const GradientSearchConfig& cfg, Rng& rng) {
    const double min_dist = wavelength / 2.0;
    const double fd = wavelength * 1e-4;
    double best_rate = -std::numeric_limits<double>::infinity();
    Eigen::Matrix<double, Eigen::Dynamic, 2> best;

    for (int r = 0; r < std::max(cfg.restarts, 1); ++r) {
        Eigen::Matrix<double, Eigen::Dynamic, 2> a(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            a(i, 0) = rng.uniform(0.0, size_x);
            a(i, 1) = rng.uniform(0.0, size_z);
        }
        detail::project_layout(a, size_x, size_z, min_dist);
        double rate = detail::layout_rate(channel_fn, a, p_max, sigma2);
        double step = (cfg.step0 > 0.0) ? cfg.step0 : wavelength / 8.0;

        for (int it = 0; it < cfg.steps; ++it) {
            Eigen::Matrix<double, Eigen::Dynamic, 2> grad(n, 2);
            for (Eigen::Index i = 0; i < n; ++i)
                for (int c = 0; c < 2; ++c) {
                    Eigen::Matrix<double, Eigen::Dynamic, 2> ap = a, am = a;
                    ap(i, c) += fd;
                    am(i, c) -= fd;
                    grad(i, c) = (detail::layout_rate(channel_fn, ap, p_max, sigma2) -
                                  detail::layout_rate(channel_fn, am, p_max, sigma2)) /
                                 (2.0 * fd);
                }
            const double gn = grad.norm();
            if (gn < 1e-12)
                break;
            bool improved = false;
            double trial_step = step;
            for (int bt = 0; bt < 12; ++bt) {
                Eigen::Matrix<double, Eigen::Dynamic, 2> trial = a + trial_step / gn * grad;
                detail::project_layout(trial, size_x, size_z, min_dist);
                const double trial_rate = detail::layout_rate(channel_fn, trial, p_max, sigma2);
                if (trial_rate > rate) {
                    a = trial;
                    rate = trial_rate;
                    step = trial_step * 1.5;
                    improved = true;
                    break;
                }
                trial_step /= 2.0;
            }
            if (!improved)
                break;
        }
        if (rate > best_rate) {
            best_rate = rate;
            best = a;
        }
    }
    return best;
}

/// Uniform scalar quantize/dequantize of a complex matrix: per-user (column)
/// symmetric range, bits split evenly across real/imag components,
/// mid-rise reconstruction. The range itself travels uncounted.
inline CMat<double> quantize_dequantize_csi(const CMat<double>& h, long total_bits) {
    const long components = 2 * static_cast<long>(h.size());
    if (total_bits < components)
        throw std::invalid_argument("quantize_dequantize_csi: below one bit per component");
    const long bits_per = total_bits / components;
    const long levels = 1L << std::min<long>(bits_per, 62);
    CMat<double> out(h.rows(), h.cols());
    for (Eigen::Index k = 0; k < h.cols(); ++k) {
        double range = 0.0;
        for (Eigen::Index r = 0; r < h.rows(); ++r)
            range = std::max({range, std::abs(h(r, k).real()), std::abs(h(r, k).imag())});
        if (range == 0.0) {
            out.col(k).setZero();
            continue;
        }
        const double delta = 2.0 * range / static_cast<double>(levels);
        const auto q = [&](double x) {
            long idx = static_cast<long>(std::floor((x + range) / delta));
            idx = std::clamp<long>(idx, 0, levels - 1);
            return -range + (static_cast<double>(idx) + 0.5) * delta;
        };
        for (Eigen::Index r = 0; r < h.rows(); ++r)
            out(r, k) = {q(h(r, k).real()), q(h(r, k).imag())};
    }
    return out;
}

}  // namespace mant
