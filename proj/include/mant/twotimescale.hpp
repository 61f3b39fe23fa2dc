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
// Two-timescale pipeline: a sequence encoder digests the feedback bits of a
// whole episode into one long-term antenna layout; precoding stays per slot.

#pragma once

#include "mant/e2e.hpp"
#include "mant/transformer.hpp"

#include <functional>

namespace mant {

/// One episode: consecutive slots drawn from a fixed multipath geometry.
using Episode = std::vector<const ChannelSample<double>*>;

struct StatForwardResult {
    Tensor<double> loss;             // 1x1
    Tensor<double> mask;             // G x episodes (one layout per episode)
    Tensor<double> probs;            // G x episodes
    std::vector<Tensor<double>> slot_rates;  // per slot (K x episodes)
    double mean_sum_rate = 0.0;      // per-slot mean
    double mean_penalty = 0.0;
    double violation_frac = 0.0;
    double max_power_dev = 0.0;
};

/// Statistical-CSI model: shared front end and precoder, layout chosen once
/// per episode from the whole feedback history.
class StatModel {
  public:
    StatModel(const Scenario& sc, const ModelSizes& sizes, const EncoderConfig& enc_cfg,
              int feedback_bits, int pilot_len, int history_slots, double tau, double beta_dist,
              Rng& rng)
        : scenario_(sc),
          grid_(candidate_grid(sc)),
          meas_(measurement_grid(sc)),
          tau_(tau),
          beta_dist_(beta_dist),
          history_slots_(history_slots) {
        front_ = FrontEnd(store_, sc, sizes, meas_.count(), feedback_bits, pilot_len, rng);
        hinge_ = hinge_matrix(grid_.points, sc.wavelength);
        const Eigen::Index kb = static_cast<Eigen::Index>(sc.num_users) * feedback_bits;
        trunk_ = Trunk(store_, "trunk", kb, sizes.trunk_channels, sizes.trunk_fc, rng);
        const Eigen::Index g = grid_.count();
        prec_head_ = Head(store_, "prec_head", sizes.trunk_fc + g, sizes.head_hidden,
                          2 * g * sc.num_users, rng);

        const std::size_t first = store_.params().size();
        seq_ = SequenceEncoder<double>(store_, "stat_enc", kb, enc_cfg, rng);
        sel_head_ = Head(store_, "stat_head", enc_cfg.d_model, sizes.head_hidden, g, rng);
        for (std::size_t i = first; i < store_.params().size(); ++i)
            position_params_.push_back(&store_.params()[i]);
    }

    StatModel(const StatModel&) = delete;
    StatModel& operator=(const StatModel&) = delete;

    /// Forward over a batch of episodes. Every episode must have exactly
    /// history_slots slots; the layout is computed once per episode and
    /// reused by every slot's precoder.
    StatForwardResult forward(const std::vector<Episode>& episodes, const ForwardOptions& opt) {
        if (episodes.empty())
            throw std::invalid_argument("stat forward: empty batch");
        const Eigen::Index ne = static_cast<Eigen::Index>(episodes.size());
        const Eigen::Index t_slots = history_slots_;
        for (const auto& ep : episodes)
            if (static_cast<Eigen::Index>(ep.size()) != t_slots)
                throw std::invalid_argument("stat forward: episode length mismatch");
        const Eigen::Index n = scenario_.num_mas;
        const Eigen::Index k_users = scenario_.num_users;
        const Eigen::Index g = grid_.count();

        // Per-slot feedback words across the episode batch.
        std::vector<Tensor<double>> q_slots;
        q_slots.reserve(static_cast<std::size_t>(t_slots));
        for (Eigen::Index t = 0; t < t_slots; ++t) {
            std::vector<const ChannelSample<double>*> slot;
            slot.reserve(static_cast<std::size_t>(ne));
            for (const auto& ep : episodes)
                slot.push_back(ep[static_cast<std::size_t>(t)]);
            q_slots.push_back(front_.feedback(slot, opt));
        }

        // Sequence encoding: one token per slot, CLS output per episode.
        std::vector<Tensor<double>> cls_cols;
        cls_cols.reserve(static_cast<std::size_t>(ne));
        for (Eigen::Index e = 0; e < ne; ++e) {
            std::vector<Tensor<double>> rows;
            rows.reserve(static_cast<std::size_t>(t_slots));
            for (Eigen::Index t = 0; t < t_slots; ++t)
                rows.push_back(transpose(slice_cols(q_slots[static_cast<std::size_t>(t)], e, 1)));
            cls_cols.push_back(seq_.encode_one(concat_rows(rows)));
        }
        Tensor<double> feats = concat_cols(cls_cols);  // d_model x episodes
        Tensor<double> logits = sel_head_.forward(feats);
        Tensor<double> probs = softmax_cols(logits, tau_);
        Tensor<double> mask;
        if (opt.force_mask != nullptr) {
            if (opt.force_mask->rows() != g || opt.force_mask->cols() != ne)
                throw std::invalid_argument("stat forward: forced mask shape mismatch");
            mask = Tensor<double>::constant(*opt.force_mask);
        } else if (opt.soft_quantizers) {
            mask = probs;
        } else {
            mask = opt.feasibility
                       ? topn_mask_feasible(probs, n, grid_.points, scenario_.wavelength / 2.0)
                       : topn_mask_ste(probs, n);
        }

        // Per-slot precoding against the fixed episode layout.
        StatForwardResult out;
        Tensor<double> rate_acc;
        for (Eigen::Index t = 0; t < t_slots; ++t) {
            std::vector<const ChannelSample<double>*> slot;
            slot.reserve(static_cast<std::size_t>(ne));
            for (const auto& ep : episodes)
                slot.push_back(ep[static_cast<std::size_t>(t)]);
            Tensor<double> feats_t = trunk_.forward(q_slots[static_cast<std::size_t>(t)],
                                                    opt.training);
            PrecodeOut v = precode_phase(prec_head_, feats_t, mask, g, k_users,
                                         scenario_.max_power);
            Tensor<double> rates = rates_phase(v, slot, scenario_.noise_power);
            out.slot_rates.push_back(rates);
            Tensor<double> s = sum_all(rates);
            rate_acc = (t == 0) ? s : add(rate_acc, s);
            for (Eigen::Index e = 0; e < ne; ++e) {
                const double p = v.v_re.value().col(e).squaredNorm() +
                                 v.v_im.value().col(e).squaredNorm();
                out.max_power_dev = std::max(out.max_power_dev,
                                             std::abs(p - scenario_.max_power));
            }
        }
        Tensor<double> pen = penalty_phase(mask, hinge_);

        const double inv = 1.0 / static_cast<double>(ne * t_slots);
        const double inv_ne = 1.0 / static_cast<double>(ne);
        Tensor<double> loss =
            add(scalar_mul(rate_acc, -inv), scalar_mul(sum_all(pen), beta_dist_ * inv_ne));

        out.loss = loss;
        out.mask = mask;
        out.probs = probs;
        out.mean_sum_rate = -1.0;  // filled below
        double rate_sum = 0.0;
        for (const auto& r : out.slot_rates)
            rate_sum += r.value().sum();
        out.mean_sum_rate = rate_sum * inv;
        out.mean_penalty = pen.value().sum() * inv_ne;
        Eigen::Index violations = 0;
        for (Eigen::Index e = 0; e < ne; ++e)
            if (spacing_violated(positions_from_mask(mask.value().col(e), grid_),
                                 scenario_.wavelength))
                ++violations;
        out.violation_frac = static_cast<double>(violations) * inv_ne;
        return out;
    }

    ParamStore<double>& store() { return store_; }
    const ParamStore<double>& store() const { return store_; }
    PilotParam& pilot() { return front_.pilot; }
    const FrontEnd& front() const { return front_; }
    const Grid<double>& grid() const { return grid_; }
    const Scenario& scenario() const { return scenario_; }
    int history_slots() const { return history_slots_; }

    void set_position_trainable(bool on) {
        for (Parameter<double>* p : position_params_)
            p->trainable = on;
    }

    std::uint64_t position_param_hash() const {
        std::uint64_t h = 1469598103934665603ull;
        for (const Parameter<double>* p : position_params_) {
            const auto* bytes = reinterpret_cast<const unsigned char*>(p->value().data());
            const std::size_t len = static_cast<std::size_t>(p->value().size()) * sizeof(double);
            for (std::size_t i = 0; i < len; ++i) {
                h ^= bytes[i];
                h *= 1099511628211ull;
            }
        }
        return h;
    }

  private:
    Scenario scenario_;
    Grid<double> grid_;
    Grid<double> meas_;
    double tau_;
    double beta_dist_;
    int history_slots_;
    RMat<double> hinge_;
    ParamStore<double> store_;
    FrontEnd front_;
    Trunk trunk_;
    Head prec_head_;
    SequenceEncoder<double> seq_;
    Head sel_head_;
    std::vector<Parameter<double>*> position_params_;
};

// ---------------------------------------------------------------------------
// Layout evaluation
// ---------------------------------------------------------------------------

/// Precoder factory used by ergodic evaluation: maps the true channel at the
/// layout to a transmit matrix.
using PrecodingFn = std::function<CMat<double>(const CMat<double>&)>;

/// Monte-Carlo mean sum rate of a fixed layout under per-draw precoding on
/// statistical channel draws.
inline double ergodic_eval(const Eigen::Matrix<double, Eigen::Dynamic, 2>& layout,
                           const std::vector<PathSet<double>>& users, double sigma2,
                           int num_draws, const PrecodingFn& precoder, Rng& rng) {
    if (num_draws < 1)
        throw std::invalid_argument("ergodic_eval: num_draws must be >= 1");
    double acc = 0.0;
    for (int d = 0; d < num_draws; ++d) {
        CMat<double> h(layout.rows(), static_cast<Eigen::Index>(users.size()));
        for (std::size_t k = 0; k < users.size(); ++k)
            h.col(static_cast<Eigen::Index>(k)) = statistical_channel_draw<double>(layout, users[k], rng);
        const CMat<double> v = precoder(h);
        acc += sum_rate(h, v, sigma2).first;
    }
    return acc / static_cast<double>(num_draws);
}

/// Random spacing-feasible layout of n grid points (rejection on the
/// feasibility test, deterministic under the given rng).
inline Eigen::Matrix<double, Eigen::Dynamic, 2> random_layout(const Grid<double>& grid,
                                                              Eigen::Index n, double wavelength,
                                                              Rng& rng, bool feasible = true) {
    const Eigen::Index g = grid.count();
    if (n > g)
        throw std::invalid_argument("random_layout: n exceeds grid size");
    for (int attempt = 0; attempt < 10000; ++attempt) {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(g));
        std::iota(idx.begin(), idx.end(), Eigen::Index(0));
        rng.shuffle(idx);
        Eigen::Matrix<double, Eigen::Dynamic, 2> a(n, 2);
        for (Eigen::Index i = 0; i < n; ++i)
            a.row(i) = grid.points.row(idx[static_cast<std::size_t>(i)]);
        if (!feasible || !spacing_violated(a, wavelength))
            return a;
    }
    throw std::runtime_error("random_layout: no feasible layout found");
}

}  // namespace mant
