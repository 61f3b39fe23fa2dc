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
// End-to-end model: learnable block-diagonal pilot, per-user feedback
// encoders emitting binary words, a shared convolutional trunk over the
// aggregated bits, an antenna-selection head and a precoder head, and the
// penalized negative-sum-rate objective.

#pragma once

#include "mant/channel.hpp"
#include "mant/nn.hpp"

namespace mant {

// ---------------------------------------------------------------------------
// Plain (non-autodiff) reference math shared by baselines and evaluation
// ---------------------------------------------------------------------------

/// Per-user rates and their sum for a channel H (antennas x users) and
/// precoder V of matching shape.
inline std::pair<double, RVec<double>> sum_rate(const CMat<double>& h, const CMat<double>& v,
                                                double sigma2) {
    if (!(sigma2 > 0.0))
        throw std::invalid_argument("sum_rate: sigma2 must be > 0");
    if (h.rows() != v.rows() || h.cols() != v.cols())
        throw std::invalid_argument("sum_rate: dimension mismatch");
    const Eigen::Index k_users = h.cols();
    RVec<double> rates(k_users);
    for (Eigen::Index k = 0; k < k_users; ++k) {
        double sig = 0.0, interf = 0.0;
        for (Eigen::Index j = 0; j < k_users; ++j) {
            const double p = std::norm(h.col(k).dot(v.col(j)));  // |h_k^H v_j|^2
            if (j == k)
                sig = p;
            else
                interf += p;
        }
        rates(k) = std::log2(1.0 + sig / (interf + sigma2));
    }
    return {rates.sum(), rates};
}

/// Hinged minimum-spacing penalty over a set of positions.
inline double distance_penalty(const Eigen::Matrix<double, Eigen::Dynamic, 2>& positions,
                               double wavelength) {
    const double dmin = wavelength / 2.0;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < positions.rows(); ++i)
        for (Eigen::Index j = i + 1; j < positions.rows(); ++j) {
            const double d = (positions.row(i) - positions.row(j)).norm();
            const double h = std::max(0.0, dmin - d);
            acc += h * h;
        }
    return acc;
}

inline bool spacing_violated(const Eigen::Matrix<double, Eigen::Dynamic, 2>& positions,
                             double wavelength, double tol = 1e-12) {
    const double dmin = wavelength / 2.0;
    for (Eigen::Index i = 0; i < positions.rows(); ++i)
        for (Eigen::Index j = i + 1; j < positions.rows(); ++j)
            if ((positions.row(i) - positions.row(j)).norm() < dmin - tol)
                return true;
    return false;
}

/// Pairwise hinge^2 matrix of a candidate grid; the in-graph penalty
/// 0.5 * m^T D m equals the pairwise sum over selected points for a binary
/// mask m.
inline RMat<double> hinge_matrix(const Eigen::Matrix<double, Eigen::Dynamic, 2>& points,
                                 double wavelength) {
    const double dmin = wavelength / 2.0;
    const Eigen::Index g = points.rows();
    RMat<double> d = RMat<double>::Zero(g, g);
    for (Eigen::Index i = 0; i < g; ++i)
        for (Eigen::Index j = 0; j < g; ++j) {
            if (i == j)
                continue;
            const double h = std::max(0.0, dmin - (points.row(i) - points.row(j)).norm());
            d(i, j) = h * h;
        }
    return d;
}

/// Rows of the measurement channel presented to the pilot rounds: rounds
/// cover the measurement positions N at a time; an incomplete final round
/// re-probes the last N positions.
inline std::vector<Eigen::Index> padded_measurement_rows(Eigen::Index m, Eigen::Index n) {
    const Eigen::Index z = (m + n - 1) / n;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n * z));
    for (Eigen::Index i = 0; i < n * z; ++i) {
        const Eigen::Index zi = i / n, r = i % n;
        const Eigen::Index base = std::min(zi * n, std::max<Eigen::Index>(m - n, 0));
        idx[static_cast<std::size_t>(i)] = std::min(base + r, m - 1);
    }
    return idx;
}

// ---------------------------------------------------------------------------
// Fused graph ops for the radio front/back end
// ---------------------------------------------------------------------------

/// Received pilot per user: y = h^H X + e produced as stacked [Re; Im] of
/// length 2*Z*L per batch column. h enters as constant stacks (Re/Im of the
/// padded measurement channel), X via its trainable Re/Im parts.
inline Tensor<double> pilot_receive(const Tensor<double>& x_re, const Tensor<double>& x_im,
                                    const RMat<double>& h_re, const RMat<double>& h_im,
                                    const RMat<double>& noise) {
    const Eigen::Index zl = x_re.cols();
    if (h_re.rows() != x_re.rows() || noise.rows() != 2 * zl || noise.cols() != h_re.cols())
        throw std::invalid_argument("pilot_receive: dimension mismatch");
    RMat<double> y(2 * zl, h_re.cols());
    y.topRows(zl) = x_re.value().transpose() * h_re + x_im.value().transpose() * h_im;
    y.bottomRows(zl) = x_im.value().transpose() * h_re - x_re.value().transpose() * h_im;
    y += noise;
    RMat<double> hre = h_re, him = h_im;
    return detail::make_node<double>(
        std::move(y), {x_re.node(), x_im.node()}, [hre, him, zl](TensorNode<double>& self) {
            const auto gre = self.grad.topRows(zl);
            const auto gim = self.grad.bottomRows(zl);
            if (self.parents[0]->requires_grad) {
                self.parents[0]->ensure_grad();
                self.parents[0]->grad.noalias() += hre * gre.transpose();
                self.parents[0]->grad.noalias() -= him * gim.transpose();
            }
            if (self.parents[1]->requires_grad) {
                self.parents[1]->ensure_grad();
                self.parents[1]->grad.noalias() += him * gre.transpose();
                self.parents[1]->grad.noalias() += hre * gim.transpose();
            }
        });
}

/// Per-user rates of the masked grid precoder against per-sample ground
/// truth channels. v_re/v_im columns hold vec(G x K); output is (K x batch).
inline Tensor<double> sum_rate_op(const Tensor<double>& v_re, const Tensor<double>& v_im,
                                  std::vector<CMat<double>> h_grid, double sigma2) {
    if (!(sigma2 > 0.0))
        throw std::invalid_argument("sum_rate_op: sigma2 must be > 0");
    const Eigen::Index nb = v_re.cols();
    if (static_cast<Eigen::Index>(h_grid.size()) != nb)
        throw std::invalid_argument("sum_rate_op: batch size mismatch");
    const Eigen::Index g = h_grid[0].rows();
    const Eigen::Index k_users = h_grid[0].cols();
    if (v_re.rows() != g * k_users || v_im.rows() != g * k_users)
        throw std::invalid_argument("sum_rate_op: precoder size mismatch");

    RMat<double> rates(k_users, nb);
    std::vector<CMat<double>> cross(static_cast<std::size_t>(nb));  // C = H^H V per sample
    RMat<double> sinr(k_users, nb), den(k_users, nb);
    for (Eigen::Index b = 0; b < nb; ++b) {
        Eigen::Map<const RMat<double>> re(v_re.value().col(b).data(), g, k_users);
        Eigen::Map<const RMat<double>> im(v_im.value().col(b).data(), g, k_users);
        CMat<double> v = re.cast<std::complex<double>>() +
                         std::complex<double>(0, 1) * im.cast<std::complex<double>>();
        CMat<double> c = h_grid[static_cast<std::size_t>(b)].adjoint() * v;
        cross[static_cast<std::size_t>(b)] = c;
        for (Eigen::Index k = 0; k < k_users; ++k) {
            double interf = 0.0;
            for (Eigen::Index j = 0; j < k_users; ++j)
                if (j != k)
                    interf += std::norm(c(k, j));
            den(k, b) = interf + sigma2;
            sinr(k, b) = std::norm(c(k, k)) / den(k, b);
            rates(k, b) = std::log2(1.0 + sinr(k, b));
        }
    }
    auto hg = std::make_shared<std::vector<CMat<double>>>(std::move(h_grid));
    auto cr = std::make_shared<std::vector<CMat<double>>>(std::move(cross));
    return detail::make_node<double>(
        std::move(rates), {v_re.node(), v_im.node()},
        [hg, cr, sinr, den, g, k_users](TensorNode<double>& self) {
            const double ln2 = std::log(2.0);
            const Eigen::Index nb = self.value.cols();
            const bool need_re = self.parents[0]->requires_grad;
            const bool need_im = self.parents[1]->requires_grad;
            if (need_re)
                self.parents[0]->ensure_grad();
            if (need_im)
                self.parents[1]->ensure_grad();
            for (Eigen::Index b = 0; b < nb; ++b) {
                const CMat<double>& c = (*cr)[static_cast<std::size_t>(b)];
                const CMat<double>& h = (*hg)[static_cast<std::size_t>(b)];
                CMat<double> w(k_users, k_users);
                for (Eigen::Index k = 0; k < k_users; ++k) {
                    const double u = self.grad(k, b) / ((1.0 + sinr(k, b)) * ln2 * den(k, b));
                    for (Eigen::Index j = 0; j < k_users; ++j)
                        w(k, j) = (j == k) ? u : -u * sinr(k, b);
                }
                CMat<double> z = h.conjugate() * w.cwiseProduct(c.conjugate());
                if (need_re) {
                    Eigen::Map<RMat<double>> dre(self.parents[0]->grad.col(b).data(), g, k_users);
                    dre += 2.0 * z.real();
                }
                if (need_im) {
                    Eigen::Map<RMat<double>> dim(self.parents[1]->grad.col(b).data(), g, k_users);
                    dim -= 2.0 * z.imag();
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Model pieces
// ---------------------------------------------------------------------------

/// Trainable pilot matrix with block-diagonal support and exact per-column
/// energy. Stored as separate Re/Im parts of shape (N*Z x Z*L).
struct PilotParam {
    Parameter<double>* x_re = nullptr;
    Parameter<double>* x_im = nullptr;
    RMat<double> support;  // 1 inside the blocks
    double p_max = 1.0;

    PilotParam() = default;
    PilotParam(ParamStore<double>& store, Eigen::Index n, Eigen::Index z, Eigen::Index l,
               double power, Rng& rng)
        : p_max(power) {
        support = RMat<double>::Zero(n * z, z * l);
        for (Eigen::Index zi = 0; zi < z; ++zi)
            support.block(zi * n, zi * l, n, l).setOnes();
        RMat<double> re(n * z, z * l), im(n * z, z * l);
        const double sd = std::sqrt(power / static_cast<double>(n) / 2.0);
        for (Eigen::Index c = 0; c < z * l; ++c)
            for (Eigen::Index r = 0; r < n * z; ++r) {
                re(r, c) = sd * rng.normal();
                im(r, c) = sd * rng.normal();
            }
        x_re = &store.add("pilot.re", std::move(re));
        x_im = &store.add("pilot.im", std::move(im));
        project();
    }

    /// Zero entries outside the block support, then scale every column to
    /// energy exactly p_max.
    void project() {
        RMat<double>& re = x_re->value();
        RMat<double>& im = x_im->value();
        re = re.cwiseProduct(support);
        im = im.cwiseProduct(support);
        for (Eigen::Index c = 0; c < re.cols(); ++c) {
            const double e = re.col(c).squaredNorm() + im.col(c).squaredNorm();
            if (!(e > 0.0))
                throw std::runtime_error("pilot projection: zero column");
            const double s = std::sqrt(p_max / e);
            re.col(c) *= s;
            im.col(c) *= s;
        }
    }

    /// Largest |column energy - p_max| (projection exactness probe).
    double max_column_energy_dev() const {
        double dev = 0.0;
        for (Eigen::Index c = 0; c < x_re->value().cols(); ++c) {
            const double e =
                x_re->value().col(c).squaredNorm() + x_im->value().col(c).squaredNorm();
            dev = std::max(dev, std::abs(e - p_max));
        }
        return dev;
    }

    /// True when all mass sits inside the block support.
    bool support_ok(double tol = 0.0) const {
        const RMat<double> off = RMat<double>::Ones(support.rows(), support.cols()) - support;
        return (x_re->value().cwiseProduct(off).cwiseAbs().maxCoeff() <= tol) &&
               (x_im->value().cwiseProduct(off).cwiseAbs().maxCoeff() <= tol);
    }
};

/// Per-user feedback encoder: three dense layers with batchnorm, binary
/// output through the annealed sign quantizer.
struct UserEncoder {
    Affine<double> fc1, fc2, fc3;
    BatchNorm<double> bn1, bn2, bn3;

    UserEncoder() = default;
    UserEncoder(ParamStore<double>& store, const std::string& name, Eigen::Index in,
                Eigen::Index h1, Eigen::Index h2, Eigen::Index bits, Rng& rng)
        : fc1(store, name + ".fc1", in, h1, rng),
          fc2(store, name + ".fc2", h1, h2, rng),
          fc3(store, name + ".fc3", h2, bits, rng),
          bn1(store, name + ".bn1", h1),
          bn2(store, name + ".bn2", h2),
          bn3(store, name + ".bn3", bits) {}

    Tensor<double> forward(const Tensor<double>& y, double omega, bool training,
                           bool soft = false) const {
        Tensor<double> h = relu(bn1.forward(fc1.forward(y), training));
        h = relu(bn2.forward(fc2.forward(h), training));
        Tensor<double> u = bn3.forward(fc3.forward(h), training);
        return soft ? sign_surrogate(u, omega) : sign_ste(u, omega);
    }
};

/// Shared BS-side trunk: three conv blocks over the aggregated bit vector,
/// then a dense projection.
struct Trunk {
    Conv1d<double> c1, c2, c3;
    BatchNorm<double> b1, b2, b3;
    Affine<double> fc;
    BatchNorm<double> bnf;
    Eigen::Index out_dim = 0;

    Trunk() = default;
    Trunk(ParamStore<double>& store, const std::string& name, Eigen::Index in_len,
          const std::vector<int>& channels, Eigen::Index fc_out, Rng& rng)
        : c1(store, name + ".conv1", 1, channels.at(0), 3, 1, rng),
          c2(store, name + ".conv2", channels.at(0), channels.at(1), 3, 1, rng),
          c3(store, name + ".conv3", channels.at(1), channels.at(2), 3, 1, rng),
          b1(store, name + ".bn1", channels.at(0) * in_len),
          b2(store, name + ".bn2", channels.at(1) * in_len),
          b3(store, name + ".bn3", channels.at(2) * in_len),
          fc(store, name + ".fc", channels.at(2) * in_len, fc_out, rng),
          bnf(store, name + ".bnf", fc_out),
          out_dim(fc_out) {}

    Tensor<double> forward(const Tensor<double>& q, bool training) const {
        Tensor<double> h = relu(b1.forward(c1.forward(q), training));
        h = relu(b2.forward(c2.forward(h), training));
        h = relu(b3.forward(c3.forward(h), training));
        h = relu(bnf.forward(fc.forward(h), training));
        return h;
    }
};

/// Two-layer dense head.
struct Head {
    Affine<double> fc1, fc2;

    Head() = default;
    Head(ParamStore<double>& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
         Eigen::Index out, Rng& rng)
        : fc1(store, name + ".fc1", in, hidden, rng), fc2(store, name + ".fc2", hidden, out, rng) {}

    Tensor<double> forward(const Tensor<double>& x) const {
        return fc2.forward(relu(fc1.forward(x)));
    }
};

struct ModelSizes {
    std::vector<int> enc_hidden{1024, 512};
    std::vector<int> trunk_channels{1024, 2048, 1024};
    int trunk_fc = 1024;
    int head_hidden = 512;
};

struct ForwardOptions {
    bool training = true;
    bool feasibility = false;
    bool random_bits = false;      // ablation: replace feedback with noise bits
    bool soft_quantizers = false;  // smooth surrogates in forward (gradient checks)
    double omega = 1.0;
    double noise_scale = 1.0;  // scales the pilot noise std (0 = noiseless pilots)
    Rng* noise_rng = nullptr;     // required
    Rng* ablation_rng = nullptr;  // required when random_bits
    const RMat<double>* force_mask = nullptr;  // bypass selection with a fixed mask
};

/// Pilot transmission, per-user encoding, and bit aggregation shared by the
/// instantaneous and two-timescale pipelines.
struct FrontEnd {
    PilotParam pilot;
    std::vector<UserEncoder> encoders;
    std::vector<Eigen::Index> meas_rows;
    Eigen::Index rounds = 1;
    Eigen::Index pilot_len = 8;
    Eigen::Index bits = 10;
    double noise_power = 0.01;

    FrontEnd() = default;
    FrontEnd(ParamStore<double>& store, const Scenario& sc, const ModelSizes& sizes,
             Eigen::Index meas_count, int feedback_bits, int pilot_length, Rng& rng)
        : pilot_len(pilot_length), bits(feedback_bits), noise_power(sc.noise_power) {
        const Eigen::Index n = sc.num_mas;
        rounds = (meas_count + n - 1) / n;
        meas_rows = padded_measurement_rows(meas_count, n);
        pilot = PilotParam(store, n, rounds, pilot_len, sc.max_power, rng);
        const Eigen::Index in_len = 2 * rounds * pilot_len;
        for (int k = 0; k < sc.num_users; ++k)
            encoders.emplace_back(store, "enc" + std::to_string(k), in_len, sizes.enc_hidden.at(0),
                                  sizes.enc_hidden.at(1), bits, rng);
    }

    /// Full feedback word Q (K*B x batch) for one slot of samples.
    Tensor<double> feedback(const std::vector<const ChannelSample<double>*>& batch,
                            const ForwardOptions& opt) const {
        if (opt.noise_rng == nullptr)
            throw std::invalid_argument("feedback: noise rng required");
        const Eigen::Index nb = static_cast<Eigen::Index>(batch.size());
        const Eigen::Index nz = static_cast<Eigen::Index>(meas_rows.size());
        const Eigen::Index zl = rounds * pilot_len;
        const Eigen::Index k_users = static_cast<Eigen::Index>(encoders.size());
        std::vector<Tensor<double>> bits_k;
        for (Eigen::Index k = 0; k < k_users; ++k) {
            RMat<double> hre(nz, nb), him(nz, nb);
            for (Eigen::Index b = 0; b < nb; ++b)
                for (Eigen::Index i = 0; i < nz; ++i) {
                    const auto v = batch[static_cast<std::size_t>(b)]->h_meas(
                        meas_rows[static_cast<std::size_t>(i)], k);
                    hre(i, b) = v.real();
                    him(i, b) = v.imag();
                }
            RMat<double> noise(2 * zl, nb);
            const double sd = opt.noise_scale * std::sqrt(noise_power / 2.0);
            for (Eigen::Index b = 0; b < nb; ++b)
                for (Eigen::Index i = 0; i < 2 * zl; ++i)
                    noise(i, b) = sd * opt.noise_rng->normal();
            Tensor<double> y = pilot_receive(pilot.x_re->tensor, pilot.x_im->tensor, hre, him, noise);
            if (opt.random_bits) {
                if (opt.ablation_rng == nullptr)
                    throw std::invalid_argument("feedback: ablation rng required");
                RMat<double> rb(bits, nb);
                for (Eigen::Index b = 0; b < nb; ++b)
                    for (Eigen::Index i = 0; i < bits; ++i)
                        rb(i, b) = opt.ablation_rng->uniform() < 0.5 ? -1.0 : 1.0;
                bits_k.push_back(Tensor<double>::constant(std::move(rb)));
            } else {
                bits_k.push_back(encoders[static_cast<std::size_t>(k)].forward(
                    y, opt.omega, opt.training, opt.soft_quantizers));
            }
        }
        return concat_rows(bits_k);
    }
};

struct PrecodeOut {
    Tensor<double> v_re;  // G*K x batch, masked and power-normalized
    Tensor<double> v_im;
};

/// Mask the grid precoder, gather nothing (masked rows are exactly zero),
/// and normalize each column to total power p_max.
inline PrecodeOut precode_phase(const Head& prec_head, const Tensor<double>& feats,
                                const Tensor<double>& mask, Eigen::Index g, Eigen::Index k_users,
                                double p_max) {
    Tensor<double> vraw = prec_head.forward(concat_rows<double>({feats, mask}));
    std::vector<Tensor<double>> tiles(static_cast<std::size_t>(k_users), mask);
    Tensor<double> tiled = concat_rows(tiles);
    Tensor<double> v_re_m = hadamard(slice_rows(vraw, 0, g * k_users), tiled);
    Tensor<double> v_im_m = hadamard(slice_rows(vraw, g * k_users, g * k_users), tiled);
    Tensor<double> v_norm = power_normalize_cols(concat_rows<double>({v_re_m, v_im_m}), p_max);
    return {slice_rows(v_norm, 0, g * k_users), slice_rows(v_norm, g * k_users, g * k_users)};
}

inline Tensor<double> rates_phase(const PrecodeOut& v,
                                  const std::vector<const ChannelSample<double>*>& batch,
                                  double sigma2) {
    std::vector<CMat<double>> h_grid;
    h_grid.reserve(batch.size());
    for (const auto* s : batch)
        h_grid.push_back(s->h_grid);
    return sum_rate_op(v.v_re, v.v_im, std::move(h_grid), sigma2);
}

inline Tensor<double> penalty_phase(const Tensor<double>& mask, const RMat<double>& hinge) {
    return scalar_mul(col_sums(hadamard(mask, matmul(Tensor<double>::constant(hinge), mask))),
                      0.5);
}

struct ForwardResult {
    Tensor<double> loss;     // 1x1
    Tensor<double> rates;    // K x batch
    Tensor<double> penalty;  // 1 x batch
    Tensor<double> probs;    // G x batch
    Tensor<double> mask;     // G x batch
    Tensor<double> bits;     // K*B x batch
    Tensor<double> v_re;     // G*K x batch (masked, normalized)
    Tensor<double> v_im;
    double mean_sum_rate = 0.0;
    double mean_penalty = 0.0;
    double violation_frac = 0.0;
    double max_power_dev = 0.0;  // max |Tr(VV^H) - P| over the batch
};

/// Grid coordinates of the selected entries of one mask column.
inline Eigen::Matrix<double, Eigen::Dynamic, 2> positions_from_mask(const RVec<double>& m,
                                                                    const Grid<double>& grid) {
    const Eigen::Index n = (m.array() > 0.5).count();
    Eigen::Matrix<double, Eigen::Dynamic, 2> a(n, 2);
    Eigen::Index r = 0;
    for (Eigen::Index gidx = 0; gidx < m.size(); ++gidx)
        if (m(gidx) > 0.5)
            a.row(r++) = grid.points.row(gidx);
    return a;
}

/// The instantaneous-CSI pipeline: pilot, feedback, selection, precoding.
class E2EModel {
  public:
    E2EModel(const Scenario& sc, const ModelSizes& sizes, int feedback_bits, int pilot_len,
             double tau, double beta_dist, Rng& rng)
        : scenario_(sc),
          grid_(candidate_grid(sc)),
          meas_(measurement_grid(sc)),
          tau_(tau),
          beta_dist_(beta_dist) {
        front_ = FrontEnd(store_, sc, sizes, meas_.count(), feedback_bits, pilot_len, rng);
        hinge_ = hinge_matrix(grid_.points, sc.wavelength);
        const Eigen::Index kb = static_cast<Eigen::Index>(sc.num_users) * feedback_bits;
        trunk_ = Trunk(store_, "trunk", kb, sizes.trunk_channels, sizes.trunk_fc, rng);
        const Eigen::Index g = grid_.count();
        pos_head_ = Head(store_, "pos_head", sizes.trunk_fc, sizes.head_hidden, g, rng);
        position_params_ = {pos_head_.fc1.weight, pos_head_.fc1.bias, pos_head_.fc2.weight,
                            pos_head_.fc2.bias};
        prec_head_ = Head(store_, "prec_head", sizes.trunk_fc + g, sizes.head_hidden,
                          2 * g * sc.num_users, rng);
    }

    E2EModel(const E2EModel&) = delete;
    E2EModel& operator=(const E2EModel&) = delete;

    ForwardResult forward(const std::vector<const ChannelSample<double>*>& batch,
                          const ForwardOptions& opt) {
        if (batch.empty())
            throw std::invalid_argument("forward: empty batch");
        const Eigen::Index nb = static_cast<Eigen::Index>(batch.size());
        const Eigen::Index n = scenario_.num_mas;
        const Eigen::Index k_users = scenario_.num_users;
        const Eigen::Index g = grid_.count();

        Tensor<double> q = front_.feedback(batch, opt);
        Tensor<double> feats = trunk_.forward(q, opt.training);
        Tensor<double> logits = pos_head_.forward(feats);
        Tensor<double> probs = softmax_cols(logits, tau_);
        Tensor<double> mask;
        if (opt.force_mask != nullptr) {
            if (opt.force_mask->rows() != g || opt.force_mask->cols() != nb)
                throw std::invalid_argument("forward: forced mask shape mismatch");
            mask = Tensor<double>::constant(*opt.force_mask);
        } else if (opt.soft_quantizers) {
            mask = probs;
        } else {
            mask = opt.feasibility
                       ? topn_mask_feasible(probs, n, grid_.points, scenario_.wavelength / 2.0)
                       : topn_mask_ste(probs, n);
        }

        PrecodeOut v = precode_phase(prec_head_, feats, mask, g, k_users, scenario_.max_power);
        Tensor<double> rates = rates_phase(v, batch, scenario_.noise_power);
        Tensor<double> pen = penalty_phase(mask, hinge_);

        const double inv_nb = 1.0 / static_cast<double>(nb);
        Tensor<double> loss = add(scalar_mul(sum_all(rates), -inv_nb),
                                  scalar_mul(sum_all(pen), beta_dist_ * inv_nb));

        ForwardResult out;
        out.loss = loss;
        out.rates = rates;
        out.penalty = pen;
        out.probs = probs;
        out.mask = mask;
        out.bits = q;
        out.v_re = v.v_re;
        out.v_im = v.v_im;
        out.mean_sum_rate = rates.value().sum() * inv_nb;
        out.mean_penalty = pen.value().sum() * inv_nb;
        Eigen::Index violations = 0;
        for (Eigen::Index b = 0; b < nb; ++b) {
            if (spacing_violated(positions_from_mask(mask.value().col(b), grid_),
                                 scenario_.wavelength))
                ++violations;
            const double p = v.v_re.value().col(b).squaredNorm() +
                             v.v_im.value().col(b).squaredNorm();
            out.max_power_dev = std::max(out.max_power_dev, std::abs(p - scenario_.max_power));
        }
        out.violation_frac = static_cast<double>(violations) * inv_nb;
        return out;
    }

    ParamStore<double>& store() { return store_; }
    const ParamStore<double>& store() const { return store_; }
    PilotParam& pilot() { return front_.pilot; }
    const FrontEnd& front() const { return front_; }
    const Grid<double>& grid() const { return grid_; }
    const Grid<double>& meas() const { return meas_; }
    const Scenario& scenario() const { return scenario_; }
    double tau() const { return tau_; }
    double beta_dist() const { return beta_dist_; }

    /// Freeze/unfreeze the selection parameters (alternating training).
    void set_position_trainable(bool on) {
        for (Parameter<double>* p : position_params_)
            p->trainable = on;
    }

    /// FNV-1a over the raw bytes of the selection parameters.
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
    RMat<double> hinge_;
    ParamStore<double> store_;
    FrontEnd front_;
    Trunk trunk_;
    Head pos_head_;
    Head prec_head_;
    std::vector<Parameter<double>*> position_params_;
};

}  // namespace mant
