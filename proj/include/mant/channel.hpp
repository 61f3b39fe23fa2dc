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

#include "mant/common.hpp"

#include <cstdint>
#include <string>
#include <utility>

namespace mant {

/// Static description of one simulated cell: geometry of the user /
/// scatterer volume, the movable-antenna region at the BS, and the radio
/// parameters. All lengths are meters, powers are watts.
struct Scenario {
    Eigen::Vector2d region_x_m{0.0, 100.0};  // user/scatterer volume
    Eigen::Vector2d region_y_m{0.0, 100.0};
    Eigen::Vector2d region_z_m{-5.0, 5.0};
    Eigen::Vector3d bs_position{50.0, 0.0, 10.0};
    double wavelength = 1.0;
    int num_users = 2;
    int num_mas = 4;
    int tx_paths = 4;
    int rx_paths = 4;
    double rician_factor = 10.0;  // linear
    double measurement_spacing = 0.5;  // default wavelength/2
    double grid_spacing = 0.25;        // default wavelength/4
    double region_size_x = 1.75;       // movable-antenna aperture along x
    double region_size_z = 0.25;       // and along z
    double noise_power = 0.01;
    double max_power = 1.0;
    // expected power of the direct path and of each scattered PRM entry,
    // before the Rician rebalancing (which preserves their sum)
    double los_path_power = 0.5;
    double nlos_entry_power = 1.0 / 30.0;
    std::uint64_t rng_seed = 1;

    void validate() const {
        if (!(wavelength > 0.0))
            throw std::invalid_argument("scenario: wavelength must be > 0");
        if (num_users < 1 || num_mas < 1)
            throw std::invalid_argument("scenario: num_users and num_mas must be >= 1");
        if (tx_paths < 1 || rx_paths < 1)
            throw std::invalid_argument("scenario: path counts must be >= 1");
        if (!(region_size_x > 0.0) || !(region_size_z > 0.0))
            throw std::invalid_argument("scenario: movable region sizes must be > 0");
        if (!(noise_power > 0.0))
            throw std::invalid_argument("scenario: noise_power must be > 0");
        if (!(max_power > 0.0))
            throw std::invalid_argument("scenario: max_power must be > 0");
        if (!(grid_spacing > 0.0) || grid_spacing > measurement_spacing)
            throw std::invalid_argument("scenario: need 0 < grid_spacing <= measurement_spacing");
        if (!(rician_factor > 0.0))
            throw std::invalid_argument("scenario: rician_factor must be > 0");
        if (!(los_path_power > 0.0) || !(nlos_entry_power > 0.0))
            throw std::invalid_argument("scenario: path powers must be > 0");
    }
};

/// Multipath geometry and gains for one user.
template <typename Scalar>
struct PathSet {
    Eigen::Matrix<Scalar, 2, Eigen::Dynamic> tx_wavevectors;  // rad/m, one column per tx path
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> rx_wavevectors;  // rad/m, one column per rx path
    CMat<Scalar> prm;                                         // L_t x L_r path-response matrix
    RVec<Scalar> power_vector;                                // expected per-tx-path power b
    Eigen::Matrix<Scalar, 3, 1> user_position;

    Eigen::Index tx_count() const { return tx_wavevectors.cols(); }
    Eigen::Index rx_count() const { return rx_wavevectors.cols(); }
};

/// Candidate antenna positions in the movable region, row-major over
/// (nx, nz): index g = ix*nz + iz, point (ix*spacing, iz*spacing).
template <typename Scalar>
struct Grid {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 2> points;
    Scalar spacing = Scalar(0);
    int nx = 0;
    int nz = 0;

    Eigen::Index count() const { return points.rows(); }
};

template <typename Scalar>
Grid<Scalar> make_grid(Scalar size_x, Scalar size_z, Scalar spacing) {
    if (!(spacing > Scalar(0)))
        throw std::invalid_argument("make_grid: spacing must be > 0");
    const int nx = static_cast<int>(std::floor(static_cast<double>(size_x / spacing) + 1e-9)) + 1;
    const int nz = static_cast<int>(std::floor(static_cast<double>(size_z / spacing) + 1e-9)) + 1;
    Grid<Scalar> g;
    g.spacing = spacing;
    g.nx = nx;
    g.nz = nz;
    g.points.resize(static_cast<Eigen::Index>(nx) * nz, 2);
    Eigen::Index row = 0;
    for (int ix = 0; ix < nx; ++ix)
        for (int iz = 0; iz < nz; ++iz, ++row) {
            g.points(row, 0) = Scalar(ix) * spacing;
            g.points(row, 1) = Scalar(iz) * spacing;
        }
    return g;
}

inline Grid<double> candidate_grid(const Scenario& sc) {
    return make_grid<double>(sc.region_size_x, sc.region_size_z, sc.grid_spacing);
}

inline Grid<double> measurement_grid(const Scenario& sc) {
    return make_grid<double>(sc.region_size_x, sc.region_size_z, sc.measurement_spacing);
}

/// Departure-side wavevector for a unit direction (2-D, antenna plane).
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> tx_wavevector(const Eigen::Matrix<Scalar, 3, 1>& dir, Scalar wavelength) {
    const Scalar theta = std::asin(std::clamp(dir(2), Scalar(-1), Scalar(1)));  // elevation
    const Scalar phi = std::atan2(dir(1), dir(0));                             // azimuth
    const Scalar c = Scalar(kTwoPi) / wavelength;
    return {c * std::cos(theta) * std::cos(phi), c * std::cos(theta) * std::sin(phi)};
}

/// Arrival-side wavevector for a unit direction (3-D).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> rx_wavevector(const Eigen::Matrix<Scalar, 3, 1>& dir, Scalar wavelength) {
    const Scalar theta = std::asin(std::clamp(dir(2), Scalar(-1), Scalar(1)));
    const Scalar phi = std::atan2(dir(1), dir(0));
    const Scalar c = Scalar(kTwoPi) / wavelength;
    return {c * std::cos(theta) * std::cos(phi), c * std::cos(theta) * std::sin(phi),
            c * std::sin(theta)};
}

/// Unit-modulus field response of the tx paths at one antenna position.
template <typename Scalar>
CVec<Scalar> transmit_frv(const Eigen::Matrix<Scalar, 2, 1>& position,
                          const Eigen::Matrix<Scalar, 2, Eigen::Dynamic>& wavevectors) {
    CVec<Scalar> v(wavevectors.cols());
    for (Eigen::Index l = 0; l < wavevectors.cols(); ++l) {
        const Scalar phase = position.dot(wavevectors.col(l));
        v(l) = std::polar(Scalar(1), phase);
    }
    return v;
}

/// Unit-modulus field response of the rx paths at the user position.
template <typename Scalar>
CVec<Scalar> receive_frv(const Eigen::Matrix<Scalar, 3, 1>& position,
                         const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& wavevectors) {
    CVec<Scalar> v(wavevectors.cols());
    for (Eigen::Index i = 0; i < wavevectors.cols(); ++i) {
        const Scalar phase = position.dot(wavevectors.col(i));
        v(i) = std::polar(Scalar(1), phase);
    }
    return v;
}

/// Channel at the given antenna positions for a fixed tx path response psi:
/// h[n] = q(a_n)^H psi.
template <typename Scalar>
CVec<Scalar> channel_from_path_response(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 2>& positions,
    const Eigen::Matrix<Scalar, 2, Eigen::Dynamic>& tx_wavevectors, const CVec<Scalar>& psi) {
    if (psi.size() != tx_wavevectors.cols())
        throw std::invalid_argument("channel_from_path_response: psi/wavevector size mismatch");
    CVec<Scalar> h(positions.rows());
    for (Eigen::Index n = 0; n < positions.rows(); ++n) {
        const Eigen::Matrix<Scalar, 2, 1> a = positions.row(n).transpose();
        std::complex<Scalar> acc(0, 0);
        for (Eigen::Index l = 0; l < psi.size(); ++l) {
            const Scalar phase = a.dot(tx_wavevectors.col(l));
            acc += std::polar(Scalar(1), -phase) * psi(l);
        }
        h(n) = acc;
    }
    return h;
}

/// Deterministic tx path response psi = Sigma * f(u) of one user.
template <typename Scalar>
CVec<Scalar> path_response(const PathSet<Scalar>& ps) {
    if (ps.prm.rows() != ps.tx_count() || ps.prm.cols() != ps.rx_count())
        throw std::invalid_argument("path_response: prm dimensions mismatch wavevector counts");
    const CVec<Scalar> f = receive_frv<Scalar>(ps.user_position, ps.rx_wavevectors);
    return ps.prm * f;
}

/// Instantaneous channel h = Q(A)^H Sigma f(u) at N antenna positions.
template <typename Scalar>
CVec<Scalar> instantaneous_channel(const Eigen::Matrix<Scalar, Eigen::Dynamic, 2>& positions,
                                   const PathSet<Scalar>& ps) {
    return channel_from_path_response<Scalar>(positions, ps.tx_wavevectors, path_response(ps));
}

/// Random tx path response with independent CN(0, b_l) entries.
template <typename Scalar>
CVec<Scalar> draw_path_response(const PathSet<Scalar>& ps, Rng& rng) {
    CVec<Scalar> psi(ps.power_vector.size());
    for (Eigen::Index l = 0; l < psi.size(); ++l) {
        const Scalar b = ps.power_vector(l);
        if (b < Scalar(0))
            throw std::invalid_argument("draw_path_response: negative path power");
        const std::complex<double> z = rng.cnormal(static_cast<double>(b));
        psi(l) = std::complex<Scalar>(static_cast<Scalar>(z.real()), static_cast<Scalar>(z.imag()));
    }
    return psi;
}

/// One draw of the statistical channel h = Q(A)^H psi, psi ~ CN(0, Diag(b)).
template <typename Scalar>
CVec<Scalar> statistical_channel_draw(const Eigen::Matrix<Scalar, Eigen::Dynamic, 2>& positions,
                                      const PathSet<Scalar>& ps, Rng& rng) {
    return channel_from_path_response<Scalar>(positions, ps.tx_wavevectors,
                                              draw_path_response(ps, rng));
}

/// Channel matrix (positions x users) for a set of per-user path responses.
template <typename Scalar>
CMat<Scalar> channel_matrix(const Eigen::Matrix<Scalar, Eigen::Dynamic, 2>& positions,
                            const std::vector<PathSet<Scalar>>& users,
                            const std::vector<CVec<Scalar>>& psis) {
    CMat<Scalar> h(positions.rows(), static_cast<Eigen::Index>(users.size()));
    for (std::size_t k = 0; k < users.size(); ++k)
        h.col(static_cast<Eigen::Index>(k)) =
            channel_from_path_response<Scalar>(positions, users[k].tx_wavevectors, psis[k]);
    return h;
}

template <typename Scalar>
CMat<Scalar> channel_matrix(const Eigen::Matrix<Scalar, Eigen::Dynamic, 2>& positions,
                            const std::vector<PathSet<Scalar>>& users) {
    std::vector<CVec<Scalar>> psis;
    psis.reserve(users.size());
    for (const auto& u : users)
        psis.push_back(path_response(u));
    return channel_matrix(positions, users, psis);
}

/// Scale factors (eta_los, eta_nlos) that set the LoS/NLoS power ratio to
/// beta while preserving the total expected power.
inline std::pair<double, double> rician_scale(double p_los, double p_nlos, double beta) {
    if (!(p_los > 0.0) || !(p_nlos > 0.0) || !(beta > 0.0))
        throw std::invalid_argument("rician_scale: inputs must be positive");
    const double total = p_los + p_nlos;
    const double eta_los = std::sqrt(total / p_los * beta / (1.0 + beta));
    const double eta_nlos = std::sqrt(total / p_nlos * 1.0 / (1.0 + beta));
    return {eta_los, eta_nlos};
}

namespace detail {

inline Eigen::Vector3d uniform_in_box(const Scenario& sc, Rng& rng) {
    return {rng.uniform(sc.region_x_m(0), sc.region_x_m(1)),
            rng.uniform(sc.region_y_m(0), sc.region_y_m(1)),
            rng.uniform(sc.region_z_m(0), sc.region_z_m(1))};
}

}  // namespace detail

/// Draw the multipath geometry for every user: user positions uniform in
/// the region, one shared-count set of scatterers per user placed at least
/// 1 m away from BS and user, path 0 reserved for the direct BS-user ray.
/// PRM magnitudes follow the two-component Rician split of the scenario.
template <typename Scalar = double>
std::vector<PathSet<Scalar>> draw_path_sets(const Scenario& sc, Rng& rng) {
    sc.validate();
    const int lt = sc.tx_paths;
    const int lr = sc.rx_paths;
    const int num_scatterers = std::max(lt, lr) - 1;

    std::vector<PathSet<Scalar>> out;
    out.reserve(static_cast<std::size_t>(sc.num_users));
    for (int k = 0; k < sc.num_users; ++k) {
        PathSet<Scalar> ps;
        const Eigen::Vector3d user = detail::uniform_in_box(sc, rng);
        ps.user_position = user.cast<Scalar>();

        std::vector<Eigen::Vector3d> scat(static_cast<std::size_t>(num_scatterers));
        for (auto& s : scat) {
            bool placed = false;
            for (int attempt = 0; attempt < 10000; ++attempt) {
                const Eigen::Vector3d c = detail::uniform_in_box(sc, rng);
                if ((c - sc.bs_position).norm() >= 1.0 && (c - user).norm() >= 1.0) {
                    s = c;
                    placed = true;
                    break;
                }
            }
            if (!placed)
                throw std::runtime_error("draw_path_sets: region too small to place scatterers");
        }

        ps.tx_wavevectors.resize(2, lt);
        for (int l = 0; l < lt; ++l) {
            const Eigen::Vector3d target = (l == 0) ? user : scat[static_cast<std::size_t>(l - 1)];
            const Eigen::Vector3d dir = (target - sc.bs_position).normalized();
            ps.tx_wavevectors.col(l) =
                tx_wavevector<double>(dir, sc.wavelength).template cast<Scalar>();
        }
        ps.rx_wavevectors.resize(3, lr);
        for (int i = 0; i < lr; ++i) {
            const Eigen::Vector3d target = (i == 0) ? sc.bs_position : scat[static_cast<std::size_t>(i - 1)];
            const Eigen::Vector3d dir = (target - user).normalized();
            ps.rx_wavevectors.col(i) =
                rx_wavevector<double>(dir, sc.wavelength).template cast<Scalar>();
        }

        // PRM: entry (0,0) is the direct ray, everything else is scattered.
        // Expected powers are los_path_power for the direct entry and
        // nlos_entry_power per scattered entry (more paths carry more
        // energy); the Rician rebalancing then enforces the requested
        // LoS/NLoS ratio while preserving the total.
        const Eigen::Index total_entries = static_cast<Eigen::Index>(lt) * lr;
        ps.prm.resize(lt, lr);
        if (total_entries == 1) {
            ps.prm(0, 0) = std::complex<Scalar>(
                std::polar(std::sqrt(sc.los_path_power), rng.uniform(0.0, kTwoPi)));
        } else {
            const double p_nlos =
                sc.nlos_entry_power * static_cast<double>(total_entries - 1);
            const auto [eta_los, eta_nlos] =
                rician_scale(sc.los_path_power, p_nlos, sc.rician_factor);
            for (int l = 0; l < lt; ++l)
                for (int i = 0; i < lr; ++i) {
                    const double phase = rng.uniform(0.0, kTwoPi);
                    if (l == 0 && i == 0) {
                        ps.prm(l, i) = std::complex<Scalar>(
                            std::polar(eta_los * std::sqrt(sc.los_path_power), phase));
                    } else {
                        const double mag = eta_nlos * rng.rayleigh_ms(sc.nlos_entry_power);
                        ps.prm(l, i) = std::complex<Scalar>(std::polar(mag, phase));
                    }
                }
        }

        ps.power_vector = ps.prm.cwiseAbs2().rowwise().sum();
        out.push_back(std::move(ps));
    }
    return out;
}

/// One dataset record: ground-truth channel on the candidate grid plus the
/// channel at the (coarser) measurement positions, consistent draws.
template <typename Scalar>
struct ChannelSample {
    CMat<Scalar> h_grid;  // G x K
    CMat<Scalar> h_meas;  // M x K
    std::uint32_t slot = 0;
};

template <typename Scalar = double>
ChannelSample<Scalar> instantaneous_sample(const Grid<Scalar>& grid, const Grid<Scalar>& meas,
                                           const std::vector<PathSet<Scalar>>& users) {
    ChannelSample<Scalar> s;
    std::vector<CVec<Scalar>> psis;
    psis.reserve(users.size());
    for (const auto& u : users)
        psis.push_back(path_response(u));
    s.h_grid = channel_matrix<Scalar>(grid.points, users, psis);
    s.h_meas = channel_matrix<Scalar>(meas.points, users, psis);
    return s;
}

template <typename Scalar = double>
ChannelSample<Scalar> statistical_sample(const Grid<Scalar>& grid, const Grid<Scalar>& meas,
                                         const std::vector<PathSet<Scalar>>& users, Rng& rng) {
    ChannelSample<Scalar> s;
    std::vector<CVec<Scalar>> psis;
    psis.reserve(users.size());
    for (const auto& u : users)
        psis.push_back(draw_path_response(u, rng));
    s.h_grid = channel_matrix<Scalar>(grid.points, users, psis);
    s.h_meas = channel_matrix<Scalar>(meas.points, users, psis);
    return s;
}

}  // namespace mant
