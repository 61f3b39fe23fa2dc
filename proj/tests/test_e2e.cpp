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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mant/e2e.hpp"

using namespace mant;

namespace {

Scenario desk_scenario() {
    Scenario sc;  // defaults are already desk scale: N=4, K=2, G=16, M=4
    return sc;
}

ModelSizes tiny_sizes() {
    ModelSizes s;
    s.enc_hidden = {16, 8};
    s.trunk_channels = {2, 4, 2};
    s.trunk_fc = 16;
    s.head_hidden = 16;
    return s;
}

std::vector<ChannelSample<double>> make_samples(const Scenario& sc, int n, std::uint64_t seed) {
    Rng rng(seed);
    const auto grid = candidate_grid(sc);
    const auto meas = measurement_grid(sc);
    std::vector<ChannelSample<double>> out;
    for (int i = 0; i < n; ++i) {
        const auto ps = draw_path_sets(sc, rng);
        out.push_back(instantaneous_sample<double>(grid, meas, ps));
    }
    return out;
}

std::vector<const ChannelSample<double>*> as_batch(const std::vector<ChannelSample<double>>& s) {
    std::vector<const ChannelSample<double>*> b;
    for (const auto& x : s)
        b.push_back(&x);
    return b;
}

}  // namespace

TEST_CASE("pilot parameter projection") {
    Rng rng(1);
    ParamStore<double> store;
    PilotParam pilot(store, 4, 2, 8, 1.0, rng);  // N=4, Z=2, L=8

    SUBCASE("columns carry exactly the power budget") {
        CHECK(pilot.max_column_energy_dev() < 1e-12);
    }
    SUBCASE("off-block entries are exactly zero") {
        CHECK(pilot.support_ok());
        // top-right block must be zero: rows 0..3, cols 8..15
        CHECK(pilot.x_re->value().block(0, 8, 4, 8).cwiseAbs().maxCoeff() == 0.0);
        CHECK(pilot.x_im->value().block(4, 0, 4, 8).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("projection is idempotent") {
        const RMat<double> re = pilot.x_re->value();
        const RMat<double> im = pilot.x_im->value();
        pilot.project();
        CHECK((pilot.x_re->value() - re).cwiseAbs().maxCoeff() < 1e-13);
        CHECK((pilot.x_im->value() - im).cwiseAbs().maxCoeff() < 1e-13);
    }
    SUBCASE("perturbed parameters are pulled back onto the constraint set") {
        pilot.x_re->value().array() += 0.37;  // violates support and energy
        pilot.project();
        CHECK(pilot.support_ok());
        CHECK(pilot.max_column_energy_dev() < 1e-12);
    }
}

TEST_CASE("noiseless identity probing recovers conjugate channel entries") {
    // One round, L = N, pilot = sqrt(P) I: y = h^H X = sqrt(P) conj(h)^T
    Rng rng(2);
    ParamStore<double> store;
    const Eigen::Index n = 4;
    PilotParam pilot(store, n, 1, n, 1.0, rng);
    pilot.x_re->value() = RMat<double>::Identity(n, n);
    pilot.x_im->value().setZero();
    pilot.project();  // identity columns have unit energy already

    RMat<double> hre(n, 1), him(n, 1);
    Rng hr(3);
    for (Eigen::Index i = 0; i < n; ++i) {
        hre(i, 0) = hr.uniform(-1, 1);
        him(i, 0) = hr.uniform(-1, 1);
    }
    const RMat<double> noise = RMat<double>::Zero(2 * n, 1);
    const auto y = pilot_receive(pilot.x_re->tensor, pilot.x_im->tensor, hre, him, noise);
    for (Eigen::Index i = 0; i < n; ++i) {
        CHECK(y.value()(i, 0) == doctest::Approx(hre(i, 0)).epsilon(1e-12));
        CHECK(y.value()(n + i, 0) == doctest::Approx(-him(i, 0)).epsilon(1e-12));
    }
}

TEST_CASE("twenty dB noise figure gives 0.01 noise power") {
    const Scenario sc = desk_scenario();
    CHECK(10.0 * std::log10(sc.max_power / sc.noise_power) == doctest::Approx(20.0));
}

TEST_CASE("sum rate evaluation") {
    SUBCASE("single-user closed form") {
        CMat<double> h(1, 1), v(1, 1);
        h(0, 0) = {1.0, 0.0};
        v(0, 0) = {1.0, 0.0};  // P = 1
        const auto [sum, per_user] = sum_rate(h, v, 0.01);
        CHECK(sum == doctest::Approx(std::log2(101.0)).epsilon(1e-12));
        CHECK(per_user.size() == 1);
    }
    SUBCASE("orthogonal users see no interference") {
        CMat<double> h = CMat<double>::Zero(2, 2);
        h(0, 0) = {1.0, 0.0};
        h(1, 1) = {1.0, 0.0};
        CMat<double> v = h * std::sqrt(0.5);  // equal split of unit power
        const auto [sum, per_user] = sum_rate(h, v, 0.01);
        for (int k = 0; k < 2; ++k)
            CHECK(per_user(k) == doctest::Approx(std::log2(1.0 + 0.5 / 0.01)).epsilon(1e-12));
        CHECK(sum == doctest::Approx(per_user.sum()));
    }
    SUBCASE("graph op matches an independent recomputation") {
        Rng rng(5);
        const Eigen::Index g = 6, k_users = 3;
        std::vector<CMat<double>> hs;
        RMat<double> vre(g * k_users, 2), vim(g * k_users, 2);
        for (int b = 0; b < 2; ++b) {
            CMat<double> h(g, k_users);
            for (Eigen::Index i = 0; i < h.size(); ++i)
                h(i) = rng.cnormal(1.0);
            hs.push_back(h);
            for (Eigen::Index i = 0; i < g * k_users; ++i) {
                vre(i, b) = rng.uniform(-1, 1);
                vim(i, b) = rng.uniform(-1, 1);
            }
        }
        const auto rates = sum_rate_op(Tensor<double>::constant(vre),
                                       Tensor<double>::constant(vim), hs, 0.01);
        for (int b = 0; b < 2; ++b) {
            // direct recomputation from the defining formula
            CMat<double> v(g, k_users);
            for (Eigen::Index k = 0; k < k_users; ++k)
                for (Eigen::Index i = 0; i < g; ++i)
                    v(i, k) = {vre(k * g + i, b), vim(k * g + i, b)};
            for (Eigen::Index k = 0; k < k_users; ++k) {
                double sig = 0, interf = 0;
                for (Eigen::Index j = 0; j < k_users; ++j) {
                    std::complex<double> c(0, 0);
                    for (Eigen::Index i = 0; i < g; ++i)
                        c += std::conj(hs[b](i, k)) * v(i, j);
                    (j == k ? sig : interf) += std::norm(c);
                }
                const double want = std::log2(1.0 + sig / (interf + 0.01));
                CHECK(std::abs(rates.value()(k, b) - want) < 1e-12);
            }
        }
    }
    SUBCASE("phase rotating a user's channel leaves rates unchanged") {
        Rng rng(6);
        CMat<double> h(4, 2), v(4, 2);
        for (Eigen::Index i = 0; i < h.size(); ++i) {
            h(i) = rng.cnormal(1.0);
            v(i) = rng.cnormal(1.0);
        }
        const auto base = sum_rate(h, v, 0.01);
        CMat<double> h2 = h;
        h2.col(0) *= std::polar(1.0, 1.234);
        const auto rotated = sum_rate(h2, v, 0.01);
        CHECK(std::abs(base.first - rotated.first) < 1e-12);
    }
    SUBCASE("sum_rate_op gradient passes finite differences") {
        Rng rng(7);
        const Eigen::Index g = 4, k_users = 2;
        std::vector<CMat<double>> hs(1, CMat<double>(g, k_users));
        for (Eigen::Index i = 0; i < hs[0].size(); ++i)
            hs[0](i) = rng.cnormal(1.0);
        RMat<double> vre(g * k_users, 1), vim(g * k_users, 1);
        for (Eigen::Index i = 0; i < vre.size(); ++i) {
            vre(i) = rng.uniform(-1, 1);
            vim(i) = rng.uniform(-1, 1);
        }
        auto eval = [&](const RMat<double>& re, const RMat<double>& im) {
            return sum_rate_op(Tensor<double>::constant(re), Tensor<double>::constant(im), hs,
                               0.01)
                .value()
                .sum();
        };
        Tensor<double> tre = Tensor<double>::variable(vre);
        Tensor<double> tim = Tensor<double>::variable(vim);
        tre.zero_grad();
        tim.zero_grad();
        backward(sum_all(sum_rate_op(tre, tim, hs, 0.01)));
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < vre.size(); ++i) {
            RMat<double> p = vre, m = vre;
            p(i) += h;
            m(i) -= h;
            const double fd = (eval(p, vim) - eval(m, vim)) / (2 * h);
            CHECK(std::abs(fd - tre.grad()(i)) < 1e-6 * std::max(1.0, std::abs(fd)));
        }
        for (Eigen::Index i = 0; i < vim.size(); ++i) {
            RMat<double> p = vim, m = vim;
            p(i) += h;
            m(i) -= h;
            const double fd = (eval(vre, p) - eval(vre, m)) / (2 * h);
            CHECK(std::abs(fd - tim.grad()(i)) < 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("distance penalty") {
    SUBCASE("spaced layouts pay nothing") {
        Eigen::Matrix<double, Eigen::Dynamic, 2> a(3, 2);
        a << 0.0, 0.0, 0.5, 0.0, 1.0, 0.0;
        CHECK(distance_penalty(a, 1.0) == 0.0);
    }
    SUBCASE("one close pair pays the squared hinge") {
        Eigen::Matrix<double, Eigen::Dynamic, 2> a(2, 2);
        a << 0.0, 0.0, 0.25, 0.0;  // lambda/4 apart at lambda = 1
        CHECK(distance_penalty(a, 1.0) == doctest::Approx(0.0625).epsilon(1e-12));
    }
    SUBCASE("three collinear points at lambda/8 spacing, hand enumerated") {
        Eigen::Matrix<double, Eigen::Dynamic, 2> a(3, 2);
        a << 0.0, 0.0, 0.125, 0.0, 0.25, 0.0;
        // hinges: (0,1) and (1,2): 3/8; (0,2): 1/4 -> 2*(3/8)^2 + (1/4)^2
        const double want = 2.0 * (3.0 / 8.0) * (3.0 / 8.0) + 0.0625;
        CHECK(distance_penalty(a, 1.0) == doctest::Approx(want).epsilon(1e-12));
    }
    SUBCASE("mask quadratic form equals the pairwise sum over selections") {
        const auto grid = make_grid<double>(0.75, 0.75, 0.25);
        const RMat<double> d = hinge_matrix(grid.points, 1.0);
        Rng rng(8);
        for (int t = 0; t < 20; ++t) {
            RMat<double> p(grid.count(), 1);
            for (Eigen::Index i = 0; i < p.size(); ++i)
                p(i) = rng.uniform(0, 1);
            const auto mask = topn_mask_ste(Tensor<double>::constant(p), 4);
            const auto pen = penalty_phase(mask, d);
            Eigen::Matrix<double, Eigen::Dynamic, 2> sel = positions_from_mask(
                mask.value().col(0), grid);
            CHECK(pen.value()(0, 0) ==
                  doctest::Approx(distance_penalty(sel, 1.0)).epsilon(1e-12));
        }
    }
}

TEST_CASE("end-to-end forward pass") {
    const Scenario sc = desk_scenario();
    Rng rng(11);
    E2EModel model(sc, tiny_sizes(), 6, 8, 1.0, 1.0, rng);
    auto samples = make_samples(sc, 6, 21);
    auto batch = as_batch(samples);

    SUBCASE("mask always selects exactly N positions") {
        Rng noise(1);
        ForwardOptions opt;
        opt.noise_rng = &noise;
        const auto fr = model.forward(batch, opt);
        for (Eigen::Index b = 0; b < fr.mask.cols(); ++b)
            CHECK(fr.mask.value().col(b).sum() == doctest::Approx(sc.num_mas));
    }
    SUBCASE("bits are binary and the trace is self-consistent") {
        Rng noise(2);
        ForwardOptions opt;
        opt.noise_rng = &noise;
        const auto fr = model.forward(batch, opt);
        CHECK(((fr.bits.value().array() == 1.0) || (fr.bits.value().array() == -1.0)).all());
        const double recomputed =
            -fr.rates.value().sum() / batch.size() +
            model.beta_dist() * fr.penalty.value().sum() / batch.size();
        CHECK(fr.loss.value()(0, 0) == doctest::Approx(recomputed).epsilon(1e-12));
    }
    SUBCASE("identical inputs give identical bits") {
        Rng n1(3), n2(3);
        ForwardOptions o1, o2;
        o1.noise_rng = &n1;
        o2.noise_rng = &n2;
        o1.training = o2.training = false;
        const auto f1 = model.forward(batch, o1);
        const auto f2 = model.forward(batch, o2);
        CHECK(f1.bits.value() == f2.bits.value());
    }
    SUBCASE("transmit power is exact on every trace") {
        Rng noise(4);
        ForwardOptions opt;
        opt.noise_rng = &noise;
        const auto fr = model.forward(batch, opt);
        CHECK(fr.max_power_dev < 1e-9);
    }
    SUBCASE("masked-out grid rows carry no precoder energy") {
        Rng noise(5);
        ForwardOptions opt;
        opt.noise_rng = &noise;
        const auto fr = model.forward(batch, opt);
        const Eigen::Index g = model.grid().count();
        for (Eigen::Index b = 0; b < fr.mask.cols(); ++b)
            for (Eigen::Index i = 0; i < g; ++i)
                if (fr.mask.value()(i, b) == 0.0)
                    for (int k = 0; k < sc.num_users; ++k) {
                        CHECK(fr.v_re.value()(k * g + i, b) == 0.0);
                        CHECK(fr.v_im.value()(k * g + i, b) == 0.0);
                    }
    }
    SUBCASE("feasibility flag forces spaced layouts") {
        Rng noise(6);
        ForwardOptions opt;
        opt.noise_rng = &noise;
        opt.feasibility = true;
        const auto fr = model.forward(batch, opt);
        CHECK(fr.violation_frac == 0.0);
        CHECK(fr.penalty.value().maxCoeff() == 0.0);
    }
    SUBCASE("random-bits ablation still produces a valid trace") {
        Rng noise(7), ab(8);
        ForwardOptions opt;
        opt.noise_rng = &noise;
        opt.ablation_rng = &ab;
        opt.random_bits = true;
        const auto fr = model.forward(batch, opt);
        CHECK(fr.max_power_dev < 1e-9);
        CHECK(((fr.bits.value().array() == 1.0) || (fr.bits.value().array() == -1.0)).all());
    }
}

TEST_CASE("single-user rate never beats the matched-filter bound") {
    Scenario sc = desk_scenario();
    sc.num_users = 1;
    Rng rng(31);
    E2EModel model(sc, tiny_sizes(), 6, 8, 1.0, 1.0, rng);
    auto samples = make_samples(sc, 8, 33);
    auto batch = as_batch(samples);
    Rng noise(9);
    ForwardOptions opt;
    opt.noise_rng = &noise;
    const auto fr = model.forward(batch, opt);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        // channel power at the selected rows bounds the achievable rate
        double h2 = 0.0;
        for (Eigen::Index i = 0; i < model.grid().count(); ++i)
            if (fr.mask.value()(i, static_cast<Eigen::Index>(b)) > 0.5)
                h2 += std::norm(batch[b]->h_grid(i, 0));
        const double bound = std::log2(1.0 + h2 * sc.max_power / sc.noise_power);
        CHECK(fr.rates.value()(0, static_cast<Eigen::Index>(b)) <= bound + 1e-9);
    }
}

TEST_CASE("full model gradient check on the smooth surrogate path") {
    const Scenario sc = desk_scenario();
    Rng rng(41);
    ModelSizes sizes = tiny_sizes();
    E2EModel model(sc, sizes, 4, 8, 1.0, 1.0, rng);
    auto samples = make_samples(sc, 3, 51);
    auto batch = as_batch(samples);
    auto loss_fn = [&]() {
        Rng noise(3);
        ForwardOptions opt;
        opt.noise_rng = &noise;
        opt.training = true;
        opt.soft_quantizers = true;
        return model.forward(batch, opt).loss;
    };
    const auto rep = grad_check<double>(loss_fn, model.store(), 1e-5, 41);
    CHECK(rep.max_rel_err < 1e-4);
}
