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

#include "mant/autodiff.hpp"

#include <deque>
#include <string>

namespace mant {

/// Trainable leaf tensor plus its Adam state.
template <typename Scalar>
struct Parameter {
    std::string name;
    Tensor<Scalar> tensor;
    RMat<Scalar> m, v;  // Adam moments, zero-initialized
    long steps = 0;
    bool trainable = true;

    RMat<Scalar>& value() { return tensor.value(); }
    const RMat<Scalar>& value() const { return tensor.value(); }
};

/// Owns every parameter and non-trainable buffer of a model in declaration
/// order; that order defines the checkpoint layout.
template <typename Scalar>
class ParamStore {
  public:
    Parameter<Scalar>& add(const std::string& name, RMat<Scalar> init) {
        params_.emplace_back();
        Parameter<Scalar>& p = params_.back();
        p.name = name;
        p.tensor = Tensor<Scalar>::variable(std::move(init));
        p.m = RMat<Scalar>::Zero(p.value().rows(), p.value().cols());
        p.v = p.m;
        return p;
    }

    /// Non-trainable state carried with checkpoints (e.g. batchnorm stats).
    RMat<Scalar>& add_buffer(const std::string& name, RMat<Scalar> init) {
        buffers_.emplace_back(name, std::move(init));
        return buffers_.back().second;
    }

    std::deque<Parameter<Scalar>>& params() { return params_; }
    const std::deque<Parameter<Scalar>>& params() const { return params_; }
    std::deque<std::pair<std::string, RMat<Scalar>>>& buffers() { return buffers_; }
    const std::deque<std::pair<std::string, RMat<Scalar>>>& buffers() const { return buffers_; }

    void zero_grad() {
        for (auto& p : params_)
            p.tensor.zero_grad();
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_)
            n += static_cast<std::size_t>(p.value().size());
        return n;
    }

  private:
    std::deque<Parameter<Scalar>> params_;
    std::deque<std::pair<std::string, RMat<Scalar>>> buffers_;
};

/// Uniform init in +-sqrt(1/fan_in), the usual dense-layer default.
template <typename Scalar>
RMat<Scalar> uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
    RMat<Scalar> m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            m(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
    return m;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// y = W x + b on (features x batch) inputs.
template <typename Scalar>
struct Affine {
    Parameter<Scalar>* weight = nullptr;
    Parameter<Scalar>* bias = nullptr;

    Affine() = default;
    Affine(ParamStore<Scalar>& store, const std::string& name, Eigen::Index in, Eigen::Index out,
           Rng& rng) {
        weight = &store.add(name + ".W", uniform_init<Scalar>(out, in, in, rng));
        bias = &store.add(name + ".b", RMat<Scalar>::Zero(out, 1));
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) const {
        return add_colvec(matmul(weight->tensor, x), bias->tensor);
    }
};

/// Batch normalization over the batch (column) axis with running statistics
/// for eval mode. eps = 1e-5, running-average momentum 0.1.
template <typename Scalar>
struct BatchNorm {
    Parameter<Scalar>* gamma = nullptr;
    Parameter<Scalar>* beta = nullptr;
    RMat<Scalar>* running_mean = nullptr;
    RMat<Scalar>* running_var = nullptr;
    Scalar eps = Scalar(1e-5);
    Scalar momentum = Scalar(0.1);

    BatchNorm() = default;
    BatchNorm(ParamStore<Scalar>& store, const std::string& name, Eigen::Index features) {
        gamma = &store.add(name + ".gamma", RMat<Scalar>::Ones(features, 1));
        beta = &store.add(name + ".beta", RMat<Scalar>::Zero(features, 1));
        running_mean = &store.add_buffer(name + ".running_mean", RMat<Scalar>::Zero(features, 1));
        running_var = &store.add_buffer(name + ".running_var", RMat<Scalar>::Ones(features, 1));
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) const {
        const Eigen::Index nb = x.cols();
        if (training && nb < 2)
            throw std::invalid_argument("batchnorm: training mode needs batch >= 2");
        if (training) {
            RVec<Scalar> mean = x.value().rowwise().mean();
            RVec<Scalar> var =
                (x.value().colwise() - mean).array().square().rowwise().mean().matrix();
            // unbiased variance feeds the running estimate
            const Scalar unbias = static_cast<Scalar>(nb) / static_cast<Scalar>(nb - 1);
            *running_mean = (Scalar(1) - momentum) * (*running_mean) + momentum * mean;
            *running_var = (Scalar(1) - momentum) * (*running_var) + momentum * (var * unbias);

            RVec<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
            RMat<Scalar> xhat =
                ((x.value().colwise() - mean).array().colwise() * inv_std.array()).matrix();
            RMat<Scalar> y =
                ((xhat.array().colwise() * gamma->value().col(0).array()).colwise() +
                 beta->value().col(0).array())
                    .matrix();
            RMat<Scalar> saved_xhat = xhat;
            RVec<Scalar> saved_inv = inv_std;
            return detail::make_node<Scalar>(
                std::move(y), {x.node(), gamma->tensor.node(), beta->tensor.node()},
                [saved_xhat, saved_inv](TensorNode<Scalar>& self) {
                    auto& xn = *self.parents[0];
                    auto& gn = *self.parents[1];
                    auto& bn = *self.parents[2];
                    const Eigen::Index cols = saved_xhat.cols();
                    if (gn.requires_grad) {
                        gn.ensure_grad();
                        gn.grad.col(0) +=
                            (self.grad.array() * saved_xhat.array()).rowwise().sum().matrix();
                    }
                    if (bn.requires_grad) {
                        bn.ensure_grad();
                        bn.grad.col(0) += self.grad.rowwise().sum();
                    }
                    if (xn.requires_grad) {
                        xn.ensure_grad();
                        const auto g = self.grad.array().colwise() * gn.value.col(0).array();
                        RVec<Scalar> gmean = g.rowwise().mean().matrix();
                        RVec<Scalar> gxmean =
                            (g * saved_xhat.array()).rowwise().mean().matrix();
                        RMat<Scalar> dx =
                            (((g.colwise() - gmean.array()) -
                              saved_xhat.array().colwise() * gxmean.array())
                                 .colwise() *
                             saved_inv.array())
                                .matrix();
                        (void)cols;
                        xn.grad += dx;
                    }
                });
        }
        // eval mode: affine map through the running statistics
        RVec<Scalar> inv_std = (running_var->col(0).array() + eps).rsqrt().matrix();
        RMat<Scalar> y = (((x.value().colwise() - running_mean->col(0)).array().colwise() *
                           (inv_std.array() * gamma->value().col(0).array()))
                              .colwise() +
                          beta->value().col(0).array())
                             .matrix();
        RVec<Scalar> scale = (inv_std.array() * gamma->value().col(0).array()).matrix();
        RMat<Scalar> xc = x.value().colwise() - running_mean->col(0);
        RVec<Scalar> saved_inv = inv_std;
        RMat<Scalar> saved_xc = xc;
        return detail::make_node<Scalar>(
            std::move(y), {x.node(), gamma->tensor.node(), beta->tensor.node()},
            [scale, saved_inv, saved_xc](TensorNode<Scalar>& self) {
                auto& xn = *self.parents[0];
                auto& gn = *self.parents[1];
                auto& bn = *self.parents[2];
                if (gn.requires_grad) {
                    gn.ensure_grad();
                    gn.grad.col(0) += (self.grad.array() *
                                       (saved_xc.array().colwise() * saved_inv.array()))
                                          .rowwise()
                                          .sum()
                                          .matrix();
                }
                if (bn.requires_grad) {
                    bn.ensure_grad();
                    bn.grad.col(0) += self.grad.rowwise().sum();
                }
                if (xn.requires_grad) {
                    xn.ensure_grad();
                    xn.grad += (self.grad.array().colwise() * scale.array()).matrix();
                }
            });
    }
};

/// 1-D cross-correlation over (channels*length x batch) inputs, channel-major
/// rows (row = c*length + t), zero padding, length-preserving.
template <typename Scalar>
struct Conv1d {
    Parameter<Scalar>* weight = nullptr;  // (c_out x c_in*ksize)
    Parameter<Scalar>* bias = nullptr;    // (c_out x 1)
    Eigen::Index c_in = 0, c_out = 0, ksize = 3, pad = 1;

    Conv1d() = default;
    Conv1d(ParamStore<Scalar>& store, const std::string& name, Eigen::Index in_ch,
           Eigen::Index out_ch, Eigen::Index kernel, Eigen::Index padding, Rng& rng)
        : c_in(in_ch), c_out(out_ch), ksize(kernel), pad(padding) {
        if (kernel != 2 * padding + 1)
            throw std::invalid_argument("conv1d: only length-preserving kernel/padding supported");
        weight = &store.add(name + ".W", uniform_init<Scalar>(out_ch, in_ch * kernel,
                                                              in_ch * kernel, rng));
        bias = &store.add(name + ".b", RMat<Scalar>::Zero(out_ch, 1));
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) const {
        if (x.rows() % c_in != 0)
            throw std::invalid_argument("conv1d: input rows not divisible by channels");
        const Eigen::Index len = x.rows() / c_in;
        const Eigen::Index nb = x.cols();
        RMat<Scalar> y = RMat<Scalar>::Zero(c_out * len, nb);
        const auto& w = weight->value();
        const auto& b = bias->value();
        for (Eigen::Index col = 0; col < nb; ++col)
            for (Eigen::Index co = 0; co < c_out; ++co)
                for (Eigen::Index t = 0; t < len; ++t) {
                    Scalar acc = b(co, 0);
                    for (Eigen::Index ci = 0; ci < c_in; ++ci)
                        for (Eigen::Index dk = 0; dk < ksize; ++dk) {
                            const Eigen::Index ti = t + dk - pad;
                            if (ti >= 0 && ti < len)
                                acc += w(co, ci * ksize + dk) * x.value()(ci * len + ti, col);
                        }
                    y(co * len + t, col) = acc;
                }
        const Eigen::Index cin = c_in, cout = c_out, ks = ksize, pd = pad;
        return detail::make_node<Scalar>(
            std::move(y), {x.node(), weight->tensor.node(), bias->tensor.node()},
            [cin, cout, ks, pd, len](TensorNode<Scalar>& self) {
                auto& xn = *self.parents[0];
                auto& wn = *self.parents[1];
                auto& bn = *self.parents[2];
                const Eigen::Index nb = xn.value.cols();
                if (bn.requires_grad) {
                    bn.ensure_grad();
                    for (Eigen::Index co = 0; co < cout; ++co)
                        bn.grad(co, 0) += self.grad.middleRows(co * len, len).sum();
                }
                if (wn.requires_grad) {
                    wn.ensure_grad();
                    for (Eigen::Index col = 0; col < nb; ++col)
                        for (Eigen::Index co = 0; co < cout; ++co)
                            for (Eigen::Index ci = 0; ci < cin; ++ci)
                                for (Eigen::Index dk = 0; dk < ks; ++dk) {
                                    Scalar acc(0);
                                    for (Eigen::Index t = 0; t < len; ++t) {
                                        const Eigen::Index ti = t + dk - pd;
                                        if (ti >= 0 && ti < len)
                                            acc += self.grad(co * len + t, col) *
                                                   xn.value(ci * len + ti, col);
                                    }
                                    wn.grad(co, ci * ks + dk) += acc;
                                }
                }
                if (xn.requires_grad) {
                    xn.ensure_grad();
                    const auto& w = wn.value;
                    for (Eigen::Index col = 0; col < nb; ++col)
                        for (Eigen::Index ci = 0; ci < cin; ++ci)
                            for (Eigen::Index ti = 0; ti < len; ++ti) {
                                Scalar acc(0);
                                for (Eigen::Index co = 0; co < cout; ++co)
                                    for (Eigen::Index dk = 0; dk < ks; ++dk) {
                                        const Eigen::Index t = ti - dk + pd;
                                        if (t >= 0 && t < len)
                                            acc += self.grad(co * len + t, col) * w(co, ci * ks + dk);
                                    }
                                xn.grad(ci * len + ti, col) += acc;
                            }
                }
            });
    }
};

/// Layer normalization across each row, with per-column scale/shift
/// (token matrices: rows = tokens, columns = model features).
template <typename Scalar>
struct LayerNorm {
    Parameter<Scalar>* gamma = nullptr;  // (features x 1)
    Parameter<Scalar>* beta = nullptr;
    Scalar eps = Scalar(1e-5);

    LayerNorm() = default;
    LayerNorm(ParamStore<Scalar>& store, const std::string& name, Eigen::Index features) {
        gamma = &store.add(name + ".gamma", RMat<Scalar>::Ones(features, 1));
        beta = &store.add(name + ".beta", RMat<Scalar>::Zero(features, 1));
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) const {
        if (x.cols() != gamma->value().rows())
            throw std::invalid_argument("layernorm: feature size mismatch");
        const Eigen::Index rows = x.rows();
        const Eigen::Index cols = x.cols();
        RMat<Scalar> xhat(rows, cols);
        RVec<Scalar> inv_std(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const Scalar mean = x.value().row(r).mean();
            const Scalar var = (x.value().row(r).array() - mean).square().mean();
            const Scalar inv = Scalar(1) / std::sqrt(var + eps);
            inv_std(r) = inv;
            xhat.row(r) = ((x.value().row(r).array() - mean) * inv).matrix();
        }
        RMat<Scalar> y = ((xhat.array().rowwise() * gamma->value().col(0).transpose().array())
                              .rowwise() +
                          beta->value().col(0).transpose().array())
                             .matrix();
        RMat<Scalar> saved_xhat = xhat;
        RVec<Scalar> saved_inv = inv_std;
        return detail::make_node<Scalar>(
            std::move(y), {x.node(), gamma->tensor.node(), beta->tensor.node()},
            [saved_xhat, saved_inv](TensorNode<Scalar>& self) {
                auto& xn = *self.parents[0];
                auto& gn = *self.parents[1];
                auto& bn = *self.parents[2];
                if (gn.requires_grad) {
                    gn.ensure_grad();
                    gn.grad.col(0) +=
                        (self.grad.array() * saved_xhat.array()).colwise().sum().matrix().transpose();
                }
                if (bn.requires_grad) {
                    bn.ensure_grad();
                    bn.grad.col(0) += self.grad.colwise().sum().transpose();
                }
                if (xn.requires_grad) {
                    xn.ensure_grad();
                    for (Eigen::Index r = 0; r < saved_xhat.rows(); ++r) {
                        const auto g =
                            (self.grad.row(r).array() * gn.value.col(0).transpose().array());
                        const Scalar gmean = g.mean();
                        const Scalar gxmean = (g * saved_xhat.row(r).array()).mean();
                        xn.grad.row(r) +=
                            (saved_inv(r) *
                             (g - gmean - saved_xhat.row(r).array() * gxmean))
                                .matrix();
                    }
                }
            });
    }
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Bias-corrected Adam. Frozen parameters are skipped entirely.
template <typename Scalar>
struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(ParamStore<Scalar>& store, double lr) {
        for (auto& p : store.params()) {
            if (!p.trainable)
                continue;
            const RMat<Scalar>& g = p.tensor.grad();
            if (g.size() == 0)
                continue;
            if (!g.allFinite())
                throw NumericError("adam: non-finite gradient for " + p.name);
            p.steps += 1;
            const Scalar b1 = static_cast<Scalar>(beta1);
            const Scalar b2 = static_cast<Scalar>(beta2);
            p.m = b1 * p.m + (Scalar(1) - b1) * g;
            p.v = (b2 * p.v.array() + (Scalar(1) - b2) * g.array().square()).matrix();
            const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(p.steps));
            const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(p.steps));
            p.value().array() -= static_cast<Scalar>(lr) * (p.m.array() / c1) /
                                 ((p.v.array() / c2).sqrt() + static_cast<Scalar>(eps));
        }
    }
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    Eigen::Index worst_index = -1;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;  // coordinates whose FD window straddles a kink
};

/// Central-difference check of d(loss)/d(param) for every listed parameter.
/// loss_fn must rebuild the graph from current parameter values and return
/// the scalar loss tensor. Check stride > 1 subsamples coordinates.
/// Coordinates where the forward and backward one-sided differences
/// disagree strongly (a relu kink inside the window) are skipped: the
/// two-sided quotient does not estimate a derivative there.
template <typename Scalar>
GradCheckReport grad_check(const std::function<Tensor<Scalar>()>& loss_fn,
                           ParamStore<Scalar>& store, double h = 1e-5,
                           Eigen::Index stride = 1) {
    GradCheckReport report;
    store.zero_grad();
    Tensor<Scalar> loss = loss_fn();
    backward(loss);
    const double l0 = static_cast<double>(loss.value()(0, 0));
    std::vector<RMat<Scalar>> analytic;
    for (auto& p : store.params())
        analytic.push_back(p.tensor.grad());

    std::size_t pi = 0;
    for (auto& p : store.params()) {
        RMat<Scalar>& val = p.value();
        for (Eigen::Index i = 0; i < val.size(); i += stride) {
            const Scalar orig = val(i);
            const Scalar dh = static_cast<Scalar>(h) * std::max<Scalar>(Scalar(1), std::abs(orig));
            val(i) = orig + dh;
            const double lp = static_cast<double>(loss_fn().value()(0, 0));
            val(i) = orig - dh;
            const double lm = static_cast<double>(loss_fn().value()(0, 0));
            val(i) = orig;
            const double fwd = (lp - l0) / static_cast<double>(dh);
            const double bwd = (l0 - lm) / static_cast<double>(dh);
            const double side_scale = std::max({std::abs(fwd), std::abs(bwd), 1e-3});
            if (std::abs(fwd - bwd) > 0.05 * side_scale) {
                ++report.skipped_kinks;
                continue;
            }
            const double numeric = (lp - lm) / (2.0 * static_cast<double>(dh));
            const double exact = static_cast<double>(analytic[pi](i));
            const double scale = std::max({1.0, std::abs(numeric), std::abs(exact)});
            const double rel = std::abs(numeric - exact) / scale;
            ++report.checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p.name;
                report.worst_index = i;
            }
        }
        ++pi;
    }
    return report;
}

}  // namespace mant
