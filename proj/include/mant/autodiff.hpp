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
// Reverse-mode automatic differentiation on dense 2-D arrays. Values are
// Eigen matrices; the graph is a tape of shared nodes created by the free
// functions below. Column = one batch element for the feed-forward layers;
// generic matrix ops make token-matrix math (attention) expressible too.

#pragma once

#include "mant/common.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>

namespace mant {

namespace detail {
inline std::uint64_t next_node_stamp() {
    static std::atomic<std::uint64_t> counter{0};
    return counter.fetch_add(1, std::memory_order_relaxed);
}
inline bool& nan_check_flag() {
    static bool flag = false;
    return flag;
}
}  // namespace detail

/// When enabled, every op asserts its output is finite.
inline void set_nan_check(bool on) { detail::nan_check_flag() = on; }

template <typename Scalar>
struct TensorNode {
    RMat<Scalar> value;
    RMat<Scalar> grad;
    bool requires_grad = false;
    std::uint64_t stamp = 0;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;

    void ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols())
            grad = RMat<Scalar>::Zero(value.rows(), value.cols());
    }
};

template <typename Scalar>
class Tensor {
  public:
    using Node = TensorNode<Scalar>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor constant(RMat<Scalar> m) {
        auto n = std::make_shared<Node>();
        n->value = std::move(m);
        n->stamp = detail::next_node_stamp();
        return Tensor(std::move(n));
    }

    /// Leaf that participates in gradients (parameters, grad-check probes).
    static Tensor variable(RMat<Scalar> m) {
        auto n = std::make_shared<Node>();
        n->value = std::move(m);
        n->requires_grad = true;
        n->stamp = detail::next_node_stamp();
        return Tensor(std::move(n));
    }

    bool valid() const { return node_ != nullptr; }
    const RMat<Scalar>& value() const { return node_->value; }
    RMat<Scalar>& value() { return node_->value; }
    const RMat<Scalar>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    void zero_grad() {
        node_->ensure_grad();
        node_->grad.setZero();
    }
    std::shared_ptr<Node> node() const { return node_; }

  private:
    std::shared_ptr<Node> node_;
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> make_node(RMat<Scalar> value, std::vector<std::shared_ptr<TensorNode<Scalar>>> parents,
                         std::function<void(TensorNode<Scalar>&)> backprop) {
    if (nan_check_flag() && !value.allFinite())
        throw std::runtime_error("autodiff: non-finite value produced by an op");
    auto n = std::make_shared<TensorNode<Scalar>>();
    n->value = std::move(value);
    n->stamp = next_node_stamp();
    bool rg = false;
    for (const auto& p : parents)
        rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return Tensor<Scalar>(std::move(n));
}

}  // namespace detail

/// Back-propagate from a scalar (1x1) root.
template <typename Scalar>
void backward(const Tensor<Scalar>& root) {
    using Node = TensorNode<Scalar>;
    if (root.rows() != 1 || root.cols() != 1)
        throw std::invalid_argument("backward: root must be 1x1");
    if (!root.node()->requires_grad)
        return;

    // Collect reachable nodes; creation stamps give a valid topological order.
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.node().get()};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second)
            continue;
        nodes.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad)
                stack.push_back(p.get());
    }
    for (Node* n : nodes)
        n->ensure_grad();
    root.node()->grad(0, 0) += Scalar(1);
    std::sort(nodes.begin(), nodes.end(),
              [](const Node* a, const Node* b) { return a->stamp > b->stamp; });
    for (Node* n : nodes)
        if (n->backprop)
            n->backprop(*n);
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("add: shape mismatch");
    return detail::make_node<Scalar>(
        a.value() + b.value(), {a.node(), b.node()}, [](TensorNode<Scalar>& self) {
            if (self.parents[0]->requires_grad) {
                self.parents[0]->ensure_grad();
                self.parents[0]->grad += self.grad;
            }
            if (self.parents[1]->requires_grad) {
                self.parents[1]->ensure_grad();
                self.parents[1]->grad += self.grad;
            }
        });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("sub: shape mismatch");
    return detail::make_node<Scalar>(
        a.value() - b.value(), {a.node(), b.node()}, [](TensorNode<Scalar>& self) {
            if (self.parents[0]->requires_grad) {
                self.parents[0]->ensure_grad();
                self.parents[0]->grad += self.grad;
            }
            if (self.parents[1]->requires_grad) {
                self.parents[1]->ensure_grad();
                self.parents[1]->grad -= self.grad;
            }
        });
}

template <typename Scalar>
Tensor<Scalar> hadamard(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("hadamard: shape mismatch");
    return detail::make_node<Scalar>(
        a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](TensorNode<Scalar>& self) {
            if (self.parents[0]->requires_grad) {
                self.parents[0]->ensure_grad();
                self.parents[0]->grad += self.grad.cwiseProduct(self.parents[1]->value);
            }
            if (self.parents[1]->requires_grad) {
                self.parents[1]->ensure_grad();
                self.parents[1]->grad += self.grad.cwiseProduct(self.parents[0]->value);
            }
        });
}

template <typename Scalar>
Tensor<Scalar> cdiv(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("cdiv: shape mismatch");
    return detail::make_node<Scalar>(
        a.value().cwiseQuotient(b.value()), {a.node(), b.node()}, [](TensorNode<Scalar>& self) {
            const auto& av = self.parents[0]->value;
            const auto& bv = self.parents[1]->value;
            if (self.parents[0]->requires_grad) {
                self.parents[0]->ensure_grad();
                self.parents[0]->grad += self.grad.cwiseQuotient(bv);
            }
            if (self.parents[1]->requires_grad) {
                self.parents[1]->ensure_grad();
                self.parents[1]->grad -=
                    self.grad.cwiseProduct(av).cwiseQuotient(bv.cwiseProduct(bv));
            }
        });
}

template <typename Scalar>
Tensor<Scalar> scalar_mul(const Tensor<Scalar>& a, Scalar c) {
    return detail::make_node<Scalar>(a.value() * c, {a.node()}, [c](TensorNode<Scalar>& self) {
        if (self.parents[0]->requires_grad) {
            self.parents[0]->ensure_grad();
            self.parents[0]->grad += self.grad * c;
        }
    });
}

template <typename Scalar>
Tensor<Scalar> scalar_add(const Tensor<Scalar>& a, Scalar c) {
    return detail::make_node<Scalar>((a.value().array() + c).matrix(), {a.node()},
                                     [](TensorNode<Scalar>& self) {
                                         if (self.parents[0]->requires_grad) {
                                             self.parents[0]->ensure_grad();
                                             self.parents[0]->grad += self.grad;
                                         }
                                     });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
    return detail::make_node<Scalar>(
        a.value().cwiseMax(Scalar(0)), {a.node()}, [](TensorNode<Scalar>& self) {
            if (!self.parents[0]->requires_grad)
                return;
            self.parents[0]->ensure_grad();
            self.parents[0]->grad.array() +=
                self.grad.array() * (self.parents[0]->value.array() > Scalar(0)).template cast<Scalar>();
        });
}

/// y = log2(1 + x), defined for x > -1.
template <typename Scalar>
Tensor<Scalar> log2_1p(const Tensor<Scalar>& a) {
    const Scalar inv_ln2 = Scalar(1) / std::log(Scalar(2));
    return detail::make_node<Scalar>(
        ((a.value().array() + Scalar(1)).log() * inv_ln2).matrix(), {a.node()},
        [inv_ln2](TensorNode<Scalar>& self) {
            if (!self.parents[0]->requires_grad)
                return;
            self.parents[0]->ensure_grad();
            self.parents[0]->grad.array() +=
                self.grad.array() * inv_ln2 / (self.parents[0]->value.array() + Scalar(1));
        });
}

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimension mismatch");
    return detail::make_node<Scalar>(
        a.value() * b.value(), {a.node(), b.node()}, [](TensorNode<Scalar>& self) {
            const auto& av = self.parents[0]->value;
            const auto& bv = self.parents[1]->value;
            if (self.parents[0]->requires_grad) {
                self.parents[0]->ensure_grad();
                self.parents[0]->grad.noalias() += self.grad * bv.transpose();
            }
            if (self.parents[1]->requires_grad) {
                self.parents[1]->ensure_grad();
                self.parents[1]->grad.noalias() += av.transpose() * self.grad;
            }
        });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
    return detail::make_node<Scalar>(a.value().transpose(), {a.node()},
                                     [](TensorNode<Scalar>& self) {
                                         if (!self.parents[0]->requires_grad)
                                             return;
                                         self.parents[0]->ensure_grad();
                                         self.parents[0]->grad += self.grad.transpose();
                                     });
}

/// Broadcast-add a column vector to every column.
template <typename Scalar>
Tensor<Scalar> add_colvec(const Tensor<Scalar>& a, const Tensor<Scalar>& v) {
    if (v.cols() != 1 || v.rows() != a.rows())
        throw std::invalid_argument("add_colvec: v must be rows(a) x 1");
    return detail::make_node<Scalar>(
        a.value().colwise() + v.value().col(0), {a.node(), v.node()},
        [](TensorNode<Scalar>& self) {
            if (self.parents[0]->requires_grad) {
                self.parents[0]->ensure_grad();
                self.parents[0]->grad += self.grad;
            }
            if (self.parents[1]->requires_grad) {
                self.parents[1]->ensure_grad();
                self.parents[1]->grad.col(0) += self.grad.rowwise().sum();
            }
        });
}

/// Broadcast-add a row vector to every row.
template <typename Scalar>
Tensor<Scalar> add_rowvec(const Tensor<Scalar>& a, const Tensor<Scalar>& v) {
    if (v.rows() != 1 || v.cols() != a.cols())
        throw std::invalid_argument("add_rowvec: v must be 1 x cols(a)");
    return detail::make_node<Scalar>(
        a.value().rowwise() + v.value().row(0), {a.node(), v.node()},
        [](TensorNode<Scalar>& self) {
            if (self.parents[0]->requires_grad) {
                self.parents[0]->ensure_grad();
                self.parents[0]->grad += self.grad;
            }
            if (self.parents[1]->requires_grad) {
                self.parents[1]->ensure_grad();
                self.parents[1]->grad.row(0) += self.grad.colwise().sum();
            }
        });
}

template <typename Scalar>
Tensor<Scalar> sum_all(const Tensor<Scalar>& a) {
    RMat<Scalar> s(1, 1);
    s(0, 0) = a.value().sum();
    return detail::make_node<Scalar>(std::move(s), {a.node()}, [](TensorNode<Scalar>& self) {
        if (!self.parents[0]->requires_grad)
            return;
        self.parents[0]->ensure_grad();
        self.parents[0]->grad.array() += self.grad(0, 0);
    });
}

/// Column sums: (rows x cols) -> (1 x cols).
template <typename Scalar>
Tensor<Scalar> col_sums(const Tensor<Scalar>& a) {
    return detail::make_node<Scalar>(
        a.value().colwise().sum(), {a.node()}, [](TensorNode<Scalar>& self) {
            if (!self.parents[0]->requires_grad)
                return;
            self.parents[0]->ensure_grad();
            self.parents[0]->grad += RVec<Scalar>::Ones(self.parents[0]->value.rows()) * self.grad;
        });
}

/// Row sums: (rows x cols) -> (rows x 1).
template <typename Scalar>
Tensor<Scalar> row_sums(const Tensor<Scalar>& a) {
    return detail::make_node<Scalar>(
        a.value().rowwise().sum(), {a.node()}, [](TensorNode<Scalar>& self) {
            if (!self.parents[0]->requires_grad)
                return;
            self.parents[0]->ensure_grad();
            self.parents[0]->grad +=
                self.grad * RMat<Scalar>::Ones(1, self.parents[0]->value.cols());
        });
}

template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
    if (parts.empty())
        throw std::invalid_argument("concat_rows: empty input");
    Eigen::Index rows = 0;
    const Eigen::Index cols = parts[0].cols();
    for (const auto& p : parts) {
        if (p.cols() != cols)
            throw std::invalid_argument("concat_rows: column mismatch");
        rows += p.rows();
    }
    RMat<Scalar> v(rows, cols);
    std::vector<std::shared_ptr<TensorNode<Scalar>>> parents;
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        v.middleRows(r, p.rows()) = p.value();
        parents.push_back(p.node());
        r += p.rows();
    }
    return detail::make_node<Scalar>(std::move(v), std::move(parents),
                                     [](TensorNode<Scalar>& self) {
                                         Eigen::Index r = 0;
                                         for (auto& p : self.parents) {
                                             if (p->requires_grad) {
                                                 p->ensure_grad();
                                                 p->grad += self.grad.middleRows(r, p->value.rows());
                                             }
                                             r += p->value.rows();
                                         }
                                     });
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
    if (parts.empty())
        throw std::invalid_argument("concat_cols: empty input");
    Eigen::Index cols = 0;
    const Eigen::Index rows = parts[0].rows();
    for (const auto& p : parts) {
        if (p.rows() != rows)
            throw std::invalid_argument("concat_cols: row mismatch");
        cols += p.cols();
    }
    RMat<Scalar> v(rows, cols);
    std::vector<std::shared_ptr<TensorNode<Scalar>>> parents;
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        v.middleCols(c, p.cols()) = p.value();
        parents.push_back(p.node());
        c += p.cols();
    }
    return detail::make_node<Scalar>(std::move(v), std::move(parents),
                                     [](TensorNode<Scalar>& self) {
                                         Eigen::Index c = 0;
                                         for (auto& p : self.parents) {
                                             if (p->requires_grad) {
                                                 p->ensure_grad();
                                                 p->grad += self.grad.middleCols(c, p->value.cols());
                                             }
                                             c += p->value.cols();
                                         }
                                     });
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows())
        throw std::invalid_argument("slice_rows: out of range");
    return detail::make_node<Scalar>(a.value().middleRows(start, count), {a.node()},
                                     [start, count](TensorNode<Scalar>& self) {
                                         if (!self.parents[0]->requires_grad)
                                             return;
                                         self.parents[0]->ensure_grad();
                                         self.parents[0]->grad.middleRows(start, count) += self.grad;
                                     });
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols())
        throw std::invalid_argument("slice_cols: out of range");
    return detail::make_node<Scalar>(a.value().middleCols(start, count), {a.node()},
                                     [start, count](TensorNode<Scalar>& self) {
                                         if (!self.parents[0]->requires_grad)
                                             return;
                                         self.parents[0]->ensure_grad();
                                         self.parents[0]->grad.middleCols(start, count) += self.grad;
                                     });
}

// ---------------------------------------------------------------------------
// Softmax / normalization / quantization ops
// ---------------------------------------------------------------------------

/// Temperature softmax along each column, computed with max subtraction.
template <typename Scalar>
Tensor<Scalar> softmax_cols(const Tensor<Scalar>& a, Scalar tau) {
    if (!(tau > Scalar(0)))
        throw std::invalid_argument("softmax_cols: tau must be > 0");
    RMat<Scalar> p(a.rows(), a.cols());
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        Eigen::Array<Scalar, Eigen::Dynamic, 1> z = a.value().col(c).array() / tau;
        z -= z.maxCoeff();
        Eigen::Array<Scalar, Eigen::Dynamic, 1> e = z.exp();
        p.col(c) = e / e.sum();
    }
    RMat<Scalar> saved = p;
    return detail::make_node<Scalar>(
        std::move(p), {a.node()}, [saved, tau](TensorNode<Scalar>& self) {
            if (!self.parents[0]->requires_grad)
                return;
            self.parents[0]->ensure_grad();
            for (Eigen::Index c = 0; c < saved.cols(); ++c) {
                const auto pc = saved.col(c).array();
                const auto gc = self.grad.col(c).array();
                const Scalar dot = (pc * gc).sum();
                self.parents[0]->grad.col(c).array() += pc * (gc - dot) / tau;
            }
        });
}

/// Temperature softmax along each row (attention scores).
template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& a, Scalar tau = Scalar(1)) {
    if (!(tau > Scalar(0)))
        throw std::invalid_argument("softmax_rows: tau must be > 0");
    RMat<Scalar> p(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        Eigen::Array<Scalar, 1, Eigen::Dynamic> z = a.value().row(r).array() / tau;
        z -= z.maxCoeff();
        Eigen::Array<Scalar, 1, Eigen::Dynamic> e = z.exp();
        p.row(r) = e / e.sum();
    }
    RMat<Scalar> saved = p;
    return detail::make_node<Scalar>(
        std::move(p), {a.node()}, [saved, tau](TensorNode<Scalar>& self) {
            if (!self.parents[0]->requires_grad)
                return;
            self.parents[0]->ensure_grad();
            for (Eigen::Index r = 0; r < saved.rows(); ++r) {
                const auto pr = saved.row(r).array();
                const auto gr = self.grad.row(r).array();
                const Scalar dot = (pr * gr).sum();
                self.parents[0]->grad.row(r).array() += pr * (gr - dot) / tau;
            }
        });
}

/// Binary quantizer with sigmoid-surrogate gradient. Forward emits
/// sign(u) in {-1,+1} with sign(0) = +1; backward applies the derivative
/// of 2*sigmoid(omega*u) - 1.
template <typename Scalar>
Tensor<Scalar> sign_ste(const Tensor<Scalar>& a, Scalar omega) {
    if (!(omega > Scalar(0)))
        throw std::invalid_argument("sign_ste: omega must be > 0");
    RMat<Scalar> v =
        ((a.value().array() >= Scalar(0)).template cast<Scalar>() * Scalar(2) - Scalar(1)).matrix();
    return detail::make_node<Scalar>(std::move(v), {a.node()}, [omega](TensorNode<Scalar>& self) {
        if (!self.parents[0]->requires_grad)
            return;
        self.parents[0]->ensure_grad();
        const auto u = self.parents[0]->value.array();
        const auto s = (Scalar(1) / (Scalar(1) + (-omega * u).exp()));
        self.parents[0]->grad.array() +=
            self.grad.array() * Scalar(2) * omega * s * (Scalar(1) - s);
    });
}

/// Smooth stand-in for sign_ste: y = 2*sigmoid(omega*u) - 1 with its true
/// derivative. Forward values differ from the hard quantizer, the backward
/// rule is identical, which makes the surrogate path finite-difference
/// checkable end to end.
template <typename Scalar>
Tensor<Scalar> sign_surrogate(const Tensor<Scalar>& a, Scalar omega) {
    if (!(omega > Scalar(0)))
        throw std::invalid_argument("sign_surrogate: omega must be > 0");
    RMat<Scalar> v =
        (Scalar(2) / (Scalar(1) + (-omega * a.value().array()).exp()) - Scalar(1)).matrix();
    return detail::make_node<Scalar>(std::move(v), {a.node()}, [omega](TensorNode<Scalar>& self) {
        if (!self.parents[0]->requires_grad)
            return;
        self.parents[0]->ensure_grad();
        const auto u = self.parents[0]->value.array();
        const auto s = (Scalar(1) / (Scalar(1) + (-omega * u).exp()));
        self.parents[0]->grad.array() +=
            self.grad.array() * Scalar(2) * omega * s * (Scalar(1) - s);
    });
}

namespace detail {

/// Indices of column entries ordered by value descending, index ascending.
template <typename Scalar>
std::vector<Eigen::Index> ordered_indices(const RMat<Scalar>& m, Eigen::Index col) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index(0));
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return m(a, col) > m(b, col); });
    return idx;
}

}  // namespace detail

/// Hard top-N selection mask per column; gradient passes through unchanged
/// (identity surrogate m = p + stopgrad(m - p)). Ties break to the lowest
/// index.
template <typename Scalar>
Tensor<Scalar> topn_mask_ste(const Tensor<Scalar>& p, Eigen::Index n) {
    if (n > p.rows())
        throw std::invalid_argument("topn_mask_ste: N exceeds candidate count");
    RMat<Scalar> mask = RMat<Scalar>::Zero(p.rows(), p.cols());
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const auto idx = detail::ordered_indices(p.value(), c);
        for (Eigen::Index i = 0; i < n; ++i)
            mask(idx[static_cast<std::size_t>(i)], c) = Scalar(1);
    }
    return detail::make_node<Scalar>(std::move(mask), {p.node()}, [](TensorNode<Scalar>& self) {
        if (!self.parents[0]->requires_grad)
            return;
        self.parents[0]->ensure_grad();
        self.parents[0]->grad += self.grad;
    });
}

/// Top-N selection with a minimum-spacing constraint: walk candidates in
/// probability order and skip any closer than min_dist to an accepted one.
/// Same identity-surrogate gradient as topn_mask_ste.
template <typename Scalar>
Tensor<Scalar> topn_mask_feasible(const Tensor<Scalar>& p, Eigen::Index n,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, 2>& coords,
                                  Scalar min_dist) {
    if (n > p.rows())
        throw std::invalid_argument("topn_mask_feasible: N exceeds candidate count");
    if (coords.rows() != p.rows())
        throw std::invalid_argument("topn_mask_feasible: coords/probability size mismatch");
    RMat<Scalar> mask = RMat<Scalar>::Zero(p.rows(), p.cols());
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const auto idx = detail::ordered_indices(p.value(), c);
        std::vector<Eigen::Index> chosen;
        for (Eigen::Index cand : idx) {
            bool ok = true;
            for (Eigen::Index s : chosen) {
                const Scalar d = (coords.row(cand) - coords.row(s)).norm();
                if (d < min_dist) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                chosen.push_back(cand);
                if (static_cast<Eigen::Index>(chosen.size()) == n)
                    break;
            }
        }
        if (static_cast<Eigen::Index>(chosen.size()) < n)
            throw std::runtime_error(
                "topn_mask_feasible: fewer than N mutually spaced candidates");
        for (Eigen::Index s : chosen)
            mask(s, c) = Scalar(1);
    }
    return detail::make_node<Scalar>(std::move(mask), {p.node()}, [](TensorNode<Scalar>& self) {
        if (!self.parents[0]->requires_grad)
            return;
        self.parents[0]->ensure_grad();
        self.parents[0]->grad += self.grad;
    });
}

/// Scale every column to squared norm p_total.
template <typename Scalar>
Tensor<Scalar> power_normalize_cols(const Tensor<Scalar>& v, Scalar p_total) {
    if (!(p_total > Scalar(0)))
        throw std::invalid_argument("power_normalize_cols: power must be > 0");
    const Scalar root = std::sqrt(p_total);
    RMat<Scalar> out(v.rows(), v.cols());
    RVec<Scalar> norms(v.cols());
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
        const Scalar nn = v.value().col(c).norm();
        if (!(nn > Scalar(0)))
            throw std::runtime_error("power_normalize_cols: zero input vector");
        norms(c) = nn;
        out.col(c) = v.value().col(c) * (root / nn);
    }
    return detail::make_node<Scalar>(
        std::move(out), {v.node()}, [root, norms](TensorNode<Scalar>& self) {
            if (!self.parents[0]->requires_grad)
                return;
            self.parents[0]->ensure_grad();
            const auto& vv = self.parents[0]->value;
            for (Eigen::Index c = 0; c < vv.cols(); ++c) {
                const Scalar nn = norms(c);
                const Scalar proj = vv.col(c).dot(self.grad.col(c)) / (nn * nn);
                self.parents[0]->grad.col(c) +=
                    (root / nn) * (self.grad.col(c) - proj * vv.col(c));
            }
        });
}

}  // namespace mant
