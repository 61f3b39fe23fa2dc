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
// Self-attention encoder over feedback-bit sequences. Token matrices are
// (tokens x d_model); one matrix per batch element, built and encoded
// per element at graph construction time.

#pragma once

#include "mant/nn.hpp"

namespace mant {

/// x (rows x in) * W^T + b broadcast per row, for token-matrix layouts.
template <typename Scalar>
Tensor<Scalar> linear_rows(const Tensor<Scalar>& x, const Affine<Scalar>& layer) {
    return add_rowvec(matmul(x, transpose(layer.weight->tensor)),
                      transpose(layer.bias->tensor));
}

struct EncoderConfig {
    int d_model = 64;
    int heads = 4;
    int layers = 2;
    int ff_mult = 4;
    bool positional_encoding = false;  // slots are exchangeable; off by default
};

/// One pre-activation transformer block: post-norm residual attention and
/// feed-forward, multi-head scaled dot-product attention.
template <typename Scalar>
struct EncoderLayer {
    Affine<Scalar> wq, wk, wv, wo, ff1, ff2;
    LayerNorm<Scalar> ln1, ln2;
    int heads = 1;
    int d_model = 0;

    EncoderLayer() = default;
    EncoderLayer(ParamStore<Scalar>& store, const std::string& name, int d, int n_heads,
                 int ff_mult, Rng& rng)
        : wq(store, name + ".wq", d, d, rng),
          wk(store, name + ".wk", d, d, rng),
          wv(store, name + ".wv", d, d, rng),
          wo(store, name + ".wo", d, d, rng),
          ff1(store, name + ".ff1", d, d * ff_mult, rng),
          ff2(store, name + ".ff2", d * ff_mult, d, rng),
          ln1(store, name + ".ln1", d),
          ln2(store, name + ".ln2", d),
          heads(n_heads),
          d_model(d) {
        if (d % n_heads != 0)
            throw std::invalid_argument("encoder: d_model must be divisible by heads");
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) const {
        const Eigen::Index dh = d_model / heads;
        Tensor<Scalar> q = linear_rows(x, wq);
        Tensor<Scalar> k = linear_rows(x, wk);
        Tensor<Scalar> v = linear_rows(x, wv);
        std::vector<Tensor<Scalar>> outs;
        const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
        for (int h = 0; h < heads; ++h) {
            Tensor<Scalar> qh = slice_cols(q, h * dh, dh);
            Tensor<Scalar> kh = slice_cols(k, h * dh, dh);
            Tensor<Scalar> vh = slice_cols(v, h * dh, dh);
            Tensor<Scalar> scores = scalar_mul(matmul(qh, transpose(kh)), scale);
            outs.push_back(matmul(softmax_rows(scores), vh));
        }
        Tensor<Scalar> attn = linear_rows(concat_cols(outs), wo);
        Tensor<Scalar> x1 = ln1.forward(add(x, attn));
        Tensor<Scalar> ff = linear_rows(relu(linear_rows(x1, ff1)), ff2);
        return ln2.forward(add(x1, ff));
    }
};

/// Sequence encoder: per-slot tokens linearly embedded, a learnable CLS
/// token prepended, attention layers, CLS row returned.
template <typename Scalar>
struct SequenceEncoder {
    Parameter<Scalar>* cls = nullptr;  // 1 x d_model
    Affine<Scalar> embed;
    std::vector<EncoderLayer<Scalar>> layers;
    EncoderConfig cfg;
    Eigen::Index token_dim = 0;

    SequenceEncoder() = default;
    SequenceEncoder(ParamStore<Scalar>& store, const std::string& name, Eigen::Index token_len,
                    const EncoderConfig& c, Rng& rng)
        : embed(store, name + ".embed", token_len, c.d_model, rng), cfg(c), token_dim(token_len) {
        cls = &store.add(name + ".cls", uniform_init<Scalar>(1, c.d_model, c.d_model, rng));
        for (int i = 0; i < c.layers; ++i)
            layers.emplace_back(store, name + ".layer" + std::to_string(i), c.d_model, c.heads,
                                c.ff_mult, rng);
    }

    /// tokens: (T x token_dim) for one batch element; returns CLS feature
    /// as a (d_model x 1) column.
    Tensor<Scalar> encode_one(const Tensor<Scalar>& tokens) const {
        if (tokens.cols() != token_dim)
            throw std::invalid_argument("encoder: token length mismatch with embedding");
        Tensor<Scalar> emb = linear_rows(tokens, embed);
        if (cfg.positional_encoding)
            emb = add(emb, Tensor<Scalar>::constant(sinusoidal(emb.rows(), cfg.d_model)));
        Tensor<Scalar> x = concat_rows<Scalar>({cls->tensor, emb});
        for (const auto& layer : layers)
            x = layer.forward(x);
        return transpose(slice_rows(x, 0, 1));
    }

    static RMat<Scalar> sinusoidal(Eigen::Index t, Eigen::Index d) {
        RMat<Scalar> pe(t, d);
        for (Eigen::Index pos = 0; pos < t; ++pos)
            for (Eigen::Index i = 0; i < d; ++i) {
                const double angle =
                    static_cast<double>(pos) /
                    std::pow(10000.0, 2.0 * static_cast<double>(i / 2) / static_cast<double>(d));
                pe(pos, i) = static_cast<Scalar>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
            }
        return pe;
    }
};

}  // namespace mant
