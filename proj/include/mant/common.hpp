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

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mant {

template <typename Scalar>
using RMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using CMat = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using CVec = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Raised when a computation produces non-finite values (distinct exit code
/// at the CLI boundary).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Stream derivation: a fixed SplitMix64-style hash of (base, index).
/// Substreams derived this way are order-independent, so per-sample work
/// can be parallelized without changing results.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t s = base + 0x9E3779B97F4A7C15ull * (index + 1ull);
    s = (s ^ (s >> 30)) * 0xBF58476D1CE4E5B9ull;
    s = (s ^ (s >> 27)) * 0x94D049BB133111EBull;
    return s ^ (s >> 31);
}

/// Deterministic random source. The engine is std::mt19937_64 (fully
/// specified by the standard); all variate transforms are implemented
/// here rather than via std::*_distribution, whose output is
/// implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed)
        : state_(seed == 0 ? 0x6A09E667F3BCC909ull : seed), seed0_(seed) {
        // warm up so that small seeds decorrelate quickly
        for (int i = 0; i < 4; ++i)
            next();
    }

    Rng substream(std::uint64_t index) const { return Rng(mix_seed(seed0_, index)); }

    std::uint64_t u64() { return next(); }

    /// Uniform on [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]
    double uniform_pos() { return static_cast<double>((next() >> 11) + 1ull) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

    /// N(0, 1) via Box-Muller with cached spare.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = kTwoPi * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    /// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
    std::complex<double> cnormal(double variance) {
        const double s = std::sqrt(variance / 2.0);
        const double re = s * normal();
        const double im = s * normal();
        return {re, im};
    }

    /// Rayleigh with E[x^2] = mean_square.
    double rayleigh_ms(double mean_square) {
        return std::sqrt(mean_square) * std::sqrt(-std::log(uniform_pos()));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates with the engine above; std::shuffle is not portable.
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t next() {
        // xorshift* would do; reuse splitmix64 as the stepping function.
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    std::uint64_t seed0_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace mant
