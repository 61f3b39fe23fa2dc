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
// Dataset files: an 8-byte magic, a length-prefixed JSON header carrying the
// scenario snapshot and counts, then fixed-size records of little-endian
// float32 (re, im) interleaved channel matrices.

#pragma once

#include "mant/config.hpp"

#include <string>
#include <vector>

namespace mant {

inline constexpr char kDatasetMagic[8] = {'M', 'A', 'N', 'T', 'D', 'S', '1', '\n'};

struct DatasetHeader {
    int version = 1;
    Scenario scenario;
    Regime regime = Regime::kInstantaneous;
    int episode_len = 1;
    std::uint64_t num_samples = 0;
    int grid_points = 0;
    int meas_points = 0;
    int num_users = 0;
    int float_width = 32;
};

/// In-memory dataset; records are loaded eagerly on open.
class Dataset {
  public:
    static Dataset load(const std::string& path);

    const DatasetHeader& header() const { return header_; }
    std::size_t size() const { return samples_.size(); }
    const ChannelSample<double>& sample(std::size_t i) const { return samples_.at(i); }

    DatasetHeader header_;
    std::vector<ChannelSample<double>> samples_;
};

/// Per-sample random substreams. Instantaneous samples own a full geometry
/// redraw; statistical samples share the episode geometry and redraw the
/// path response per slot.
Rng sample_stream(std::uint64_t seed, std::uint64_t index);
Rng episode_stream(std::uint64_t seed, std::uint64_t episode);
Rng slot_stream(std::uint64_t seed, std::uint64_t episode, std::uint64_t slot);

/// Geometry and path responses behind one sample index; lets any position
/// set be evaluated consistently with the stored channels (baselines probe
/// off-grid layouts this way instead of storing geometry in the file).
struct SampleContext {
    std::vector<PathSet<double>> path_sets;
    std::vector<CVec<double>> psis;  // per-user tx path response of this slot
};

SampleContext sample_context(const Scenario& sc, Regime regime, int episode_len,
                             std::uint64_t index);

CMat<double> channel_at(const SampleContext& ctx,
                        const Eigen::Matrix<double, Eigen::Dynamic, 2>& positions);

/// Generate and write a dataset. For the statistical regime num_samples
/// must be a multiple of episode_len.
void generate_dataset(const Scenario& sc, std::uint64_t num_samples, Regime regime,
                      int episode_len, const std::string& path);

struct DataView {
    const Dataset* data = nullptr;
    std::size_t start = 0;
    std::size_t count = 0;

    const ChannelSample<double>& sample(std::size_t i) const {
        return data->sample(start + i);
    }
};

/// Deterministic contiguous split: the last floor(n * val_fraction) samples
/// form the validation view.
std::pair<DataView, DataView> split_train_val(const Dataset& ds, double val_fraction);

/// Episode-aligned variant: the validation size is rounded down to a
/// multiple of episode_len so episodes never straddle the split.
std::pair<DataView, DataView> split_train_val_aligned(const Dataset& ds, double val_fraction,
                                                      int episode_len);

/// Mini-batches over a seeded per-epoch permutation; the final partial
/// batch is emitted.
class BatchIterator {
  public:
    BatchIterator(const DataView& view, std::size_t batch_size, Rng rng);

    /// Fills the next batch; returns false when the epoch is exhausted.
    bool next(std::vector<const ChannelSample<double>*>& out);

  private:
    const DataView view_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

/// Episode handles into a view (statistical regime); view.count must be a
/// multiple of episode_len.
std::vector<std::vector<const ChannelSample<double>*>> episodes_of(const DataView& view,
                                                                   int episode_len);

}  // namespace mant
