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

#include "mant/dataset.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace mant {

using nlohmann::json;

namespace {

// stream tags keep the per-purpose substreams disjoint
constexpr std::uint64_t kSampleTag = 1000003ull;
constexpr std::uint64_t kEpisodeTag = 2000003ull;
constexpr std::uint64_t kSlotTag = 777ull;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        throw std::runtime_error("dataset: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_cmat_f32(std::ostream& out, const CMat<double>& m) {
    std::vector<float> buf(static_cast<std::size_t>(m.size()) * 2);
    std::size_t i = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            buf[i++] = static_cast<float>(m(r, c).real());
            buf[i++] = static_cast<float>(m(r, c).imag());
        }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

CMat<double> read_cmat_f32(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
    std::vector<float> buf(static_cast<std::size_t>(rows) * cols * 2);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in)
        throw std::runtime_error("dataset: truncated record");
    CMat<double> m(rows, cols);
    std::size_t i = 0;
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) {
            const double re = buf[i++];
            const double im = buf[i++];
            m(r, c) = {re, im};
        }
    return m;
}

json header_to_json(const DatasetHeader& h) {
    return json{{"version", h.version},
                {"scenario", scenario_to_json(h.scenario)},
                {"regime", regime_name(h.regime)},
                {"episode_len", h.episode_len},
                {"num_samples", h.num_samples},
                {"grid_points", h.grid_points},
                {"meas_points", h.meas_points},
                {"num_users", h.num_users},
                {"float_width", h.float_width}};
}

DatasetHeader header_from_json(const json& j) {
    DatasetHeader h;
    h.version = j.at("version").get<int>();
    if (h.version != 1)
        throw std::runtime_error("dataset: unsupported format version");
    h.scenario = scenario_from_json(j.at("scenario"));
    h.regime = regime_from_name(j.at("regime").get<std::string>());
    h.episode_len = j.at("episode_len").get<int>();
    h.num_samples = j.at("num_samples").get<std::uint64_t>();
    h.grid_points = j.at("grid_points").get<int>();
    h.meas_points = j.at("meas_points").get<int>();
    h.num_users = j.at("num_users").get<int>();
    h.float_width = j.at("float_width").get<int>();
    if (h.float_width != 32)
        throw std::runtime_error("dataset: unsupported float width");
    return h;
}

}  // namespace

Rng sample_stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix_seed(seed, kSampleTag + index));
}
Rng episode_stream(std::uint64_t seed, std::uint64_t episode) {
    return Rng(mix_seed(seed, kEpisodeTag + episode));
}
Rng slot_stream(std::uint64_t seed, std::uint64_t episode, std::uint64_t slot) {
    return Rng(mix_seed(mix_seed(seed, kEpisodeTag + episode), kSlotTag + slot));
}

SampleContext sample_context(const Scenario& sc, Regime regime, int episode_len,
                             std::uint64_t index) {
    SampleContext ctx;
    if (regime == Regime::kInstantaneous) {
        Rng rng = sample_stream(sc.rng_seed, index);
        ctx.path_sets = draw_path_sets(sc, rng);
        for (const auto& ps : ctx.path_sets)
            ctx.psis.push_back(path_response(ps));
    } else {
        const std::uint64_t ep = index / static_cast<std::uint64_t>(episode_len);
        const std::uint64_t slot = index % static_cast<std::uint64_t>(episode_len);
        Rng geo = episode_stream(sc.rng_seed, ep);
        ctx.path_sets = draw_path_sets(sc, geo);
        Rng draw = slot_stream(sc.rng_seed, ep, slot);
        for (const auto& ps : ctx.path_sets)
            ctx.psis.push_back(draw_path_response(ps, draw));
    }
    return ctx;
}

CMat<double> channel_at(const SampleContext& ctx,
                        const Eigen::Matrix<double, Eigen::Dynamic, 2>& positions) {
    return channel_matrix<double>(positions, ctx.path_sets, ctx.psis);
}

void generate_dataset(const Scenario& sc, std::uint64_t num_samples, Regime regime,
                      int episode_len, const std::string& path) {
    sc.validate();
    if (regime == Regime::kStatistical) {
        if (episode_len < 1)
            throw std::invalid_argument("generate_dataset: episode_len must be >= 1");
        if (num_samples % static_cast<std::uint64_t>(episode_len) != 0)
            throw std::invalid_argument(
                "generate_dataset: num_samples must be a multiple of episode_len");
    }
    const Grid<double> grid = candidate_grid(sc);
    const Grid<double> meas = measurement_grid(sc);

    DatasetHeader h;
    h.scenario = sc;
    h.regime = regime;
    h.episode_len = (regime == Regime::kStatistical) ? episode_len : 1;
    h.num_samples = num_samples;
    h.grid_points = static_cast<int>(grid.count());
    h.meas_points = static_cast<int>(meas.count());
    h.num_users = sc.num_users;

    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty())
        std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("dataset: cannot write " + path);
    out.write(kDatasetMagic, sizeof(kDatasetMagic));
    const std::string header = header_to_json(h).dump();
    write_u32(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    for (std::uint64_t i = 0; i < num_samples; ++i) {
        const SampleContext ctx = sample_context(sc, regime, h.episode_len, i);
        const CMat<double> h_grid = channel_at(ctx, grid.points);
        const CMat<double> h_meas = channel_at(ctx, meas.points);
        const std::uint32_t slot =
            (regime == Regime::kStatistical)
                ? static_cast<std::uint32_t>(i % static_cast<std::uint64_t>(h.episode_len))
                : static_cast<std::uint32_t>(i);
        write_u32(out, slot);
        write_cmat_f32(out, h_grid);
        write_cmat_f32(out, h_meas);
    }
    if (!out)
        throw std::runtime_error("dataset: write failure on " + path);
}

Dataset Dataset::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("dataset: cannot open " + path);
    char magic[sizeof(kDatasetMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
        throw std::runtime_error("dataset: bad magic in " + path);
    const std::uint32_t hlen = read_u32(in);
    std::string hstr(hlen, '\0');
    in.read(hstr.data(), hlen);
    if (!in)
        throw std::runtime_error("dataset: truncated header in " + path);

    Dataset ds;
    ds.header_ = header_from_json(json::parse(hstr));
    ds.samples_.reserve(static_cast<std::size_t>(ds.header_.num_samples));
    for (std::uint64_t i = 0; i < ds.header_.num_samples; ++i) {
        ChannelSample<double> s;
        s.slot = read_u32(in);
        s.h_grid = read_cmat_f32(in, ds.header_.grid_points, ds.header_.num_users);
        s.h_meas = read_cmat_f32(in, ds.header_.meas_points, ds.header_.num_users);
        if (!s.h_grid.allFinite() || !s.h_meas.allFinite())
            throw std::runtime_error("dataset: non-finite values in record");
        ds.samples_.push_back(std::move(s));
    }
    return ds;
}

std::pair<DataView, DataView> split_train_val(const Dataset& ds, double val_fraction) {
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("split_train_val: fraction must be in [0, 1)");
    const std::size_t n = ds.size();
    const std::size_t vn = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction));
    return {DataView{&ds, 0, n - vn}, DataView{&ds, n - vn, vn}};
}

std::pair<DataView, DataView> split_train_val_aligned(const Dataset& ds, double val_fraction,
                                                      int episode_len) {
    auto [train, val] = split_train_val(ds, val_fraction);
    const std::size_t ep = static_cast<std::size_t>(std::max(episode_len, 1));
    const std::size_t vn = (val.count / ep) * ep;
    const std::size_t n = ds.size();
    return {DataView{&ds, 0, n - vn}, DataView{&ds, n - vn, vn}};
}

BatchIterator::BatchIterator(const DataView& view, std::size_t batch_size, Rng rng)
    : view_(view), batch_size_(batch_size) {
    if (batch_size_ < 1)
        throw std::invalid_argument("load_batches: batch_size must be >= 1");
    order_.resize(view.count);
    for (std::size_t i = 0; i < view.count; ++i)
        order_[i] = i;
    rng.shuffle(order_);
}

bool BatchIterator::next(std::vector<const ChannelSample<double>*>& out) {
    out.clear();
    if (cursor_ >= order_.size())
        return false;
    const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
    for (std::size_t i = cursor_; i < end; ++i)
        out.push_back(&view_.sample(order_[i]));
    cursor_ = end;
    return true;
}

std::vector<std::vector<const ChannelSample<double>*>> episodes_of(const DataView& view,
                                                                   int episode_len) {
    if (episode_len < 1 || view.count % static_cast<std::size_t>(episode_len) != 0)
        throw std::invalid_argument("episodes_of: view size not episode-aligned");
    std::vector<std::vector<const ChannelSample<double>*>> eps;
    const std::size_t n_ep = view.count / static_cast<std::size_t>(episode_len);
    eps.reserve(n_ep);
    for (std::size_t e = 0; e < n_ep; ++e) {
        std::vector<const ChannelSample<double>*> ep;
        ep.reserve(static_cast<std::size_t>(episode_len));
        for (int t = 0; t < episode_len; ++t)
            ep.push_back(&view.sample(e * static_cast<std::size_t>(episode_len) +
                                      static_cast<std::size_t>(t)));
        eps.push_back(std::move(ep));
    }
    return eps;
}

}  // namespace mant
