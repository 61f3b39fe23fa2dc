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

#include "mant/dataset.hpp"

#include <filesystem>
#include <fstream>

using namespace mant;
namespace fs = std::filesystem;

namespace {

Scenario tiny_scenario() {
    Scenario sc;
    sc.num_users = 2;
    sc.num_mas = 2;
    sc.tx_paths = 2;
    sc.rx_paths = 2;
    sc.region_size_x = 0.75;
    sc.region_size_z = 0.25;
    sc.rng_seed = 99;
    return sc;
}

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("dataset round trip and determinism") {
    const Scenario sc = tiny_scenario();
    const std::string p1 = tmp_path("mant_ds_a.bin");
    const std::string p2 = tmp_path("mant_ds_b.bin");
    generate_dataset(sc, 12, Regime::kInstantaneous, 1, p1);
    generate_dataset(sc, 12, Regime::kInstantaneous, 1, p2);
    CHECK(file_bytes(p1) == file_bytes(p2));  // same seed, same bytes

    const Dataset ds = Dataset::load(p1);
    CHECK(ds.size() == 12);
    CHECK(ds.header().num_users == 2);
    CHECK(ds.header().grid_points == candidate_grid(sc).count());
    CHECK(ds.header().meas_points == measurement_grid(sc).count());
    CHECK(ds.header().scenario.rng_seed == 99);

    SUBCASE("stored channels match regeneration within float32 rounding") {
        const auto grid = candidate_grid(sc);
        for (std::size_t i = 0; i < 3; ++i) {
            const SampleContext ctx = sample_context(sc, Regime::kInstantaneous, 1, i);
            const CMat<double> h = channel_at(ctx, grid.points);
            CHECK((h - ds.sample(i).h_grid).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
    SUBCASE("a different seed changes the file") {
        Scenario other = sc;
        other.rng_seed = 100;
        const std::string p3 = tmp_path("mant_ds_c.bin");
        generate_dataset(other, 12, Regime::kInstantaneous, 1, p3);
        CHECK(file_bytes(p1) != file_bytes(p3));
    }
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("empty dataset is readable") {
    const std::string p = tmp_path("mant_ds_empty.bin");
    generate_dataset(tiny_scenario(), 0, Regime::kInstantaneous, 1, p);
    const Dataset ds = Dataset::load(p);
    CHECK(ds.size() == 0);
    CHECK(ds.header().num_samples == 0);
    fs::remove(p);
}

TEST_CASE("corrupt magic rejected") {
    const std::string p = tmp_path("mant_ds_bad.bin");
    {
        std::ofstream out(p, std::ios::binary);
        out << "NOTADATA" << std::string(64, '\0');
    }
    CHECK_THROWS_WITH_AS((void)Dataset::load(p), doctest::Contains("bad magic"),
                         std::runtime_error);
    fs::remove(p);
}

TEST_CASE("train/validation splits") {
    const Scenario sc = tiny_scenario();
    const std::string p = tmp_path("mant_ds_split.bin");

    SUBCASE("100 samples at 10 percent") {
        generate_dataset(sc, 100, Regime::kInstantaneous, 1, p);
        const Dataset ds = Dataset::load(p);
        const auto [train, val] = split_train_val(ds, 0.1);
        CHECK(train.count == 90);
        CHECK(val.count == 10);
        CHECK(train.start == 0);
        CHECK(val.start == 90);  // contiguous tail, disjoint, covering
    }
    SUBCASE("zero fraction keeps everything in train") {
        generate_dataset(sc, 5, Regime::kInstantaneous, 1, p);
        const Dataset ds = Dataset::load(p);
        const auto [train, val] = split_train_val(ds, 0.0);
        CHECK(train.count == 5);
        CHECK(val.count == 0);
    }
    SUBCASE("odd split floors the validation count") {
        generate_dataset(sc, 7, Regime::kInstantaneous, 1, p);
        const Dataset ds = Dataset::load(p);
        const auto [train, val] = split_train_val(ds, 0.5);
        CHECK(train.count == 4);
        CHECK(val.count == 3);
    }
    SUBCASE("fraction out of range rejected") {
        generate_dataset(sc, 5, Regime::kInstantaneous, 1, p);
        const Dataset ds = Dataset::load(p);
        CHECK_THROWS_AS((void)split_train_val(ds, 1.0), std::invalid_argument);
        CHECK_THROWS_AS((void)split_train_val(ds, -0.1), std::invalid_argument);
    }
    fs::remove(p);
}

TEST_CASE("batch iteration") {
    const Scenario sc = tiny_scenario();
    const std::string p = tmp_path("mant_ds_batch.bin");
    generate_dataset(sc, 64, Regime::kInstantaneous, 1, p);
    const Dataset ds = Dataset::load(p);
    const DataView all{&ds, 0, ds.size()};

    SUBCASE("64 samples in batches of 32") {
        BatchIterator it(all, 32, Rng(5));
        std::vector<const ChannelSample<double>*> b;
        int batches = 0;
        std::size_t seen = 0;
        while (it.next(b)) {
            ++batches;
            seen += b.size();
            CHECK(b.size() == 32);
        }
        CHECK(batches == 2);
        CHECK(seen == 64);
    }
    SUBCASE("partial final batch is emitted") {
        const DataView five{&ds, 0, 5};
        BatchIterator it(five, 32, Rng(5));
        std::vector<const ChannelSample<double>*> b;
        CHECK(it.next(b));
        CHECK(b.size() == 5);
        CHECK(!it.next(b));
    }
    SUBCASE("same seed gives the same permutation") {
        BatchIterator it1(all, 16, Rng(7));
        BatchIterator it2(all, 16, Rng(7));
        std::vector<const ChannelSample<double>*> b1, b2;
        while (it1.next(b1)) {
            REQUIRE(it2.next(b2));
            CHECK(b1 == b2);
        }
        CHECK(!it2.next(b2));
    }
    SUBCASE("batch size below one rejected") {
        CHECK_THROWS_AS(BatchIterator(all, 0, Rng(1)), std::invalid_argument);
    }
    fs::remove(p);
}

TEST_CASE("statistical regime episodes") {
    Scenario sc = tiny_scenario();
    const std::string p = tmp_path("mant_ds_stat.bin");
    generate_dataset(sc, 12, Regime::kStatistical, 4, p);
    const Dataset ds = Dataset::load(p);
    CHECK(ds.header().episode_len == 4);

    SUBCASE("slot indices cycle within episodes") {
        for (std::size_t i = 0; i < 12; ++i)
            CHECK(ds.sample(i).slot == i % 4);
    }
    SUBCASE("episode-aligned split never cuts an episode") {
        const auto [train, val] = split_train_val_aligned(ds, 0.4, 4);
        CHECK(val.count % 4 == 0);
        CHECK(train.count + val.count == 12);
    }
    SUBCASE("episodes_of groups consecutive slots") {
        const DataView all{&ds, 0, 12};
        const auto eps = episodes_of(all, 4);
        CHECK(eps.size() == 3);
        CHECK(eps[0].size() == 4);
        CHECK_THROWS_AS((void)episodes_of(DataView{&ds, 0, 10}, 4), std::invalid_argument);
    }
    SUBCASE("sample count must divide into episodes") {
        CHECK_THROWS_AS(generate_dataset(sc, 10, Regime::kStatistical, 4, p),
                        std::invalid_argument);
    }
    fs::remove(p);
}
