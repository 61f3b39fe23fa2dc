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

#include "mant/evaluate.hpp"

#include <filesystem>

using namespace mant;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(int epochs) {
    ExperimentConfig cfg;
    cfg.scenario.rng_seed = 31;
    cfg.scenario.tx_paths = 2;
    cfg.scenario.rx_paths = 2;
    cfg.scenario.noise_power = 0.5;
    cfg.scenario.rician_factor = 1.0;
    cfg.num_samples = 120;
    cfg.feedback_bits = 6;
    cfg.sizes.enc_hidden = {16, 8};
    cfg.sizes.trunk_channels = {2, 4, 2};
    cfg.sizes.trunk_fc = 16;
    cfg.sizes.head_hidden = 16;
    cfg.train.epochs = epochs;
    cfg.train.batch_size = 16;
    cfg.train.lr0 = 2e-3;
    cfg.train.beta_dist = 100.0;
    cfg.train.seed = 5;
    cfg.dataset_path = (fs::temp_directory_path() / "mant_train_tiny.mantds").string();
    return cfg;
}

}  // namespace

TEST_CASE("schedule updates follow the clamped geometric rules") {
    SUBCASE("single steps") {
        auto [w, e] = anneal_update(1.0, 1e-4);
        CHECK(w == doctest::Approx(1.01).epsilon(1e-15));
        CHECK(e == doctest::Approx(9.9e-5).epsilon(1e-15));
    }
    SUBCASE("annealing clamps at ten") {
        auto [w1, e1] = anneal_update(9.95, 1e-4);
        CHECK(w1 == 10.0);
        auto [w2, e2] = anneal_update(w1, e1);
        CHECK(w2 == 10.0);
    }
    SUBCASE("learning rate floors at 1e-6") {
        auto [w, e] = anneal_update(1.0, 1e-6);
        CHECK(e == 1e-6);
        auto [w2, e2] = anneal_update(w, 1.005e-6);
        CHECK(e2 == 1e-6);
    }
    SUBCASE("a thousand epochs match the closed recurrences exactly") {
        double w = 1.0, e = 1e-4;
        for (int i = 0; i < 1000; ++i) {
            const double w_want = std::min(1.01 * w, 10.0);
            const double e_want = std::max(0.99 * e, 1e-6);
            std::tie(w, e) = anneal_update(w, e);
            CHECK(w == w_want);
            CHECK(e == e_want);
        }
        CHECK(w == 10.0);  // reaches and holds the cap well before 1000 epochs
    }
}

TEST_CASE("alternation starts precoder-only with period two") {
    std::string seq;
    for (int epoch = 0; epoch < 8; ++epoch)
        seq += epoch_mode(epoch, 2);
    CHECK(seq == "PPJJPPJJ");
}

TEST_CASE("reference operating point is the default train config") {
    TrainConfig tc;
    CHECK(tc.epochs == 1000);
    CHECK(tc.batch_size == 32);
    CHECK(tc.lr0 == 1e-4);
    CHECK(tc.omega0 == 1.0);
}

TEST_CASE("single-epoch smoke run") {
    ExperimentConfig cfg = tiny_config(1);
    const std::string ckpt = (fs::temp_directory_path() / "mant_train_smoke.ckpt").string();
    const std::string metrics = (fs::temp_directory_path() / "mant_train_smoke.csv").string();
    generate_dataset(cfg.scenario, cfg.num_samples, cfg.regime, cfg.episode_len,
                     cfg.dataset_path);
    const Dataset ds = Dataset::load(cfg.dataset_path);
    auto model = build_e2e_model(cfg);
    const TrainOutcome out = run_training(*model, ds, cfg, ckpt, metrics);
    CHECK(out.log.size() == 1);
    CHECK(out.log[0].mode == 'P');
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(metrics));
    const CsvTable t = read_csv(metrics);
    CHECK(t.columns == std::vector<std::string>{"epoch", "mode", "train_loss", "train_rate",
                                                "val_rate", "spacing_violation_frac", "omega",
                                                "eta"});
    CHECK(t.rows.size() == 1);
    fs::remove(ckpt);
    fs::remove(metrics);
}

TEST_CASE("precoder-only epochs never touch the selection parameters") {
    ExperimentConfig cfg = tiny_config(1);
    generate_dataset(cfg.scenario, cfg.num_samples, cfg.regime, cfg.episode_len,
                     cfg.dataset_path);
    const Dataset ds = Dataset::load(cfg.dataset_path);
    auto model = build_e2e_model(cfg);
    const auto [train_view, val_view] = split_train_val(ds, cfg.val_fraction);
    Adam<double> adam;

    const std::uint64_t before = model->position_param_hash();
    (void)train_epoch_e2e(*model, train_view, cfg, 0, 'P', 1.0, cfg.train.lr0, adam);
    CHECK(model->position_param_hash() == before);

    (void)train_epoch_e2e(*model, train_view, cfg, 1, 'J', 1.0, cfg.train.lr0, adam);
    CHECK(model->position_param_hash() != before);
}

TEST_CASE("epoch loss equals the penalized negative rate of its single batch") {
    ExperimentConfig cfg = tiny_config(1);
    cfg.num_samples = 20;
    cfg.train.batch_size = 18;  // one batch covers the whole train split
    generate_dataset(cfg.scenario, cfg.num_samples, cfg.regime, cfg.episode_len,
                     cfg.dataset_path);
    const Dataset ds = Dataset::load(cfg.dataset_path);
    const auto [train_view, val_view] = split_train_val(ds, cfg.val_fraction);
    REQUIRE(train_view.count == 18);

    auto model = build_e2e_model(cfg);
    Adam<double> adam;
    const EpochStats stats =
        train_epoch_e2e(*model, train_view, cfg, 0, 'P', cfg.train.omega0, cfg.train.lr0, adam);

    // replay the same forward on an untouched model clone
    auto replay = build_e2e_model(cfg);
    BatchIterator it(train_view, 18, Rng(mix_seed(cfg.train.seed, detail::kShuffleTag + 0)));
    std::vector<const ChannelSample<double>*> batch;
    REQUIRE(it.next(batch));
    Rng noise(mix_seed(cfg.train.seed, detail::kBatchNoiseTag + 1315423911ull * 0 + 0));
    ForwardOptions opt;
    opt.training = true;
    opt.omega = cfg.train.omega0;
    opt.noise_rng = &noise;
    const ForwardResult fr = replay->forward(batch, opt);
    const double recomputed = -fr.mean_sum_rate + cfg.train.beta_dist * fr.mean_penalty;
    CHECK(stats.loss == doctest::Approx(recomputed).epsilon(1e-12));
    CHECK(stats.rate == doctest::Approx(fr.mean_sum_rate).epsilon(1e-12));
}

TEST_CASE("validation is deterministic and improves with training") {
    ExperimentConfig cfg = tiny_config(30);
    generate_dataset(cfg.scenario, cfg.num_samples, cfg.regime, cfg.episode_len,
                     cfg.dataset_path);
    const Dataset ds = Dataset::load(cfg.dataset_path);
    const auto [train_view, val_view] = split_train_val(ds, cfg.val_fraction);

    auto model = build_e2e_model(cfg);
    const double untrained_1 = validate_e2e(*model, val_view, cfg);
    const double untrained_2 = validate_e2e(*model, val_view, cfg);
    CHECK(untrained_1 == untrained_2);

    const TrainOutcome out = run_training(*model, ds, cfg, "", "");
    CHECK(out.best_val > untrained_1);

    SUBCASE("best checkpoint rate is the running maximum of the log") {
        double running = untrained_1;
        for (const auto& r : out.log)
            running = std::max(running, r.val_rate);
        CHECK(out.best_val == running);
    }
    SUBCASE("noiseless pilots validate at least as well as noisy ones") {
        // paired comparison over the validation set, eval mode
        auto run_with_scale = [&](double scale) {
            double acc = 0.0;
            for (std::size_t start = 0; start < val_view.count;
                 start += static_cast<std::size_t>(cfg.train.batch_size)) {
                const std::size_t end = std::min(
                    start + static_cast<std::size_t>(cfg.train.batch_size), val_view.count);
                std::vector<const ChannelSample<double>*> batch;
                for (std::size_t i = start; i < end; ++i)
                    batch.push_back(&val_view.sample(i));
                Rng noise(mix_seed(cfg.train.seed, kValNoiseTag + start));
                ForwardOptions opt;
                opt.training = false;
                opt.noise_rng = &noise;
                opt.noise_scale = scale;
                acc += model->forward(batch, opt).rates.value().sum();
            }
            return acc / static_cast<double>(val_view.count);
        };
        CHECK(run_with_scale(0.0) >= run_with_scale(1.0));
    }
}

TEST_CASE("training aborts on non-finite loss") {
    ExperimentConfig cfg = tiny_config(1);
    cfg.num_samples = 40;
    generate_dataset(cfg.scenario, cfg.num_samples, cfg.regime, cfg.episode_len,
                     cfg.dataset_path);
    const Dataset ds = Dataset::load(cfg.dataset_path);
    auto model = build_e2e_model(cfg);
    model->store().params().front().value()(0, 0) = std::numeric_limits<double>::quiet_NaN();
    const auto [train_view, val_view] = split_train_val(ds, cfg.val_fraction);
    Adam<double> adam;
    CHECK_THROWS_AS(
        (void)train_epoch_e2e(*model, train_view, cfg, 0, 'P', 1.0, cfg.train.lr0, adam),
        NumericError);
}

TEST_CASE("checkpoints round-trip through float32 with a matching manifest") {
    ExperimentConfig cfg = tiny_config(2);
    generate_dataset(cfg.scenario, cfg.num_samples, cfg.regime, cfg.episode_len,
                     cfg.dataset_path);
    const Dataset ds = Dataset::load(cfg.dataset_path);
    const std::string ckpt = (fs::temp_directory_path() / "mant_train_ck.ckpt").string();
    auto model = build_e2e_model(cfg);
    const TrainOutcome out = run_training(*model, ds, cfg, ckpt, "");

    SUBCASE("reload reproduces the stored validation rate exactly") {
        auto fresh = build_e2e_model(cfg);
        const nlohmann::json meta = load_checkpoint(ckpt, fresh->store());
        const auto val_view = split_train_val(ds, cfg.val_fraction).second;
        const double revalidated = validate_e2e(*fresh, val_view, cfg);
        CHECK(std::abs(revalidated - meta.at("val_rate").get<double>()) < 1e-9);
        CHECK(meta.at("kind").get<std::string>() == "e2e");
    }
    SUBCASE("values are exactly representable in float32 after reload") {
        auto fresh = build_e2e_model(cfg);
        load_checkpoint(ckpt, fresh->store());
        for (const auto& p : fresh->store().params())
            for (Eigen::Index i = 0; i < p.value().size(); ++i)
                CHECK(static_cast<double>(static_cast<float>(p.value()(i))) == p.value()(i));
    }
    SUBCASE("shape mismatches are rejected") {
        ExperimentConfig other = tiny_config(1);
        other.feedback_bits = 7;  // different parameter shapes
        auto fresh = build_e2e_model(other);
        CHECK_THROWS_AS((void)load_checkpoint(ckpt, fresh->store()), std::runtime_error);
    }
    fs::remove(ckpt);
}

TEST_CASE("metric logs are byte-identical across reruns") {
    ExperimentConfig cfg = tiny_config(4);
    generate_dataset(cfg.scenario, cfg.num_samples, cfg.regime, cfg.episode_len,
                     cfg.dataset_path);
    const Dataset ds = Dataset::load(cfg.dataset_path);
    const std::string m1 = (fs::temp_directory_path() / "mant_train_m1.csv").string();
    const std::string m2 = (fs::temp_directory_path() / "mant_train_m2.csv").string();
    {
        auto model = build_e2e_model(cfg);
        (void)run_training(*model, ds, cfg, "", m1);
    }
    {
        auto model = build_e2e_model(cfg);
        (void)run_training(*model, ds, cfg, "", m2);
    }
    std::ifstream f1(m1), f2(m2);
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    fs::remove(m1);
    fs::remove(m2);
}
