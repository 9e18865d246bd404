#include "erpnet/errors.hpp"
#include "erpnet/sweep.hpp"
#include "erpnet/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

using namespace erpnet;

namespace {

DatasetSplit tiny_split(std::uint64_t seed) {
    SynthConfig s;
    s.n_epochs = 60;
    s.channels = 4;
    s.samples = 32;
    s.sample_rate_hz = 32.0;
    s.oddball_rate = 0.5;
    s.seed = seed;
    return split(generate(s), SplitSpec{0.7, 0.15, 0.15, seed});
}

ModelConfig tiny_base() {
    ModelConfig m = cn_eegnet_default(4, 32);
    m.kernel_length = 8;
    return m;
}

SweepSpace tiny_space() {
    SweepSpace s;
    s.f1 = {2, 4};
    s.f2 = {2, 4};
    s.d = {1, 2};
    s.kernel_length = {4, 8};
    s.batch_size = {8, 16};
    return s;
}

TrainConfig short_train() {
    TrainConfig t;
    t.max_epochs = 3;
    return t;
}

TrialResult result(std::size_t index, double val, double wall, std::string error = {}) {
    TrialResult r;
    r.index = index;
    r.val_accuracy = val;
    r.wall_seconds = wall;
    r.error = std::move(error);
    return r;
}

}  // namespace

TEST_CASE("point space always yields its configuration") {
    const ModelConfig table3 = cn_eegnet_default();
    const auto space = SweepSpace::point(table3, OptimizerKind::Adam, 64);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        const auto t = sample_config(space, table3, TrainConfig{}, rng);
        CHECK(t.model == table3);
        CHECK(t.optimizer.kind == OptimizerKind::Adam);
        CHECK(t.train.batch_size == 64);
    }
    CHECK(grid_configs(space, table3, TrainConfig{}).size() == 1);
}

TEST_CASE("sampling frequencies are uniform") {
    const SweepSpace space;
    Rng rng(2);
    std::map<std::size_t, int> f1, batch;
    std::map<OptimizerKind, int> opt;
    double dropout_min = 1, dropout_max = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const auto t = sample_config(space, cn_eegnet_default(), TrainConfig{}, rng);
        ++f1[t.model.f1];
        ++batch[t.train.batch_size];
        ++opt[t.optimizer.kind];
        dropout_min = std::min(dropout_min, t.model.dropout_rate);
        dropout_max = std::max(dropout_max, t.model.dropout_rate);
        CHECK(t.model.norm_rate >= 0.1);
        CHECK(t.model.norm_rate <= 0.5);
    }
    const auto within = [n](const auto& counts, std::size_t k) {
        CHECK(counts.size() == k);
        for (const auto& [value, count] : counts) {
            const double freq = static_cast<double>(count) / n;
            CHECK(std::abs(freq - 1.0 / static_cast<double>(k)) <= 0.05 / static_cast<double>(k));
        }
    };
    within(f1, 3);
    within(batch, 7);
    within(opt, 7);
    CHECK(dropout_min >= 0.1);
    CHECK(dropout_min < 0.11);
    CHECK(dropout_max > 0.49);

    Rng a(3), b(3);
    for (int i = 0; i < 10; ++i) {
        const auto x = sample_config(space, cn_eegnet_default(), TrainConfig{}, a);
        const auto y = sample_config(space, cn_eegnet_default(), TrainConfig{}, b);
        CHECK(x.model == y.model);
        CHECK(x.optimizer.kind == y.optimizer.kind);
    }
}

TEST_CASE("grid") {
    auto space = tiny_space();
    space.optimizer = {OptimizerKind::Adam, OptimizerKind::Nadam};
    const auto grid = grid_configs(space, tiny_base(), short_train(), 3);
    CHECK(grid.size() == 2 * 2 * 2 * 3 * 2 * 3 * 2 * 2);
    std::set<double> dropouts;
    for (const auto& t : grid) dropouts.insert(t.model.dropout_rate);
    REQUIRE(dropouts.size() == 3);
    CHECK(*dropouts.begin() == 0.1);
    CHECK(*std::next(dropouts.begin()) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(*dropouts.rbegin() == 0.5);
}

TEST_CASE("space validation and json") {
    SweepSpace s;
    s.f1.clear();
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.dropout = {0.5, 0.1};
    CHECK_THROWS_AS(s.validate(), ConfigError);

    const nlohmann::json j = tiny_space();
    const auto back = j.get<SweepSpace>();
    CHECK(nlohmann::json(back) == j);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"dropout": [0.1]})").get<SweepSpace>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"optimizer": ["lbfgs"]})").get<SweepSpace>(), ConfigError);
}

TEST_CASE("ranking") {
    std::vector<TrialResult> r = {result(0, 0.9, 1), result(1, 0.95, 5), result(2, 0.95, 2),
                                  result(3, 1.0, 1, "boom"), result(4, 0.95, 2)};
    rank_trials(r);
    std::vector<std::size_t> order;
    for (const auto& t : r) order.push_back(t.index);
    CHECK(order == std::vector<std::size_t>{2, 4, 1, 0, 3});

    std::vector<TrialResult> single = {result(0, 0.5, 1)};
    rank_trials(single);
    CHECK(single.size() == 1);
}

TEST_CASE("sweep runs are reproducible and independent of worker count") {
    const auto data = tiny_split(4);
    SweepOptions one{1, false}, two{2, false};
    const auto a = run_sweep(tiny_space(), 4, data, tiny_base(), short_train(), 99, one);
    const auto b = run_sweep(tiny_space(), 4, data, tiny_base(), short_train(), 99, two);
    CHECK(sweep_csv(a) == sweep_csv(b));
    CHECK(sweep_json(a) == sweep_json(b));

    std::set<std::size_t> indices;
    for (const auto& t : a) {
        indices.insert(t.index);
        CHECK(t.seed == trial_seed(99, t.index));
        CHECK_FALSE(t.failed());
    }
    CHECK(indices == std::set<std::size_t>{0, 1, 2, 3});

    // trial i does not depend on the presence of later trials
    const auto shorter = run_sweep(tiny_space(), 2, data, tiny_base(), short_train(), 99, one);
    for (const auto& t : shorter) {
        const auto match = std::find_if(a.begin(), a.end(), [&](const TrialResult& x) { return x.index == t.index; });
        REQUIRE(match != a.end());
        CHECK(match->val_accuracy == t.val_accuracy);
        CHECK(match->test_accuracy == t.test_accuracy);
        CHECK(match->config.model == t.config.model);
    }

    CHECK_THROWS_AS(run_sweep(tiny_space(), 0, data, tiny_base(), short_train(), 1), ConfigError);
}

TEST_CASE("failed trials are recorded, not dropped") {
    const auto data = tiny_split(5);
    auto space = tiny_space();
    space.kernel_length = {8, 64};  // 64 exceeds T=32
    const auto results = run_sweep(space, 8, data, tiny_base(), short_train(), 7, SweepOptions{2, false});
    CHECK(results.size() == 8);
    std::size_t failed = 0;
    bool seen_failure = false;
    for (const auto& r : results) {
        if (r.failed()) {
            ++failed;
            seen_failure = true;
            CHECK(r.config.model.kernel_length == 64);
            CHECK(r.error.find("kernel_length") != std::string::npos);
        } else {
            CHECK_FALSE(seen_failure);
        }
    }
    CHECK(failed > 0);
    CHECK(failed < 8);
    CHECK(sweep_csv(results).find("exceeds samples") != std::string::npos);
}

TEST_CASE("sweep sanity on synthetic data") {
    SynthConfig s;
    s.n_epochs = 1000;
    s.seed = 21;
    const auto data = split(balance_undersample(generate(s), 1), SplitSpec{0.7, 0.15, 0.15, 2});
    TrainConfig base;
    base.max_epochs = 15;
    base.patience = 8;
    SweepSpace space;
    space.f1 = {8, 16};
    space.d = {2, 4};
    space.kernel_length = {32, 64};
    space.batch_size = {32, 64, 128};
    space.optimizer = {OptimizerKind::Adam, OptimizerKind::Nadam, OptimizerKind::AdaBelief};
    const auto ranked = run_sweep(space, 20, data, cn_eegnet_default(), base, 3, SweepOptions{1, false});
    REQUIRE(ranked.size() == 20);
    REQUIRE_FALSE(ranked.front().failed());

    const auto point = SweepSpace::point(cn_eegnet_default(), OptimizerKind::Adam, 64);
    const auto reference = run_sweep(point, 1, data, cn_eegnet_default(), base, 3, SweepOptions{1, false});
    INFO("top ", ranked.front().test_accuracy, " default ", reference.front().test_accuracy);
    CHECK(ranked.front().test_accuracy >= reference.front().test_accuracy - 0.02);
}
