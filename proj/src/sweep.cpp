#include "erpnet/sweep.hpp"

#include "erpnet/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <sstream>
#include <thread>

namespace erpnet {

void SweepSpace::validate() const {
    auto non_empty = [](const auto& v, const char* name) {
        if (v.empty()) throw ConfigError(std::string("sweep space: '") + name + "' is empty");
    };
    non_empty(f1, "f1");
    non_empty(f2, "f2");
    non_empty(d, "d");
    non_empty(kernel_length, "kernel_length");
    non_empty(optimizer, "optimizer");
    non_empty(batch_size, "batch_size");
    if (dropout.lo > dropout.hi) throw ConfigError("sweep space: dropout lo > hi");
    if (norm_rate.lo > norm_rate.hi) throw ConfigError("sweep space: norm_rate lo > hi");
    if (dropout.lo < 0.0 || dropout.hi >= 1.0) throw ConfigError("sweep space: dropout outside [0, 1)");
    if (norm_rate.lo <= 0.0) throw ConfigError("sweep space: norm_rate must be > 0");
}

SweepSpace SweepSpace::point(const ModelConfig& model, OptimizerKind opt, std::size_t batch) {
    SweepSpace s;
    s.f1 = {model.f1};
    s.f2 = {model.f2};
    s.d = {model.d};
    s.dropout = {model.dropout_rate, model.dropout_rate};
    s.kernel_length = {model.kernel_length};
    s.norm_rate = {model.norm_rate, model.norm_rate};
    s.optimizer = {opt};
    s.batch_size = {batch};
    return s;
}

void to_json(nlohmann::json& j, const SweepSpace& s) {
    std::vector<std::string> opts;
    for (auto k : s.optimizer) opts.emplace_back(to_string(k));
    j = nlohmann::json{{"f1", s.f1},
                       {"f2", s.f2},
                       {"d", s.d},
                       {"dropout", {s.dropout.lo, s.dropout.hi}},
                       {"kernel_length", s.kernel_length},
                       {"norm_rate", {s.norm_rate.lo, s.norm_rate.hi}},
                       {"optimizer", opts},
                       {"batch_size", s.batch_size}};
}

void from_json(const nlohmann::json& j, SweepSpace& s) {
    SweepSpace out;
    auto range = [](const nlohmann::json& v) {
        if (!v.is_array() || v.size() != 2) {
            throw ConfigError("sweep space: continuous ranges are [lo, hi] pairs");
        }
        return RealRange{v.at(0).get<double>(), v.at(1).get<double>()};
    };
    if (j.contains("f1")) out.f1 = j.at("f1").get<std::vector<std::size_t>>();
    if (j.contains("f2")) out.f2 = j.at("f2").get<std::vector<std::size_t>>();
    if (j.contains("d")) out.d = j.at("d").get<std::vector<std::size_t>>();
    if (j.contains("dropout")) out.dropout = range(j.at("dropout"));
    if (j.contains("kernel_length")) {
        out.kernel_length = j.at("kernel_length").get<std::vector<std::size_t>>();
    }
    if (j.contains("norm_rate")) out.norm_rate = range(j.at("norm_rate"));
    if (j.contains("optimizer")) {
        out.optimizer.clear();
        for (const auto& name : j.at("optimizer")) {
            out.optimizer.push_back(parse_optimizer(name.get<std::string>()));
        }
    }
    if (j.contains("batch_size")) out.batch_size = j.at("batch_size").get<std::vector<std::size_t>>();
    s = std::move(out);
}

namespace {

template <typename V>
const typename V::value_type& pick(const V& values, Rng& rng) {
    return values[static_cast<std::size_t>(rng.below(values.size()))];
}

double pick(const RealRange& r, Rng& rng) { return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi); }

}  // namespace

TrialConfig sample_config(const SweepSpace& space, const ModelConfig& base_model,
                          const TrainConfig& base_train, Rng& rng) {
    space.validate();
    TrialConfig t;
    t.model = base_model;
    t.train = base_train;
    t.model.f1 = pick(space.f1, rng);
    t.model.f2 = pick(space.f2, rng);
    t.model.d = pick(space.d, rng);
    t.model.dropout_rate = pick(space.dropout, rng);
    t.model.kernel_length = pick(space.kernel_length, rng);
    t.model.norm_rate = pick(space.norm_rate, rng);
    t.optimizer = OptimizerHyper::defaults(pick(space.optimizer, rng));
    t.train.batch_size = pick(space.batch_size, rng);
    return t;
}

std::vector<TrialConfig> grid_configs(const SweepSpace& space, const ModelConfig& base_model,
                                      const TrainConfig& base_train, std::size_t continuous_steps) {
    space.validate();
    auto points = [&](const RealRange& r) {
        if (r.lo == r.hi || continuous_steps < 2) return std::vector<double>{r.lo};
        std::vector<double> v;
        for (std::size_t i = 0; i < continuous_steps; ++i) {
            v.push_back(r.lo + (r.hi - r.lo) * static_cast<double>(i) /
                                   static_cast<double>(continuous_steps - 1));
        }
        return v;
    };
    const auto dropouts = points(space.dropout);
    const auto norms = points(space.norm_rate);
    std::vector<TrialConfig> out;
    for (auto f1 : space.f1)
        for (auto f2 : space.f2)
            for (auto d : space.d)
                for (double dr : dropouts)
                    for (auto k : space.kernel_length)
                        for (double nr : norms)
                            for (auto opt : space.optimizer)
                                for (auto b : space.batch_size) {
                                    TrialConfig t{base_model, base_train,
                                                  OptimizerHyper::defaults(opt)};
                                    t.model.f1 = f1, t.model.f2 = f2, t.model.d = d;
                                    t.model.dropout_rate = dr, t.model.kernel_length = k;
                                    t.model.norm_rate = nr;
                                    t.train.batch_size = b;
                                    out.push_back(t);
                                }
    return out;
}

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t index) {
    return derive_seed(master_seed, index);
}

void rank_trials(std::vector<TrialResult>& results) {
    std::sort(results.begin(), results.end(), [](const TrialResult& a, const TrialResult& b) {
        if (a.failed() != b.failed()) return !a.failed();
        if (a.val_accuracy != b.val_accuracy) return a.val_accuracy > b.val_accuracy;
        if (a.wall_seconds != b.wall_seconds) return a.wall_seconds < b.wall_seconds;
        return a.index < b.index;
    });
}

namespace {

TrialResult run_one(const TrialConfig& cfg, std::size_t index, const DatasetSplit& data,
                    std::uint64_t master_seed, bool record_wall_time) {
    TrialResult r;
    r.index = index;
    r.seed = trial_seed(master_seed, index);
    r.config = cfg;
    r.config.train.seed = r.seed;
    const auto started = std::chrono::steady_clock::now();
    try {
        auto model = Model<float>::build(r.config.model, r.seed);
        train(model, data.train, data.val, r.config.train, r.config.optimizer);
        r.val_accuracy = evaluate(model, data.val).accuracy;
        r.test_accuracy = evaluate(model, data.test).accuracy;
    } catch (const std::exception& e) {
        r.error = e.what();
        if (r.error.empty()) r.error = "unknown failure";
    }
    if (record_wall_time) {
        r.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    return r;
}

}  // namespace

std::vector<TrialResult> run_trials(const std::vector<TrialConfig>& trials,
                                    const DatasetSplit& data, std::uint64_t master_seed,
                                    const SweepOptions& options) {
    std::vector<TrialResult> results(trials.size());
    const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(trials.size(), 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < trials.size(); ++i) {
            results[i] = run_one(trials[i], i, data, master_seed, options.record_wall_time);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < trials.size(); i = next++) {
                    results[i] = run_one(trials[i], i, data, master_seed, options.record_wall_time);
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    rank_trials(results);
    return results;
}

std::vector<TrialResult> run_sweep(const SweepSpace& space, std::size_t budget,
                                   const DatasetSplit& data, const ModelConfig& base_model,
                                   const TrainConfig& base_train, std::uint64_t master_seed,
                                   const SweepOptions& options) {
    if (budget < 1) throw ConfigError("sweep: budget must be >= 1");
    space.validate();
    std::vector<TrialConfig> trials;
    for (std::size_t i = 0; i < budget; ++i) {
        Rng rng(derive_seed(trial_seed(master_seed, i), 1));
        trials.push_back(sample_config(space, base_model, base_train, rng));
    }
    return run_trials(trials, data, master_seed, options);
}

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace

std::string sweep_csv(const std::vector<TrialResult>& ranked) {
    std::ostringstream os;
    os << "rank,trial,seed,arch,f1,f2,d,kernel_length,dropout_rate,norm_rate,activation,optimizer,"
          "batch_size,max_epochs,val_accuracy,test_accuracy,wall_seconds,error\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto& r = ranked[i];
        const auto& m = r.config.model;
        os << i + 1 << ',' << r.index << ',' << r.seed << ',' << to_string(m.arch) << ',' << m.f1
           << ',' << m.f2 << ',' << m.d << ',' << m.kernel_length << ',' << num(m.dropout_rate)
           << ',' << num(m.norm_rate) << ',' << to_string(m.activation) << ','
           << to_string(r.config.optimizer.kind) << ',' << r.config.train.batch_size << ','
           << r.config.train.max_epochs << ',' << num(r.val_accuracy) << ','
           << num(r.test_accuracy) << ',' << num(r.wall_seconds) << ',' << csv_field(r.error)
           << '\n';
    }
    return os.str();
}

nlohmann::json sweep_json(const std::vector<TrialResult>& ranked) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto& r = ranked[i];
        out.push_back({{"rank", i + 1},
                       {"trial", r.index},
                       {"seed", r.seed},
                       {"model", r.config.model},
                       {"optimizer", r.config.optimizer},
                       {"train", r.config.train},
                       {"val_accuracy", r.val_accuracy},
                       {"test_accuracy", r.test_accuracy},
                       {"wall_seconds", r.wall_seconds},
                       {"error", r.error}});
    }
    return out;
}

}  // namespace erpnet
