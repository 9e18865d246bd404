// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. Pass criterion ids (AC1 ... AC9) to run a subset.

#include "erpnet/binary_io.hpp"
#include "erpnet/dataset.hpp"
#include "erpnet/gradcheck.hpp"
#include "erpnet/model.hpp"
#include "erpnet/optim.hpp"
#include "erpnet/report.hpp"
#include "erpnet/synth.hpp"
#include "erpnet/train.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace erpnet;

namespace {

// Tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kGradSeeds = 20;
constexpr double kGradSeconds = 60.0;
constexpr double kOptimizerTolerance = 1e-12;
constexpr double kNormSlack = 1e-12;
constexpr std::size_t kBenchSeeds = 5;
constexpr std::size_t kBenchEpochs = 300;
constexpr std::size_t kBenchPatience = 50;
constexpr double kSeatedFloor = 0.90;
constexpr double kSecondsPerSeed = 600.0;
constexpr double kLoadedGap = 0.10;
constexpr double kMeanSlack = 0.01;
constexpr double kSdSlack = 0.02;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Check = std::function<Outcome()>;

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + ERPNET_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// ---- AC1 ---------------------------------------------------------------

Outcome gradient_suite() {
    GradCheckOptions opts;
    opts.seeds = kGradSeeds;
    opts.tolerance = kGradTolerance;
    const auto started = std::chrono::steady_clock::now();
    const auto results = run_gradcheck(opts);
    const double secs = seconds_since(started);
    const std::set<std::string> required = {
        "conv2d",          "depthwise_conv2d", "separable_conv2d", "batch_norm",
        "activation_elu",  "activation_relu",  "activation_swish", "activation_mish",
        "average_pooling2d", "dense_softmax_cross_entropy"};
    std::set<std::string> seen;
    double worst = 0;
    std::string worst_name;
    bool ok = true;
    for (const auto& r : results) {
        seen.insert(r.name);
        ok = ok && r.passed && r.max_rel_error <= kGradTolerance && r.seeds >= kGradSeeds;
        if (r.max_rel_error > worst) worst = r.max_rel_error, worst_name = r.name;
    }
    for (const auto& name : required) ok = ok && seen.contains(name);
    ok = ok && secs <= kGradSeconds;
    return {ok, std::to_string(results.size()) + " cases x " + std::to_string(kGradSeeds) +
                    " seeds, worst " + worst_name + " " + fmt("%.2e", worst) + ", " + fmt("%.1f s", secs)};
}

// ---- AC2 ---------------------------------------------------------------

Outcome shape_fidelity() {
    std::size_t checked = 0;
    for (Preset preset : {Preset::Table2Default, Preset::Table2Optimized, Preset::Table3Optimized})
        for (std::size_t c : {16u, 256u})
            for (std::size_t t : {128u, 256u}) {
                ModelConfig cfg = cn_eegnet_default(c, t);
                if (preset != Preset::Table3Optimized) cfg = eegnet_default(c, t);
                apply_preset(cfg, preset);
                const auto trace = shape_trace(cfg);
                std::vector<Dims> want = {{cfg.f1, c, t}, {cfg.d * cfg.f1, 1, t / 4}, {cfg.f2, 1, t / 32},
                                          {cfg.f2 * (t / 32)}, {cfg.n_classes}};
                std::vector<Dims> got;
                for (const auto& e : trace)
                    if (e.layer == "conv2d") {
                        got.push_back(e.output);
                        break;
                    }
                for (int block : {1, 2}) {
                    Dims last;
                    for (const auto& e : trace)
                        if (e.block == block) last = e.output;
                    got.push_back(last);
                }
                for (const auto& e : trace)
                    if (e.layer == "flatten") got.push_back(e.output);
                got.push_back(trace.back().output);
                if (got != want) {
                    return {false, std::string(to_string(preset)) + " C=" + std::to_string(c) +
                                       " T=" + std::to_string(t) + " diverges"};
                }
                ++checked;
            }
    return {true, std::to_string(checked) + " preset/geometry traces match"};
}

// ---- AC3 ---------------------------------------------------------------

Outcome optimizer_oracles() {
    const double lr = 0.0009, b1 = 0.9, b2 = 0.999, eps = 1e-7;
    struct Case {
        OptimizerKind kind;
        double g1, g2;
        double expected;  // theta after two steps from 0
    };
    // two updates written out by hand
    const auto adam = [&](double g1, double g2) {
        double m = (1 - b1) * g1, v = (1 - b2) * g1 * g1;
        double th = -lr * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
        m = b1 * m + (1 - b1) * g2, v = b2 * v + (1 - b2) * g2 * g2;
        return th - lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);
    };
    const auto nadam = [&](double g1, double g2) {
        double m = (1 - b1) * g1, v = (1 - b2) * g1 * g1;
        double th = -lr * (b1 * m / (1 - b1 * b1) + (1 - b1) * g1 / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
        m = b1 * m + (1 - b1) * g2, v = b2 * v + (1 - b2) * g2 * g2;
        return th - lr * (b1 * m / (1 - b1 * b1 * b1) + (1 - b1) * g2 / (1 - b1 * b1)) /
                        (std::sqrt(v / (1 - b2 * b2)) + eps);
    };
    const auto adabelief = [&](double g1, double g2) {
        double m = (1 - b1) * g1, s = (1 - b2) * (g1 - m) * (g1 - m) + eps;
        double th = -lr * (m / (1 - b1)) / (std::sqrt(s / (1 - b2)) + eps);
        m = b1 * m + (1 - b1) * g2, s = b2 * s + (1 - b2) * (g2 - m) * (g2 - m) + eps;
        return th - lr * (m / (1 - b1 * b1)) / (std::sqrt(s / (1 - b2 * b2)) + eps);
    };
    std::vector<Case> cases;
    for (auto [g1, g2] : {std::pair{1.0, 1.0}, {1.0, -0.5}, {-2.0, 0.25}, {0.003, 0.004}}) {
        cases.push_back({OptimizerKind::Adam, g1, g2, adam(g1, g2)});
        cases.push_back({OptimizerKind::Nadam, g1, g2, nadam(g1, g2)});
        cases.push_back({OptimizerKind::AdaBelief, g1, g2, adabelief(g1, g2)});
    }
    double worst = 0;
    double first_step_worst = 0;
    for (const auto& c : cases) {
        Optimizer<double> opt(OptimizerHyper::defaults(c.kind));
        Param<double> p{"theta", Tensor<double>({1}), Tensor<double>({1}, c.g1), std::nullopt};
        Param<double>* ps[] = {&p};
        opt.step(ps);
        if (c.g1 == 1.0 && c.g2 == 1.0) {
            const double want = c.kind == OptimizerKind::AdaBelief ? -lr / (std::sqrt(0.8101) + eps)
                                : c.kind == OptimizerKind::Adam   ? -lr / (1 + eps)
                                                                  : -lr * (0.09 / 0.19 + 1) / (1 + eps);
            first_step_worst = std::max(first_step_worst, std::abs(p.value[0] - want));
        }
        p.grad[0] = c.g2;
        opt.step(ps);
        worst = std::max(worst, std::abs(p.value[0] - c.expected));
    }
    const bool ok = worst <= kOptimizerTolerance && first_step_worst <= kOptimizerTolerance;
    return {ok, "adam/nadam/adabelief max |error| " + fmt("%.1e", std::max(worst, first_step_worst)) +
                    " over " + std::to_string(cases.size()) + " two-step cases"};
}

// ---- AC4 ---------------------------------------------------------------

Outcome early_stopping() {
    constexpr double min_delta = 0.0001;
    constexpr std::size_t patience = 200;
    // constant history: first epoch that triggers
    std::vector<double> flat;
    std::size_t fired_at = 0;
    for (std::size_t e = 1; e <= 400 && !fired_at; ++e) {
        flat.push_back(0.6931);
        if (early_stop_check(flat, min_delta, patience)) fired_at = e;
    }
    // strictly improving by more than min_delta never stops
    std::vector<double> improving;
    bool stopped = false;
    for (std::size_t e = 0; e < 2000; ++e) {
        improving.push_back(10.0 - 0.001 * static_cast<double>(e));
        stopped = stopped || early_stop_check(improving, min_delta, patience);
    }

    // inside train(): an unreachable improvement threshold behaves as a flat loss
    SynthConfig s;
    s.n_epochs = 60;
    s.channels = 4;
    s.samples = 32;
    s.sample_rate_hz = 32.0;
    s.oddball_rate = 0.5;
    s.seed = 3;
    const auto data = split(generate(s), SplitSpec{0.7, 0.15, 0.15, 3});
    ModelConfig cfg = cn_eegnet_default(4, 32);
    cfg.f1 = cfg.f2 = 2;
    cfg.d = 1;
    cfg.kernel_length = 8;
    auto model = Model<float>::build(cfg, 1);
    TrainConfig tc;
    tc.min_delta = 1e9;
    const auto report = train(model, data.train, data.val, tc, OptimizerHyper::defaults(OptimizerKind::Adam));

    const bool ok = fired_at == patience + 1 && !stopped && report.stopped_at_epoch == patience + 1;
    return {ok, "constant history stops at epoch " + std::to_string(fired_at) + ", train() stops at " +
                    std::to_string(report.stopped_at_epoch) + ", improving history " +
                    (stopped ? "stopped" : "never stops")};
}

// ---- AC5 ---------------------------------------------------------------

Outcome pipeline_invariants() {
    SynthConfig s;
    s.n_epochs = 3000;
    s.seed = 17;
    const auto raw = generate(s);
    std::vector<std::string> problems;

    const auto kept = balance_indices(raw, 5);
    const auto bal = balance_undersample(raw, 5);
    if (bal.count_label(kTarget) != bal.count_label(kNonTarget)) problems.push_back("balance parity");
    if (bal.count_label(kTarget) != raw.count_label(kTarget)) problems.push_back("balance count");
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (!(raw.subset(std::span(&kept[i], 1)) == bal.subset(std::array<std::size_t, 1>{i}))) {
            problems.push_back("balance fabricated a row");
            break;
        }
    }
    if (balance_indices(raw, 5) != kept) problems.push_back("balance reproducibility");

    const SplitSpec spec{0.70, 0.15, 0.15, 9};
    const auto idx = split_indices(bal, spec);
    std::vector<std::size_t> all;
    for (const auto* part : {&idx.train, &idx.val, &idx.test}) {
        all.insert(all.end(), part->begin(), part->end());
        std::size_t pos = 0;
        for (auto i : *part) pos += bal.labels[i];
        const std::size_t neg = part->size() - pos;
        if ((pos > neg ? pos - neg : neg - pos) > 1) problems.push_back("stratification");
    }
    std::sort(all.begin(), all.end());
    bool covering = all.size() == bal.size();
    for (std::size_t i = 0; covering && i < all.size(); ++i) covering = all[i] == i;
    if (!covering) problems.push_back("split disjoint/covering");
    if (idx.val.size() != bal.size() * 15 / 100 || idx.test.size() != bal.size() * 15 / 100)
        problems.push_back("split sizes");
    const auto again = split_indices(bal, spec);
    if (again.train != idx.train || again.val != idx.val || again.test != idx.test)
        problems.push_back("split reproducibility");

    const auto path = fs::temp_directory_path() / "erpnet_acceptance_roundtrip.eep";
    write_epochs(bal, path);
    const std::string bytes = read_file_bytes(path);
    const auto back = read_epochs(path);
    if (!(back == bal) || encode_epochs(back) != bytes) problems.push_back("EEP1 round trip");
    fs::remove(path);

    std::string detail = problems.empty() ? "balance " + std::to_string(bal.size()) + ", split " +
                                                std::to_string(idx.train.size()) + "/" +
                                                std::to_string(idx.val.size()) + "/" +
                                                std::to_string(idx.test.size()) + ", EEP1 bitwise"
                                          : "";
    for (const auto& p : problems) detail += (detail.empty() ? "" : ", ") + p;
    return {problems.empty(), detail};
}

// ---- AC6 / AC7 ---------------------------------------------------------

struct Bench {
    std::vector<double> acc;
    double max_seconds = 0;
    double mean() const { return aggregate(samples()).overall.mean; }
    double sd() const { return aggregate(samples()).overall.sd; }
    std::vector<AccuracySample> samples() const {
        std::vector<AccuracySample> out;
        for (double a : acc) out.push_back({"all", a});
        return out;
    }
};

// 1200 balanced epochs: 3000 generated at the default oddball rate, then undersampled.
Bench benchmark(Arch arch, SynthCondition condition) {
    Bench b;
    for (std::uint64_t seed = 1; seed <= kBenchSeeds; ++seed) {
        SynthConfig s;
        s.n_epochs = 3000;
        s.condition = condition;
        s.seed = seed;
        const auto data = split(balance_undersample(generate(s), derive_seed(seed, 1)), SplitSpec{0.70, 0.15, 0.15, seed});
        TrainConfig tc;
        tc.max_epochs = kBenchEpochs;
        tc.patience = kBenchPatience;
        tc.seed = seed;
        auto model = Model<float>::build(arch == Arch::CnEegnet ? cn_eegnet_default() : eegnet_default(), seed);
        const auto started = std::chrono::steady_clock::now();
        const auto r = fit_and_evaluate(model, data, tc, OptimizerHyper::defaults(OptimizerKind::Adam));
        b.max_seconds = std::max(b.max_seconds, seconds_since(started));
        b.acc.push_back(*r.test_accuracy);
        std::fprintf(stderr, "  %s %s seed %llu: test %.4f after %zu epochs (%.0f s)\n",
                     std::string(to_string(arch)).c_str(), std::string(to_string(condition)).c_str(),
                     static_cast<unsigned long long>(seed), *r.test_accuracy, r.stopped_at_epoch,
                     seconds_since(started));
    }
    return b;
}

Bench& seated_cn() {
    static Bench b = benchmark(Arch::CnEegnet, SynthCondition::Seated);
    return b;
}

Outcome seated_benchmark() {
    const auto& b = seated_cn();
    const bool ok = b.mean() >= kSeatedFloor && b.max_seconds <= kSecondsPerSeed;
    return {ok, "CN-EEGNet seated mean " + fmt("%.4f", b.mean()) + " (floor " + fmt("%.2f", kSeatedFloor) +
                    "), slowest seed " + fmt("%.0f s", b.max_seconds)};
}

Outcome orderings() {
    const auto& seated = seated_cn();
    const auto loaded = benchmark(Arch::CnEegnet, SynthCondition::Loaded);
    const auto eeg = benchmark(Arch::Eegnet, SynthCondition::Seated);
    const bool a = std::abs(loaded.mean() - seated.mean()) <= kLoadedGap;
    const bool b = seated.mean() >= eeg.mean() - kMeanSlack && seated.sd() <= eeg.sd() + kSdSlack;
    return {a && b, "loaded " + fmt("%.4f", loaded.mean()) + " vs seated " + fmt("%.4f", seated.mean()) +
                        (a ? " (ok)" : " (gap too large)") + "; CN " + fmt("%.4f", seated.mean()) + "+-" +
                        fmt("%.4f", seated.sd()) + " vs EEGNet " + fmt("%.4f", eeg.mean()) + "+-" +
                        fmt("%.4f", eeg.sd()) + (b ? " (ok)" : " (ordering violated)")};
}

// ---- AC8 ---------------------------------------------------------------

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / "erpnet_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto data = dir / "d.eep";
    if (run_cli("synth --out " + q(data) + " --epochs 400 --seed 8") != 0) return {false, "synth failed"};
    const std::string train = "train --data " + q(data) + " --epochs 3 --seed 11 --deterministic --out ";
    if (run_cli(train + q(dir / "a")) != 0 || run_cli(train + q(dir / "b")) != 0) return {false, "train failed"};
    const auto hash = [](const fs::path& p) { return to_hex(fnv1a64(read_file_bytes(p))); };
    const bool same_ckpt = hash(dir / "a" / "model.cnw") == hash(dir / "b" / "model.cnw");
    const bool same_report = hash(dir / "a" / "report.json") == hash(dir / "b" / "report.json");

    const auto space = dir / "space.json";
    write_file_bytes(space, R"({"f1": [4, 8], "d": [1, 2], "kernel_length": [16, 32], "batch_size": [32, 64]})");
    const std::string sweep = "sweep --data " + q(data) + " --space " + q(space) +
                              " --budget 4 --epochs 2 --seed 13 --deterministic";
    if (run_cli(sweep + " --workers 1 --out " + q(dir / "s1")) != 0 ||
        run_cli(sweep + " --workers 3 --out " + q(dir / "s3")) != 0)
        return {false, "sweep failed"};
    const bool same_sweep = hash(dir / "s1" / "sweep.csv") == hash(dir / "s3" / "sweep.csv");
    fs::remove_all(dir);
    return {same_ckpt && same_report && same_sweep,
            std::string("checkpoint ") + (same_ckpt ? "identical" : "differs") + ", report " +
                (same_report ? "identical" : "differs") + ", sweep csv 1 vs 3 workers " +
                (same_sweep ? "identical" : "differs")};
}

// ---- AC9 ---------------------------------------------------------------

Outcome max_norm() {
    SynthConfig s;
    s.n_epochs = 256;
    s.oddball_rate = 0.5;
    s.seed = 4;
    const auto ds = generate(s);
    double worst_dense = 0, worst_depth = 0;
    std::size_t steps = 0;
    for (auto kind : all_optimizers()) {
        ModelConfig cfg = cn_eegnet_default();
        auto model = Model<float>::build(cfg, 2);
        auto h = OptimizerHyper::defaults(kind);
        h.lr = 0.05;  // large steps push weights into the constraint
        Optimizer<float> opt(h);
        auto params = model.params();
        Rng rng(7);
        std::vector<std::size_t> order(ds.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (int epoch = 0; epoch < 2; ++epoch) {
            rng.shuffle(std::span<std::size_t>(order));
            for (std::size_t start = 0; start < order.size(); start += 32) {
                std::span<const std::size_t> idx(order.data() + start, 32);
                std::vector<std::uint8_t> labels;
                for (auto i : idx) labels.push_back(ds.labels[i]);
                const auto probs = model.forward(ds.batch(idx), Mode::Train);
                model.backward_from_logits(cross_entropy_logit_grad(probs, std::span<const std::uint8_t>(labels)));
                opt.step(params);
                ++steps;
                for (auto* p : params) {
                    if (!p->max_norm) continue;
                    const double n = max_slice_norm(p->value, p->max_norm->axis);
                    if (p->max_norm->axis == NormAxis::Columns) {
                        worst_dense = std::max(worst_dense, n - cfg.norm_rate);
                    } else {
                        worst_depth = std::max(worst_depth, n - kDepthwiseMaxNorm);
                    }
                }
            }
        }
    }
    const bool ok = worst_dense <= kNormSlack && worst_depth <= kNormSlack;
    return {ok, std::to_string(steps) + " steps over 7 optimizers; max excess dense " + fmt("%.1e", worst_dense) +
                    ", depthwise " + fmt("%.1e", worst_depth)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, Check>> criteria = {
        {"AC1", gradient_suite},    {"AC2", shape_fidelity},   {"AC3", optimizer_oracles},
        {"AC4", early_stopping},    {"AC5", pipeline_invariants}, {"AC6", seated_benchmark},
        {"AC7", orderings},         {"AC8", determinism},      {"AC9", max_norm},
    };
    std::set<std::string> only(argv + 1, argv + argc);
    int failures = 0;
    for (const auto& [id, check] : criteria) {
        if (!only.empty() && !only.contains(id)) continue;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s %s  %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
