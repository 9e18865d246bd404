#include "erpnet/binary_io.hpp"
#include "erpnet/dataset.hpp"
#include "erpnet/errors.hpp"
#include "erpnet/gradcheck.hpp"
#include "erpnet/model.hpp"
#include "erpnet/report.hpp"
#include "erpnet/sweep.hpp"
#include "erpnet/synth.hpp"
#include "erpnet/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace erpnet {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string file_hash(const fs::path& path) { return to_hex(fnv1a64(read_file_bytes(path))); }

// Manifest written next to every run's outputs.
struct RunManifest {
    std::string command;
    std::string config_file;
    json resolved;
    std::uint64_t seed = 0;
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;

    void write(const fs::path& path) const {
        json j{{"command", command},
               {"config_file", config_file.empty() ? json(nullptr) : json(config_file)},
               {"resolved_config", resolved},
               {"seed", seed},
               {"inputs", json::object()},
               {"outputs", json::object()}};
        for (const auto& p : inputs) j["inputs"][p.string()] = file_hash(p);
        for (const auto& p : outputs) j["outputs"][p.filename().string()] = file_hash(p);
        write_file_bytes(path, j.dump(2) + "\n");
    }
};

json read_json_file(const fs::path& path) {
    const std::string text = read_file_bytes(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& j) { write_file_bytes(path, j.dump(2) + "\n"); }

CLI::Validator open_unit_interval() {
    return CLI::Validator(
        [](std::string& s) -> std::string {
            const double v = std::stod(s);
            if (!(v > 0.0 && v < 1.0)) return "value " + s + " not in (0, 1)";
            return {};
        },
        "in (0, 1)");
}

// ---- synth -------------------------------------------------------------

struct SynthFlags {
    std::string out;
    SynthConfig cfg;
    std::string condition = "seated";
    std::optional<double> gait_uv;
};

void add_synth(CLI::App& app, SynthFlags& f) {
    auto* sub = app.add_subcommand("synth", "Generate a labeled synthetic ERP recording (EEP1)");
    sub->add_option("--out", f.out, "Output epoch file")->required();
    sub->add_option("--epochs", f.cfg.n_epochs, "Number of epochs")->check(CLI::PositiveNumber);
    sub->add_option("--channels", f.cfg.channels, "Channels C")->check(CLI::PositiveNumber);
    sub->add_option("--samples", f.cfg.samples, "Samples per epoch T")->check(CLI::PositiveNumber);
    sub->add_option("--condition", f.condition, "seated | walking | loaded")
        ->check(CLI::IsMember({"seated", "walking", "loaded"}));
    sub->add_option("--seed", f.cfg.seed, "Generator seed");
    sub->add_option("--oddball-rate", f.cfg.oddball_rate, "Target fraction")->check(open_unit_interval());
    sub->add_option("--noise-uv", f.cfg.background_noise_uv, "Background RMS (uV)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--gait-uv", f.gait_uv, "Gait artifact amplitude (uV); default per condition")
        ->check(CLI::NonNegativeNumber);
}

int run_synth(SynthFlags& f) {
    f.cfg.condition = parse_synth_condition(f.condition);
    f.cfg.gait_artifact_uv = f.gait_uv;
    f.cfg.validate();
    const EpochDataset ds = generate(f.cfg);
    write_epochs(ds, f.out);
    RunManifest m{"synth", {}, f.cfg, f.cfg.seed, {}, {f.out}};
    m.write(f.out + ".manifest.json");
    std::printf("wrote %zu epochs (%zu targets) to %s\n", ds.size(), ds.count_label(1), f.out.c_str());
    return kExitOk;
}

// ---- train -------------------------------------------------------------

struct TrainFlags {
    std::string data;
    std::string out;
    std::string config;
    std::optional<std::string> arch;
    std::optional<std::string> preset;
    std::optional<std::string> optimizer;
    std::optional<double> lr;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch;
    std::optional<std::size_t> patience;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
};

void add_train_options(CLI::App* sub, TrainFlags& f) {
    sub->add_option("--data", f.data, "Input epoch file (EEP1)")->required();
    sub->add_option("--config", f.config, "JSON config with optional model/optimizer/train/split objects");
    sub->add_option("--arch", f.arch, "cn-eegnet | eegnet")->check(CLI::IsMember({"cn-eegnet", "eegnet"}));
    sub->add_option("--preset", f.preset, "table2-default | table2-opt | table3-opt")
        ->check(CLI::IsMember({"table2-default", "table2-opt", "table3-opt"}));
    sub->add_option("--optimizer", f.optimizer, "Optimizer name");
    sub->add_option("--lr", f.lr, "Learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--epochs", f.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
    sub->add_option("--batch", f.batch, "Batch size")->check(CLI::PositiveNumber);
    sub->add_option("--patience", f.patience, "Early-stopping patience")->check(CLI::PositiveNumber);
    sub->add_option("--seed", f.seed, "Master seed");
    sub->add_flag("--deterministic", f.deterministic, "Record wall-clock time as 0 so outputs are hash-stable");
}

void add_train(CLI::App& app, TrainFlags& f) {
    auto* sub = app.add_subcommand("train", "Balance, split, train and evaluate one model");
    add_train_options(sub, f);
    sub->add_option("--out", f.out, "Output directory")->required();
}

struct Resolved {
    ModelConfig model;
    OptimizerHyper optimizer;
    TrainConfig train;
    SplitSpec split;
    std::uint64_t seed = 0;

    json to_json() const {
        return {{"model", model},
                {"optimizer", optimizer},
                {"train", train},
                {"split",
                 {{"train_frac", split.train_frac},
                  {"val_frac", split.val_frac},
                  {"test_frac", split.test_frac},
                  {"seed", split.seed}}},
                {"seed", seed}};
    }
};

// Defaults, then the config file, then flags.
Resolved resolve(const TrainFlags& f, const EpochDataset& ds) {
    const json file = f.config.empty() ? json::object() : read_json_file(f.config);
    const json file_model = file.value("model", json::object());

    Resolved r;
    r.seed = f.seed.value_or(file.value("seed", std::uint64_t{0}));

    Arch arch = Arch::CnEegnet;
    if (f.arch) {
        arch = parse_arch(*f.arch);
    } else if (file_model.contains("arch")) {
        arch = parse_arch(file_model.at("arch").get<std::string>());
    }
    json model = arch == Arch::Eegnet ? json(eegnet_default()) : json(cn_eegnet_default());
    model.merge_patch(file_model);
    model["arch"] = std::string(to_string(arch));
    if (!file_model.contains("activation")) model["activation"] = std::string(to_string(default_activation(arch)));
    r.model = model.get<ModelConfig>();
    if (f.preset) apply_preset(r.model, parse_preset(*f.preset));
    r.model.channels = ds.channels();
    r.model.samples = ds.samples();

    json opt = json(OptimizerHyper::defaults(OptimizerKind::Adam));
    if (file.contains("optimizer")) {
        const json& fo = file.at("optimizer");
        if (fo.contains("kind")) opt = json(OptimizerHyper::defaults(parse_optimizer(fo.at("kind").get<std::string>())));
        opt.merge_patch(fo);
    }
    r.optimizer = opt.get<OptimizerHyper>();
    if (f.optimizer) {
        const double lr = r.optimizer.lr;
        r.optimizer = OptimizerHyper::defaults(parse_optimizer(*f.optimizer));
        if (file.contains("optimizer") && file.at("optimizer").contains("lr")) r.optimizer.lr = lr;
    }
    if (f.lr) r.optimizer.lr = *f.lr;

    json train = json(TrainConfig{});
    train.merge_patch(file.value("train", json::object()));
    r.train = train.get<TrainConfig>();
    if (f.epochs) r.train.max_epochs = *f.epochs;
    if (f.batch) r.train.batch_size = *f.batch;
    if (f.patience) r.train.patience = *f.patience;
    r.train.seed = r.seed;

    if (file.contains("split")) {
        const json& s = file.at("split");
        r.split.train_frac = s.value("train_frac", r.split.train_frac);
        r.split.val_frac = s.value("val_frac", r.split.val_frac);
        r.split.test_frac = s.value("test_frac", r.split.test_frac);
    }
    r.split.seed = r.seed;

    r.model.validate();
    r.optimizer.validate();
    r.train.validate();
    r.split.validate();
    return r;
}

DatasetSplit prepare(const EpochDataset& ds, const Resolved& r) {
    const EpochDataset balanced = balance_undersample(ds, derive_seed(r.seed, 1));
    return split(balanced, r.split);
}

int run_train(const TrainFlags& f) {
    const EpochDataset ds = read_epochs(f.data);
    const Resolved r = resolve(f, ds);
    const DatasetSplit data = prepare(ds, r);
    auto model = Model<float>::build(r.model, r.seed);
    TrainReport report = fit_and_evaluate(model, data, r.train, r.optimizer);
    report.seed = r.seed;
    if (f.deterministic) report.wall_seconds = 0.0;

    const fs::path dir = f.out;
    fs::create_directories(dir);
    const fs::path ckpt = dir / "model.cnw", rep = dir / "report.json", hist = dir / "history.csv";
    save_checkpoint(model, ckpt);
    write_json_file(rep, report);
    write_file_bytes(hist, history_csv(report));
    RunManifest m{"train", f.config, r.to_json(), r.seed, {f.data}, {ckpt, rep, hist}};
    m.write(dir / "manifest.json");

    std::printf("epochs %zu (best %zu, early stop %s)  test accuracy %.4f\n", report.stopped_at_epoch,
                report.best_val_epoch, report.early_stopped ? "yes" : "no", report.test_accuracy.value_or(0.0));
    return kExitOk;
}

// ---- eval --------------------------------------------------------------

struct EvalFlags {
    std::string model;
    std::string data;
    bool as_json = false;
};

void add_eval(CLI::App& app, EvalFlags& f) {
    auto* sub = app.add_subcommand("eval", "Evaluate a checkpoint on an epoch file");
    sub->add_option("--model", f.model, "CNW1 checkpoint")->required();
    sub->add_option("--data", f.data, "Epoch file (EEP1)")->required();
    sub->add_flag("--json", f.as_json, "Print the result as JSON");
}

int run_eval(const EvalFlags& f) {
    auto model = load_checkpoint(f.model);
    const EpochDataset ds = read_epochs(f.data);
    const ModelConfig& cfg = model.config();
    if (ds.channels() != cfg.channels || ds.samples() != cfg.samples) {
        throw DataError("shape mismatch: checkpoint expects C=" + std::to_string(cfg.channels) +
                        ", T=" + std::to_string(cfg.samples) + " but data has C=" +
                        std::to_string(ds.channels()) + ", T=" + std::to_string(ds.samples()));
    }
    const EvalResult r = evaluate(model, ds);
    const auto& c = r.confusion.counts;
    if (f.as_json) {
        json j{{"accuracy", r.accuracy}, {"loss", r.loss}, {"n", ds.size()}, {"confusion", c}};
        std::cout << j.dump(2) << "\n";
    } else {
        std::printf("accuracy %.4f  loss %.4f  n %zu\n", r.accuracy, r.loss, ds.size());
        std::printf("confusion (rows true, cols predicted)\n");
        std::printf("            pred 0  pred 1\n");
        std::printf("  true 0  %8zu%8zu\n", c[0][0], c[0][1]);
        std::printf("  true 1  %8zu%8zu\n", c[1][0], c[1][1]);
    }
    return kExitOk;
}

// ---- sweep -------------------------------------------------------------

struct SweepFlags {
    TrainFlags train;
    std::string space;
    std::string out;
    std::size_t budget = 10;
    std::optional<std::size_t> workers;
};

void add_sweep(CLI::App& app, SweepFlags& f) {
    auto* sub = app.add_subcommand("sweep", "Random-search hyperparameter sweep");
    add_train_options(sub, f.train);
    sub->add_option("--space", f.space, "JSON search space; omitted fields keep their defaults");
    sub->add_option("--budget", f.budget, "Number of trials")->check(CLI::PositiveNumber);
    sub->add_option("--workers", f.workers, "Parallel trials (default: ERPNET_THREADS or hardware threads)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", f.out, "Output directory")->required();
}

std::size_t worker_count(std::optional<std::size_t> requested) {
    std::size_t n = requested.value_or(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("ERPNET_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap < 1) throw UsageError("ERPNET_THREADS must be a positive integer, got '" + std::string(env) + "'");
        n = std::min(n, static_cast<std::size_t>(cap));
    }
    return n;
}

int run_sweep_cmd(const SweepFlags& f) {
    const EpochDataset ds = read_epochs(f.train.data);
    const Resolved r = resolve(f.train, ds);
    SweepSpace space;
    if (!f.space.empty()) space = read_json_file(f.space).get<SweepSpace>();
    space.validate();
    const DatasetSplit data = prepare(ds, r);

    SweepOptions opts;
    opts.workers = worker_count(f.workers);
    opts.record_wall_time = !f.train.deterministic;
    const auto ranked = run_sweep(space, f.budget, data, r.model, r.train, r.seed, opts);

    const fs::path dir = f.out;
    fs::create_directories(dir);
    const fs::path csv = dir / "sweep.csv", js = dir / "sweep.json";
    write_file_bytes(csv, sweep_csv(ranked));
    write_json_file(js, sweep_json(ranked));
    json resolved = r.to_json();
    resolved["space"] = space;
    resolved["budget"] = f.budget;
    RunManifest m{"sweep", f.train.config, resolved, r.seed, {f.train.data}, {csv, js}};
    if (!f.space.empty()) m.inputs.push_back(f.space);
    m.write(dir / "manifest.json");

    std::size_t failed = 0;
    for (const auto& t : ranked) failed += t.failed() ? 1 : 0;
    if (!ranked.empty() && !ranked.front().failed()) {
        const auto& best = ranked.front();
        std::printf("best trial %zu: val %.4f  test %.4f  (%s, batch %zu)\n", best.index, best.val_accuracy,
                    best.test_accuracy, std::string(to_string(best.config.optimizer.kind)).c_str(),
                    best.config.train.batch_size);
    }
    std::printf("%zu trials, %zu failed; results in %s\n", ranked.size(), failed, csv.c_str());
    return kExitOk;
}

// ---- gradcheck ---------------------------------------------------------

struct GradFlags {
    GradCheckOptions opts;
};

void add_gradcheck(CLI::App& app, GradFlags& f) {
    auto* sub = app.add_subcommand("gradcheck", "Finite-difference check of every layer adjoint");
    sub->add_option("--seeds", f.opts.seeds, "Random cases per layer")->check(CLI::PositiveNumber);
    sub->add_option("--seed", f.opts.base_seed, "Base seed");
}

int run_gradcheck_cmd(const GradFlags& f) {
    const auto results = run_gradcheck(f.opts);
    std::fputs(format_gradcheck(results).c_str(), stdout);
    for (const auto& r : results) {
        if (!r.passed) return kExitFailure;
    }
    return kExitOk;
}

// ---- report ------------------------------------------------------------

struct ReportFlags {
    std::vector<std::string> in;
    std::string out = ".";
};

void add_report(CLI::App& app, ReportFlags& f) {
    auto* sub = app.add_subcommand("report", "Aggregate train reports into mean/SD tables");
    sub->add_option("--in", f.in, "Run directories or report.json files (searched recursively)")
        ->required()
        ->expected(1, -1);
    sub->add_option("--out", f.out, "Directory for summary.csv and summary.svg");
}

std::vector<fs::path> find_reports(const fs::path& p) {
    if (fs::is_regular_file(p)) return {p};
    if (!fs::is_directory(p)) throw DataError("no such report or directory: " + p.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file() && e.path().filename() == "report.json") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

int run_report(const ReportFlags& f) {
    std::vector<TrainReport> reports;
    for (const auto& in : f.in) {
        for (const auto& p : find_reports(in)) {
            try {
                reports.push_back(read_json_file(p).get<TrainReport>());
            } catch (const json::exception& e) {
                throw DataError(p.string() + ": " + e.what());
            }
        }
    }
    if (reports.empty()) throw DataError("no report.json found under the given inputs");
    const auto rows = aggregate_report(reports);
    const std::string csv = summary_csv(rows);
    const fs::path dir = f.out;
    fs::create_directories(dir);
    write_file_bytes(dir / "summary.csv", csv);
    write_file_bytes(dir / "summary.svg", summary_svg(rows));
    std::fputs(csv.c_str(), stdout);
    return kExitOk;
}

int run(int argc, char** argv) {
    CLI::App app{"CN-EEGNet / EEGNet P300 training engine"};
    app.require_subcommand(1);
    SynthFlags synth;
    TrainFlags train;
    EvalFlags eval;
    SweepFlags sweep;
    GradFlags grad;
    ReportFlags report;
    add_synth(app, synth);
    add_train(app, train);
    add_eval(app, eval);
    add_sweep(app, sweep);
    add_gradcheck(app, grad);
    add_report(app, report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (app.got_subcommand("synth")) return run_synth(synth);
        if (app.got_subcommand("train")) return run_train(train);
        if (app.got_subcommand("eval")) return run_eval(eval);
        if (app.got_subcommand("sweep")) return run_sweep_cmd(sweep);
        if (app.got_subcommand("gradcheck")) return run_gradcheck_cmd(grad);
        if (app.got_subcommand("report")) return run_report(report);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace
}  // namespace erpnet

int main(int argc, char** argv) { return erpnet::run(argc, argv); }
