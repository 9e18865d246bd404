#include "erpnet/train.hpp"

#include "erpnet/errors.hpp"
#include "erpnet/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace erpnet {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (patience < 1) throw ConfigError("train config: patience must be >= 1");
    if (!(min_delta >= 0.0)) throw ConfigError("train config: min_delta must be >= 0");
    if (max_epochs < 1) throw ConfigError("train config: max_epochs must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
    j = nlohmann::json{{"max_epochs", cfg.max_epochs},   {"batch_size", cfg.batch_size},
                       {"early_stop", cfg.early_stop},   {"min_delta", cfg.min_delta},
                       {"patience", cfg.patience},       {"seed", cfg.seed},
                       {"shuffle_each_epoch", cfg.shuffle_each_epoch}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
    TrainConfig out;
    if (j.contains("max_epochs")) out.max_epochs = j.at("max_epochs").get<std::size_t>();
    if (j.contains("batch_size")) out.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("early_stop")) out.early_stop = j.at("early_stop").get<bool>();
    if (j.contains("min_delta")) out.min_delta = j.at("min_delta").get<double>();
    if (j.contains("patience")) out.patience = j.at("patience").get<std::size_t>();
    if (j.contains("seed")) out.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("shuffle_each_epoch")) {
        out.shuffle_each_epoch = j.at("shuffle_each_epoch").get<bool>();
    }
    cfg = out;
}

std::size_t Confusion::total() const noexcept {
    return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

void to_json(nlohmann::json& j, const TrainReport& r) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& e : r.history) {
        history.push_back({{"train_loss", e.train_loss},
                           {"train_accuracy", e.train_accuracy},
                           {"val_loss", e.val_loss},
                           {"val_accuracy", e.val_accuracy}});
    }
    j = nlohmann::json{
        {"config", {{"model", r.model}, {"optimizer", r.optimizer}, {"train", r.train}}},
        {"condition", r.condition},
        {"seed", r.seed},
        {"history", history},
        {"stopped_at_epoch", r.stopped_at_epoch},
        {"best_val_epoch", r.best_val_epoch},
        {"best_val_loss", r.best_val_loss},
        {"early_stopped", r.early_stopped},
        {"test_accuracy", r.test_accuracy ? nlohmann::json(*r.test_accuracy) : nlohmann::json()},
        {"confusion", {{r.confusion.counts[0][0], r.confusion.counts[0][1]},
                       {r.confusion.counts[1][0], r.confusion.counts[1][1]}}},
        {"wall_seconds", r.wall_seconds},
    };
}

void from_json(const nlohmann::json& j, TrainReport& r) {
    TrainReport out;
    const auto& cfg = j.at("config");
    out.model = cfg.at("model").get<ModelConfig>();
    out.optimizer = cfg.at("optimizer").get<OptimizerHyper>();
    out.train = cfg.at("train").get<TrainConfig>();
    out.condition = j.value("condition", std::string("mixed"));
    out.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("history")) {
        out.history.push_back({e.at("train_loss").get<double>(), e.at("train_accuracy").get<double>(),
                               e.at("val_loss").get<double>(), e.at("val_accuracy").get<double>()});
    }
    out.stopped_at_epoch = j.at("stopped_at_epoch").get<std::size_t>();
    out.best_val_epoch = j.value("best_val_epoch", std::size_t{0});
    out.best_val_loss = j.value("best_val_loss", 0.0);
    out.early_stopped = j.value("early_stopped", false);
    if (j.contains("test_accuracy") && !j.at("test_accuracy").is_null()) {
        out.test_accuracy = j.at("test_accuracy").get<double>();
    }
    const auto& conf = j.at("confusion");
    for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t b = 0; b < 2; ++b) out.confusion.counts[a][b] = conf.at(a).at(b).get<std::size_t>();
    }
    out.wall_seconds = j.value("wall_seconds", 0.0);
    r = std::move(out);
}

bool early_stop_check(std::span<const double> val_history, double min_delta, std::size_t patience) {
    if (val_history.size() < patience + 1) return false;
    double best = val_history[0];
    std::size_t stale = 0;
    for (std::size_t i = 1; i < val_history.size(); ++i) {
        const double v = val_history[i];
        if (v < best - min_delta) {
            stale = 0;
        } else {
            ++stale;
        }
        best = std::min(best, v);
    }
    return stale >= patience;
}

namespace {

void check_geometry(const Model<float>& model, const EpochDataset& ds, const char* what) {
    ds.validate();
    const auto& cfg = model.config();
    if (ds.channels() != cfg.channels || ds.samples() != cfg.samples) {
        throw ShapeError(std::string(what) + " dataset has (C,T)=(" + std::to_string(ds.channels()) +
                         "," + std::to_string(ds.samples()) + ") but the model expects (" +
                         std::to_string(cfg.channels) + "," + std::to_string(cfg.samples) + ")");
    }
}

std::size_t argmax_row(const Tensor<float>& probs, std::size_t n) {
    const float* row = &probs.at(n, 0);
    return static_cast<std::size_t>(std::max_element(row, row + probs.dim(1)) - row);
}

}  // namespace

EvalResult evaluate(Model<float>& model, const EpochDataset& ds, std::size_t batch_size) {
    check_geometry(model, ds, "evaluation");
    if (ds.size() == 0) throw DataError("evaluate: empty dataset");
    EvalResult r;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.size(); start += batch_size) {
        const std::size_t stop = std::min(ds.size(), start + batch_size);
        idx.resize(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor<float> probs = model.forward(ds.batch(idx), Mode::Infer);
        std::span<const std::uint8_t> labels(ds.labels.data() + start, stop - start);
        loss_sum += cross_entropy(probs, labels) * static_cast<double>(labels.size());
        for (std::size_t n = 0; n < labels.size(); ++n) {
            const std::size_t pred = argmax_row(probs, n);
            correct += pred == labels[n] ? 1 : 0;
            if (labels[n] < 2 && pred < 2) ++r.confusion.counts[labels[n]][pred];
        }
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
    r.loss = loss_sum / static_cast<double>(ds.size());
    return r;
}

std::string dataset_condition(const EpochDataset& ds) {
    if (ds.size() == 0) return "mixed";
    const std::string first = condition_group(ds.conditions.front());
    for (const auto& c : ds.conditions) {
        if (condition_group(c) != first) return "mixed";
    }
    return first;
}

TrainReport train(Model<float>& model, const EpochDataset& train_ds, const EpochDataset& val_ds,
                  const TrainConfig& cfg, const OptimizerHyper& optimizer) {
    cfg.validate();
    check_geometry(model, train_ds, "training");
    check_geometry(model, val_ds, "validation");
    if (train_ds.size() == 0) throw DataError("train: empty training set");
    if (val_ds.size() == 0) throw DataError("train: empty validation set");

    const auto started = std::chrono::steady_clock::now();
    TrainReport report;
    report.model = model.config();
    report.optimizer = optimizer;
    report.train = cfg;
    report.seed = cfg.seed;
    report.condition = dataset_condition(train_ds);

    Optimizer<float> opt(optimizer);
    auto params = model.params();
    Rng rng(derive_seed(cfg.seed, 0x5EED));
    std::vector<std::size_t> order(train_ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> val_history;
    std::vector<Tensor<float>> best_state = model.snapshot();
    double best_loss = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        if (cfg.shuffle_each_epoch) rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::vector<std::uint8_t> labels;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + start, stop - start);
            labels.resize(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) labels[k] = train_ds.labels[idx[k]];

            const Tensor<float> probs = model.forward(train_ds.batch(idx), Mode::Train);
            loss_sum += cross_entropy(probs, labels) * static_cast<double>(idx.size());
            for (std::size_t n = 0; n < idx.size(); ++n) {
                correct += argmax_row(probs, n) == labels[n] ? 1 : 0;
            }
            model.backward_from_logits(cross_entropy_logit_grad(probs, labels));
            opt.step(params);
        }
        const EvalResult val = evaluate(model, val_ds);
        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        stats.val_loss = val.loss;
        stats.val_accuracy = val.accuracy;
        report.history.push_back(stats);
        val_history.push_back(val.loss);

        if (val.loss < best_loss) {
            best_loss = val.loss;
            report.best_val_epoch = epoch;
            best_state = model.snapshot();
        }
        if (cfg.early_stop && early_stop_check(val_history, cfg.min_delta, cfg.patience)) {
            report.early_stopped = true;
            break;
        }
    }
    report.stopped_at_epoch = report.history.size();
    report.best_val_loss = best_loss;
    model.restore(best_state);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

TrainReport fit_and_evaluate(Model<float>& model, const DatasetSplit& data, const TrainConfig& cfg,
                             const OptimizerHyper& optimizer) {
    const auto started = std::chrono::steady_clock::now();
    TrainReport report = train(model, data.train, data.val, cfg, optimizer);
    const EvalResult test = evaluate(model, data.test);
    report.test_accuracy = test.accuracy;
    report.confusion = test.confusion;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

}  // namespace erpnet
