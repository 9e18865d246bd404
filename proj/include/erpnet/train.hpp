#pragma once

#include "erpnet/dataset.hpp"
#include "erpnet/model.hpp"
#include "erpnet/optim.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace erpnet {

struct TrainConfig {
    std::size_t max_epochs = 750;
    std::size_t batch_size = 64;
    bool early_stop = true;
    double min_delta = 0.0001;
    std::size_t patience = 200;
    std::uint64_t seed = 0;
    bool shuffle_each_epoch = true;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct EpochStats {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

/// counts[true][predicted]
struct Confusion {
    std::array<std::array<std::size_t, 2>, 2> counts{};
    std::size_t total() const noexcept;
};

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
    Confusion confusion;
};

struct TrainReport {
    ModelConfig model;
    OptimizerHyper optimizer;
    TrainConfig train;
    std::string condition;  ///< condition group of the training data, or "mixed"
    std::uint64_t seed = 0;
    std::vector<EpochStats> history;
    std::size_t stopped_at_epoch = 0;
    std::size_t best_val_epoch = 0;  ///< 1-based
    double best_val_loss = 0.0;
    bool early_stopped = false;
    std::optional<double> test_accuracy;
    Confusion confusion;
    double wall_seconds = 0.0;
};

void to_json(nlohmann::json& j, const TrainReport& r);
void from_json(const nlohmann::json& j, TrainReport& r);

// True iff each of the last `patience` entries failed to beat the minimum of
// all entries before it by more than min_delta.
bool early_stop_check(std::span<const double> val_history, double min_delta, std::size_t patience);

/// Argmax classification in infer mode; no model state changes.
EvalResult evaluate(Model<float>& model, const EpochDataset& ds, std::size_t batch_size = 256);

// Mini-batch training: seeded shuffles, train-mode forward, cross-entropy,
// backward, optimizer step with max-norm projection; validation in infer mode
// each epoch. The best-validation-loss weights are restored before returning.
TrainReport train(Model<float>& model, const EpochDataset& train_ds, const EpochDataset& val_ds,
                  const TrainConfig& cfg, const OptimizerHyper& optimizer);

/// train() followed by evaluate() on the test split, filling the test fields.
TrainReport fit_and_evaluate(Model<float>& model, const DatasetSplit& data, const TrainConfig& cfg,
                             const OptimizerHyper& optimizer);

/// Shared condition group of every epoch, or "mixed".
std::string dataset_condition(const EpochDataset& ds);

}  // namespace erpnet
