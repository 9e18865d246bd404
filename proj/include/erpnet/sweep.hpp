#pragma once

#include "erpnet/dataset.hpp"
#include "erpnet/model_config.hpp"
#include "erpnet/optim.hpp"
#include "erpnet/random.hpp"
#include "erpnet/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace erpnet {

struct RealRange {
    double lo = 0.0;
    double hi = 0.0;
};

// Search space over the tuned hyperparameters. Discrete fields are sampled
// uniformly from their sets, continuous fields uniformly over [lo, hi];
// lo == hi pins a continuous field.
struct SweepSpace {
    std::vector<std::size_t> f1{8, 16, 32};
    std::vector<std::size_t> f2{8, 16, 32};
    std::vector<std::size_t> d{2, 4, 8};
    RealRange dropout{0.1, 0.5};
    std::vector<std::size_t> kernel_length{32, 64, 128};
    RealRange norm_rate{0.1, 0.5};
    std::vector<OptimizerKind> optimizer{all_optimizers().begin(), all_optimizers().end()};
    std::vector<std::size_t> batch_size{32, 64, 128, 256, 512, 1024, 2048};

    void validate() const;

    /// Single-point space that always yields `model` / `opt` / `batch`.
    static SweepSpace point(const ModelConfig& model, OptimizerKind opt, std::size_t batch);
};

void to_json(nlohmann::json& j, const SweepSpace& s);
void from_json(const nlohmann::json& j, SweepSpace& s);

struct TrialConfig {
    ModelConfig model;
    TrainConfig train;
    OptimizerHyper optimizer;
};

/// Draws one configuration; architecture, activation, geometry and the
/// non-swept training fields come from the bases.
TrialConfig sample_config(const SweepSpace& space, const ModelConfig& base_model,
                          const TrainConfig& base_train, Rng& rng);

/// Cartesian product of the discrete sets with `continuous_steps` evenly
/// spaced points per continuous range.
std::vector<TrialConfig> grid_configs(const SweepSpace& space, const ModelConfig& base_model,
                                      const TrainConfig& base_train,
                                      std::size_t continuous_steps = 2);

struct TrialResult {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    TrialConfig config;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    double wall_seconds = 0.0;
    std::string error;  ///< non-empty when the trial failed

    bool failed() const noexcept { return !error.empty(); }
};

struct SweepOptions {
    std::size_t workers = 1;
    /// When false, wall_seconds is recorded as 0 so output depends only on inputs.
    bool record_wall_time = true;
};

/// Per-trial seed: hash of (master seed, trial index).
std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t index);

// Trains and evaluates every trial (in parallel when workers > 1) and returns
// them ranked: validation accuracy descending, then wall time ascending, then
// trial index ascending; failed trials last.
std::vector<TrialResult> run_trials(const std::vector<TrialConfig>& trials,
                                    const DatasetSplit& data, std::uint64_t master_seed,
                                    const SweepOptions& options = {});

/// `budget` random trials; trial i samples from trial_seed(master_seed, i).
std::vector<TrialResult> run_sweep(const SweepSpace& space, std::size_t budget,
                                   const DatasetSplit& data, const ModelConfig& base_model,
                                   const TrainConfig& base_train, std::uint64_t master_seed,
                                   const SweepOptions& options = {});

void rank_trials(std::vector<TrialResult>& results);

std::string sweep_csv(const std::vector<TrialResult>& ranked);
nlohmann::json sweep_json(const std::vector<TrialResult>& ranked);

}  // namespace erpnet
