#pragma once

#include "erpnet/kernels.hpp"

#include <json.hpp>

#include <cstddef>
#include <string>
#include <string_view>

namespace erpnet {

enum class Arch { CnEegnet, Eegnet };

std::string_view to_string(Arch arch);
Arch parse_arch(std::string_view name);

/// Pool widths of the first and second block; together they divide T by 32.
inline constexpr std::size_t kBlock1PoolWidth = 4;
inline constexpr std::size_t kBlock2PoolWidth = 8;
inline constexpr std::size_t kSeparableKernelLength = 16;
/// Max-norm bound on every depthwise spatial filter.
inline constexpr double kDepthwiseMaxNorm = 1.0;

struct ModelConfig {
    Arch arch = Arch::CnEegnet;
    std::size_t f1 = 16;             ///< temporal filters
    std::size_t f2 = 16;             ///< pointwise filters
    std::size_t d = 2;               ///< depth multiplier (spatial filters per temporal filter)
    std::size_t kernel_length = 64;  ///< temporal kernel length in samples
    double dropout_rate = 0.15;
    double norm_rate = 0.17;  ///< max-norm bound on dense-layer columns
    ActivationKind activation = ActivationKind::Mish;
    std::size_t n_classes = 2;
    std::size_t channels = 16;
    std::size_t samples = 128;

    /// Throws ConfigError naming the first violated constraint.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

/// Hyperparameter rows shipped from the published tuning tables.
enum class Preset {
    Table2Default,    ///< F1=8  F2=16 D=2 dropout 0.25 kernel 64  norm 0.25
    Table2Optimized,  ///< F1=32 F2=16 D=8 dropout 0.25 kernel 128 norm 0.25
    Table3Optimized,  ///< F1=16 F2=16 D=2 dropout 0.15 kernel 64  norm 0.17
};

std::string_view to_string(Preset preset);
Preset parse_preset(std::string_view name);

/// Overwrites f1, f2, d, kernel_length, dropout_rate and norm_rate. Every
/// preset pairs with the adam optimizer.
void apply_preset(ModelConfig& cfg, Preset preset);

/// Mish for CN-EEGNet, ELU for the EEGNet baseline.
ActivationKind default_activation(Arch arch);

/// CN-EEGNet with the table3-opt preset at desk-scale geometry (C=16, T=128).
ModelConfig cn_eegnet_default(std::size_t channels = 16, std::size_t samples = 128);
/// EEGNet baseline with the table2-default preset.
ModelConfig eegnet_default(std::size_t channels = 16, std::size_t samples = 128);

}  // namespace erpnet
