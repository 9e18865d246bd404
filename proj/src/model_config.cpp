#include "erpnet/model_config.hpp"

#include "erpnet/errors.hpp"

#include <string>

namespace erpnet {

std::string_view to_string(Arch arch) {
    return arch == Arch::CnEegnet ? "cn-eegnet" : "eegnet";
}

Arch parse_arch(std::string_view name) {
    if (name == "cn-eegnet" || name == "cn_eegnet") return Arch::CnEegnet;
    if (name == "eegnet") return Arch::Eegnet;
    throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
    if (f1 < 1) fail("f1 must be >= 1");
    if (f2 < 1) fail("f2 must be >= 1");
    if (d < 1) fail("d must be >= 1");
    if (kernel_length < 1) fail("kernel_length must be >= 1");
    if (channels < 1) fail("channels must be >= 1");
    if (n_classes < 2) fail("n_classes must be >= 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
    if (!(norm_rate > 0.0)) fail("norm_rate must be > 0");
    const std::size_t pool = kBlock1PoolWidth * kBlock2PoolWidth;
    if (samples == 0 || samples % pool != 0) {
        fail("samples T=" + std::to_string(samples) + " must be a positive multiple of " +
             std::to_string(pool));
    }
    if (kernel_length > samples) {
        fail("kernel_length " + std::to_string(kernel_length) + " exceeds samples T=" +
             std::to_string(samples));
    }
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
    j = nlohmann::json{
        {"arch", std::string(to_string(cfg.arch))},
        {"f1", cfg.f1},
        {"f2", cfg.f2},
        {"d", cfg.d},
        {"kernel_length", cfg.kernel_length},
        {"dropout_rate", cfg.dropout_rate},
        {"norm_rate", cfg.norm_rate},
        {"activation", std::string(to_string(cfg.activation))},
        {"n_classes", cfg.n_classes},
        {"channels", cfg.channels},
        {"samples", cfg.samples},
    };
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
    ModelConfig out;
    if (j.contains("arch")) out.arch = parse_arch(j.at("arch").get<std::string>());
    out.activation = default_activation(out.arch);
    if (j.contains("f1")) out.f1 = j.at("f1").get<std::size_t>();
    if (j.contains("f2")) out.f2 = j.at("f2").get<std::size_t>();
    if (j.contains("d")) out.d = j.at("d").get<std::size_t>();
    if (j.contains("kernel_length")) out.kernel_length = j.at("kernel_length").get<std::size_t>();
    if (j.contains("dropout_rate")) out.dropout_rate = j.at("dropout_rate").get<double>();
    if (j.contains("norm_rate")) out.norm_rate = j.at("norm_rate").get<double>();
    if (j.contains("activation")) {
        out.activation = parse_activation(j.at("activation").get<std::string>());
    }
    if (j.contains("n_classes")) out.n_classes = j.at("n_classes").get<std::size_t>();
    if (j.contains("channels")) out.channels = j.at("channels").get<std::size_t>();
    if (j.contains("samples")) out.samples = j.at("samples").get<std::size_t>();
    cfg = out;
}

std::string_view to_string(Preset preset) {
    switch (preset) {
        case Preset::Table2Default: return "table2-default";
        case Preset::Table2Optimized: return "table2-opt";
        case Preset::Table3Optimized: return "table3-opt";
    }
    return "?";
}

Preset parse_preset(std::string_view name) {
    if (name == "table2-default") return Preset::Table2Default;
    if (name == "table2-opt") return Preset::Table2Optimized;
    if (name == "table3-opt") return Preset::Table3Optimized;
    throw ConfigError("unknown preset '" + std::string(name) + "'");
}

void apply_preset(ModelConfig& cfg, Preset preset) {
    switch (preset) {
        case Preset::Table2Default:
            cfg.f1 = 8, cfg.f2 = 16, cfg.d = 2, cfg.dropout_rate = 0.25, cfg.kernel_length = 64,
            cfg.norm_rate = 0.25;
            break;
        case Preset::Table2Optimized:
            cfg.f1 = 32, cfg.f2 = 16, cfg.d = 8, cfg.dropout_rate = 0.25, cfg.kernel_length = 128,
            cfg.norm_rate = 0.25;
            break;
        case Preset::Table3Optimized:
            cfg.f1 = 16, cfg.f2 = 16, cfg.d = 2, cfg.dropout_rate = 0.15, cfg.kernel_length = 64,
            cfg.norm_rate = 0.17;
            break;
    }
}

ActivationKind default_activation(Arch arch) {
    return arch == Arch::CnEegnet ? ActivationKind::Mish : ActivationKind::Elu;
}

ModelConfig cn_eegnet_default(std::size_t channels, std::size_t samples) {
    ModelConfig cfg;
    cfg.arch = Arch::CnEegnet;
    cfg.activation = default_activation(cfg.arch);
    apply_preset(cfg, Preset::Table3Optimized);
    cfg.channels = channels;
    cfg.samples = samples;
    return cfg;
}

ModelConfig eegnet_default(std::size_t channels, std::size_t samples) {
    ModelConfig cfg;
    cfg.arch = Arch::Eegnet;
    cfg.activation = default_activation(cfg.arch);
    apply_preset(cfg, Preset::Table2Default);
    cfg.channels = channels;
    cfg.samples = samples;
    return cfg;
}

}  // namespace erpnet
