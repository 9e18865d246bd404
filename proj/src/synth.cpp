#include "erpnet/synth.hpp"

#include "erpnet/errors.hpp"
#include "erpnet/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace erpnet {

std::string_view to_string(SynthCondition c) {
    switch (c) {
        case SynthCondition::Seated: return "seated";
        case SynthCondition::Walking: return "walking";
        case SynthCondition::Loaded: return "loaded";
    }
    return "?";
}

SynthCondition parse_synth_condition(std::string_view name) {
    if (name == "seated") return SynthCondition::Seated;
    if (name == "walking") return SynthCondition::Walking;
    if (name == "loaded") return SynthCondition::Loaded;
    throw ConfigError("unknown condition '" + std::string(name) +
                      "' (expected seated|walking|loaded)");
}

double default_gait_artifact_uv(SynthCondition c) {
    switch (c) {
        case SynthCondition::Seated: return 0.0;
        case SynthCondition::Walking: return 20.0;
        case SynthCondition::Loaded: return 30.0;
    }
    return 0.0;
}

double SynthConfig::gait_amplitude() const {
    return gait_artifact_uv.value_or(default_gait_artifact_uv(condition));
}

std::size_t SynthConfig::first_p300_channel() const {
    const auto n = static_cast<std::size_t>(
        std::ceil(p300_channel_fraction * static_cast<double>(channels) - 1e-9));
    return channels - std::min(n, channels);
}

void SynthConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("synth config: " + msg); };
    if (channels < 1) fail("channels must be >= 1");
    if (samples < 1) fail("samples must be >= 1");
    if (!(sample_rate_hz > 0.0)) fail("sample_rate_hz must be > 0");
    if (!(oddball_rate > 0.0 && oddball_rate < 1.0)) fail("oddball_rate must lie in (0, 1)");
    if (!(p300_width_s > 0.0)) fail("p300_width_s must be > 0");
    if (!(p300_latency_s >= 0.0)) fail("p300_latency_s must be >= 0");
    if (!(p300_channel_fraction > 0.0 && p300_channel_fraction <= 1.0)) {
        fail("p300_channel_fraction must lie in (0, 1]");
    }
    if (background_noise_uv < 0.0 || alpha_relative < 0.0 || gait_amplitude() < 0.0 ||
        p300_amplitude_uv < 0.0) {
        fail("amplitudes must be non-negative");
    }
    if (!(gait_rate_hz > 0.0)) fail("gait_rate_hz must be > 0");
    const double duration = static_cast<double>(samples) / sample_rate_hz;
    if (p300_latency_s + 3.0 * p300_width_s > duration + 1e-12) {
        fail("p300 latency + 3 * width exceeds the epoch duration");
    }
}

namespace {

struct Background {
    std::vector<double> freq, amp;
};

Background background_bank(double rms) {
    Background b;
    double power = 0.0;
    for (std::size_t j = 0; j < kBackgroundComponents; ++j) {
        const double f = 1.0 + 39.0 * static_cast<double>(j) /
                                   static_cast<double>(kBackgroundComponents - 1);
        b.freq.push_back(f);
        b.amp.push_back(1.0 / f);
        power += 0.5 / (f * f);
    }
    const double scale = power > 0.0 ? rms / std::sqrt(power) : 0.0;
    for (auto& a : b.amp) a *= scale;
    return b;
}

}  // namespace

EpochDataset generate(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.n_epochs, c = cfg.channels, t = cfg.samples;
    const double two_pi = 2.0 * std::numbers::pi;

    EpochDataset ds;
    ds.sample_rate_hz = cfg.sample_rate_hz;
    ds.subject_id = "synthetic-" + std::string(to_string(cfg.condition));
    const auto n_targets =
        static_cast<std::size_t>(std::llround(cfg.oddball_rate * static_cast<double>(n)));
    ds.labels.assign(n, kNonTarget);
    std::fill_n(ds.labels.begin(), std::min(n_targets, n), kTarget);
    Rng order_rng(derive_seed(cfg.seed, 0xA11CE));
    order_rng.shuffle(std::span<std::uint8_t>(ds.labels));

    Condition cond;
    cond.posture = cfg.condition == SynthCondition::Seated ? Posture::Seated : Posture::Walking;
    cond.load = cfg.condition == SynthCondition::Loaded ? Load::Loaded : Load::Unloaded;
    ds.conditions.assign(n, cond);
    for (std::size_t i = n / 2; i < n; ++i) ds.conditions[i].phase = Phase::Late;

    const Background bank = background_bank(cfg.background_noise_uv);
    const double alpha_amp = cfg.alpha_relative * cfg.background_noise_uv;
    const double gait_amp = cfg.gait_amplitude();
    const std::size_t p300_first = cfg.first_p300_channel();
    const double centre = std::round(cfg.p300_latency_s * cfg.sample_rate_hz) / cfg.sample_rate_hz;

    std::vector<double> times(t), bump(t);
    for (std::size_t k = 0; k < t; ++k) {
        times[k] = static_cast<double>(k) / cfg.sample_rate_hz;
        const double z = (times[k] - centre) / cfg.p300_width_s;
        bump[k] = cfg.p300_amplitude_uv * std::exp(-0.5 * z * z);
    }

    std::vector<float> data(n * c * t);
    std::vector<double> row(t), gait(t);
    for (std::size_t e = 0; e < n; ++e) {
        Rng rng(derive_seed(cfg.seed, e + 1));
        const double gait_phase = rng.uniform(0.0, two_pi);
        for (std::size_t k = 0; k < t; ++k) {
            const double w = two_pi * cfg.gait_rate_hz * times[k];
            gait[k] = gait_amp * (std::sin(w + gait_phase) + 0.5 * std::sin(2.0 * w + 2.0 * gait_phase));
        }
        const bool target = ds.labels[e] == kTarget;
        for (std::size_t ch = 0; ch < c; ++ch) {
            std::fill(row.begin(), row.end(), 0.0);
            for (std::size_t j = 0; j < kBackgroundComponents; ++j) {
                const double phase = rng.uniform(0.0, two_pi);
                const double w = two_pi * bank.freq[j];
                for (std::size_t k = 0; k < t; ++k) row[k] += bank.amp[j] * std::sin(w * times[k] + phase);
            }
            const double alpha_phase = rng.uniform(0.0, two_pi);
            for (std::size_t k = 0; k < t; ++k) {
                row[k] += alpha_amp * std::sin(two_pi * kAlphaHz * times[k] + alpha_phase) + gait[k];
                if (target && ch >= p300_first) row[k] += bump[k];
            }
            float* out = data.data() + (e * c + ch) * t;
            for (std::size_t k = 0; k < t; ++k) out[k] = static_cast<float>(row[k]);
        }
    }
    ds.epochs = Tensor<float>({n, c, t}, std::move(data));
    return ds;
}

double snr_estimate(const EpochDataset& ds, double p300_channel_fraction, double window_begin_s,
                    double window_end_s) {
    ds.validate();
    const std::size_t n_target = ds.count_label(kTarget);
    const std::size_t n_non = ds.count_label(kNonTarget);
    if (n_target == 0 || n_non == 0) {
        throw DataError("snr_estimate: both classes must be present");
    }
    const std::size_t c = ds.channels(), t = ds.samples();
    const auto n_p300 = std::min(
        c, static_cast<std::size_t>(std::ceil(p300_channel_fraction * static_cast<double>(c) - 1e-9)));
    const std::size_t first = c - n_p300;
    const auto k0 = static_cast<std::size_t>(std::ceil(window_begin_s * ds.sample_rate_hz - 1e-9));
    const auto k1 = std::min(
        t - 1, static_cast<std::size_t>(std::floor(window_end_s * ds.sample_rate_hz + 1e-9)));
    if (n_p300 == 0 || k0 > k1) throw DataError("snr_estimate: empty analysis window");

    std::vector<double> mean_t(t, 0.0), mean_n(t, 0.0);
    double sq = 0.0;
    std::size_t sq_count = 0;
    for (std::size_t e = 0; e < ds.size(); ++e) {
        const bool target = ds.labels[e] == kTarget;
        for (std::size_t ch = first; ch < c; ++ch) {
            const float* row = ds.epochs.data() + (e * c + ch) * t;
            for (std::size_t k = k0; k <= k1; ++k) {
                (target ? mean_t : mean_n)[k] += row[k];
                if (!target) {
                    sq += static_cast<double>(row[k]) * row[k];
                    ++sq_count;
                }
            }
        }
    }
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = k0; k <= k1; ++k) {
        const double diff = mean_t[k] / static_cast<double>(n_target * n_p300) -
                            mean_n[k] / static_cast<double>(n_non * n_p300);
        peak = std::max(peak, diff);
    }
    const double rms = std::sqrt(sq / static_cast<double>(sq_count));
    if (rms == 0.0) return peak > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return peak / rms;
}

void to_json(nlohmann::json& j, const SynthConfig& cfg) {
    j = nlohmann::json{{"n_epochs", cfg.n_epochs},
                       {"channels", cfg.channels},
                       {"samples", cfg.samples},
                       {"sample_rate_hz", cfg.sample_rate_hz},
                       {"oddball_rate", cfg.oddball_rate},
                       {"p300_amplitude_uv", cfg.p300_amplitude_uv},
                       {"p300_latency_s", cfg.p300_latency_s},
                       {"p300_width_s", cfg.p300_width_s},
                       {"p300_channel_fraction", cfg.p300_channel_fraction},
                       {"background_noise_uv", cfg.background_noise_uv},
                       {"alpha_relative", cfg.alpha_relative},
                       {"condition", std::string(to_string(cfg.condition))},
                       {"gait_artifact_uv", cfg.gait_amplitude()},
                       {"gait_rate_hz", cfg.gait_rate_hz},
                       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& cfg) {
    SynthConfig out;
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("n_epochs", out.n_epochs);
    take("channels", out.channels);
    take("samples", out.samples);
    take("sample_rate_hz", out.sample_rate_hz);
    take("oddball_rate", out.oddball_rate);
    take("p300_amplitude_uv", out.p300_amplitude_uv);
    take("p300_latency_s", out.p300_latency_s);
    take("p300_width_s", out.p300_width_s);
    take("p300_channel_fraction", out.p300_channel_fraction);
    take("background_noise_uv", out.background_noise_uv);
    take("alpha_relative", out.alpha_relative);
    if (j.contains("condition")) out.condition = parse_synth_condition(j.at("condition").get<std::string>());
    if (j.contains("gait_artifact_uv")) out.gait_artifact_uv = j.at("gait_artifact_uv").get<double>();
    take("gait_rate_hz", out.gait_rate_hz);
    take("seed", out.seed);
    cfg = out;
}

}  // namespace erpnet
