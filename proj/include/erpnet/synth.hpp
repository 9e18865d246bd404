#pragma once

#include "erpnet/dataset.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string_view>

namespace erpnet {

/// Noise regime of a synthetic recording.
enum class SynthCondition { Seated, Walking, Loaded };

std::string_view to_string(SynthCondition c);
SynthCondition parse_synth_condition(std::string_view name);

/// Default gait-artifact amplitude (uV) per regime: 0 seated, 20 walking, 30 loaded.
double default_gait_artifact_uv(SynthCondition c);

// Signal model per epoch and channel:
//   background  20 random-phase sinusoids at 1..40 Hz (linear grid), amplitude
//               proportional to 1/f, scaled to background_noise_uv RMS
//   alpha       10 Hz sinusoid, random phase, amplitude alpha_relative *
//               background_noise_uv
//   gait        gait_artifact_uv at gait_rate_hz plus its 2nd harmonic at half
//               amplitude; one random phase per epoch, shared by all channels
//   P300        targets only: Gaussian bump of p300_amplitude_uv centred at
//               the sample nearest p300_latency_s with sigma p300_width_s
//               on the last
//               ceil(p300_channel_fraction * C) channels
struct SynthConfig {
    std::size_t n_epochs = 1000;
    std::size_t channels = 16;
    std::size_t samples = 128;
    double sample_rate_hz = 128.0;
    double oddball_rate = 0.2;
    double p300_amplitude_uv = 5.0;
    double p300_latency_s = 0.30;
    double p300_width_s = 0.08;
    double p300_channel_fraction = 0.25;
    double background_noise_uv = 10.0;
    double alpha_relative = 0.2;
    SynthCondition condition = SynthCondition::Seated;
    std::optional<double> gait_artifact_uv;  ///< unset: regime default
    double gait_rate_hz = 2.0;
    std::uint64_t seed = 0;

    double gait_amplitude() const;
    /// Index of the first P300 channel.
    std::size_t first_p300_channel() const;
    void validate() const;
};

/// Every field, with the gait amplitude resolved; from_json overlays defaults.
void to_json(nlohmann::json& j, const SynthConfig& cfg);
void from_json(const nlohmann::json& j, SynthConfig& cfg);

inline constexpr std::size_t kBackgroundComponents = 20;
inline constexpr double kAlphaHz = 10.0;

/// Labeled epochs; exactly round(oddball_rate * n_epochs) targets in seeded order.
EpochDataset generate(const SynthConfig& cfg);

// Difference of class-mean peak amplitude on the P300 channels within
// 0.25-0.35 s, divided by the pooled RMS of non-target samples in that window.
// Returns +inf when the non-target window is silent.
double snr_estimate(const EpochDataset& ds, double p300_channel_fraction = 0.25,
                    double window_begin_s = 0.25, double window_end_s = 0.35);

}  // namespace erpnet
