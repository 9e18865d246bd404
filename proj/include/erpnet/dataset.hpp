#pragma once

#include "erpnet/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace erpnet {

enum class Posture : std::uint8_t { Seated, Walking };
enum class Load : std::uint8_t { Unloaded, Loaded };
enum class Phase : std::uint8_t { Early, Late };

/// Per-epoch recording condition. Encoded on disk as bit0 walking, bit1 loaded, bit2 late.
struct Condition {
    Posture posture = Posture::Seated;
    Load load = Load::Unloaded;
    Phase phase = Phase::Early;

    std::uint8_t code() const noexcept;
    static Condition from_code(std::uint8_t code);

    friend bool operator==(const Condition&, const Condition&) = default;
};

/// "seated-unloaded", "walking-loaded", ... (phase is pooled).
std::string condition_group(const Condition& c);

inline constexpr std::uint8_t kNonTarget = 0;
inline constexpr std::uint8_t kTarget = 1;

struct EpochDataset {
    Tensor<float> epochs;  ///< (N, C, T)
    std::vector<std::uint8_t> labels;
    std::vector<Condition> conditions;
    double sample_rate_hz = 128.0;
    std::string subject_id;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t channels() const { return epochs.rank() == 3 ? epochs.dim(1) : 0; }
    std::size_t samples() const { return epochs.rank() == 3 ? epochs.dim(2) : 0; }
    std::size_t count_label(std::uint8_t label) const;

    /// Throws DataError if lengths or extents disagree.
    void validate() const;

    /// Rows `indices`, in the given order.
    EpochDataset subset(std::span<const std::size_t> indices) const;

    /// (n, 1, C, T) batch of the listed rows for model input.
    Tensor<float> batch(std::span<const std::size_t> indices) const;

    friend bool operator==(const EpochDataset&, const EpochDataset&) = default;
};

/// Empty dataset with the given geometry.
EpochDataset make_empty_dataset(std::size_t channels, std::size_t samples,
                                double sample_rate_hz = 128.0, std::string subject_id = {});

/// Rows of `a` followed by rows of `b`; geometry must agree.
EpochDataset concat(const EpochDataset& a, const EpochDataset& b);

struct SplitSpec {
    double train_frac = 0.70;
    double val_frac = 0.15;
    double test_frac = 0.15;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

struct DatasetSplit {
    EpochDataset train, val, test;
};

/// Equalizes class counts by sampling the majority class without replacement.
EpochDataset balance_undersample(const EpochDataset& ds, std::uint64_t seed);
/// Surviving row indices of balance_undersample, ascending.
std::vector<std::size_t> balance_indices(const EpochDataset& ds, std::uint64_t seed);

// Stratified split. Split sizes are floor(frac * N) for validation and test,
// remainder to train; each class is apportioned so per-split imbalance stays
// within one epoch for balanced input.
SplitIndices split_indices(const EpochDataset& ds, const SplitSpec& spec);
DatasetSplit split(const EpochDataset& ds, const SplitSpec& spec);

/// Subsamples every group (uniformly, order preserved) to the smallest group's size.
std::vector<EpochDataset> match_condition_lengths(std::span<const EpochDataset> groups,
                                                  std::uint64_t seed);

/// Partitions rows by condition code, ascending code order.
std::vector<EpochDataset> group_by_condition(const EpochDataset& ds);

struct ChannelStats {
    std::vector<double> mean, stddev;
};

/// Per-channel mean/std over all epochs and samples.
ChannelStats channel_stats(const EpochDataset& ds);
/// Applies (x - mean) / std per channel; std below 1e-12 is treated as 1.
void apply_zscore(EpochDataset& ds, const ChannelStats& stats);

// EEP1 file: magic "EEP1", u32 version=1, u32 N, u32 C, u32 T, f32 sample rate,
// u32 subject-id length + UTF-8 bytes, N label bytes, N condition-code bytes,
// then N*C*T f32 samples in (epoch, channel, time) order. Little-endian, no padding.
std::string encode_epochs(const EpochDataset& ds);
EpochDataset decode_epochs(std::string_view bytes);

void write_epochs(const EpochDataset& ds, const std::filesystem::path& path);
EpochDataset read_epochs(const std::filesystem::path& path);

}  // namespace erpnet
