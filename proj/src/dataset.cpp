#include "erpnet/dataset.hpp"

#include "erpnet/binary_io.hpp"
#include "erpnet/errors.hpp"
#include "erpnet/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace erpnet {

std::uint8_t Condition::code() const noexcept {
    return static_cast<std::uint8_t>((posture == Posture::Walking ? 1 : 0) |
                                     (load == Load::Loaded ? 2 : 0) |
                                     (phase == Phase::Late ? 4 : 0));
}

Condition Condition::from_code(std::uint8_t code) {
    if (code > 7) throw DataError("condition code " + std::to_string(code) + " out of range");
    return {(code & 1) ? Posture::Walking : Posture::Seated,
            (code & 2) ? Load::Loaded : Load::Unloaded, (code & 4) ? Phase::Late : Phase::Early};
}

std::string condition_group(const Condition& c) {
    std::string s = c.posture == Posture::Walking ? "walking" : "seated";
    s += c.load == Load::Loaded ? "-loaded" : "-unloaded";
    return s;
}

std::size_t EpochDataset::count_label(std::uint8_t label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

void EpochDataset::validate() const {
    if (epochs.rank() != 3) {
        throw DataError("epochs tensor must be (N,C,T), got " + to_string(epochs.dims()));
    }
    if (epochs.dim(0) != labels.size() || labels.size() != conditions.size()) {
        throw DataError("dataset length mismatch: " + std::to_string(epochs.dim(0)) + " epochs, " +
                        std::to_string(labels.size()) + " labels, " +
                        std::to_string(conditions.size()) + " conditions");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > kTarget) {
            throw DataError("label " + std::to_string(labels[i]) + " at epoch " +
                            std::to_string(i) + " is not 0/1");
        }
    }
}

EpochDataset EpochDataset::subset(std::span<const std::size_t> indices) const {
    const std::size_t c = channels(), t = samples(), stride = c * t;
    EpochDataset out;
    out.sample_rate_hz = sample_rate_hz;
    out.subject_id = subject_id;
    std::vector<float> data(indices.size() * stride);
    out.labels.reserve(indices.size());
    out.conditions.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t i = indices[k];
        if (i >= size()) throw DataError("subset index " + std::to_string(i) + " out of range");
        std::copy_n(epochs.data() + i * stride, stride, data.data() + k * stride);
        out.labels.push_back(labels[i]);
        out.conditions.push_back(conditions[i]);
    }
    out.epochs = Tensor<float>({indices.size(), c, t}, std::move(data));
    return out;
}

Tensor<float> EpochDataset::batch(std::span<const std::size_t> indices) const {
    const std::size_t c = channels(), t = samples(), stride = c * t;
    std::vector<float> data(indices.size() * stride);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        std::copy_n(epochs.data() + indices[k] * stride, stride, data.data() + k * stride);
    }
    return Tensor<float>({indices.size(), 1, c, t}, std::move(data));
}

EpochDataset make_empty_dataset(std::size_t channels, std::size_t samples, double sample_rate_hz,
                                std::string subject_id) {
    EpochDataset ds;
    ds.epochs = Tensor<float>({0, channels, samples});
    ds.sample_rate_hz = sample_rate_hz;
    ds.subject_id = std::move(subject_id);
    return ds;
}

EpochDataset concat(const EpochDataset& a, const EpochDataset& b) {
    if (a.channels() != b.channels() || a.samples() != b.samples()) {
        throw DataError("concat: geometry mismatch " + to_string(a.epochs.dims()) + " vs " +
                        to_string(b.epochs.dims()));
    }
    EpochDataset out;
    out.sample_rate_hz = a.sample_rate_hz;
    out.subject_id = a.subject_id;
    std::vector<float> data(a.epochs.storage());
    data.insert(data.end(), b.epochs.storage().begin(), b.epochs.storage().end());
    out.epochs = Tensor<float>({a.size() + b.size(), a.channels(), a.samples()}, std::move(data));
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.conditions = a.conditions;
    out.conditions.insert(out.conditions.end(), b.conditions.begin(), b.conditions.end());
    return out;
}

void SplitSpec::validate() const {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0) {
        throw ConfigError("split fractions must be non-negative");
    }
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1");
    }
}

namespace {

std::vector<std::size_t> indices_of(const EpochDataset& ds, std::uint8_t label) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == label) out.push_back(i);
    }
    return out;
}

// Draws `keep` of `pool` uniformly without replacement; result ascending.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                    std::size_t keep, Rng& rng) {
    rng.shuffle(std::span<std::size_t>(pool));
    pool.resize(keep);
    std::sort(pool.begin(), pool.end());
    return pool;
}

// Largest-remainder apportionment of `total` across `counts`; ties go to the
// lower index.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& counts) {
    const std::size_t sum = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    std::vector<std::size_t> out(counts.size(), 0);
    if (sum == 0) return out;
    std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder numerator, index)
    std::size_t given = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const std::size_t num = total * counts[c];
        out[c] = num / sum;
        given += out[c];
        remainders.emplace_back(num % sum, c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; given < total && k < remainders.size(); ++k, ++given) {
        ++out[remainders[k].second];
    }
    return out;
}

}  // namespace

std::vector<std::size_t> balance_indices(const EpochDataset& ds, std::uint64_t seed) {
    ds.validate();
    auto targets = indices_of(ds, kTarget);
    auto nontargets = indices_of(ds, kNonTarget);
    if (targets.empty() || nontargets.empty()) {
        throw DataError("balance_undersample: both classes must be present (targets=" +
                        std::to_string(targets.size()) +
                        ", non-targets=" + std::to_string(nontargets.size()) + ")");
    }
    Rng rng(seed);
    const std::size_t keep = std::min(targets.size(), nontargets.size());
    if (targets.size() > keep) targets = sample_without_replacement(targets, keep, rng);
    if (nontargets.size() > keep) nontargets = sample_without_replacement(nontargets, keep, rng);
    std::vector<std::size_t> out;
    out.reserve(2 * keep);
    std::merge(targets.begin(), targets.end(), nontargets.begin(), nontargets.end(),
               std::back_inserter(out));
    return out;
}

EpochDataset balance_undersample(const EpochDataset& ds, std::uint64_t seed) {
    const auto keep = balance_indices(ds, seed);
    return ds.subset(keep);
}

SplitIndices split_indices(const EpochDataset& ds, const SplitSpec& spec) {
    spec.validate();
    ds.validate();
    const std::size_t n = ds.size();
    if (n < 10) throw DataError("split: need at least 10 epochs, got " + std::to_string(n));

    const auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * static_cast<double>(n)));
    const auto n_test =
        static_cast<std::size_t>(std::floor(spec.test_frac * static_cast<double>(n)));

    Rng rng(spec.seed);
    std::vector<std::vector<std::size_t>> by_class{indices_of(ds, kNonTarget),
                                                   indices_of(ds, kTarget)};
    std::vector<std::size_t> counts{by_class[0].size(), by_class[1].size()};
    const auto val_quota = apportion(n_val, counts);
    const auto held_quota = apportion(n_val + n_test, counts);

    SplitIndices out;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& pool = by_class[c];
        rng.shuffle(std::span<std::size_t>(pool));
        const std::size_t v = val_quota[c];
        const std::size_t h = std::max(held_quota[c], v);
        out.val.insert(out.val.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(v));
        out.test.insert(out.test.end(), pool.begin() + static_cast<std::ptrdiff_t>(v),
                        pool.begin() + static_cast<std::ptrdiff_t>(h));
        out.train.insert(out.train.end(), pool.begin() + static_cast<std::ptrdiff_t>(h),
                         pool.end());
    }
    for (auto* part : {&out.train, &out.val, &out.test}) std::sort(part->begin(), part->end());

    auto check = [&](const std::vector<std::size_t>& part, const char* name) {
        for (std::uint8_t label : {kNonTarget, kTarget}) {
            const bool present = std::any_of(part.begin(), part.end(),
                                             [&](std::size_t i) { return ds.labels[i] == label; });
            if (!present) {
                throw DataError(std::string("split: ") + name + " split has no epochs of class " +
                                std::to_string(label) + " (N=" + std::to_string(n) + ")");
            }
        }
    };
    check(out.train, "train");
    check(out.val, "validation");
    check(out.test, "test");
    return out;
}

DatasetSplit split(const EpochDataset& ds, const SplitSpec& spec) {
    const auto idx = split_indices(ds, spec);
    return {ds.subset(idx.train), ds.subset(idx.val), ds.subset(idx.test)};
}

std::vector<EpochDataset> match_condition_lengths(std::span<const EpochDataset> groups,
                                                  std::uint64_t seed) {
    if (groups.size() < 2) throw DataError("match_condition_lengths: need at least 2 groups");
    std::size_t smallest = std::numeric_limits<std::size_t>::max();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].size() == 0) {
            throw DataError("match_condition_lengths: group " + std::to_string(g) + " is empty");
        }
        smallest = std::min(smallest, groups[g].size());
    }
    std::vector<EpochDataset> out;
    out.reserve(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].size() == smallest) {
            out.push_back(groups[g]);
            continue;
        }
        Rng rng(derive_seed(seed, g));
        std::vector<std::size_t> all(groups[g].size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        out.push_back(groups[g].subset(sample_without_replacement(std::move(all), smallest, rng)));
    }
    return out;
}

std::vector<EpochDataset> group_by_condition(const EpochDataset& ds) {
    std::map<std::uint8_t, std::vector<std::size_t>> rows;
    for (std::size_t i = 0; i < ds.size(); ++i) rows[ds.conditions[i].code()].push_back(i);
    std::vector<EpochDataset> out;
    for (const auto& [code, idx] : rows) out.push_back(ds.subset(idx));
    return out;
}

ChannelStats channel_stats(const EpochDataset& ds) {
    const std::size_t n = ds.size(), c = ds.channels(), t = ds.samples();
    ChannelStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
    if (n == 0 || t == 0) return s;
    const double count = static_cast<double>(n * t);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (std::size_t e = 0; e < n; ++e) {
            const float* row = ds.epochs.data() + (e * c + ch) * t;
            for (std::size_t k = 0; k < t; ++k) sum += row[k];
        }
        const double mean = sum / count;
        double sq = 0.0;
        for (std::size_t e = 0; e < n; ++e) {
            const float* row = ds.epochs.data() + (e * c + ch) * t;
            for (std::size_t k = 0; k < t; ++k) sq += (row[k] - mean) * (row[k] - mean);
        }
        s.mean[ch] = mean;
        s.stddev[ch] = std::sqrt(sq / count);
    }
    return s;
}

void apply_zscore(EpochDataset& ds, const ChannelStats& stats) {
    const std::size_t n = ds.size(), c = ds.channels(), t = ds.samples();
    if (stats.mean.size() != c) throw DataError("z-score stats channel count mismatch");
    for (std::size_t e = 0; e < n; ++e) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double sd = stats.stddev[ch] < 1e-12 ? 1.0 : stats.stddev[ch];
            float* row = ds.epochs.data() + (e * c + ch) * t;
            for (std::size_t k = 0; k < t; ++k) {
                row[k] = static_cast<float>((row[k] - stats.mean[ch]) / sd);
            }
        }
    }
}

namespace {

constexpr std::string_view kEpochMagic = "EEP1";
constexpr std::uint32_t kEpochVersion = 1;

}  // namespace

std::string encode_epochs(const EpochDataset& ds) {
    ds.validate();
    const auto fits = [](std::size_t v) { return v <= std::numeric_limits<std::uint32_t>::max(); };
    if (!fits(ds.size()) || !fits(ds.channels()) || !fits(ds.samples()) ||
        !fits(ds.subject_id.size())) {
        throw DataError("dataset extents exceed the EEP1 u32 fields");
    }
    ByteWriter w;
    w.raw(kEpochMagic);
    w.u32(kEpochVersion);
    w.u32(static_cast<std::uint32_t>(ds.size()));
    w.u32(static_cast<std::uint32_t>(ds.channels()));
    w.u32(static_cast<std::uint32_t>(ds.samples()));
    w.f32(static_cast<float>(ds.sample_rate_hz));
    w.u32(static_cast<std::uint32_t>(ds.subject_id.size()));
    w.raw(ds.subject_id);
    for (auto l : ds.labels) w.u8(l);
    for (const auto& c : ds.conditions) w.u8(c.code());
    for (float v : ds.epochs.values()) w.f32(v);
    return w.bytes();
}

EpochDataset decode_epochs(std::string_view bytes) {
    ByteReader r(bytes);
    if (r.remaining() < 4 || r.raw(4, "magic") != kEpochMagic) {
        throw FormatError("bad magic, expected EEP1", 0);
    }
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kEpochVersion) {
        throw FormatError("unsupported EEP1 version " + std::to_string(version), version_at);
    }
    const std::size_t dims_at = r.offset();
    const std::uint64_t n = r.u32("N"), c = r.u32("C"), t = r.u32("T");
    EpochDataset ds;
    ds.sample_rate_hz = static_cast<double>(r.f32("sample rate"));
    const std::uint32_t id_len = r.u32("subject-id length");
    ds.subject_id = std::string(r.raw(id_len, "subject id"));

    unsigned __int128 payload = static_cast<unsigned __int128>(n) * c * t * 4 + 2 * n;
    if (payload > r.remaining()) {
        if (payload > std::numeric_limits<std::uint64_t>::max()) {
            throw FormatError("dimension overflow: N*C*T too large", dims_at);
        }
        throw FormatError("truncated payload: need " +
                              std::to_string(static_cast<std::uint64_t>(payload)) +
                              " bytes, have " + std::to_string(r.remaining()),
                          r.offset());
    }
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t at = r.offset();
        ds.labels[i] = r.u8("label");
        if (ds.labels[i] > kTarget) {
            throw FormatError("label byte " + std::to_string(ds.labels[i]) + " is not 0/1", at);
        }
    }
    ds.conditions.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t at = r.offset();
        const std::uint8_t code = r.u8("condition");
        if (code > 7) throw FormatError("condition code " + std::to_string(code) + " > 7", at);
        ds.conditions[i] = Condition::from_code(code);
    }
    std::vector<float> data(n * c * t);
    for (auto& v : data) v = r.f32("samples");
    if (r.remaining() != 0) throw FormatError("trailing bytes after sample payload", r.offset());
    ds.epochs = Tensor<float>({n, c, t}, std::move(data));
    return ds;
}

void write_epochs(const EpochDataset& ds, const std::filesystem::path& path) {
    write_file_bytes(path, encode_epochs(ds));
}

EpochDataset read_epochs(const std::filesystem::path& path) {
    return decode_epochs(read_file_bytes(path));
}

}  // namespace erpnet
