#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace erpnet {

struct GradCheckOptions {
    std::size_t seeds = 20;
    std::uint64_t base_seed = 1;
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Coordinates probed per tensor; larger tensors are subsampled.
    std::size_t max_coords = 256;
};

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t coords = 0;  ///< finite-difference coordinates probed over all seeds
    std::size_t seeds = 0;
    bool passed = false;
};

/// |a - n| / max(|a|, |n|, 1e-6). The floor absorbs round-off on gradients
/// that are exactly zero.
double relative_error(double analytic, double numeric) noexcept;

// Central-difference checks in double precision of every layer adjoint
// (input and parameter gradients) under the loss sum(r * y) for a random r,
// plus dense + softmax + cross-entropy and two tiny full models.
std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options = {});

std::string format_gradcheck(const std::vector<GradCheckResult>& results);

}  // namespace erpnet
