#pragma once

#include "erpnet/train.hpp"

#include <string>
#include <vector>

namespace erpnet {

struct GroupSummary {
    std::string group;
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;  ///< sample SD (n-1); NaN when n < 2
};

struct AccuracySample {
    std::string group;
    double accuracy = 0.0;
};

struct AccuracySummary {
    std::vector<GroupSummary> groups;  ///< in first-appearance order
    GroupSummary overall;
};

/// Mean and sample SD per group and over all samples. Empty input is a DataError.
AccuracySummary aggregate(const std::vector<AccuracySample>& samples);

/// The four posture x load cells in display order.
const std::vector<std::string>& condition_grid();

// One summary per architecture over the condition grid; rows follow the
// order in which architectures first appear.
struct ArchSummary {
    std::string arch;
    std::vector<GroupSummary> cells;  ///< aligned with condition_grid(); n == 0 when absent
    GroupSummary overall;
};

/// Groups reports by (architecture, condition). Requires test accuracies.
std::vector<ArchSummary> aggregate_report(const std::vector<TrainReport>& reports);

std::string summary_csv(const std::vector<ArchSummary>& rows);
/// Grouped bar chart (conditions on x, one bar per architecture, SD whiskers).
std::string summary_svg(const std::vector<ArchSummary>& rows);

std::string history_csv(const TrainReport& report);

}  // namespace erpnet
