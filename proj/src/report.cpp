#include "erpnet/report.hpp"

#include "erpnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace erpnet {

namespace {

GroupSummary summarize(std::string group, const std::vector<double>& values) {
    GroupSummary s;
    s.group = std::move(group);
    s.n = values.size();
    if (values.empty()) {
        s.mean = s.sd = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    if (values.size() < 2) {
        s.sd = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(sq / static_cast<double>(values.size() - 1));
    return s;
}

std::string fmt(double v, int precision = 4) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

}  // namespace

AccuracySummary aggregate(const std::vector<AccuracySample>& samples) {
    if (samples.empty()) throw DataError("aggregate: no accuracy samples");
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> by_group;
    std::vector<double> all;
    for (const auto& s : samples) {
        if (s.group.empty()) throw DataError("aggregate: empty group key");
        if (!by_group.contains(s.group)) order.push_back(s.group);
        by_group[s.group].push_back(s.accuracy);
        all.push_back(s.accuracy);
    }
    AccuracySummary out;
    for (const auto& g : order) out.groups.push_back(summarize(g, by_group[g]));
    out.overall = summarize("overall", all);
    return out;
}

const std::vector<std::string>& condition_grid() {
    static const std::vector<std::string> grid{"seated-unloaded", "seated-loaded", "walking-unloaded",
                                               "walking-loaded"};
    return grid;
}

std::vector<ArchSummary> aggregate_report(const std::vector<TrainReport>& reports) {
    if (reports.empty()) throw DataError("aggregate_report: no reports");
    std::vector<std::string> archs;
    std::map<std::string, std::map<std::string, std::vector<double>>> cells;
    std::map<std::string, std::vector<double>> overall;
    for (const auto& r : reports) {
        if (!r.test_accuracy) throw DataError("aggregate_report: report without test accuracy");
        const std::string arch(to_string(r.model.arch));
        if (!overall.contains(arch)) archs.push_back(arch);
        cells[arch][r.condition].push_back(*r.test_accuracy);
        overall[arch].push_back(*r.test_accuracy);
    }
    std::vector<ArchSummary> out;
    for (const auto& arch : archs) {
        ArchSummary row;
        row.arch = arch;
        for (const auto& cond : condition_grid()) {
            auto it = cells[arch].find(cond);
            row.cells.push_back(summarize(cond, it == cells[arch].end() ? std::vector<double>{}
                                                                        : it->second));
        }
        row.overall = summarize("overall", overall[arch]);
        out.push_back(std::move(row));
    }
    return out;
}

std::string summary_csv(const std::vector<ArchSummary>& rows) {
    std::ostringstream os;
    os << "arch";
    for (const auto& cond : condition_grid()) os << ',' << cond << "_mean," << cond << "_sd";
    os << ",overall_mean,overall_sd,overall_n\n";
    for (const auto& row : rows) {
        os << row.arch;
        for (const auto& cell : row.cells) os << ',' << fmt(cell.mean) << ',' << fmt(cell.sd);
        os << ',' << fmt(row.overall.mean) << ',' << fmt(row.overall.sd) << ',' << row.overall.n
           << '\n';
    }
    return os.str();
}

std::string summary_svg(const std::vector<ArchSummary>& rows) {
    const auto& grid = condition_grid();
    const double width = 720, height = 420, left = 60, right = 20, top = 40, bottom = 70;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    const double group_w = plot_w / static_cast<double>(grid.size());
    const std::size_t bars = std::max<std::size_t>(rows.size(), 1);
    const double bar_w = group_w * 0.7 / static_cast<double>(bars);
    static const char* colours[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52"};
    auto y_of = [&](double acc) { return top + plot_h * (1.0 - std::clamp(acc, 0.0, 1.0)); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       << "Test accuracy by condition (mean, SD)</text>\n";
    for (int tick = 0; tick <= 10; tick += 2) {
        const double y = y_of(tick / 10.0);
        os << "<line x1=\"" << left << "\" x2=\"" << width - right << "\" y1=\"" << y << "\" y2=\""
           << y << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
           << fmt(tick / 10.0, 1) << "</text>\n";
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double gx = left + group_w * static_cast<double>(g) + group_w * 0.15;
        for (std::size_t b = 0; b < rows.size(); ++b) {
            const auto& cell = rows[b].cells[g];
            if (cell.n == 0) continue;
            const double x = gx + bar_w * static_cast<double>(b);
            const double y = y_of(cell.mean);
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w * 0.9
               << "\" height=\"" << top + plot_h - y << "\" fill=\"" << colours[b % 4] << "\"/>\n";
            if (!std::isnan(cell.sd)) {
                const double cx = x + bar_w * 0.45;
                os << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\""
                   << y_of(cell.mean + cell.sd) << "\" y2=\"" << y_of(cell.mean - cell.sd)
                   << "\" stroke=\"#222\"/>\n";
            }
        }
        os << "<text x=\"" << left + group_w * (static_cast<double>(g) + 0.5) << "\" y=\""
           << top + plot_h + 18 << "\" text-anchor=\"middle\">" << grid[g] << "</text>\n";
    }
    for (std::size_t b = 0; b < rows.size(); ++b) {
        const double lx = left + 10 + 140 * static_cast<double>(b);
        const double ly = height - 20;
        os << "<rect x=\"" << lx << "\" y=\"" << ly - 10 << "\" width=\"12\" height=\"12\" fill=\""
           << colours[b % 4] << "\"/>\n";
        os << "<text x=\"" << lx + 18 << "\" y=\"" << ly << "\">" << rows[b].arch << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string history_csv(const TrainReport& report) {
    std::ostringstream os;
    os << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
    for (std::size_t i = 0; i < report.history.size(); ++i) {
        const auto& e = report.history[i];
        os << i + 1 << ',' << fmt(e.train_loss, 6) << ',' << fmt(e.train_accuracy, 6) << ','
           << fmt(e.val_loss, 6) << ',' << fmt(e.val_accuracy, 6) << '\n';
    }
    return os.str();
}

}  // namespace erpnet
