#include "diffkl/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace diffkl {

Estimate mean_estimate(const std::vector<double>& values) {
    const double n = static_cast<double>(values.size());
    if (values.empty()) return {};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double var = values.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

ReportRow make_row(double time, std::string quantity, double lhs, double rhs, double std_err, double term_scale) {
    ReportRow row;
    row.time = time;
    row.quantity = std::move(quantity);
    row.lhs = lhs;
    row.rhs = rhs;
    row.std_err = std_err;
    const double diff = lhs - rhs;
    const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs), std::abs(term_scale)});
    if (std::abs(diff) <= kRoundingTolerance * scale) {
        row.z_score = 0.0;
    } else if (std_err > 0.0) {
        row.z_score = diff / std_err;
    } else {
        row.z_score = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    }
    return row;
}

void write_report_csv(std::ostream& out, const std::string& time_label, const std::vector<ReportRow>& rows) {
    const auto old_precision = out.precision(17);
    out << time_label << ",quantity,lhs,rhs,std_err,z_score\n";
    for (const auto& r : rows) {
        out << r.time << ',' << r.quantity << ',';
        if (r.skipped) {
            out << "skipped,skipped,,\n";
            continue;
        }
        out << r.lhs << ',' << r.rhs << ',' << r.std_err << ',' << r.z_score << '\n';
    }
    out.precision(old_precision);
}

}  // namespace diffkl
