#pragma once

#include <cmath>
#include <iosfwd>
#include <string>
#include <vector>

namespace diffkl {

/// Monte-Carlo (or deterministic, std_err == 0) estimate of a scalar.
struct Estimate {
    double value = 0.0;
    double std_err = 0.0;
};

// Mean and standard error of the mean of a sample.
Estimate mean_estimate(const std::vector<double>& values);

/// One (lhs, rhs) comparison emitted by a verification suite.
struct ReportRow {
    double time = 0.0;  // s or t, depending on the suite
    std::string quantity;
    double lhs = 0.0;
    double rhs = 0.0;
    double std_err = 0.0;
    double z_score = 0.0;
    bool skipped = false;

    double abs_diff() const { return std::abs(lhs - rhs); }
};

// Differences below this, relative to max(1, |lhs|, |rhs|, term_scale), are rounding and get z = 0.
// term_scale is the size of the largest term summed to form either side.
inline constexpr double kRoundingTolerance = 1e-13;

ReportRow make_row(double time, std::string quantity, double lhs, double rhs, double std_err,
                   double term_scale = 0.0);

// Writes the long-format CSV (time_label, quantity, lhs, rhs, std_err, z_score).
void write_report_csv(std::ostream& out, const std::string& time_label, const std::vector<ReportRow>& rows);

}  // namespace diffkl
