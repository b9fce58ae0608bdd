#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffkl/config.hpp"

namespace diffkl {

inline constexpr const char* kVersionTag = "diffkl 0.1.0";

// A module error raised while a suite was running, prefixed with the command and config table.
class RunError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One long-format result. axis is empty outside sweeps; NaN bound/ratio are
/// written as empty cells.
struct ResultRow {
    std::string axis;
    double axis_value = 0.0;
    std::string quantity;
    double value = 0.0;
    double std_err = 0.0;
    double bound = 0.0;
    double ratio = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    std::string grid_hash;
    bool passed = true;
};

struct RunRecord {
    std::string config_echo;
    std::string version = kVersionTag;
    double wall_seconds = 0.0;
    std::string grid_hash;
    std::vector<ResultRow> results;
    std::map<std::string, std::string> artifacts;  // file name -> contents
    bool passed = true;
};

/// Runs the configured command and collects results and report files in
/// memory; nothing is written to disk.
RunRecord execute(const ExperimentConfig& config);

/// execute() followed by an all-or-nothing write of results.csv,
/// run_record.json and every report into config.output_dir.
RunRecord run_experiment(const ExperimentConfig& config);

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
void write_run_record_json(std::ostream& out, const RunRecord& record);

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace diffkl
