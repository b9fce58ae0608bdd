#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffkl/sampler.hpp"
#include "diffkl/schedule.hpp"
#include "diffkl/targets.hpp"

namespace diffkl {

/// Invalid configuration: names the offending key and the line it was read from
/// (0 when the key is absent from the document).
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, int line, const std::string& message);

    const std::string& key() const { return key_; }
    int line() const { return line_; }

private:
    std::string key_;
    int line_;
};

enum class Command { verify_identities, verify_localization, kl_exact, girsanov, sweep };

const char* to_string(Command command);
std::optional<Command> parse_command(const std::string& name);

struct TargetSpec {
    std::string family;  // standard_gaussian | gaussian | point_mass | mixture | atoms
    std::size_t dim = 0;
    std::vector<double> weights;
    std::vector<std::vector<double>> means;
    std::vector<std::vector<std::vector<double>>> covs;
    std::size_t copies = 1;

    Target build() const;
};

struct GridSpec {
    std::string scheme = "two_phase";  // two_phase | uniform
    std::size_t steps = 64;
    double horizon = 5.0;
    double early_stop = 0.01;

    TimeGrid build() const;
};

enum class SweepAxis { dim, steps, early_stop, epsilon };

const char* to_string(SweepAxis axis);

struct SweepSpec {
    SweepAxis axis = SweepAxis::steps;
    std::vector<double> values;
    Command base = Command::kl_exact;
};

enum class SampleDump { none, csv, raw };

struct SuiteSpec {
    std::vector<double> times{0.1, 0.5, 1.0, 2.0};
    std::vector<double> s_points{0.5, 1.0, 4.0};
    std::optional<ExpectationMethod> method;  // empty: chosen from the target
    std::size_t budget = 100000;
    std::size_t quad_points = 8;
    bool continuous_oracle = false;
    double h = 0.0;  // <= 0: default finite-difference step
    double tolerance = 1e-6;
    double z_tolerance = 4.0;
};

struct ExperimentConfig {
    Command command = Command::kl_exact;
    std::uint64_t seed = 0;
    std::size_t n_paths = 10000;
    std::size_t workers = 1;
    TargetSpec target;
    GridSpec grid;
    std::optional<PerturbationSpec> perturbation;
    std::optional<SweepSpec> sweep;
    SuiteSpec suite;
    std::string output_dir = ".";
    SampleDump dump = SampleDump::none;

    /// Normalized document with every default filled in; parses back to an
    /// identical config.
    std::string echo() const;
};

/// Parses the key = value document (TOML subset: tables, strings, numbers,
/// booleans, nested arrays, # comments). `base_dir` resolves target_file.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

}  // namespace diffkl
