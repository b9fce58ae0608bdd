#include "diffkl/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace diffkl {

ConfigError::ConfigError(std::string key, int line, const std::string& message)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + key + ": " + message : key + ": " + message),
      key_(std::move(key)),
      line_(line) {}

namespace {

const std::map<std::string, Command>& command_names() {
    static const std::map<std::string, Command> names{
        {"verify-identities", Command::verify_identities},
        {"verify-localization", Command::verify_localization},
        {"kl-exact", Command::kl_exact},
        {"girsanov", Command::girsanov},
        {"sweep", Command::sweep},
    };
    return names;
}

}  // namespace

const char* to_string(Command command) {
    switch (command) {
        case Command::verify_identities: return "verify-identities";
        case Command::verify_localization: return "verify-localization";
        case Command::kl_exact: return "kl-exact";
        case Command::girsanov: return "girsanov";
        case Command::sweep: return "sweep";
    }
    return "?";
}

std::optional<Command> parse_command(const std::string& name) {
    const auto it = command_names().find(name);
    if (it == command_names().end()) return std::nullopt;
    return it->second;
}

const char* to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::dim: return "d";
        case SweepAxis::steps: return "N";
        case SweepAxis::early_stop: return "delta";
        case SweepAxis::epsilon: return "epsilon";
    }
    return "?";
}

Target TargetSpec::build() const {
    std::vector<GaussianComponent> comps;
    for (std::size_t j = 0; j < means.size(); ++j) {
        const auto d = static_cast<Eigen::Index>(means[j].size());
        Vector mean = Eigen::Map<const Vector>(means[j].data(), d);
        Matrix cov(d, d);
        for (Eigen::Index r = 0; r < d; ++r) {
            for (Eigen::Index c = 0; c < d; ++c) cov(r, c) = covs[j][static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
        comps.emplace_back(std::move(mean), std::move(cov));
    }
    Target target(weights, std::move(comps));
    return copies > 1 ? Target::product(target, copies) : target;
}

TimeGrid GridSpec::build() const {
    if (scheme == "two_phase") return make_two_phase_grid(steps, horizon, early_stop);
    return make_uniform_grid(steps, horizon, early_stop);
}

namespace {

// ---- document model -------------------------------------------------------

struct Value {
    enum class Kind { number, string, boolean, array } kind = Kind::number;
    double number = 0.0;
    bool integer = false;
    std::string text;  // string contents, or the raw numeric token
    bool flag = false;
    std::vector<Value> items;
};

struct Entry {
    Value value;
    int line = 0;
};

struct Table {
    int line = 0;
    std::map<std::string, Entry> entries;
};

using Document = std::map<std::string, Table>;

class ValueParser {
public:
    ValueParser(const std::string& text, const std::string& key, int line) : s_(text), key_(key), line_(line) {}

    Value parse_all() {
        Value v = parse_value();
        skip_space();
        if (pos_ != s_.size()) fail("unexpected trailing characters");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& message) const { throw ConfigError(key_, line_, message); }

    void skip_space() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    Value parse_value() {
        skip_space();
        if (pos_ >= s_.size()) fail("missing value");
        const char c = s_[pos_];
        if (c == '[') return parse_array();
        if (c == '"') return parse_string();
        return parse_scalar();
    }

    Value parse_array() {
        Value v;
        v.kind = Value::Kind::array;
        ++pos_;
        skip_space();
        if (pos_ < s_.size() && s_[pos_] == ']') {
            ++pos_;
            return v;
        }
        while (true) {
            v.items.push_back(parse_value());
            skip_space();
            if (pos_ >= s_.size()) fail("unterminated array");
            if (s_[pos_] == ',') {
                ++pos_;
                skip_space();
                if (pos_ < s_.size() && s_[pos_] == ']') {
                    ++pos_;
                    return v;
                }
                continue;
            }
            if (s_[pos_] == ']') {
                ++pos_;
                return v;
            }
            fail("expected ',' or ']' in array");
        }
    }

    Value parse_string() {
        Value v;
        v.kind = Value::Kind::string;
        ++pos_;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
                const char e = s_[++pos_];
                v.text += e == 'n' ? '\n' : e == 't' ? '\t' : e;
            } else {
                v.text += s_[pos_];
            }
            ++pos_;
        }
        if (pos_ >= s_.size()) fail("unterminated string");
        ++pos_;
        return v;
    }

    Value parse_scalar() {
        const auto start = pos_;
        while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' &&
               !std::isspace(static_cast<unsigned char>(s_[pos_]))) {
            ++pos_;
        }
        std::string token = s_.substr(start, pos_ - start);
        Value v;
        if (token == "true" || token == "false") {
            v.kind = Value::Kind::boolean;
            v.flag = token == "true";
            return v;
        }
        std::string cleaned;
        for (char ch : token) {
            if (ch != '_') cleaned += ch;
        }
        const char* first = cleaned.data();
        const char* last = first + cleaned.size();
        if (!cleaned.empty() && cleaned.front() == '+') ++first;
        const auto [ptr, ec] = std::from_chars(first, last, v.number);
        if (ec != std::errc() || ptr != last || cleaned.empty()) fail("cannot parse value '" + token + "'");
        v.kind = Value::Kind::number;
        v.text = std::string(first, last);
        v.integer = v.text.find_first_of(".eEnN") == std::string::npos;
        return v;
    }

    const std::string& s_;
    std::string key_;
    int line_;
    std::size_t pos_ = 0;
};

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int bracket_balance(const std::string& s) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
        if (in_string) continue;
        if (s[i] == '[') ++depth;
        if (s[i] == ']') --depth;
    }
    return depth;
}

Document parse_document(const std::string& text) {
    Document doc;
    doc[""].line = 1;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) throw ConfigError(line, line_no, "malformed table header");
            section = trim(line.substr(1, line.size() - 2));
            if (doc.count(section) && section != "") throw ConfigError(section, line_no, "duplicate table");
            doc[section].line = line_no;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(line, line_no, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string qualified = section.empty() ? key : section + "." + key;
        if (key.empty()) throw ConfigError(qualified, line_no, "empty key");
        std::string value_text = trim(line.substr(eq + 1));
        const int start_line = line_no;
        while (bracket_balance(value_text) > 0) {
            if (!std::getline(in, raw)) throw ConfigError(qualified, start_line, "unterminated array");
            ++line_no;
            value_text += " " + trim(strip_comment(raw));
        }
        auto& table = doc[section];
        if (table.entries.count(key)) throw ConfigError(qualified, start_line, "duplicate key");
        table.entries[key] = Entry{ValueParser(value_text, qualified, start_line).parse_all(), start_line};
    }
    return doc;
}

// ---- typed access -----------------------------------------------------------

class TableReader {
public:
    TableReader(const Document& doc, std::string name) : name_(std::move(name)) {
        const auto it = doc.find(name_);
        if (it != doc.end()) table_ = &it->second;
    }

    bool present() const { return table_ != nullptr; }
    int line() const { return table_ ? table_->line : 0; }
    std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

    bool has(const std::string& key) const { return table_ && table_->entries.count(key); }

    const Entry* find(const std::string& key) const {
        if (!table_) return nullptr;
        const auto it = table_->entries.find(key);
        return it == table_->entries.end() ? nullptr : &it->second;
    }

    int line_of(const std::string& key) const {
        const Entry* e = find(key);
        return e ? e->line : line();
    }

    [[noreturn]] void fail(const std::string& key, const std::string& message) const {
        throw ConfigError(qualified(key), line_of(key), message);
    }

    void check_known(const std::set<std::string>& known) const {
        if (!table_) return;
        for (const auto& [key, entry] : table_->entries) {
            if (!known.count(key)) throw ConfigError(qualified(key), entry.line, "unknown key");
        }
    }

    const Value& require(const std::string& key) const {
        const Entry* e = find(key);
        if (!e) throw ConfigError(qualified(key), line(), "missing required key");
        return e->value;
    }

    double number(const Value& v, const std::string& key) const {
        if (v.kind != Value::Kind::number) fail(key, "expected a number");
        return v.number;
    }

    double get_number(const std::string& key, double fallback) const {
        const Entry* e = find(key);
        return e ? number(e->value, key) : fallback;
    }

    std::uint64_t get_unsigned(const std::string& key, std::uint64_t fallback) const {
        const Entry* e = find(key);
        return e ? as_unsigned(e->value, key) : fallback;
    }

    std::uint64_t as_unsigned(const Value& v, const std::string& key) const {
        if (v.kind != Value::Kind::number || !v.integer) fail(key, "expected a nonnegative integer");
        std::uint64_t out = 0;
        const auto [ptr, ec] = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
        if (ec != std::errc() || ptr != v.text.data() + v.text.size()) fail(key, "expected a nonnegative integer");
        return out;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const Entry* e = find(key);
        if (!e) return fallback;
        if (e->value.kind != Value::Kind::string) fail(key, "expected a string");
        return e->value.text;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const Entry* e = find(key);
        if (!e) return fallback;
        if (e->value.kind != Value::Kind::boolean) fail(key, "expected true or false");
        return e->value.flag;
    }

    std::vector<double> vector_of(const Value& v, const std::string& key) const {
        if (v.kind != Value::Kind::array) fail(key, "expected an array of numbers");
        std::vector<double> out;
        for (const auto& item : v.items) out.push_back(number(item, key));
        return out;
    }

    std::vector<std::vector<double>> matrix_of(const Value& v, const std::string& key) const {
        if (v.kind != Value::Kind::array) fail(key, "expected an array of arrays");
        std::vector<std::vector<double>> out;
        for (const auto& row : v.items) out.push_back(vector_of(row, key));
        return out;
    }

private:
    std::string name_;
    const Table* table_ = nullptr;
};

std::vector<std::vector<double>> identity_rows(std::size_t d) {
    std::vector<std::vector<double>> out(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) out[i][i] = 1.0;
    return out;
}

std::vector<std::vector<double>> diagonal_rows(const std::vector<double>& diag) {
    std::vector<std::vector<double>> out(diag.size(), std::vector<double>(diag.size(), 0.0));
    for (std::size_t i = 0; i < diag.size(); ++i) out[i][i] = diag[i];
    return out;
}

void check_square(const TableReader& t, const std::string& key, const std::vector<std::vector<double>>& m,
                  std::size_t d) {
    bool ok = m.size() == d;
    for (const auto& row : m) ok = ok && row.size() == d;
    if (!ok) {
        t.fail(key, "dimension mismatch: expected a " + std::to_string(d) + "x" + std::to_string(d) +
                        " matrix to match the mean");
    }
}

TargetSpec read_target(const TableReader& t) {
    if (!t.present()) throw ConfigError("target", 0, "missing [target] table");
    t.check_known({"family", "dim", "mean", "cov", "variances", "location", "weights", "means", "covs", "copies"});
    TargetSpec spec;
    const Value& family_value = t.require("family");
    if (family_value.kind != Value::Kind::string) t.fail("family", "expected a string");
    spec.family = family_value.text;
    if (spec.family == "standard_gaussian") {
        const auto d = t.as_unsigned(t.require("dim"), "dim");
        if (d < 1) t.fail("dim", "must be at least 1");
        spec.weights = {1.0};
        spec.means = {std::vector<double>(d, 0.0)};
        spec.covs = {identity_rows(d)};
    } else if (spec.family == "gaussian") {
        const auto mean = t.vector_of(t.require("mean"), "mean");
        if (mean.empty()) t.fail("mean", "must not be empty");
        std::vector<std::vector<double>> cov;
        if (t.has("cov") && t.has("variances")) t.fail("variances", "give either cov or variances, not both");
        if (t.has("cov")) {
            cov = t.matrix_of(t.require("cov"), "cov");
            check_square(t, "cov", cov, mean.size());
        } else if (t.has("variances")) {
            const auto diag = t.vector_of(t.require("variances"), "variances");
            if (diag.size() != mean.size()) t.fail("variances", "dimension mismatch with mean");
            cov = diagonal_rows(diag);
        } else {
            t.fail("cov", "missing required key (or give variances)");
        }
        spec.weights = {1.0};
        spec.means = {mean};
        spec.covs = {cov};
    } else if (spec.family == "point_mass") {
        const auto location = t.vector_of(t.require("location"), "location");
        if (location.empty()) t.fail("location", "must not be empty");
        spec.weights = {1.0};
        spec.means = {location};
        spec.covs = {diagonal_rows(std::vector<double>(location.size(), 0.0))};
    } else if (spec.family == "mixture" || spec.family == "atoms") {
        spec.weights = t.vector_of(t.require("weights"), "weights");
        spec.means = t.matrix_of(t.require("means"), "means");
        if (spec.means.size() != spec.weights.size()) t.fail("means", "need one mean per weight");
        if (spec.means.empty() || spec.means.front().empty()) t.fail("means", "must not be empty");
        const std::size_t d = spec.means.front().size();
        for (const auto& m : spec.means) {
            if (m.size() != d) t.fail("means", "dimension mismatch between components");
        }
        if (spec.family == "mixture") {
            const Value& covs = t.require("covs");
            if (covs.kind != Value::Kind::array) t.fail("covs", "expected an array of matrices");
            if (covs.items.size() != spec.weights.size()) t.fail("covs", "need one covariance per weight");
            for (const auto& item : covs.items) {
                spec.covs.push_back(t.matrix_of(item, "covs"));
                check_square(t, "covs", spec.covs.back(), d);
            }
        } else {
            if (t.has("covs")) t.fail("covs", "atoms have no covariance");
            spec.covs.assign(spec.weights.size(), diagonal_rows(std::vector<double>(d, 0.0)));
        }
    } else {
        t.fail("family", "unknown family '" + spec.family + "'");
    }
    spec.copies = t.get_unsigned("copies", 1);
    if (spec.copies < 1) t.fail("copies", "must be at least 1");
    spec.dim = spec.means.front().size() * spec.copies;
    try {
        const Target built = spec.build();
        (void)built;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(t.qualified("family"), t.line_of("family"), e.what());
    }
    return spec;
}

GridSpec read_grid(const TableReader& t) {
    t.check_known({"scheme", "steps", "horizon", "early_stop"});
    GridSpec g;
    g.scheme = t.get_string("scheme", g.scheme);
    if (g.scheme != "two_phase" && g.scheme != "uniform") t.fail("scheme", "expected two_phase or uniform");
    g.steps = t.get_unsigned("steps", g.steps);
    g.horizon = t.get_number("horizon", g.horizon);
    g.early_stop = t.get_number("early_stop", g.early_stop);
    try {
        (void)g.build();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(t.qualified("steps"), t.line(), e.what());
    }
    return g;
}

ExpectationMethod parse_method(const TableReader& t, const std::string& name) {
    if (name == "closed_form") return ExpectationMethod::closed_form;
    if (name == "quadrature") return ExpectationMethod::quadrature;
    if (name == "monte_carlo") return ExpectationMethod::monte_carlo;
    t.fail("method", "expected auto, closed_form, quadrature or monte_carlo");
}

std::string format_number(double x) {
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), x);
    std::string s(buffer, result.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string format_vector(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v[i]);
    return s + "]";
}

std::string format_matrix(const std::vector<std::vector<double>>& m) {
    std::string s = "[";
    for (std::size_t i = 0; i < m.size(); ++i) s += (i ? ", " : "") + format_vector(m[i]);
    return s + "]";
}

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
    const Document doc = parse_document(text);
    for (const auto& [name, table] : doc) {
        static const std::set<std::string> known{"", "target", "grid", "perturbation", "sweep", "output", "suite"};
        if (!known.count(name)) throw ConfigError(name, table.line, "unknown table");
    }
    ExperimentConfig cfg;
    const TableReader root(doc, "");
    root.check_known({"command", "seed", "n_paths", "workers", "target_file"});
    if (!root.has("command")) throw ConfigError("command", 0, "missing required key");
    const std::string command = root.get_string("command", "");
    const auto parsed_command = parse_command(command);
    if (!parsed_command) root.fail("command", "unknown command '" + command + "'");
    cfg.command = *parsed_command;
    if (!root.has("seed")) throw ConfigError("seed", 0, "missing required key (no default seed is used)");
    cfg.seed = root.as_unsigned(root.require("seed"), "seed");
    cfg.n_paths = root.get_unsigned("n_paths", cfg.n_paths);
    if (cfg.n_paths < 2) root.fail("n_paths", "must be at least 2");
    cfg.workers = root.get_unsigned("workers", cfg.workers);
    if (cfg.workers < 1) root.fail("workers", "must be at least 1");

    if (root.has("target_file")) {
        if (doc.count("target")) root.fail("target_file", "give either target_file or a [target] table, not both");
        const std::string rel = root.get_string("target_file", "");
        const std::filesystem::path path = std::filesystem::path(base_dir) / rel;
        std::ifstream in(path);
        if (!in) root.fail("target_file", "cannot open '" + path.string() + "'");
        std::stringstream buffer;
        buffer << in.rdbuf();
        const Document target_doc = parse_document(buffer.str());
        cfg.target = read_target(TableReader(target_doc, "target"));
    } else {
        cfg.target = read_target(TableReader(doc, "target"));
    }

    cfg.grid = read_grid(TableReader(doc, "grid"));

    const TableReader pert(doc, "perturbation");
    if (pert.present()) {
        pert.check_known({"mode", "epsilon", "direction_seed"});
        PerturbationSpec p;
        const std::string mode = pert.get_string("mode", "constant_bias");
        if (mode == "constant_bias") {
            p.mode = PerturbationMode::constant_bias;
        } else if (mode == "per_step_bias") {
            p.mode = PerturbationMode::per_step_bias;
        } else {
            pert.fail("mode", "expected constant_bias or per_step_bias");
        }
        p.epsilon = pert.get_number("epsilon", 0.0);
        if (!(p.epsilon >= 0.0) || !std::isfinite(p.epsilon)) pert.fail("epsilon", "must be finite and nonnegative");
        p.direction_seed = Seed{pert.get_unsigned("direction_seed", cfg.seed)};
        cfg.perturbation = p;
    }

    const TableReader sweep(doc, "sweep");
    if (sweep.present()) {
        sweep.check_known({"axis", "values", "base"});
        SweepSpec s;
        const std::string axis = sweep.get_string("axis", "");
        if (axis == "d") {
            s.axis = SweepAxis::dim;
        } else if (axis == "N") {
            s.axis = SweepAxis::steps;
        } else if (axis == "delta") {
            s.axis = SweepAxis::early_stop;
        } else if (axis == "epsilon") {
            s.axis = SweepAxis::epsilon;
        } else {
            sweep.fail("axis", "expected d, N, delta or epsilon");
        }
        s.values = sweep.vector_of(sweep.require("values"), "values");
        if (s.values.empty()) sweep.fail("values", "must not be empty");
        for (double v : s.values) {
            const bool integral = s.axis == SweepAxis::dim || s.axis == SweepAxis::steps;
            if (!(v >= 0.0) || !std::isfinite(v) || (integral && (v < 1.0 || v != std::floor(v)))) {
                sweep.fail("values", "invalid value " + format_number(v) + " for axis " + axis);
            }
        }
        const std::string base = sweep.get_string("base", "kl-exact");
        const auto base_command = parse_command(base);
        if (!base_command || *base_command == Command::sweep) sweep.fail("base", "unknown base command '" + base + "'");
        s.base = *base_command;
        if (s.axis == SweepAxis::dim && cfg.target.means.size() != 1) {
            sweep.fail("axis", "a d sweep needs a single-component target to tensorize");
        }
        cfg.sweep = s;
    }
    if (cfg.command == Command::sweep && !cfg.sweep) throw ConfigError("sweep", 0, "command sweep needs a [sweep] table");

    const TableReader suite(doc, "suite");
    suite.check_known(
        {"times", "s_points", "method", "budget", "quad_points", "timing", "h", "tolerance", "z_tolerance"});
    if (suite.has("times")) cfg.suite.times = suite.vector_of(suite.require("times"), "times");
    for (double t : cfg.suite.times) {
        if (!(t > 0.0)) suite.fail("times", "must be positive");
    }
    if (suite.has("s_points")) cfg.suite.s_points = suite.vector_of(suite.require("s_points"), "s_points");
    for (double s : cfg.suite.s_points) {
        if (!(s >= 0.0)) suite.fail("s_points", "must be nonnegative");
    }
    const std::string method = suite.get_string("method", "auto");
    if (method != "auto") cfg.suite.method = parse_method(suite, method);
    cfg.suite.budget = suite.get_unsigned("budget", cfg.suite.budget);
    if (cfg.suite.budget < 2) suite.fail("budget", "must be at least 2");
    cfg.suite.quad_points = suite.get_unsigned("quad_points", cfg.suite.quad_points);
    if (cfg.suite.quad_points < 1) suite.fail("quad_points", "must be at least 1");
    const std::string timing = suite.get_string("timing", "frozen");
    if (timing != "frozen" && timing != "continuous") suite.fail("timing", "expected frozen or continuous");
    cfg.suite.continuous_oracle = timing == "continuous";
    cfg.suite.h = suite.get_number("h", cfg.suite.h);
    cfg.suite.tolerance = suite.get_number("tolerance", cfg.suite.tolerance);
    cfg.suite.z_tolerance = suite.get_number("z_tolerance", cfg.suite.z_tolerance);
    if (!(cfg.suite.tolerance >= 0.0)) suite.fail("tolerance", "must be nonnegative");
    if (!(cfg.suite.z_tolerance > 0.0)) suite.fail("z_tolerance", "must be positive");

    const TableReader output(doc, "output");
    output.check_known({"dir", "dump_samples"});
    cfg.output_dir = output.get_string("dir", cfg.output_dir);
    const std::string dump = output.get_string("dump_samples", "none");
    if (dump == "none") {
        cfg.dump = SampleDump::none;
    } else if (dump == "csv") {
        cfg.dump = SampleDump::csv;
    } else if (dump == "raw") {
        cfg.dump = SampleDump::raw;
    } else {
        output.fail("dump_samples", "expected none, csv or raw");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", 0, "cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), std::filesystem::path(path).parent_path().string().empty()
                                          ? "."
                                          : std::filesystem::path(path).parent_path().string());
}

std::string ExperimentConfig::echo() const {
    std::ostringstream os;
    os << "command = " << quoted(to_string(command)) << '\n';
    os << "seed = " << seed << '\n';
    os << "n_paths = " << n_paths << '\n';
    os << "workers = " << workers << '\n';

    os << "\n[target]\nfamily = " << quoted(target.family) << '\n';
    if (target.family == "standard_gaussian") {
        os << "dim = " << target.means.front().size() << '\n';
    } else if (target.family == "gaussian") {
        os << "mean = " << format_vector(target.means.front()) << '\n';
        os << "cov = " << format_matrix(target.covs.front()) << '\n';
    } else if (target.family == "point_mass") {
        os << "location = " << format_vector(target.means.front()) << '\n';
    } else {
        os << "weights = " << format_vector(target.weights) << '\n';
        os << "means = " << format_matrix(target.means) << '\n';
        if (target.family == "mixture") {
            os << "covs = [";
            for (std::size_t j = 0; j < target.covs.size(); ++j) os << (j ? ", " : "") << format_matrix(target.covs[j]);
            os << "]\n";
        }
    }
    os << "copies = " << target.copies << '\n';

    os << "\n[grid]\nscheme = " << quoted(grid.scheme) << "\nsteps = " << grid.steps
       << "\nhorizon = " << format_number(grid.horizon) << "\nearly_stop = " << format_number(grid.early_stop)
       << '\n';

    if (perturbation) {
        os << "\n[perturbation]\nmode = " << quoted(to_string(perturbation->mode))
           << "\nepsilon = " << format_number(perturbation->epsilon)
           << "\ndirection_seed = " << perturbation->direction_seed.value << '\n';
    }
    if (sweep) {
        os << "\n[sweep]\naxis = " << quoted(to_string(sweep->axis)) << "\nvalues = " << format_vector(sweep->values)
           << "\nbase = " << quoted(to_string(sweep->base)) << '\n';
    }
    os << "\n[suite]\ntimes = " << format_vector(suite.times) << "\ns_points = " << format_vector(suite.s_points)
       << "\nmethod = " << quoted(suite.method ? to_string(*suite.method) : "auto") << "\nbudget = " << suite.budget
       << "\nquad_points = " << suite.quad_points
       << "\ntiming = " << quoted(suite.continuous_oracle ? "continuous" : "frozen")
       << "\nh = " << format_number(suite.h) << "\ntolerance = " << format_number(suite.tolerance)
       << "\nz_tolerance = " << format_number(suite.z_tolerance) << '\n';

    os << "\n[output]\ndir = " << quoted(output_dir) << "\ndump_samples = "
       << quoted(dump == SampleDump::none ? "none" : dump == SampleDump::csv ? "csv" : "raw") << '\n';
    return os.str();
}

}  // namespace diffkl
