#pragma once

// Experiment configuration files (TOML-like sections) and result emission as
// CSV or JSON. JSON output echoes the config so a run can be replayed.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiepm/sim.hpp"

namespace hiepm {

/// Invalid configuration. Line 0 means the problem is not tied to one line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, const std::string& msg)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Settings used only by the bounds and audit subcommands.
struct AnalysisConfig {
    double n = 28.0;          // budget for the fixed-length error bound
    double epsilon = 1e-2;    // target error in the stopping-time bound
    int audit_sessions = 200;  // per SNR point
};

struct RunConfig {
    ExperimentConfig experiment;
    AnalysisConfig analysis;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

struct Value {
    std::string text;
    int line = 0;
    std::string key;

    [[noreturn]] void fail(const std::string& why) const {
        throw ConfigError(line, "key '" + key + "': " + why);
    }

    std::string str() const {
        if (text.size() >= 2 && text.front() == '"' && text.back() == '"') return text.substr(1, text.size() - 2);
        return text;
    }

    double num() const {
        const auto s = str();
        double v = 0.0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) fail("expected a number, got '" + s + "'");
        return v;
    }

    long long integer() const {
        const auto s = str();
        long long v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) fail("expected an integer, got '" + s + "'");
        return v;
    }

    std::uint64_t u64() const {
        const auto s = str();
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) fail("expected an unsigned integer, got '" + s + "'");
        return v;
    }

    int integer_in(long long lo, long long hi) const {
        const auto v = integer();
        if (v < lo || v > hi) fail("must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return static_cast<int>(v);
    }

    /// "[a, b, c]" or "start:stop:step" (inclusive).
    std::vector<double> num_list() const {
        std::vector<double> out;
        const auto s = str();
        if (!s.empty() && s.front() == '[') {
            if (s.back() != ']') fail("unterminated list");
            std::stringstream ss(s.substr(1, s.size() - 2));
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = trim(item);
                if (item.empty()) continue;
                out.push_back(Value{item, line, key}.num());
            }
            return out;
        }
        if (s.find(':') != std::string::npos) {
            std::vector<double> parts;
            std::stringstream ss(s);
            std::string item;
            while (std::getline(ss, item, ':')) parts.push_back(Value{trim(item), line, key}.num());
            if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) fail("range must be start:stop:step with step > 0");
            const int count = static_cast<int>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1;
            for (int i = 0; i < count; ++i) out.push_back(parts[0] + i * parts[2]);
            return out;
        }
        out.push_back(num());
        return out;
    }
};

using Section = std::map<std::string, Value>;

inline PolicySpec parse_policy(const Section& sec, int header_line) {
    PolicySpec p;
    bool have_kind = false;
    std::optional<double> n_explicit;
    for (const auto& [key, v] : sec) {
        if (key == "kind") {
            const auto s = v.str();
            if (s == "hiepm") p.kind = PolicyKind::hiepm;
            else if (s == "bisection") p.kind = PolicyKind::bisection;
            else if (s == "random_scan") p.kind = PolicyKind::random_scan;
            else v.fail("expected hiepm, bisection or random_scan");
            have_kind = true;
        } else if (key == "name") {
            p.name = v.str();
        } else if (key == "measurement") {
            const auto s = v.str();
            if (s == "full") p.model = MeasurementModel::full;
            else if (s == "onebit") p.model = MeasurementModel::onebit;
            else v.fail("expected full or onebit");
        } else if (key == "stopping") {
            const auto s = v.str();
            if (s == "fixed") p.stop.kind = StoppingRule::Kind::fixed_length;
            else if (s == "variable") p.stop.kind = StoppingRule::Kind::variable_length;
            else v.fail("expected fixed or variable");
        } else if (key == "n") {
            p.stop.n = v.integer_in(1, 100000000);
            n_explicit = p.stop.n;
        } else if (key == "epsilon") {
            p.stop.epsilon = v.num();
            if (!(p.stop.epsilon > 0.0 && p.stop.epsilon < 1.0)) v.fail("must lie in (0,1)");
        } else if (key == "log_epsilon") {
            p.stop.log_epsilon = v.num();
            if (!(*p.stop.log_epsilon < 0.0)) v.fail("must be < 0");
        } else if (key == "resolution") {
            const auto s = v.str();
            if (s == "fixed") p.resolution.kind = ResolutionRule::Kind::fixed;
            else if (s == "variable") p.resolution.kind = ResolutionRule::Kind::variable;
            else v.fail("expected fixed or variable");
        } else if (key == "resolution_epsilon") {
            p.resolution.epsilon = v.num();
            if (!(p.resolution.epsilon > 0.0 && p.resolution.epsilon < 1.0)) v.fail("must lie in (0,1)");
        } else if (key == "tau_max") {
            p.tau_max = v.integer_in(1, 100000000);
        } else if (key == "calibrate_tau") {
            p.calibrate_tau = v.num();
            if (!(*p.calibrate_tau > 0.0)) v.fail("must be > 0");
        } else if (key == "reps_per_level") {
            p.reps_per_level = v.integer_in(1, 1000000);
        } else if (key == "scan_n") {
            p.scan.n = v.integer_in(1, 1 << 24);
        } else if (key == "scan_q") {
            p.scan.q = v.integer_in(1, 1 << 24);
        } else if (key == "forced_crossover") {
            p.forced_crossover = v.num();
            if (!(*p.forced_crossover >= 0.0 && *p.forced_crossover <= 0.5)) v.fail("must lie in [0, 0.5]");
        } else {
            throw ConfigError(v.line, "unknown key '" + key + "' in [[policy]]");
        }
    }
    if (!have_kind) throw ConfigError(header_line, "[[policy]] requires 'kind'");
    if (p.scan.q > p.scan.n) {
        const auto& v = sec.count("scan_q") ? sec.at("scan_q") : sec.at("scan_n");
        v.fail("scan_q must not exceed scan_n");
    }
    if (p.calibrate_tau && p.stop.kind != StoppingRule::Kind::variable_length)
        sec.at("calibrate_tau").fail("requires stopping = variable");
    (void)n_explicit;
    return p;
}

}  // namespace detail

/// Parses the config text. Unknown sections or keys and out-of-range values are
/// reported with their line number.
inline RunConfig parse_config(std::istream& in) {
    using detail::Section;
    using detail::Value;
    RunConfig rc;
    auto& cfg = rc.experiment;
    cfg.policies.clear();

    std::map<std::string, Section> sections;
    std::map<std::string, int> section_lines;
    std::vector<std::pair<int, Section>> policies;
    std::string current;
    Section* target = nullptr;
    const std::set<std::string> known{"array", "grid", "codebook", "channel", "sweep", "analysis"};

    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto s = detail::trim(detail::strip_comment(raw));
        if (s.empty()) continue;
        if (s == "[[policy]]") {
            policies.emplace_back(line, Section{});
            target = &policies.back().second;
            current = "policy";
            continue;
        }
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(line, "malformed section header");
            current = detail::trim(s.substr(1, s.size() - 2));
            if (!known.count(current)) throw ConfigError(line, "unknown section [" + current + "]");
            if (section_lines.count(current)) throw ConfigError(line, "duplicate section [" + current + "]");
            section_lines[current] = line;
            target = &sections[current];
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
        if (target == nullptr) throw ConfigError(line, "key outside of any section");
        const auto key = detail::trim(s.substr(0, eq));
        const auto val = detail::trim(s.substr(eq + 1));
        if (key.empty() || val.empty()) throw ConfigError(line, "expected 'key = value'");
        if (target->count(key)) throw ConfigError(line, "duplicate key '" + key + "'");
        (*target)[key] = Value{val, line, key};
    }

    auto unknown = [](const std::string& sec, const std::pair<const std::string, Value>& kv) {
        throw ConfigError(kv.second.line, "unknown key '" + kv.first + "' in [" + sec + "]");
    };

    for (const auto& kv : sections["array"]) {
        const auto& v = kv.second;
        if (kv.first == "antennas") cfg.geometry.num_antennas = v.integer_in(1, 1 << 16);
        else if (kv.first == "spacing") {
            cfg.geometry.spacing_over_wavelength = v.num();
            if (!(cfg.geometry.spacing_over_wavelength > 0.0)) v.fail("must be > 0");
        } else unknown("array", kv);
    }
    const Value* lo_v = nullptr;
    for (const auto& kv : sections["grid"]) {
        const auto& v = kv.second;
        if (kv.first == "theta_lo_deg") {
            cfg.theta_lo_deg = v.num();
            lo_v = &v;
        } else if (kv.first == "theta_hi_deg") cfg.theta_hi_deg = v.num();
        else if (kv.first == "resolution") {
            cfg.resolution = v.integer_in(2, 1 << 20);
            if (!is_power_of_two(cfg.resolution)) v.fail("resolution must be a power of two");
        } else unknown("grid", kv);
    }
    if (!(cfg.theta_lo_deg < cfg.theta_hi_deg))
        throw ConfigError(lo_v ? lo_v->line : section_lines["grid"], "theta_lo_deg must be < theta_hi_deg");
    if (cfg.theta_lo_deg < -90.0 || cfg.theta_hi_deg > 90.0)
        throw ConfigError(section_lines["grid"], "sector must lie within [-90, 90] degrees");
    for (const auto& kv : sections["codebook"]) {
        const auto& v = kv.second;
        if (kv.first == "mode") {
            const auto s = v.str();
            if (s == "ideal") cfg.mode = BeamMode::ideal;
            else if (s == "practical") cfg.mode = BeamMode::practical;
            else v.fail("expected ideal or practical");
        } else if (kv.first == "oversample") cfg.oversample = v.integer_in(1, 64);
        else if (kv.first == "regularization") {
            cfg.regularization = v.num();
            if (cfg.regularization < 0.0) v.fail("must be >= 0");
        } else unknown("codebook", kv);
    }
    for (const auto& kv : sections["channel"]) {
        const auto& v = kv.second;
        if (kv.first == "fading") {
            const auto s = v.str();
            if (s == "known") cfg.fading = FadingMode::known;
            else if (s == "mismatched") cfg.fading = FadingMode::mismatched;
            else v.fail("expected known or mismatched");
        } else if (kv.first == "sigma_alpha2") {
            cfg.sigma_alpha2 = v.num();
            if (cfg.sigma_alpha2 < 0.0) v.fail("must be >= 0");
        } else unknown("channel", kv);
    }
    for (const auto& kv : sections["sweep"]) {
        const auto& v = kv.second;
        if (kv.first == "snr_db") {
            cfg.snr_db = v.num_list();
            if (cfg.snr_db.empty()) v.fail("SNR grid must be nonempty");
        } else if (kv.first == "trials") cfg.trials = v.integer_in(1, 100000000);
        else if (kv.first == "seed") cfg.seed = v.u64();
        else if (kv.first == "threads") cfg.threads = v.integer_in(1, 1024);
        else if (kv.first == "frame_length") {
            cfg.frame_length = v.num();
            if (!(cfg.frame_length > 0.0)) v.fail("must be > 0");
        } else if (kv.first == "calibration_trials") cfg.calibration.trials = v.integer_in(1, 10000000);
        else if (kv.first == "calibration_tolerance") {
            cfg.calibration.tolerance = v.num();
            if (!(cfg.calibration.tolerance > 0.0)) v.fail("must be > 0");
        } else unknown("sweep", kv);
    }
    for (const auto& kv : sections["analysis"]) {
        const auto& v = kv.second;
        if (kv.first == "n") {
            rc.analysis.n = v.num();
            if (!(rc.analysis.n > 0.0)) v.fail("must be > 0");
        } else if (kv.first == "epsilon") {
            rc.analysis.epsilon = v.num();
            if (!(rc.analysis.epsilon > 0.0 && rc.analysis.epsilon < 1.0)) v.fail("must lie in (0,1)");
        } else if (kv.first == "audit_sessions") rc.analysis.audit_sessions = v.integer_in(1, 10000000);
        else unknown("analysis", kv);
    }
    for (const auto& [pline, sec] : policies) {
        auto p = detail::parse_policy(sec, pline);
        if (p.kind == PolicyKind::random_scan && cfg.resolution % p.scan.n != 0)
            throw ConfigError(sec.count("scan_n") ? sec.at("scan_n").line : pline,
                              "scan_n must divide the grid resolution");
        cfg.policies.push_back(std::move(p));
    }
    if (cfg.policies.empty()) throw ConfigError(0, "config defines no [[policy]] section");
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(0, e.what());
    }
    return rc;
}

inline RunConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "cannot open config file '" + path + "'");
    return parse_config(in);
}

// ---- JSON ---------------------------------------------------------------

using nlohmann::json;

inline json to_json(const PolicySpec& p) {
    json j;
    j["name"] = p.name;
    j["kind"] = p.kind == PolicyKind::hiepm ? "hiepm" : p.kind == PolicyKind::bisection ? "bisection" : "random_scan";
    j["measurement"] = to_string(p.model);
    j["stopping"] = p.stop.kind == StoppingRule::Kind::fixed_length ? "fixed" : "variable";
    j["n"] = p.stop.n;
    j["epsilon"] = p.stop.epsilon;
    j["log_epsilon"] = p.stop.log_epsilon ? json(*p.stop.log_epsilon) : json(nullptr);
    j["resolution"] = p.resolution.kind == ResolutionRule::Kind::fixed ? "fixed" : "variable";
    j["resolution_epsilon"] = p.resolution.epsilon;
    j["tau_max"] = p.tau_max;
    j["reps_per_level"] = p.reps_per_level;
    j["scan_n"] = p.scan.n;
    j["scan_q"] = p.scan.q;
    j["forced_crossover"] = p.forced_crossover ? json(*p.forced_crossover) : json(nullptr);
    j["calibrate_tau"] = p.calibrate_tau ? json(*p.calibrate_tau) : json(nullptr);
    return j;
}

inline PolicySpec policy_from_json(const json& j) {
    PolicySpec p;
    p.name = j.at("name").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    p.kind = kind == "hiepm" ? PolicyKind::hiepm : kind == "bisection" ? PolicyKind::bisection : PolicyKind::random_scan;
    p.model = j.at("measurement").get<std::string>() == "full" ? MeasurementModel::full : MeasurementModel::onebit;
    p.stop.kind = j.at("stopping").get<std::string>() == "fixed" ? StoppingRule::Kind::fixed_length
                                                                 : StoppingRule::Kind::variable_length;
    p.stop.n = j.at("n").get<int>();
    p.stop.epsilon = j.at("epsilon").get<double>();
    if (!j.at("log_epsilon").is_null()) p.stop.log_epsilon = j.at("log_epsilon").get<double>();
    p.resolution.kind = j.at("resolution").get<std::string>() == "fixed" ? ResolutionRule::Kind::fixed
                                                                         : ResolutionRule::Kind::variable;
    p.resolution.epsilon = j.at("resolution_epsilon").get<double>();
    p.tau_max = j.at("tau_max").get<int>();
    p.reps_per_level = j.at("reps_per_level").get<int>();
    p.scan.n = j.at("scan_n").get<int>();
    p.scan.q = j.at("scan_q").get<int>();
    if (!j.at("forced_crossover").is_null()) p.forced_crossover = j.at("forced_crossover").get<double>();
    if (!j.at("calibrate_tau").is_null()) p.calibrate_tau = j.at("calibrate_tau").get<double>();
    return p;
}

inline json to_json(const RunConfig& rc) {
    const auto& c = rc.experiment;
    json j;
    j["array"] = {{"antennas", c.geometry.num_antennas}, {"spacing", c.geometry.spacing_over_wavelength}};
    j["grid"] = {{"theta_lo_deg", c.theta_lo_deg}, {"theta_hi_deg", c.theta_hi_deg}, {"resolution", c.resolution}};
    j["codebook"] = {{"mode", to_string(c.mode)}, {"oversample", c.oversample}, {"regularization", c.regularization}};
    j["channel"] = {{"fading", to_string(c.fading)}, {"sigma_alpha2", c.sigma_alpha2}};
    j["sweep"] = {{"snr_db", c.snr_db},
                  {"trials", c.trials},
                  {"seed", c.seed},
                  {"threads", c.threads},
                  {"frame_length", c.frame_length},
                  {"calibration_trials", c.calibration.trials},
                  {"calibration_tolerance", c.calibration.tolerance}};
    j["analysis"] = {{"n", rc.analysis.n}, {"epsilon", rc.analysis.epsilon}, {"audit_sessions", rc.analysis.audit_sessions}};
    j["policies"] = json::array();
    for (const auto& p : c.policies) j["policies"].push_back(to_json(p));
    return j;
}

inline RunConfig config_from_json(const json& j) {
    RunConfig rc;
    auto& c = rc.experiment;
    c.geometry.num_antennas = j.at("array").at("antennas").get<int>();
    c.geometry.spacing_over_wavelength = j.at("array").at("spacing").get<double>();
    c.theta_lo_deg = j.at("grid").at("theta_lo_deg").get<double>();
    c.theta_hi_deg = j.at("grid").at("theta_hi_deg").get<double>();
    c.resolution = j.at("grid").at("resolution").get<int>();
    c.mode = j.at("codebook").at("mode").get<std::string>() == "ideal" ? BeamMode::ideal : BeamMode::practical;
    c.oversample = j.at("codebook").at("oversample").get<int>();
    c.regularization = j.at("codebook").at("regularization").get<double>();
    c.fading = j.at("channel").at("fading").get<std::string>() == "known" ? FadingMode::known : FadingMode::mismatched;
    c.sigma_alpha2 = j.at("channel").at("sigma_alpha2").get<double>();
    const auto& s = j.at("sweep");
    c.snr_db = s.at("snr_db").get<std::vector<double>>();
    c.trials = s.at("trials").get<int>();
    c.seed = s.at("seed").get<std::uint64_t>();
    c.threads = s.at("threads").get<int>();
    c.frame_length = s.at("frame_length").get<double>();
    c.calibration.trials = s.at("calibration_trials").get<int>();
    c.calibration.tolerance = s.at("calibration_tolerance").get<double>();
    rc.analysis.n = j.at("analysis").at("n").get<double>();
    rc.analysis.epsilon = j.at("analysis").at("epsilon").get<double>();
    rc.analysis.audit_sessions = j.at("analysis").at("audit_sessions").get<int>();
    c.policies.clear();
    for (const auto& p : j.at("policies")) c.policies.push_back(policy_from_json(p));
    return rc;
}

inline bool same_config(const RunConfig& a, const RunConfig& b) { return to_json(a) == to_json(b); }

/// FNV-1a over the canonical JSON dump of the config.
inline std::uint64_t config_hash(const RunConfig& rc) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json(rc).dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

inline json to_json(const MetricRow& r) {
    return json{{"policy", r.policy},       {"snr_db", r.snr_db},       {"trials", r.trials},
                {"errors", r.errors},       {"err", r.err},             {"err_ci_lo", r.err_ci_lo},
                {"err_ci_hi", r.err_ci_hi}, {"mean_tau", r.mean_tau},   {"mean_rate", r.mean_rate},
                {"capped", r.capped},
                {"log_epsilon", r.log_epsilon ? json(*r.log_epsilon) : json(nullptr)}};
}

inline MetricRow row_from_json(const json& j) {
    MetricRow r;
    r.policy = j.at("policy").get<std::string>();
    r.snr_db = j.at("snr_db").get<double>();
    r.trials = j.at("trials").get<int>();
    r.errors = j.at("errors").get<int>();
    r.err = j.at("err").get<double>();
    r.err_ci_lo = j.at("err_ci_lo").get<double>();
    r.err_ci_hi = j.at("err_ci_hi").get<double>();
    r.mean_tau = j.at("mean_tau").get<double>();
    r.mean_rate = j.at("mean_rate").get<double>();
    r.capped = j.at("capped").get<int>();
    if (!j.at("log_epsilon").is_null()) r.log_epsilon = j.at("log_epsilon").get<double>();
    return r;
}

inline json results_json(const RunConfig& rc, const std::vector<MetricRow>& rows) {
    json j;
    j["seed"] = rc.experiment.seed;
    j["config_hash"] = hex64(config_hash(rc));
    j["config"] = to_json(rc);
    j["rows"] = json::array();
    for (const auto& r : rows) j["rows"].push_back(to_json(r));
    return j;
}

inline std::vector<MetricRow> rows_from_json(const json& j) {
    std::vector<MetricRow> rows;
    for (const auto& r : j.at("rows")) rows.push_back(row_from_json(r));
    return rows;
}

// ---- CSV ----------------------------------------------------------------

inline std::string fmt_num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
    os << "policy,snr_db,trials,err,err_ci_lo,err_ci_hi,mean_tau,mean_rate\n";
    for (const auto& r : rows)
        os << r.policy << ',' << fmt_num(r.snr_db) << ',' << r.trials << ',' << fmt_num(r.err) << ','
           << fmt_num(r.err_ci_lo) << ',' << fmt_num(r.err_ci_hi) << ',' << fmt_num(r.mean_tau) << ','
           << fmt_num(r.mean_rate) << '\n';
}

}  // namespace hiepm
