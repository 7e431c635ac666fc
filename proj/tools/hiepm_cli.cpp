// hiepm: command-line front end for sweeps, single-session records, bounds,
// codebook inspection and the EJS audit.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid invocation or config.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include "hiepm/hiepm.hpp"

namespace {

using namespace hiepm;

struct Options {
    std::string config;
    std::string out;
    std::string format = "csv";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

RunConfig load(const Options& o) {
    auto rc = load_config(o.config);
    if (o.seed) rc.experiment.seed = *o.seed;
    if (o.threads) rc.experiment.threads = *o.threads;
    return rc;
}

// Writes to --out when given, else stdout.
void emit(const Options& o, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(o.out);
    if (!f) throw std::runtime_error("cannot write output file '" + o.out + "'");
    f << text;
    if (!f) throw std::runtime_error("write to '" + o.out + "' failed");
}

std::string cmd_sweep(const Options& o) {
    const auto rc = load(o);
    const auto rows = run_sweep(rc.experiment);
    std::ostringstream os;
    if (o.format == "json")
        os << results_json(rc, rows).dump(2) << '\n';
    else
        write_metrics_csv(os, rows);
    return os.str();
}

// One record per session, drawn from the same streams as the sweep.
std::string cmd_simulate(const Options& o) {
    const auto rc = load(o);
    const auto& cfg = rc.experiment;
    const SimContext ctx(cfg);
    const auto& cb = ctx.codebook();
    json records = json::array();
    std::ostringstream os;
    const bool csv = o.format != "json";
    if (csv) os << "policy,snr_db,trial,aoa_index,tau,final_level,final_index,phi_hat_deg,error,rate\n";
    for (std::size_t pi = 0; pi < cfg.policies.size(); ++pi) {
        for (std::size_t k = 0; k < cfg.snr_db.size(); ++k) {
            const auto spec = resolve_policy(cfg, ctx, pi, k);
            const auto kind = spec.kind == PolicyKind::hiepm ? spec.resolution.kind : ResolutionRule::Kind::fixed;
            for (int t = 0; t < cfg.trials; ++t) {
                const auto d = draw_trial(cfg, detail::kEvalStream, k, static_cast<std::uint64_t>(t), cfg.snr_db[k]);
                CounterRng rng(derive_key(cfg.seed ^ detail::kEvalStream ^ splitmix64(pi + 1), k,
                                          static_cast<std::uint64_t>(t)));
                const auto tr = run_session(spec, cb, ctx.scanner(pi), d.channel, d.alpha_hat, rng);
                const bool err = tr.capped || trial_error(tr, cb, d.channel.aoa_index, kind);
                const double rate = transmission_rate(tr, cb, d.channel, cfg.frame_length);
                const double phi_deg = tr.phi_hat * 180.0 / std::numbers::pi;
                if (csv) {
                    os << spec.label() << ',' << fmt_num(cfg.snr_db[k]) << ',' << t << ',' << d.channel.aoa_index
                       << ',' << tr.tau << ',' << tr.final_beam.level << ',' << tr.final_beam.index << ','
                       << fmt_num(phi_deg) << ',' << (err ? 1 : 0) << ',' << fmt_num(rate) << '\n';
                } else {
                    records.push_back({{"policy", spec.label()},
                                       {"snr_db", cfg.snr_db[k]},
                                       {"trial", t},
                                       {"aoa_index", d.channel.aoa_index},
                                       {"tau", tr.tau},
                                       {"final_level", tr.final_beam.level},
                                       {"final_index", tr.final_beam.index},
                                       {"phi_hat_deg", phi_deg},
                                       {"error", err},
                                       {"rate", rate}});
                }
            }
        }
    }
    if (!csv) {
        json j{{"seed", cfg.seed}, {"config_hash", hex64(config_hash(rc))}, {"config", to_json(rc)}, {"sessions", records}};
        os << j.dump(2) << '\n';
    }
    return os.str();
}

std::string cmd_bounds(const Options& o) {
    const auto rc = load(o);
    const auto& cfg = rc.experiment;
    const auto grid = cfg.grid();
    const SimContext ctx(cfg);
    const double delta = 1.0 / cfg.resolution;
    const int S = grid.levels();
    std::ostringstream os;
    json rows = json::array();
    const bool csv = o.format != "json";
    if (csv) {
        os << "snr_db";
        for (int l = 1; l <= S; ++l) os << ",p_" << l;
        os << ",R_h,E_h,tau_bound,err_bound,random_coding_bound\n";
    }
    for (double snr : cfg.snr_db) {
        const double P = snr_to_power(snr);
        const auto prof = level_profile(ctx.codebook(), P, 1.0);
        const auto r = stopping_time_bound(delta, rc.analysis.epsilon, prof);
        const double err = fixed_length_error_bound(rc.analysis.n, delta, prof);
        const double rcb = random_coding_bound(static_cast<int>(std::lround(rc.analysis.n)), cfg.resolution,
                                               [&](double q) {
                                                   const double G = ideal_gain2(grid.width() * q);
                                                   return optimal_threshold(G, 0.0, P, 1.0).crossover;
                                               });
        if (csv) {
            os << fmt_num(snr);
            for (double p : prof.p) os << ',' << fmt_num(p);
            os << ',' << fmt_num(r.R_h) << ',' << fmt_num(r.E_h) << ',' << fmt_num(r.tau_bound) << ','
               << fmt_num(err) << ',' << fmt_num(rcb) << '\n';
        } else {
            rows.push_back({{"snr_db", snr},
                            {"p", prof.p},
                            {"R_h", r.R_h},
                            {"E_h", r.E_h},
                            {"l_prime", r.l_prime},
                            {"K0", r.K0},
                            {"tau_bound", r.degenerate ? json(nullptr) : json(r.tau_bound)},
                            {"err_bound", err},
                            {"random_coding_bound", rcb}});
        }
    }
    if (!csv) {
        json j{{"seed", cfg.seed}, {"config_hash", hex64(config_hash(rc))}, {"config", to_json(rc)}, {"rows", rows}};
        os << j.dump(2) << '\n';
    }
    return os.str();
}

std::string cmd_codebook(const Options& o) {
    const auto rc = load(o);
    const SimContext ctx(rc.experiment);
    const auto& cb = ctx.codebook();
    const auto& grid = ctx.grid();
    std::ostringstream os;
    if (o.format == "json") {
        json levels = json::array();
        for (int l = 1; l <= cb.levels(); ++l)
            for (const auto& cw : cb.level(l)) {
                std::vector<double> gain;
                for (int i = 0; i < grid.size(); ++i) gain.push_back(cw.gain_at(i));
                levels.push_back({{"level", l},
                                  {"k", cw.index},
                                  {"min_in_gain2", cw.min_in_gain2},
                                  {"max_out_gain2", cw.max_out_gain2},
                                  {"gain", gain}});
            }
        std::vector<double> theta;
        for (int i = 0; i < grid.size(); ++i) theta.push_back(grid[i] * 180.0 / std::numbers::pi);
        json j{{"config_hash", hex64(config_hash(rc))}, {"theta_deg", theta}, {"codewords", levels}};
        os << j.dump(2) << '\n';
        return os.str();
    }
    os << "level,k,theta_deg,gain\n";
    for (int l = 1; l <= cb.levels(); ++l)
        for (const auto& cw : cb.level(l))
            for (int i = 0; i < grid.size(); ++i)
                os << l << ',' << cw.index << ',' << fmt_num(grid[i] * 180.0 / std::numbers::pi) << ','
                   << fmt_num(cw.gain_at(i)) << '\n';
    return os.str();
}

std::string cmd_audit(const Options& o) {
    const auto rc = load(o);
    AuditSettings as;
    as.snr_db = rc.experiment.snr_db;
    as.sessions_per_point = rc.analysis.audit_sessions;
    as.n = static_cast<int>(std::lround(rc.analysis.n));
    as.epsilon = rc.analysis.epsilon;
    as.seed = rc.experiment.seed;
    const auto r = ejs_audit_run(rc.experiment.grid(), as);
    std::ostringstream os;
    if (o.format == "json") {
        json j{{"seed", as.seed},
               {"config_hash", hex64(config_hash(rc))},
               {"sessions", r.sessions},
               {"steps", r.steps},
               {"max_identity_residual", r.max_identity_residual},
               {"js_violations", r.js_violations},
               {"drift_steps", r.drift.steps},
               {"drift_violations", r.drift.violations_drift},
               {"confident_steps", r.drift.confident_steps},
               {"confident_violations", r.drift.violations_confident},
               {"min_margin", r.drift.min_margin}};
        os << j.dump(2) << '\n';
    } else {
        os << "sessions,steps,max_identity_residual,js_violations,drift_steps,drift_violations,"
              "confident_steps,confident_violations,min_margin\n"
           << r.sessions << ',' << r.steps << ',' << fmt_num(r.max_identity_residual) << ',' << r.js_violations
           << ',' << r.drift.steps << ',' << r.drift.violations_drift << ',' << r.drift.confident_steps << ','
           << r.drift.violations_confident << ',' << fmt_num(r.drift.min_margin) << '\n';
    }
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hiePM beam alignment simulator"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    Options opt;
    app.add_option("--config", opt.config, "Experiment config file")->required();
    app.add_option("--out", opt.out, "Output path (default: stdout)");
    app.add_option("--format", opt.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--seed", opt.seed, "Override the master seed");
    app.add_option("--threads", opt.threads, "Worker threads")->check(CLI::Range(1, 1024));

    auto* simulate = app.add_subcommand("simulate", "Per-session records for every policy and SNR point");
    auto* sweep = app.add_subcommand("sweep", "Error probability, stopping time and rate per policy and SNR point");
    auto* bounds = app.add_subcommand("bounds", "Analytic bounds over the SNR grid");
    auto* codebook = app.add_subcommand("codebook", "Codebook tools");
    auto* inspect = codebook->add_subcommand("inspect", "Dump per-codeword gain over the grid");
    codebook->require_subcommand(1, 1);
    auto* audit = app.add_subcommand("audit", "EJS identity and lower-bound audit on 1-bit ideal sessions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        std::string text;
        if (simulate->parsed()) text = cmd_simulate(opt);
        else if (sweep->parsed()) text = cmd_sweep(opt);
        else if (bounds->parsed()) text = cmd_bounds(opt);
        else if (inspect->parsed()) text = cmd_codebook(opt);
        else if (audit->parsed()) text = cmd_audit(opt);
        emit(opt, text);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
