// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Results do not depend on the worker count.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "hiepm/hiepm.hpp"

using namespace hiepm;

namespace {

int g_failures = 0;

void report(bool ok, const std::string& id, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", id.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

AngleGrid sector() { return AngleGrid(-std::numbers::pi / 3, std::numbers::pi / 3, 128); }

PolicySpec hiepm_policy(MeasurementModel m, StoppingRule::Kind stop, ResolutionRule::Kind res) {
    PolicySpec p;
    p.model = m;
    p.stop = stop == StoppingRule::Kind::fixed_length ? StoppingRule::fixed(28) : StoppingRule::variable(1e-3);
    if (stop == StoppingRule::Kind::variable_length) p.calibrate_tau = 28.0;
    p.resolution.kind = res;
    return p;
}

PolicySpec bisection_policy() {
    PolicySpec p;
    p.kind = PolicyKind::bisection;
    return p;
}

PolicySpec scan_policy(int q) {
    PolicySpec p;
    p.kind = PolicyKind::random_scan;
    p.scan = {128, q};
    p.stop = StoppingRule::fixed(28);
    return p;
}

ExperimentConfig experiment(BeamMode mode, std::vector<PolicySpec> pol, std::vector<double> snr, int trials) {
    ExperimentConfig c;
    c.mode = mode;
    c.policies = std::move(pol);
    c.snr_db = std::move(snr);
    c.trials = trials;
    c.seed = 42;
    c.threads = workers();
    return c;
}

const MetricRow& row_of(const std::vector<MetricRow>& rows, const std::string& policy, double snr) {
    for (const auto& r : rows)
        if (r.policy == policy && r.snr_db == snr) return r;
    throw std::runtime_error("no row for " + policy);
}

// ---------------------------------------------------------------------------

void identity_and_drift() {
    AuditSettings as;
    as.snr_db = {-15.0, -10.0, -5.0, 0.0, 5.0};
    as.sessions_per_point = 120;
    as.n = 28;
    as.epsilon = 1e-2;
    const auto rep = ejs_audit_run(sector(), as);
    report(rep.steps >= 10000 && rep.max_identity_residual <= 1e-10 && rep.js_violations == 0, "martingale_identity",
           fmt("%ld steps with finite EJS, max |E[U'] - U - EJS| = %.3g, EJS < JS at %ld steps", rep.steps,
               rep.max_identity_residual, rep.js_violations));
    const auto& l = rep.drift;
    report(l.steps >= 10000 && l.violations_drift == 0 && l.violations_confident == 0, "ejs_lower_bounds",
           fmt("%ld steps, %ld below I(1/3;p), %ld of %ld confident steps below pi~ C1(p_S), min margin %.3g",
               l.steps, l.violations_drift, l.violations_confident, l.confident_steps, l.min_margin));
}

void threshold_calibration() {
    const auto grid = sector();
    const auto ideal = build_ideal(grid);
    const auto practical = build_practical(grid, ArrayGeometry{});
    double worst = 0.0;
    bool monotone = true;
    for (const HierCodebook* cb : {&ideal, &practical}) {
        for (int snr = -15; snr <= 10; ++snr) {
            const double P = snr_to_power(snr);
            for (int l = 1; l <= cb->levels(); ++l) {
                double G = kInf, g = 0.0;
                for (const auto& cw : cb->level(l)) {
                    G = std::min(G, cw.min_in_gain2);
                    g = std::max(g, cw.max_out_gain2);
                }
                worst = std::max(worst, std::abs(optimal_threshold(G, g, P, 1.0).residual));
            }
            const auto prof = level_profile(*cb, P, 1.0);
            if (cb == &ideal)
                for (int l = 2; l <= prof.levels(); ++l) monotone = monotone && prof.at(l) <= prof.at(l - 1);
        }
    }
    // realized flip rate of the quantizer at the worst-case gains of each level
    int mc_bad = 0, mc_checks = 0;
    double worst_z = 0.0;
    const int draws = 100000;
    for (const HierCodebook* cb : {&ideal, &practical}) {
        const double P = snr_to_power(-5.0);
        const auto prof = level_profile(*cb, P, 1.0);
        for (int l = 1; l <= cb->levels(); ++l) {
            const double p = prof.at(l);
            const double v = prof.v[static_cast<std::size_t>(l - 1)];
            CounterRng rng(derive_key(42, cb == &ideal ? 1 : 2, static_cast<std::uint64_t>(l)));
            long flips = 0;
            for (int d = 0; d < draws; ++d) {
                const bool inside = d % 2 == 0;
                const double gain2 = inside ? prof.G[static_cast<std::size_t>(l - 1)] : prof.g[static_cast<std::size_t>(l - 1)];
                const ChannelState ch{{1.0, 0.0}, 0, P, 1.0};
                const cplx y = measure_response(ch, std::sqrt(gain2), rng);
                flips += onebit_quantize(y, v) != (inside ? 1 : 0);
            }
            const double se = std::sqrt(p * (1 - p) / draws);
            const double z = se > 0 ? std::abs(static_cast<double>(flips) / draws - p) / se : 0.0;
            worst_z = std::max(worst_z, z);
            ++mc_checks;
            mc_bad += z > 3.0;
        }
    }
    report(worst <= 1e-10 && monotone && mc_bad == 0, "threshold_calibration",
           fmt("max |miss - false alarm| = %.3g over -15..10 dB, ideal p[l] monotone: %s, "
               "MC crossover beyond 3 SE at %d of %d levels (worst %.2f SE)",
               worst, monotone ? "yes" : "no", mc_bad, mc_checks, worst_z));
}

void error_ordering() {
    const auto cfg = experiment(BeamMode::practical,
                                {hiepm_policy(MeasurementModel::full, StoppingRule::Kind::fixed_length,
                                              ResolutionRule::Kind::fixed),
                                 scan_policy(8), scan_policy(16), scan_policy(32), bisection_policy()},
                                {0.0}, 2000);
    const auto rows = run_sweep(cfg);
    const auto& h = row_of(rows, "hiepm_FL_FR", 0.0);
    const MetricRow* best = nullptr;
    for (const char* name : {"random_scan_q8", "random_scan_q16", "random_scan_q32"}) {
        const auto& r = row_of(rows, name, 0.0);
        if (!best || r.err < best->err) best = &r;
    }
    const auto& b = row_of(rows, "bisection", 0.0);
    const bool ok = h.err_ci_hi < best->err_ci_lo && best->err_ci_hi < b.err_ci_lo;
    report(ok, "error_ordering_0dB",
           fmt("hiePM %.4g [%.4g, %.4g] < %s %.4g [%.4g, %.4g] < bisection %.4g [%.4g, %.4g] (2000 trials)",
               h.err, h.err_ci_lo, h.err_ci_hi, best->policy.c_str(), best->err, best->err_ci_lo, best->err_ci_hi,
               b.err, b.err_ci_lo, b.err_ci_hi));
}

void bound_dominance() {
    const auto grid = sector();
    const double delta = 1.0 / 128;
    std::vector<double> active;
    std::vector<double> bound;
    for (int snr = -15; snr <= 10; ++snr) {
        const double b = fixed_length_error_bound(28, delta, ideal_level_profile(grid.width(), 7, snr_to_power(snr), 1.0));
        if (b < 1.0) {
            active.push_back(snr);
            bound.push_back(b);
        }
    }
    if (active.empty()) {
        report(false, "bound_dominance", "bound is trivial at every SNR point");
        return;
    }
    auto cfg = experiment(BeamMode::ideal,
                          {hiepm_policy(MeasurementModel::onebit, StoppingRule::Kind::variable_length,
                                        ResolutionRule::Kind::fixed)},
                          active, 2000);
    const auto rows = run_sweep(cfg);
    int bad = 0;
    double tau_dev = 0.0;
    std::string worst;
    for (std::size_t k = 0; k < active.size(); ++k) {
        const auto& r = rows[k];
        tau_dev = std::max(tau_dev, std::abs(r.mean_tau - 28.0));
        const double se = std::sqrt(r.err * (1.0 - r.err) / r.trials);
        if (bound[k] < r.err + 3.0 * se) {
            ++bad;
            worst += fmt(" %g dB (bound %.3g < MC %.3g + 3 SE);", active[k], bound[k], r.err);
        }
    }
    report(bad == 0, "bound_dominance",
           fmt("bound below 1 from %g dB; bound >= MC + 3 SE failed at %d of %zu points;%s max |E[tau] - 28| = %.2f",
               active.front(), bad, active.size(), worst.c_str(), tau_dev));
}

struct SweepData {
    std::vector<double> snr;
    std::vector<MetricRow> rows;
};

SweepData practical_sweep() {
    SweepData d;
    d.snr = {-16, -14, -12, -10, -8, -6, -5, -4, -2, 0, 2, 4, 5};
    const auto cfg = experiment(
        BeamMode::practical,
        {hiepm_policy(MeasurementModel::full, StoppingRule::Kind::fixed_length, ResolutionRule::Kind::fixed),
         hiepm_policy(MeasurementModel::full, StoppingRule::Kind::fixed_length, ResolutionRule::Kind::variable),
         hiepm_policy(MeasurementModel::full, StoppingRule::Kind::variable_length, ResolutionRule::Kind::fixed),
         bisection_policy()},
        d.snr, 2000);
    d.rows = run_sweep(cfg);
    return d;
}

void sharp_transition(const SweepData& d) {
    std::vector<double> pe;
    double tau_dev = 0.0;
    for (double s : d.snr) {
        const auto& r = row_of(d.rows, "hiepm_VL_FR", s);
        pe.push_back(r.err);
        tau_dev = std::max(tau_dev, std::abs(r.mean_tau - 28.0));
    }
    const double lo = *std::min_element(pe.begin(), pe.end());
    const double hi = *std::max_element(pe.begin(), pe.end());
    const double half = 0.5 * (lo + hi);
    double mid = std::nan("");
    for (std::size_t k = 1; k < pe.size(); ++k)
        if (pe[k - 1] >= half && pe[k] < half) {
            mid = d.snr[k - 1] + (pe[k - 1] - half) / (pe[k - 1] - pe[k]) * (d.snr[k] - d.snr[k - 1]);
            break;
        }
    const double vl0 = row_of(d.rows, "hiepm_VL_FR", 0.0).err;
    const double bis0 = row_of(d.rows, "bisection", 0.0).err;
    const bool ok = vl0 < 1e-2 && bis0 > 0.1 && std::isfinite(mid) && mid >= -12.0 && mid <= -2.0;
    report(ok, "sharp_vl_transition",
           fmt("VL error at 0 dB %.4g, bisection %.4g, error drops through %.3g (midpoint of %.3g..%.3g) at %.2f dB, "
               "max |E[tau] - 28| = %.2f",
               vl0, bis0, half, lo, hi, mid, tau_dev));
}

void rate_ordering(const SweepData& d) {
    int bad = 0, checks = 0;
    std::string where;
    for (double s : d.snr) {
        if (s < -5 || s > 5) continue;
        const double b = row_of(d.rows, "bisection", s).mean_rate;
        for (const char* p : {"hiepm_FL_FR", "hiepm_FL_VR", "hiepm_VL_FR"}) {
            ++checks;
            const double r = row_of(d.rows, p, s).mean_rate;
            if (r < b) {
                ++bad;
                where += fmt(" %s@%g dB (%.3f < %.3f);", p, s, r, b);
            }
        }
    }
    int bad_low = 0, checks_low = 0;
    for (double s : d.snr) {
        if (s >= -7) continue;
        ++checks_low;
        const double vr = row_of(d.rows, "hiepm_FL_VR", s).mean_rate;
        const double fr = row_of(d.rows, "hiepm_FL_FR", s).mean_rate;
        if (vr < fr) {
            ++bad_low;
            where += fmt(" VR<FR@%g dB (%.3f < %.3f);", s, vr, fr);
        }
    }
    const auto& r0 = row_of(d.rows, "hiepm_FL_FR", 0.0);
    report(bad == 0 && bad_low == 0, "rate_ordering",
           fmt("hiePM >= bisection at %d/%d (policy, SNR) pairs in [-5, 5] dB; FL,VR >= FL,FR at %d/%d points below "
               "-7 dB; FL,FR rate at 0 dB %.3f bit/s/Hz;%s",
               checks - bad, checks, checks_low - bad_low, checks_low, r0.mean_rate, where.c_str()));
}

void mismatched_fading() {
    auto cfg = experiment(
        BeamMode::practical,
        {hiepm_policy(MeasurementModel::full, StoppingRule::Kind::fixed_length, ResolutionRule::Kind::fixed),
         hiepm_policy(MeasurementModel::full, StoppingRule::Kind::fixed_length, ResolutionRule::Kind::variable),
         hiepm_policy(MeasurementModel::full, StoppingRule::Kind::variable_length, ResolutionRule::Kind::fixed),
         bisection_policy()},
        {0.0}, 2000);
    cfg.fading = FadingMode::mismatched;
    cfg.sigma_alpha2 = 0.05;
    const auto rows = run_sweep(cfg);
    const auto& b = row_of(rows, "bisection", 0.0);
    bool ok = true;
    std::string detail;
    for (const char* p : {"hiepm_FL_FR", "hiepm_FL_VR", "hiepm_VL_FR"}) {
        const auto& r = row_of(rows, p, 0.0);
        ok = ok && r.err_ci_hi < b.err_ci_lo;
        detail += fmt("%s %.4g [%.4g, %.4g]; ", p, r.err, r.err_ci_lo, r.err_ci_hi);
    }
    detail += fmt("bisection %.4g [%.4g, %.4g] at 0 dB, sigma_alpha^2 = 0.05", b.err, b.err_ci_lo, b.err_ci_hi);
    report(ok, "mismatched_fading", detail);
}

void invariants() {
    const auto grid = sector();
    const auto cb = build_ideal(grid);
    int bad_noiseless = 0;
    for (int aoa = 0; aoa < 128; ++aoa) {
        HiepmConfig hc;
        hc.stop = StoppingRule::variable(1e-6);
        CounterRng rng(derive_key(42, 9, static_cast<std::uint64_t>(aoa)));
        const auto tr = run_hiepm(cb, hc, ChannelState{{1.0, 0.0}, aoa, 1.0, 1e-12}, {1.0, 0.0}, rng);
        bool ok = tr.tau == 7 && tr.final_beam == Node{7, aoa + 1};
        for (int t = 0; ok && t < tr.tau; ++t) ok = tr.steps[static_cast<std::size_t>(t)].node.level == t + 1;
        bad_noiseless += !ok;
    }
    double drift = 0.0;
    {
        HiepmConfig hc;
        hc.model = MeasurementModel::onebit;
        hc.forced_crossover = 0.5;
        hc.stop = StoppingRule::fixed(200);
        CounterRng rng(7);
        const auto tr = run_hiepm(cb, hc, ChannelState{{1.0, 0.0}, 3, 1.0, 1.0}, {1.0, 0.0}, rng);
        for (double p : tr.final_posterior) drift = std::max(drift, std::abs(p - 1.0 / 128));
    }
    double norm_err = 0.0;
    int negative = 0;
    for (int s = 0; s < 1000; ++s) {
        CounterRng rng(derive_key(42, 10, static_cast<std::uint64_t>(s)));
        HiepmConfig hc;
        hc.model = s % 2 ? MeasurementModel::onebit : MeasurementModel::full;
        hc.stop = StoppingRule::fixed(1 + static_cast<int>(rng.below(60)));
        const ChannelState ch{{1.0, 0.0}, static_cast<int>(rng.below(128)), snr_to_power(-15 + 25 * rng.uniform()), 1.0};
        const auto tr = run_hiepm(cb, hc, ch, ch.alpha, rng);
        norm_err = std::max(norm_err, std::abs(std::accumulate(tr.final_posterior.begin(), tr.final_posterior.end(), 0.0) - 1.0));
        for (double p : tr.final_posterior) negative += p < 0.0;
    }
    const auto practical = build_practical(grid, ArrayGeometry{});
    int partition_bad = 0;
    for (const HierCodebook* c : {&cb, &practical})
        for (int l = 1; l <= c->levels(); ++l) {
            std::vector<int> cover(128, 0);
            for (const auto& cw : c->level(l))
                for (int i = cw.support.first; i <= cw.support.last(); ++i) ++cover[static_cast<std::size_t>(i)];
            for (int x : cover) partition_bad += x != 1;
        }
    report(bad_noiseless == 0 && drift <= 1e-15 && norm_err <= 1e-12 && negative == 0 && partition_bad == 0,
           "noiseless_and_invariants",
           fmt("noiseless runs off the 7-step descent: %d/128; coin-flip posterior drift %.2g; "
               "max |sum pi - 1| over 1000 sessions %.2g; negative entries %d; partition defects %d",
               bad_noiseless, drift, norm_err, negative, partition_bad));
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        identity_and_drift();
        threshold_calibration();
        error_ordering();
        bound_dominance();
        const auto d = practical_sweep();
        sharp_transition(d);
        rate_ordering(d);
        mismatched_fading();
        invariants();
    } catch (const std::exception& e) {
        std::printf("FAIL harness: %s\n", e.what());
        return 2;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d criteria failed (%.1f s, %d workers)\n", g_failures, secs, workers());
    return g_failures == 0 ? 0 : 1;
}
