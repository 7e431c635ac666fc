#pragma once

// Monte Carlo harness: SNR sweeps with deterministic per-trial streams,
// error / rate estimation, VL epsilon calibration and the EJS audit run.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hiepm/bounds.hpp"
#include "hiepm/codebook.hpp"
#include "hiepm/policies.hpp"
#include "hiepm/posterior.hpp"
#include "hiepm/rng.hpp"

namespace hiepm {

enum class FadingMode { known, mismatched };

inline const char* to_string(FadingMode f) { return f == FadingMode::known ? "known" : "mismatched"; }

struct CalibrationSettings {
    int trials = 400;
    double tolerance = 1.0;  // samples
    double log_eps_min = -1e5;  // leaf observations at high SNR carry hundreds of nats each
    double log_eps_max = std::log(0.999);
    int max_iterations = 60;
};

struct ExperimentConfig {
    ArrayGeometry geometry;
    double theta_lo_deg = -60.0;
    double theta_hi_deg = 60.0;
    int resolution = 128;
    BeamMode mode = BeamMode::practical;
    int oversample = 4;
    double regularization = 1e-6;
    std::vector<PolicySpec> policies;
    std::vector<double> snr_db{0.0};
    int trials = 2000;
    std::uint64_t seed = 42;
    FadingMode fading = FadingMode::known;
    double sigma_alpha2 = 0.05;
    double frame_length = 2800.0;  // T, 100 x E[tau]
    int threads = 1;
    CalibrationSettings calibration;

    AngleGrid grid() const {
        return AngleGrid(theta_lo_deg * std::numbers::pi / 180.0, theta_hi_deg * std::numbers::pi / 180.0,
                         resolution);
    }

    void validate() const {
        geometry.validate();
        (void)grid();
        if (trials < 1) throw std::invalid_argument("config: trials must be >= 1");
        if (snr_db.empty()) throw std::invalid_argument("config: SNR grid must be nonempty");
        if (policies.empty()) throw std::invalid_argument("config: at least one policy is required");
        if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
        if (oversample < 1) throw std::invalid_argument("config: oversample must be >= 1");
        if (!(regularization >= 0.0)) throw std::invalid_argument("config: regularization must be >= 0");
        if (!(sigma_alpha2 >= 0.0)) throw std::invalid_argument("config: sigma_alpha2 must be >= 0");
        if (!(frame_length > 0.0)) throw std::invalid_argument("config: frame_length must be > 0");
        for (const auto& p : policies) {
            p.stop.validate();
            if (p.kind == PolicyKind::random_scan) {
                p.scan.validate();
                if (resolution % p.scan.n != 0)
                    throw std::invalid_argument("config: scan n must divide the resolution");
            }
            if (p.kind == PolicyKind::bisection && p.reps_per_level < 1)
                throw std::invalid_argument("config: reps_per_level must be >= 1");
            if (p.calibrate_tau && !(*p.calibrate_tau > 0.0))
                throw std::invalid_argument("config: calibrate_tau must be > 0");
            if (p.calibrate_tau && p.stop.kind != StoppingRule::Kind::variable_length)
                throw std::invalid_argument("config: calibrate_tau requires variable-length stopping");
        }
    }
};

struct MetricRow {
    std::string policy;
    double snr_db = 0.0;
    int trials = 0;
    int errors = 0;
    double err = 0.0;
    double err_ci_lo = 0.0;
    double err_ci_hi = 0.0;
    double mean_tau = 0.0;
    double mean_rate = 0.0;  // bits/s/Hz
    int capped = 0;
    std::optional<double> log_epsilon;  // VL runs

    bool operator==(const MetricRow&) const = default;
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// Wilson score interval, 95% by default.
inline Interval wilson_interval(long k, long n, double z = 1.959963984540054) {
    if (n <= 0) return {0.0, 1.0};
    const double ph = static_cast<double>(k) / static_cast<double>(n);
    const double z2 = z * z;
    const double den = 1.0 + z2 / n;
    const double centre = (ph + z2 / (2.0 * n)) / den;
    const double half = z * std::sqrt(ph * (1.0 - ph) / n + z2 / (4.0 * n * n)) / den;
    // the endpoints at k = 0 and k = n are exact; centre - half would leave rounding residue
    return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

/// FR: the final leaf must be the true grid point. VR: the true point must lie in the chosen cell.
inline bool trial_error(const SessionTrace& tr, const HierCodebook& cb, int aoa_index,
                        ResolutionRule::Kind kind) {
    const Node n = tr.final_beam;
    if (n.level < 1) return true;
    const Support s = cb.support(n.level, n.index);
    if (kind == ResolutionRule::Kind::fixed) return !(n.level == cb.levels() && s.first == aoa_index);
    return !s.contains(aoa_index);
}

/// (T - tau)/T log2(1 + P |alpha w^H a(phi)|^2 / sigma^2), in bits/s/Hz.
inline double transmission_rate(const SessionTrace& tr, const HierCodebook& cb, const ChannelState& ch,
                                double T) {
    if (!(T > 0.0)) throw std::invalid_argument("transmission_rate: T must be > 0");
    if (tr.tau >= T || tr.final_beam.level < 1) return 0.0;
    const cplx r = cb.at(tr.final_beam.level, tr.final_beam.index)
                       .response[static_cast<std::size_t>(ch.aoa_index)];
    const double snr = ch.power * std::norm(ch.alpha * r) / ch.noise_var;
    return (T - tr.tau) / T * std::log2(1.0 + snr);
}

/// Codebook, designer and scanners shared read-only by every trial of a config.
class SimContext {
public:
    explicit SimContext(const ExperimentConfig& cfg) : grid_(cfg.grid()) {
        cfg.validate();
        if (cfg.mode == BeamMode::practical) {
            designer_ = std::make_unique<BeamDesigner>(grid_, cfg.geometry, cfg.oversample, cfg.regularization);
            cb_ = std::make_unique<HierCodebook>(build_practical(*designer_));
        } else {
            cb_ = std::make_unique<HierCodebook>(build_ideal(grid_, cfg.geometry));
        }
        for (const auto& p : cfg.policies) {
            if (p.kind == PolicyKind::random_scan)
                scanners_.push_back(std::make_unique<RandomScanner>(p.scan, grid_, cfg.mode, designer_.get()));
            else
                scanners_.push_back(nullptr);
        }
    }

    const AngleGrid& grid() const { return grid_; }
    const HierCodebook& codebook() const { return *cb_; }
    const BeamDesigner* designer() const { return designer_.get(); }
    const RandomScanner* scanner(std::size_t policy) const { return scanners_.at(policy).get(); }

private:
    AngleGrid grid_;
    std::unique_ptr<BeamDesigner> designer_;
    std::unique_ptr<HierCodebook> cb_;
    std::vector<std::unique_ptr<RandomScanner>> scanners_;
};

inline double snr_to_power(double snr_db) { return std::pow(10.0, snr_db / 10.0); }

/// Channel draw for one trial: uniform AoA over the grid and, when mismatched,
/// alpha_hat ~ CN(alpha, sigma_alpha^2) once per session. Shared by every policy
/// at the same (point, trial) so comparisons use common random numbers.
struct TrialDraw {
    ChannelState channel;
    cplx alpha_hat{1.0, 0.0};
};

inline TrialDraw draw_trial(const ExperimentConfig& cfg, std::uint64_t stream, std::uint64_t point,
                            std::uint64_t trial, double snr_db) {
    CounterRng rng(derive_key(cfg.seed ^ stream, point, trial));
    TrialDraw d;
    d.channel.alpha = {1.0, 0.0};
    d.channel.power = snr_to_power(snr_db);
    d.channel.noise_var = 1.0;
    d.channel.aoa_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.resolution)));
    d.alpha_hat = d.channel.alpha;
    if (cfg.fading == FadingMode::mismatched) d.alpha_hat += rng.complex_normal(cfg.sigma_alpha2);
    return d;
}

struct TrialOutcome {
    bool error = false;
    int tau = 0;
    double rate = 0.0;
    bool capped = false;
};

namespace detail {

inline constexpr std::uint64_t kEvalStream = 0;
inline constexpr std::uint64_t kCalibrationStream = 0xca11b7a7e0000000ULL;

/// Runs f(i) for i in [0, n) over `threads` workers; results land in slot i.
template <class T, class F>
std::vector<T> parallel_map(int n, int threads, F&& f) {
    std::vector<T> out(static_cast<std::size_t>(n));
    const int workers = std::max(1, std::min(threads, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = f(i);
        return out;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1))
                    out[static_cast<std::size_t>(i)] = f(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
                next.store(n);
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace detail

/// One session of policy `pi_idx` at SNR point `point`.
inline TrialOutcome run_trial(const ExperimentConfig& cfg, const SimContext& ctx, const PolicySpec& spec,
                              std::size_t pi_idx, std::uint64_t stream, std::uint64_t point, int trial,
                              double snr_db) {
    const TrialDraw d = draw_trial(cfg, stream, point, static_cast<std::uint64_t>(trial), snr_db);
    CounterRng rng(derive_key(cfg.seed ^ stream ^ splitmix64(pi_idx + 1), point, static_cast<std::uint64_t>(trial)));
    const auto tr = run_session(spec, ctx.codebook(), ctx.scanner(pi_idx), d.channel, d.alpha_hat, rng);
    TrialOutcome o;
    const auto kind = spec.kind == PolicyKind::hiepm ? spec.resolution.kind : ResolutionRule::Kind::fixed;
    o.error = tr.capped || trial_error(tr, ctx.codebook(), d.channel.aoa_index, kind);
    o.tau = tr.tau;
    o.rate = transmission_rate(tr, ctx.codebook(), d.channel, cfg.frame_length);
    o.capped = tr.capped;
    return o;
}

inline MetricRow aggregate(const std::string& policy, double snr_db, const std::vector<TrialOutcome>& outs) {
    MetricRow row;
    row.policy = policy;
    row.snr_db = snr_db;
    row.trials = static_cast<int>(outs.size());
    double tau = 0.0, rate = 0.0;
    for (const auto& o : outs) {  // fixed trial order keeps sums bit-identical
        row.errors += o.error ? 1 : 0;
        row.capped += o.capped ? 1 : 0;
        tau += o.tau;
        rate += o.rate;
    }
    row.err = static_cast<double>(row.errors) / row.trials;
    const auto ci = wilson_interval(row.errors, row.trials);
    row.err_ci_lo = ci.lo;
    row.err_ci_hi = ci.hi;
    row.mean_tau = tau / row.trials;
    row.mean_rate = rate / row.trials;
    return row;
}

struct CalibrationResult {
    double log_epsilon = 0.0;
    double mean_tau = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// ln(eps) such that the VL policy's mean stopping time is within tolerance of
/// `target`. Illinois regula falsi on a fixed set of calibration streams, so
/// the objective is a deterministic, nonincreasing step function of ln(eps).
inline CalibrationResult calibrate_log_epsilon(const ExperimentConfig& cfg, const SimContext& ctx,
                                               const PolicySpec& spec, std::size_t pi_idx,
                                               std::uint64_t point, double snr_db, double target) {
    const auto& cs = cfg.calibration;
    PolicySpec s = spec;
    s.tau_max = std::max(1, static_cast<int>(std::ceil(20.0 * target)));
    auto mean_tau = [&](double ln_eps) {
        s.stop = StoppingRule::variable_log(ln_eps);
        const auto outs = detail::parallel_map<TrialOutcome>(cs.trials, cfg.threads, [&](int t) {
            return run_trial(cfg, ctx, s, pi_idx, detail::kCalibrationStream, point, t, snr_db);
        });
        double sum = 0.0;
        for (const auto& o : outs) sum += o.tau;
        return sum / cs.trials;
    };
    CalibrationResult r;
    double a = cs.log_eps_min, b = cs.log_eps_max;
    double fa = mean_tau(a) - target, fb = mean_tau(b) - target;
    r.iterations = 2;
    if (fa <= 0.0) {  // even the tightest epsilon stops early
        r.log_epsilon = a;
        r.mean_tau = fa + target;
        r.converged = std::abs(fa) <= cs.tolerance;
        return r;
    }
    if (fb >= 0.0) {
        r.log_epsilon = b;
        r.mean_tau = fb + target;
        r.converged = std::abs(fb) <= cs.tolerance;
        return r;
    }
    int side = 0;
    double x = b, fx = fb;
    while (r.iterations < cs.max_iterations) {
        x = (a * fb - b * fa) / (fb - fa);
        if (!(x > a && x < b)) x = 0.5 * (a + b);
        fx = mean_tau(x) - target;
        ++r.iterations;
        if (std::abs(fx) <= cs.tolerance) {
            r.converged = true;
            break;
        }
        if (fx > 0.0) {  // too slow: raise epsilon
            a = x;
            fa = fx;
            if (side == -1) fb *= 0.5;
            side = -1;
        } else {
            b = x;
            fb = fx;
            if (side == 1) fa *= 0.5;
            side = 1;
        }
        if (b - a < 1e-9 * std::max(1.0, std::abs(a))) break;
    }
    r.log_epsilon = x;
    r.mean_tau = fx + target;
    return r;
}

/// Policy as run at SNR point k: VL policies with a calibration target get
/// their epsilon fixed here. `log_eps` receives the effective ln(eps) for VL.
inline PolicySpec resolve_policy(const ExperimentConfig& cfg, const SimContext& ctx, std::size_t pi,
                                 std::size_t k, std::optional<double>* log_eps = nullptr) {
    PolicySpec spec = cfg.policies.at(pi);
    std::optional<double> le;
    if (spec.calibrate_tau) {
        const auto c = calibrate_log_epsilon(cfg, ctx, spec, pi, k, cfg.snr_db[k], *spec.calibrate_tau);
        spec.stop = StoppingRule::variable_log(c.log_epsilon);
        le = c.log_epsilon;
    } else if (spec.stop.kind == StoppingRule::Kind::variable_length) {
        le = spec.stop.ln_epsilon();
    }
    if (log_eps) *log_eps = le;
    return spec;
}

/// Full sweep: rows ordered by policy, then SNR point. Identical for any thread count.
inline std::vector<MetricRow> run_sweep(const ExperimentConfig& cfg, const SimContext& ctx) {
    cfg.validate();
    std::vector<MetricRow> rows;
    for (std::size_t pi = 0; pi < cfg.policies.size(); ++pi) {
        for (std::size_t k = 0; k < cfg.snr_db.size(); ++k) {
            std::optional<double> log_eps;
            const PolicySpec spec = resolve_policy(cfg, ctx, pi, k, &log_eps);
            const auto outs = detail::parallel_map<TrialOutcome>(cfg.trials, cfg.threads, [&](int t) {
                return run_trial(cfg, ctx, spec, pi, detail::kEvalStream, k, t, cfg.snr_db[k]);
            });
            auto row = aggregate(spec.label(), cfg.snr_db[k], outs);
            row.log_epsilon = log_eps;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline std::vector<MetricRow> run_sweep(const ExperimentConfig& cfg) {
    const SimContext ctx(cfg);
    return run_sweep(cfg, ctx);
}

/// sum_z P(z) U(pi'_z) - U(pi) - EJS for one 1-bit query.
inline double martingale_residual(const Posterior& pi, const ObservationLikelihood& c) {
    const double u0 = avg_loglik(pi);
    double drift = 0.0;
    for (int z = 0; z < c.outcomes; ++z) {
        const double pz = predictive(pi.probs(), c, z);
        if (pz <= 0.0) continue;
        drift += pz * avg_loglik(bayes_update(pi, c, z));
    }
    return drift - u0 - ejs(pi.probs(), c);
}

struct AuditReport {
    long steps = 0;
    long sessions = 0;
    double max_identity_residual = 0.0;
    long js_violations = 0;  // EJS < JS
    DriftAuditReport drift;
};

struct AuditSettings {
    std::vector<double> snr_db{-10.0, -5.0, 0.0};
    int sessions_per_point = 100;
    int n = 28;               // FL budget; also the n in pi~
    double epsilon = 1e-2;    // epsilon in pi~
    std::uint64_t seed = 42;
    double slack = 1e-9;
};

/// 1-bit ideal-beam hiePM(FL) sessions with snapshots; checks the one-step
/// identity, EJS >= JS, and both EJS lower bounds at every recorded step.
inline AuditReport ejs_audit_run(const AngleGrid& grid, const AuditSettings& as) {
    const auto cb = build_ideal(grid);
    AuditReport rep;
    for (std::size_t k = 0; k < as.snr_db.size(); ++k) {
        const double P = snr_to_power(as.snr_db[k]);
        const auto prof = level_profile(cb, P, 1.0);
        HiepmConfig hc;
        hc.model = MeasurementModel::onebit;
        hc.stop = StoppingRule::fixed(as.n);
        hc.record_snapshots = true;
        for (int s = 0; s < as.sessions_per_point; ++s) {
            CounterRng rng(derive_key(as.seed, k, static_cast<std::uint64_t>(s)));
            ChannelState ch;
            ch.power = P;
            ch.aoa_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(grid.size())));
            const auto tr = run_hiepm(cb, hc, ch, ch.alpha, rng);
            ++rep.sessions;
            drift_audit(tr, prof, as.n, as.epsilon, rep.drift, as.slack);
            for (std::size_t t = 0; t < tr.steps.size(); ++t) {
                const auto pi = Posterior::from_weights(tr.snapshots[t]);
                const Node n = tr.steps[t].node;
                const auto cond = onebit_conditionals(grid.size(), cb.support(n.level, n.index), prof.at(n.level));
                const double e = ejs(pi.probs(), cond);
                if (!std::isfinite(e)) continue;
                rep.max_identity_residual = std::max(rep.max_identity_residual,
                                                     std::abs(martingale_residual(pi, cond)));
                if (e < js(pi.probs(), cond) - as.slack) ++rep.js_violations;
                ++rep.steps;
            }
        }
    }
    return rep;
}

}  // namespace hiepm
