#pragma once

// Per-level 1-bit noise profile and the analytic bounds built on it: expected
// stopping time, error probability at a fixed budget, K0, Azuma constants, the
// EJS lower-bound audit, and Gallager's random-coding bound for random scanning.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "hiepm/codebook.hpp"
#include "hiepm/numerics.hpp"
#include "hiepm/policies.hpp"
#include "hiepm/posterior.hpp"

namespace hiepm {

/// p[l], v[l] for l = 1..S, stored 0-based (p[0] is level 1).
struct LevelNoiseProfile {
    std::vector<double> p;
    std::vector<double> v;   // power thresholds
    std::vector<double> G;   // in-beam power gain used per level
    std::vector<double> g;   // out-of-beam power gain used per level

    int levels() const { return static_cast<int>(p.size()); }
    double at(int l) const {
        if (l < 1 || l > levels()) throw std::out_of_range("profile: level out of range");
        return p[static_cast<std::size_t>(l - 1)];
    }
};

namespace detail {

inline void push_level(LevelNoiseProfile& prof, double G, double g, double P, double noise_var,
                       double abs_alpha) {
    prof.G.push_back(G);
    prof.g.push_back(g);
    if (!(G > g) || abs_alpha == 0.0) {
        prof.p.push_back(0.5);
        prof.v.push_back(0.0);
        return;
    }
    const auto t = optimal_threshold(G, g, P, noise_var, abs_alpha);
    prof.p.push_back(std::clamp(t.crossover, 0.0, 0.5));
    prof.v.push_back(t.power);
}

}  // namespace detail

/// Worst case per level: smallest in-beam and largest out-of-beam gain over the level's codewords.
inline LevelNoiseProfile level_profile(const HierCodebook& cb, double P, double noise_var,
                                       double abs_alpha = 1.0) {
    LevelNoiseProfile prof;
    for (int l = 1; l <= cb.levels(); ++l) {
        double G = kInf, g = 0.0;
        for (const auto& cw : cb.level(l)) {
            G = std::min(G, cw.min_in_gain2);
            g = std::max(g, cw.max_out_gain2);
        }
        detail::push_level(prof, G, g, P, noise_var, abs_alpha);
    }
    return prof;
}

/// Ideal-beam profile without materializing a codebook (G_l^2 = pi 2^l / width, g = 0).
inline LevelNoiseProfile ideal_level_profile(double width_rad, int levels, double P, double noise_var,
                                             double abs_alpha = 1.0) {
    if (levels < 1) throw std::invalid_argument("profile: levels must be >= 1");
    LevelNoiseProfile prof;
    for (int l = 1; l <= levels; ++l)
        detail::push_level(prof, ideal_gain2(width_rad / std::ldexp(1.0, l)), 0.0, P, noise_var,
                           abs_alpha);
    return prof;
}

inline double compute_K0(double p1) {
    if (!(p1 >= 0.0 && p1 <= 0.5)) throw std::domain_error("K0: p1 must lie in [0, 1/2]");
    const double mix = (1.0 - p1) / 3.0 + 2.0 * p1 / 3.0;
    return std::min(bsc_mutual_info(1.0 / 3.0, p1), 2.0 / 3.0 * bernoulli_kl(mix, p1));
}

/// C1 extended to p = 0 (infinite) and p = 1/2 (zero).
inline double c1_or_limit(double p) {
    if (p <= 0.0) return kInf;
    if (p >= 0.5) return 0.0;
    return c1_exponent(p);
}

inline double pi_tilde(double n, double epsilon) {
    return 1.0 - 1.0 / (1.0 + std::max(n, std::log(1.0 / epsilon)));
}

struct BoundReport {
    int levels = 0;        // S = log2(1/delta)
    int l_prime = 1;
    double K0 = 0.0;       // nats
    double R_h = 0.0;      // nats/sample
    double E_h = 0.0;      // nats/sample
    double tau_bound = 0.0;
    bool degenerate = false;  // a needed crossover sits at 1/2
};

inline int levels_for(double delta) {
    const double s = std::log2(1.0 / delta);
    const int S = static_cast<int>(std::lround(s));
    if (!(delta > 0.0 && delta < 1.0) || std::abs(s - S) > 1e-9)
        throw std::invalid_argument("bounds: log2(1/delta) must be a positive integer");
    return S;
}

/// l' = floor(K0 ceil(ln ln(1/delta)) / ln 2 - 1), clamped to [1, S].
inline int l_prime(double K0, double delta, int S) {
    const double lnln = std::ceil(std::log(std::log(1.0 / delta)));
    const double raw = std::floor(K0 * lnln / std::numbers::ln2 - 1.0);
    return static_cast<int>(std::clamp(raw, 1.0, static_cast<double>(S)));
}

/// E[tau] <= ln(1/delta)/R_h + ln(1/eps)/E_h, the o(.) term omitted.
inline BoundReport stopping_time_bound(double delta, double epsilon, const LevelNoiseProfile& prof) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("bounds: epsilon must lie in (0,1)");
    BoundReport r;
    r.levels = levels_for(delta);
    if (r.levels > prof.levels()) throw std::invalid_argument("bounds: profile shallower than log2(1/delta)");
    r.K0 = compute_K0(prof.at(1));
    r.l_prime = l_prime(r.K0, delta, r.levels);
    r.R_h = bsc_mutual_info(1.0 / 3.0, prof.at(r.l_prime));
    r.E_h = c1_or_limit(prof.at(r.levels));
    r.degenerate = !(r.R_h > 0.0) || !(r.E_h > 0.0);
    if (r.degenerate) {
        r.tau_bound = kInf;
    } else {
        r.tau_bound = std::log(1.0 / delta) / r.R_h + std::log(1.0 / epsilon) / r.E_h;
    }
    return r;
}

/// Whether the budget n can carry resolution 1/delta at rate R_h: n R_h > ln(1/delta).
inline bool fixed_length_bound_applies(double n, double delta, const BoundReport& r) {
    return r.R_h > 0.0 && n * r.R_h > std::log(1.0 / delta);
}

/// exp(-n E_h (1 - ln(1/delta)/(n R_h))), or 1 when the precondition fails.
inline double fixed_length_error_bound(double n, double delta, const LevelNoiseProfile& prof) {
    if (!(n > 0.0)) throw std::invalid_argument("bounds: n must be > 0");
    const auto r = stopping_time_bound(delta, 0.5, prof);
    if (!fixed_length_bound_applies(n, delta, r)) return 1.0;
    if (std::isinf(r.E_h)) return 0.0;
    const double e = n * r.E_h * (1.0 - std::log(1.0 / delta) / (n * r.R_h));
    return std::clamp(std::exp(-e), 0.0, 1.0);
}

struct AzumaConstants {
    double k0 = 0.0;
    double e0 = 0.0;
};

/// P(l_{t+1} <= l) <= k0 exp(-E0 t), bounded-difference constant 2 l ln2 + K0.
inline AzumaConstants azuma_constants(double K0, int l) {
    if (l < 1) throw std::invalid_argument("azuma: level must be >= 1");
    const double c = 2.0 * l * std::numbers::ln2 + K0;
    return {std::exp(K0 * (l + 1) * std::numbers::ln2 / (c * c)), K0 * K0 / (2.0 * c * c)};
}

struct AcquisitionRow {
    int levels = 0;
    double R_h = 0.0;     // nats/sample
    double R_h_bits = 0.0;
    double tau_bound = 0.0;
};

/// R_h along delta = 2^-S for S in [s_lo, s_hi] under ideal beams.
inline std::vector<AcquisitionRow> acquisition_rate_check(double width_rad, int s_lo, int s_hi,
                                                          double P, double noise_var, double epsilon) {
    std::vector<AcquisitionRow> rows;
    for (int S = s_lo; S <= s_hi; ++S) {
        const auto prof = ideal_level_profile(width_rad, S, P, noise_var);
        const auto r = stopping_time_bound(std::ldexp(1.0, -S), epsilon, prof);
        rows.push_back({S, r.R_h, r.R_h / std::numbers::ln2, r.tau_bound});
    }
    return rows;
}

struct DriftAuditReport {
    long steps = 0;
    long violations_drift = 0;     // EJS < I(1/3; p[l_{t+1}])
    long confident_steps = 0;      // max pi >= pi~
    long violations_confident = 0; // EJS < pi~ C1(p[S])
    double min_margin = kInf;
};

/// Audits every recorded step of a 1-bit session against the two EJS lower bounds.
inline void drift_audit(const SessionTrace& tr, const LevelNoiseProfile& prof, double n,
                         double epsilon, DriftAuditReport& rep, double slack = 1e-9) {
    if (tr.snapshots.size() != tr.steps.size())
        throw std::invalid_argument("drift_audit: trace lacks posterior snapshots");
    const int S = prof.levels();
    const double pt = pi_tilde(n, epsilon);
    const double c1 = c1_or_limit(prof.at(S));
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
        const auto& pi = tr.snapshots[t];
        const Node node = tr.steps[t].node;
        const int m = static_cast<int>(pi.size());
        const int block = m >> node.level;
        const double p = prof.at(node.level);
        const auto cond = onebit_conditionals(m, Support{(node.index - 1) * block, block}, p);
        const double e = ejs(pi, cond);
        const double need = bsc_mutual_info(1.0 / 3.0, p);
        ++rep.steps;
        rep.min_margin = std::min(rep.min_margin, e - need);
        if (e < need - slack) ++rep.violations_drift;
        if (*std::max_element(pi.begin(), pi.end()) >= pt) {
            ++rep.confident_steps;
            if (e < pt * c1 - slack) ++rep.violations_confident;
        }
    }
}

/// Crossover of an ideal random-scan beam covering a fraction q of the sector
/// (power gain 3/(2q), i.e. pi / (q * 120 deg)).
inline double ideal_scan_crossover(double q_fraction, double P, double noise_var, double abs_alpha = 1.0) {
    if (!(q_fraction > 0.0 && q_fraction <= 1.0)) throw std::invalid_argument("scan crossover: q outside (0,1]");
    return optimal_threshold(1.5 / q_fraction, 0.0, P, noise_var, abs_alpha).crossover;
}

/// Gallager bound for random scanning at budget tau and resolution 1/delta, ideal beams.
inline double random_scan_bound(int tau, int resolution, double P, double noise_var) {
    return random_coding_bound(tau, resolution,
                               [&](double q) { return ideal_scan_crossover(q, P, noise_var); });
}

}  // namespace hiepm
