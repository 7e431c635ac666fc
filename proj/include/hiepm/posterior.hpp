#pragma once

// Posterior over the AoA grid: log-domain Bayes updates for the full and 1-bit
// measurement models, nested (coarsened) posteriors, and the average
// log-likelihood / EJS / JS functionals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "hiepm/array_channel.hpp"
#include "hiepm/codebook.hpp"
#include "hiepm/numerics.hpp"

namespace hiepm {

/// Probability vector kept alongside its logarithm, renormalized on every update.
class Posterior {
public:
    Posterior() = default;

    static Posterior uniform(int size) {
        if (size < 2) throw std::invalid_argument("posterior: resolution must be >= 2");
        Posterior p;
        p.prob_.assign(static_cast<std::size_t>(size), 1.0 / size);
        p.logp_.assign(static_cast<std::size_t>(size), -std::log(static_cast<double>(size)));
        return p;
    }

    /// From unnormalized nonnegative weights.
    static Posterior from_weights(std::span<const double> w) {
        Posterior p;
        p.logp_.resize(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] < 0.0) throw std::invalid_argument("posterior: negative weight");
            p.logp_[i] = w[i] > 0.0 ? std::log(w[i]) : -kInf;
        }
        p.normalize();
        return p;
    }

    int size() const { return static_cast<int>(prob_.size()); }
    double operator[](int i) const { return prob_[static_cast<std::size_t>(i)]; }
    std::span<const double> probs() const { return prob_; }
    std::span<const double> log_probs() const { return logp_; }

    /// pi_i <- pi_i * exp(loglik_i), renormalized with max subtraction.
    void apply_loglik(std::span<const double> loglik) {
        if (loglik.size() != logp_.size()) throw std::invalid_argument("posterior: size mismatch");
        for (std::size_t i = 0; i < logp_.size(); ++i) logp_[i] += loglik[i];
        normalize();
    }

    int argmax() const {
        return static_cast<int>(std::max_element(prob_.begin(), prob_.end()) - prob_.begin());
    }

    /// 1 - max_i pi_i, summed over the other entries.
    double residual_mass() const {
        const int m = argmax();
        double s = 0.0;
        for (int i = 0; i < size(); ++i)
            if (i != m) s += prob_[static_cast<std::size_t>(i)];
        return s;
    }

    /// ln(1 - max_i pi_i) from the log weights; finite far below the double range of pi.
    double log_residual_mass() const {
        const int m = argmax_log();
        double mx = -kInf;
        for (int i = 0; i < size(); ++i)
            if (i != m) mx = std::max(mx, logp_[static_cast<std::size_t>(i)]);
        if (!std::isfinite(mx)) return -kInf;
        double s = 0.0;
        for (int i = 0; i < size(); ++i)
            if (i != m) s += std::exp(logp_[static_cast<std::size_t>(i)] - mx);
        return mx + std::log(s);
    }

private:
    int argmax_log() const {
        return static_cast<int>(std::max_element(logp_.begin(), logp_.end()) - logp_.begin());
    }

    void normalize() {
        const double mx = *std::max_element(logp_.begin(), logp_.end());
        if (!std::isfinite(mx)) throw std::runtime_error("posterior: degenerate update (all zero)");
        double s = 0.0;
        for (double v : logp_) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        prob_.resize(logp_.size());
        for (std::size_t i = 0; i < logp_.size(); ++i) {
            logp_[i] -= lse;
            prob_[i] = std::exp(logp_[i]);
        }
    }

    std::vector<double> prob_;
    std::vector<double> logp_;
};

inline Posterior init_uniform(int resolution) { return Posterior::uniform(resolution); }

inline double mass(std::span<const double> pi, const Support& s) {
    if (s.count == 0) return 0.0;
    if (s.first < 0 || s.last() >= static_cast<int>(pi.size()))
        throw std::out_of_range("mass: support outside grid");
    double m = 0.0;
    for (int i = s.first; i <= s.last(); ++i) m += pi[static_cast<std::size_t>(i)];
    return m;
}

inline double mass(const Posterior& pi, const Support& s) { return mass(pi.probs(), s); }

/// Full measurement: pi_i *= CN(y; alpha_hat sqrt(P) r_i, sigma^2), r_i = w^H a(theta_i).
inline void update_full(Posterior& pi, cplx y, std::span<const cplx> response, cplx alpha_hat,
                        double P, double noise_var) {
    if (static_cast<int>(response.size()) != pi.size())
        throw std::invalid_argument("update_full: response size mismatch");
    const cplx scale = alpha_hat * std::sqrt(P);
    std::vector<double> ll(response.size());
    for (std::size_t i = 0; i < response.size(); ++i)
        ll[i] = -std::norm(y - scale * response[i]) / noise_var;
    pi.apply_loglik(ll);
}

inline void update_full(Posterior& pi, cplx y, std::span<const cplx> w, cplx alpha_hat, double P,
                        double noise_var, const AngleGrid& grid, const ArrayGeometry& geo) {
    if (std::abs(std::sqrt(norm2(w)) - 1.0) > 1e-9)
        throw std::invalid_argument("update_full: w must have unit norm");
    const auto r = grid_response(w, geo, grid);
    update_full(pi, y, r, alpha_hat, P, noise_var);
}

/// 1-bit: P(z=1 | i) = 1 - p_in inside the beam, p_out outside.
inline void update_onebit(Posterior& pi, int z, std::span<const std::uint8_t> in_beam, double p_in,
                          double p_out) {
    if (static_cast<int>(in_beam.size()) != pi.size())
        throw std::invalid_argument("update_onebit: mask size mismatch");
    const double l_in = std::log(z ? 1.0 - p_in : p_in);
    const double l_out = std::log(z ? p_out : 1.0 - p_out);
    std::vector<double> ll(in_beam.size());
    for (std::size_t i = 0; i < in_beam.size(); ++i) ll[i] = in_beam[i] ? l_in : l_out;
    pi.apply_loglik(ll);
}

inline void update_onebit(Posterior& pi, int z, const Support& support, double p_in, double p_out) {
    if (support.count < 1) throw std::invalid_argument("update_onebit: empty support");
    update_onebit(pi, z, support_mask(pi.size(), support), p_in, p_out);
}

struct NestedPosterior {
    int level = 0;
    std::vector<double> pi;  // length 2^level
};

/// Aggregates contiguous blocks of size 2^(S-l).
inline NestedPosterior nest(std::span<const double> pi, int level) {
    const int m = static_cast<int>(pi.size());
    if (level < 0 || (1 << level) > m) throw std::out_of_range("nest: level exceeds resolution");
    const int block = m >> level;
    NestedPosterior n{level, std::vector<double>(static_cast<std::size_t>(1) << level, 0.0)};
    for (int i = 0; i < m; ++i) n.pi[static_cast<std::size_t>(i / block)] += pi[static_cast<std::size_t>(i)];
    return n;
}

inline NestedPosterior nest(const Posterior& pi, int level) { return nest(pi.probs(), level); }

namespace detail {

// out[i] = sum_{j != i} v[j], without cancellation.
inline std::vector<double> leave_one_out(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<double> prefix(n + 1, 0.0), suffix(n + 1, 0.0), out(n);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + v[i];
    for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + v[i];
    for (std::size_t i = 0; i < n; ++i) out[i] = prefix[i] + suffix[i + 1];
    return out;
}

}  // namespace detail

/// U = sum pi log(pi / (1 - pi)); +inf if some entry carries all the mass.
inline double avg_loglik(std::span<const double> pi) {
    const auto rest = detail::leave_one_out(pi);
    double u = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        if (pi[i] <= 0.0) continue;
        if (rest[i] <= 0.0) return kInf;
        u += pi[i] * (std::log(pi[i]) - std::log(rest[i]));
    }
    return u;
}

inline double avg_loglik(const Posterior& pi) {
    const auto p = pi.probs();
    const auto lp = pi.log_probs();
    const auto rest = detail::leave_one_out(p);
    double u = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (rest[i] <= 0.0) return kInf;
        u += p[i] * (lp[i] - std::log(rest[i]));
    }
    return u;
}

inline double avg_loglik(const NestedPosterior& n) { return avg_loglik(std::span<const double>(n.pi)); }

/// Observation law per hypothesis over a finite alphabet, row-major
/// (hypotheses x outcomes).
struct ObservationLikelihood {
    int outcomes = 2;
    std::vector<double> prob;

    int hypotheses() const { return static_cast<int>(prob.size()) / outcomes; }
    double operator()(int i, int y) const {
        return prob[static_cast<std::size_t>(i) * outcomes + static_cast<std::size_t>(y)];
    }
    std::span<const double> row(int i) const {
        return std::span<const double>(prob).subspan(static_cast<std::size_t>(i) * outcomes,
                                                     static_cast<std::size_t>(outcomes));
    }
};

/// Bernoulli conditionals of the 1-bit model for a beam covering `in_beam`.
inline ObservationLikelihood onebit_conditionals(std::span<const std::uint8_t> in_beam, double p_in,
                                                 double p_out) {
    ObservationLikelihood c{2, std::vector<double>(in_beam.size() * 2)};
    for (std::size_t i = 0; i < in_beam.size(); ++i) {
        const double one = in_beam[i] ? 1.0 - p_in : p_out;
        c.prob[2 * i] = 1.0 - one;
        c.prob[2 * i + 1] = one;
    }
    return c;
}

inline ObservationLikelihood onebit_conditionals(int size, const Support& s, double p) {
    return onebit_conditionals(support_mask(size, s), p, p);
}

/// Posterior after observing outcome y under the given conditionals.
inline Posterior bayes_update(const Posterior& pi, const ObservationLikelihood& c, int y) {
    std::vector<double> ll(static_cast<std::size_t>(pi.size()));
    for (int i = 0; i < pi.size(); ++i) {
        const double f = c(i, y);
        ll[static_cast<std::size_t>(i)] = f > 0.0 ? std::log(f) : -kInf;
    }
    Posterior out = pi;
    out.apply_loglik(ll);
    return out;
}

/// Predictive probability of outcome y.
inline double predictive(std::span<const double> pi, const ObservationLikelihood& c, int y) {
    double s = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) s += pi[i] * c(static_cast<int>(i), y);
    return s;
}

/// EJS = sum_i pi_i D(P_i || P_{!=i}); +inf when some pi_i = 1 (leave-one-out mixture undefined).
inline double ejs(std::span<const double> pi, const ObservationLikelihood& c) {
    if (c.hypotheses() != static_cast<int>(pi.size()))
        throw std::invalid_argument("ejs: conditionals do not match posterior");
    const auto rest = detail::leave_one_out(pi);
    std::vector<std::vector<double>> others(static_cast<std::size_t>(c.outcomes));
    for (int y = 0; y < c.outcomes; ++y) {
        std::vector<double> wy(pi.size());
        for (std::size_t i = 0; i < pi.size(); ++i) wy[i] = pi[i] * c(static_cast<int>(i), y);
        others[static_cast<std::size_t>(y)] = detail::leave_one_out(wy);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        if (pi[i] <= 0.0) continue;
        if (rest[i] <= 0.0) return kInf;
        double d = 0.0;
        for (int y = 0; y < c.outcomes; ++y) {
            const double p = c(static_cast<int>(i), y);
            if (p <= 0.0) continue;
            const double q = others[static_cast<std::size_t>(y)][i] / rest[i];
            if (q <= 0.0) return kInf;
            d += p * std::log(p / q);
        }
        total += pi[i] * d;
    }
    return total;
}

/// JS = sum_i pi_i D(P_i || P_y): the mutual information between hypothesis and outcome.
inline double js(std::span<const double> pi, const ObservationLikelihood& c) {
    if (c.hypotheses() != static_cast<int>(pi.size()))
        throw std::invalid_argument("js: conditionals do not match posterior");
    std::vector<double> py(static_cast<std::size_t>(c.outcomes));
    for (int y = 0; y < c.outcomes; ++y) py[static_cast<std::size_t>(y)] = predictive(pi, c, y);
    double total = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        if (pi[i] <= 0.0) continue;
        total += pi[i] * kl_divergence(c.row(static_cast<int>(i)), py);
    }
    return total;
}

/// Observation law of each level-l bin: the posterior-weighted mixture of its members.
inline ObservationLikelihood nested_conditionals(std::span<const double> pi,
                                                 const ObservationLikelihood& c, int level) {
    const int m = static_cast<int>(pi.size());
    const int bins = 1 << level;
    const int block = m / bins;
    ObservationLikelihood out{c.outcomes,
                              std::vector<double>(static_cast<std::size_t>(bins) * c.outcomes, 0.0)};
    for (int q = 0; q < bins; ++q) {
        double w = 0.0;
        for (int i = q * block; i < (q + 1) * block; ++i) w += pi[static_cast<std::size_t>(i)];
        for (int y = 0; y < c.outcomes; ++y) {
            double s = 0.0;
            for (int i = q * block; i < (q + 1) * block; ++i)
                s += (w > 0.0 ? pi[static_cast<std::size_t>(i)] / w : 1.0 / block) * c(i, y);
            out.prob[static_cast<std::size_t>(q) * c.outcomes + static_cast<std::size_t>(y)] = s;
        }
    }
    return out;
}

/// EJS of the level-l nested posterior.
inline double nested_ejs(std::span<const double> pi, const ObservationLikelihood& c, int level) {
    const auto n = nest(pi, level);
    return ejs(n.pi, nested_conditionals(pi, c, level));
}

}  // namespace hiepm
