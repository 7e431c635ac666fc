#pragma once

// Scalar special functions and information measures (all in nats).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/non_central_chi_squared.hpp>

namespace hiepm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct BernoulliPair {
    double p = 0.0;  // crossover, [0, 1/2]
    double q = 0.5;  // input bias, [0, 1]
};

/// Rice(nu, s): amplitude of a complex Gaussian with mean modulus nu and
/// per-component standard deviation s.
struct RicianParams {
    double nu = 0.0;
    double s = 1.0;
};

namespace detail {

inline void check_rice(double x, const RicianParams& r) {
    if (!(x >= 0.0)) throw std::domain_error("rice: amplitude must be >= 0");
    if (!(r.s > 0.0)) throw std::domain_error("rice: scale must be > 0");
    if (!(r.nu >= 0.0)) throw std::domain_error("rice: noncentrality must be >= 0");
}

// 0 log 0 := 0
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace detail

/// exp(-x) * I0(x) for x >= 0.
inline double bessel_i0_scaled(double x) {
    x = std::abs(x);
    if (x <= 30.0) {
        // power series, all terms positive
        const double q = 0.25 * x * x;
        double term = 1.0, sum = 1.0;
        for (int k = 1; k < 500; ++k) {
            term *= q / (static_cast<double>(k) * k);
            sum += term;
            if (term < sum * 1e-17) break;
        }
        return sum * std::exp(-x);
    }
    // Hankel asymptotic expansion, truncated at the smallest term
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 60; ++k) {
        const double next = term * (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * x);
        if (next >= term) break;
        term = next;
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum / std::sqrt(2.0 * std::numbers::pi * x);
}

inline double rice_pdf(double x, const RicianParams& r) {
    detail::check_rice(x, r);
    if (x == 0.0) return 0.0;
    const double s2 = r.s * r.s;
    const double z = x * r.nu / s2;
    // (x/s^2) exp(-(x^2+nu^2)/(2 s^2)) I0(z), with I0 folded into exp(z)
    const double d = x - r.nu;
    return (x / s2) * std::exp(-(d * d) / (2.0 * s2)) * bessel_i0_scaled(z);
}

/// 1 - Q1(nu/s, x/s). Upper tail available via rice_ccdf for accuracy.
inline double rice_cdf(double x, const RicianParams& r) {
    detail::check_rice(x, r);
    if (x == 0.0) return 0.0;
    const double b2 = (x / r.s) * (x / r.s);
    if (r.nu == 0.0) return -std::expm1(-0.5 * b2);
    const double lambda = (r.nu / r.s) * (r.nu / r.s);
    boost::math::non_central_chi_squared_distribution<double> dist(2.0, lambda);
    return boost::math::cdf(dist, b2);
}

/// Q1(nu/s, x/s).
inline double rice_ccdf(double x, const RicianParams& r) {
    detail::check_rice(x, r);
    if (x == 0.0) return 1.0;
    const double b2 = (x / r.s) * (x / r.s);
    if (r.nu == 0.0) return std::exp(-0.5 * b2);
    const double lambda = (r.nu / r.s) * (r.nu / r.s);
    boost::math::non_central_chi_squared_distribution<double> dist(2.0, lambda);
    return boost::math::cdf(boost::math::complement(dist, b2));
}

inline double marcum_q1(double a, double b) {
    if (a < 0.0 || b < 0.0) throw std::domain_error("marcum_q1: negative argument");
    return rice_ccdf(b, RicianParams{a, 1.0});
}

/// Binary entropy in nats.
inline double binary_entropy(double p) {
    if (p < 0.0 || p > 1.0) throw std::domain_error("binary_entropy: p outside [0,1]");
    return -detail::xlogx(p) - detail::xlogx(1.0 - p);
}

/// I(q; p): mutual information of a BSC(p) driven by Bern(q).
inline double bsc_mutual_info(double q, double p) {
    if (q < 0.0 || q > 1.0) throw std::domain_error("bsc_mutual_info: q outside [0,1]");
    if (p < 0.0 || p > 1.0) throw std::domain_error("bsc_mutual_info: p outside [0,1]");
    const double out = q * (1.0 - p) + (1.0 - q) * p;
    return std::max(0.0, binary_entropy(out) - binary_entropy(p));
}

inline double bsc_mutual_info(const BernoulliPair& bp) { return bsc_mutual_info(bp.q, bp.p); }

/// Binary KL divergence D(Bern(a) || Bern(b)).
inline double bernoulli_kl(double a, double b) {
    auto term = [](double x, double y) {
        if (x == 0.0) return 0.0;
        if (y == 0.0) return kInf;
        return x * std::log(x / y);
    };
    return term(a, b) + term(1.0 - a, 1.0 - b);
}

/// C1(p) = D(Bern(p) || Bern(1-p)).
inline double c1_exponent(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("c1_exponent: p must lie in (0,1)");
    return (1.0 - 2.0 * p) * std::log((1.0 - p) / p);
}

/// Sum P log(P/Q); +inf when P is not absolutely continuous w.r.t. Q.
inline double kl_divergence(std::span<const double> P, std::span<const double> Q) {
    if (P.size() != Q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        if (P[i] <= 0.0) continue;
        if (Q[i] <= 0.0) return kInf;
        d += P[i] * std::log(P[i] / Q[i]);
    }
    return std::max(0.0, d);
}

/// Bracketing bisection. Returns x with |f(x)| <= tol or bracket width <= tol.
inline double solve_root_monotone(const std::function<double(double)>& f, double lo, double hi,
                                  double tol) {
    if (!(lo <= hi)) throw std::invalid_argument("solve_root_monotone: lo > hi");
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw std::domain_error("solve_root_monotone: no sign change on [" + std::to_string(lo) +
                                ", " + std::to_string(hi) + "]");
    for (int it = 0; it < 2000; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) return mid;  // bracket exhausted in double
        const double fm = f(mid);
        if (std::abs(fm) <= tol || (hi - lo) <= tol) return mid;
        if ((fm > 0.0) == (fhi > 0.0)) {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    return 0.5 * (lo + hi);
}

/// Gallager's E0(rho, q) for a BSC with crossover p_q and input bias q.
inline double gallager_e0(double rho, double q, double p_q) {
    const double e = 1.0 / (1.0 + rho);
    const double a = std::pow(p_q, e);
    const double b = std::pow(1.0 - p_q, e);
    const double t1 = std::pow(q * a + (1.0 - q) * b, 1.0 + rho);
    const double t2 = std::pow(q * b + (1.0 - q) * a, 1.0 + rho);
    return -std::log(t1 + t2);
}

/// min over q in {1..n/2}/n of exp(-tau * max_rho (E0(rho,q) - rho ln(n)/tau)), n = resolution.
/// Exponent and rate are both in nats.
inline double random_coding_bound(int tau, int resolution,
                                  const std::function<double(double)>& p_of_q,
                                  int rho_points = 1001) {
    if (tau < 1) throw std::invalid_argument("random_coding_bound: tau must be >= 1");
    if (resolution < 2) throw std::invalid_argument("random_coding_bound: resolution must be >= 2");
    const double rate = std::log(static_cast<double>(resolution)) / tau;
    double best = 1.0;
    for (int qi = 1; qi <= resolution / 2; ++qi) {
        const double q = static_cast<double>(qi) / resolution;
        const double p = p_of_q(q);
        double erc = 0.0;
        for (int r = 0; r < rho_points; ++r) {
            const double rho = static_cast<double>(r) / (rho_points - 1);
            erc = std::max(erc, gallager_e0(rho, q, p) - rho * rate);
        }
        best = std::min(best, std::exp(-tau * erc));
    }
    return std::clamp(best, 0.0, 1.0);
}

}  // namespace hiepm
