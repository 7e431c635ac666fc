#pragma once

// Uniform linear array, single-path channel, measurement synthesis and the
// 1-bit quantizer with its minimax threshold.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hiepm/numerics.hpp"
#include "hiepm/rng.hpp"

namespace hiepm {

using cplx = std::complex<double>;
using CVector = std::vector<cplx>;

struct ArrayGeometry {
    int num_antennas = 64;
    double spacing_over_wavelength = 0.5;

    void validate() const {
        if (num_antennas < 1) throw std::invalid_argument("array: num_antennas must be >= 1");
        if (!(spacing_over_wavelength > 0.0))
            throw std::invalid_argument("array: spacing must be > 0");
    }
};

inline bool is_power_of_two(long long n) { return n > 0 && (n & (n - 1)) == 0; }

/// Candidate AoAs theta_i = lo + i * (hi - lo) / resolution, i = 0..resolution-1.
class AngleGrid {
public:
    AngleGrid(double theta_lo, double theta_hi, int resolution)
        : lo_(theta_lo), hi_(theta_hi), resolution_(resolution) {
        if (!(theta_lo < theta_hi)) throw std::invalid_argument("grid: theta_lo must be < theta_hi");
        if (!is_power_of_two(resolution) || resolution < 2)
            throw std::invalid_argument("grid: resolution must be a power of two >= 2");
        levels_ = 0;
        while ((1 << levels_) < resolution) ++levels_;
    }

    double theta_lo() const { return lo_; }
    double theta_hi() const { return hi_; }
    int size() const { return resolution_; }
    int levels() const { return levels_; }
    double step() const { return (hi_ - lo_) / resolution_; }
    double width() const { return hi_ - lo_; }
    double operator[](int i) const { return lo_ + i * step(); }

private:
    double lo_, hi_;
    int resolution_;
    int levels_;
};

struct ChannelState {
    cplx alpha{1.0, 0.0};
    int aoa_index = 0;  // 0-based index into the grid
    double power = 1.0;
    double noise_var = 1.0;

    double raw_snr() const { return power / noise_var; }

    void validate(const AngleGrid& grid) const {
        if (!(power > 0.0)) throw std::invalid_argument("channel: P must be > 0");
        if (!(noise_var > 0.0)) throw std::invalid_argument("channel: noise variance must be > 0");
        if (aoa_index < 0 || aoa_index >= grid.size())
            throw std::invalid_argument("channel: aoa index outside grid");
    }
};

struct Observation {
    cplx raw{};
    std::optional<int> bit;  // set under the 1-bit model
};

/// a(phi)[n] = exp(j 2 pi (d/lambda) n sin(phi)).
inline CVector steering(const ArrayGeometry& geo, double phi) {
    CVector a(static_cast<std::size_t>(geo.num_antennas));
    const double k = 2.0 * std::numbers::pi * geo.spacing_over_wavelength * std::sin(phi);
    for (int n = 0; n < geo.num_antennas; ++n) a[n] = std::polar(1.0, k * n);
    return a;
}

/// w^H a
inline cplx inner(std::span<const cplx> w, std::span<const cplx> a) {
    if (w.size() != a.size()) throw std::invalid_argument("inner: size mismatch");
    cplx s{};
    for (std::size_t n = 0; n < w.size(); ++n) s += std::conj(w[n]) * a[n];
    return s;
}

inline double norm2(std::span<const cplx> w) {
    double s = 0.0;
    for (const auto& x : w) s += std::norm(x);
    return s;
}

/// |w^H a(phi)| for unit-norm w.
inline double beam_gain(std::span<const cplx> w, const ArrayGeometry& geo, double phi) {
    if (std::abs(std::sqrt(norm2(w)) - 1.0) > 1e-9)
        throw std::invalid_argument("beam_gain: w must have unit norm");
    const auto a = steering(geo, phi);
    return std::abs(inner(w, a));
}

/// Complex response w^H a(theta_i) over every grid point.
inline CVector grid_response(std::span<const cplx> w, const ArrayGeometry& geo,
                             const AngleGrid& grid) {
    CVector r(static_cast<std::size_t>(grid.size()));
    for (int i = 0; i < grid.size(); ++i) r[i] = inner(w, steering(geo, grid[i]));
    return r;
}

/// y = alpha sqrt(P) r + nu, r the beam response at the true AoA, nu ~ CN(0, sigma^2).
inline cplx measure_response(const ChannelState& ch, cplx response, CounterRng& rng) {
    return ch.alpha * std::sqrt(ch.power) * response + rng.complex_normal(ch.noise_var);
}

inline cplx measure(const ChannelState& ch, std::span<const cplx> w, const ArrayGeometry& geo,
                    const AngleGrid& grid, CounterRng& rng) {
    if (std::abs(std::sqrt(norm2(w)) - 1.0) > 1e-9)
        throw std::invalid_argument("measure: w must have unit norm");
    return measure_response(ch, inner(w, steering(geo, grid[ch.aoa_index])), rng);
}

/// 1{|y|^2 > v}, v a power threshold.
inline int onebit_quantize(cplx y, double v) {
    if (v < 0.0) throw std::invalid_argument("onebit_quantize: threshold must be >= 0");
    return std::norm(y) > v ? 1 : 0;
}

struct Threshold {
    double amplitude = 0.0;  // root of the balance equation on |y|
    double power = 0.0;      // amplitude^2, used by the quantizer
    double crossover = 0.5;  // common flip probability at the root
    double residual = 0.0;
};

/// Amplitude-domain Rician for |y| with power gain `gain2`.
inline RicianParams measurement_rice(double gain2, double P, double noise_var, double abs_alpha) {
    return RicianParams{std::sqrt(P * gain2) * abs_alpha, std::sqrt(noise_var / 2.0)};
}

/// Minimax 1-bit threshold: P(|y| < v | in-beam gain G) = P(|y| > v | out-of-beam gain g).
/// G, g are power gains.
inline Threshold optimal_threshold(double G, double g, double P, double noise_var,
                                   double abs_alpha = 1.0) {
    if (!(G > g) || g < 0.0)
        throw std::domain_error("optimal_threshold: in-beam gain must exceed out-of-beam gain");
    if (!(P > 0.0) || !(noise_var > 0.0))
        throw std::invalid_argument("optimal_threshold: P and noise variance must be > 0");
    const auto in = measurement_rice(G, P, noise_var, abs_alpha);
    const auto out = measurement_rice(g, P, noise_var, abs_alpha);
    // Balance in the log domain so that crossovers far below 1e-16 are still
    // located to relative precision; run until the bracket cannot shrink.
    double lo = 0.0, hi = in.nu + 60.0 * in.s;
    for (int it = 0; it < 4000; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double miss = rice_cdf(mid, in);
        const double fa = rice_ccdf(mid, out);
        if (miss == 0.0 && fa == 0.0) {  // both tails underflow: any point here balances
            lo = hi = mid;
            break;
        }
        if (miss == fa) {
            lo = hi = mid;
            break;
        }
        (miss < fa ? lo : hi) = mid;
    }
    Threshold t;
    t.amplitude = 0.5 * (lo + hi);
    t.power = t.amplitude * t.amplitude;
    const double miss = rice_cdf(t.amplitude, in);
    const double false_alarm = rice_ccdf(t.amplitude, out);
    t.residual = miss - false_alarm;
    t.crossover = 0.5 * (miss + false_alarm);
    return t;
}

}  // namespace hiepm
