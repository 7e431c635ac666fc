#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hiepm/bounds.hpp"
#include "hiepm/sim.hpp"

using namespace hiepm;

namespace {

const double kWidth = 2 * std::numbers::pi / 3;

double h2(double p) { return p <= 0 || p >= 1 ? 0.0 : -p * std::log(p) - (1 - p) * std::log(1 - p); }

double kl2(double a, double b) { return a * std::log(a / b) + (1 - a) * std::log((1 - a) / (1 - b)); }

}  // namespace

TEST(K0, DirectEvaluation) {
    // p1 = 0.1: output law of BSC(0.1) driven by Bern(1/3) puts 0.9/3 + 0.2/3 on one
    const double p = 0.1;
    const double y1 = 0.9 / 3 + 0.2 / 3;
    const double info = h2(y1) - h2(p);
    const double drift = 2.0 / 3.0 * kl2((1 + p) / 3, p);
    EXPECT_NEAR(compute_K0(p), std::min(info, drift), 1e-14);
    EXPECT_NEAR(compute_K0(0.5), 0.0, 1e-15);
    EXPECT_LE(compute_K0(0.2), bsc_mutual_info(1.0 / 3.0, 0.2) + 1e-15);
    EXPECT_THROW(compute_K0(0.7), std::domain_error);
}

TEST(Profile, IdealLevelsMonotoneAndLimits) {
    for (double snr : {-15.0, -5.0, 0.0, 10.0}) {
        const auto prof = ideal_level_profile(kWidth, 7, snr_to_power(snr), 1.0);
        for (int l = 2; l <= 7; ++l) EXPECT_LT(prof.at(l), prof.at(l - 1)) << snr << " level " << l;
        // G doubles per level
        for (int l = 2; l <= 7; ++l) EXPECT_NEAR(prof.G[l - 1] / prof.G[l - 2], 2.0, 1e-12);
    }
    EXPECT_GT(ideal_level_profile(kWidth, 7, snr_to_power(-40), 1.0).at(1), 0.49);
    EXPECT_LT(ideal_level_profile(kWidth, 7, snr_to_power(20), 1.0).at(1), 1e-10);
}

TEST(Profile, CodebookMatchesClosedFormForIdealBeams) {
    const AngleGrid g(-std::numbers::pi / 3, std::numbers::pi / 3, 128);
    const auto a = level_profile(build_ideal(g), 1.3, 1.0);
    const auto b = ideal_level_profile(kWidth, 7, 1.3, 1.0);
    for (int l = 1; l <= 7; ++l) EXPECT_NEAR(a.at(l), b.at(l), 1e-15);
}

TEST(StoppingTimeBound, LevelsLPrimeAndHighSnrLimit) {
    EXPECT_EQ(levels_for(1.0 / 128), 7);
    EXPECT_THROW(levels_for(0.3), std::invalid_argument);
    // l' = floor(K0 ceil(ln ln 128) / ln 2 - 1) with ceil(ln ln 128) = 2
    for (double K0 : {0.1, 0.5, 0.636}) EXPECT_EQ(l_prime(K0, 1.0 / 128, 7), 1);
    EXPECT_EQ(l_prime(2.0, 1.0 / 128, 7), static_cast<int>(std::floor(4.0 / std::numbers::ln2 - 1.0)));

    const auto prof = ideal_level_profile(kWidth, 7, snr_to_power(40), 1.0);
    const auto r = stopping_time_bound(1.0 / 128, 0.01, prof);
    const double H13 = std::log(3.0) - 2.0 / 3.0 * std::numbers::ln2;
    EXPECT_NEAR(r.R_h, H13, 1e-9);
    EXPECT_NEAR(r.tau_bound, std::log(128.0) / H13, 1e-3);
}

TEST(StoppingTimeBound, BoundFallsWithSnr) {
    double prev = kInf;
    for (double snr = -15; snr <= 10; snr += 1) {
        const auto r = stopping_time_bound(1.0 / 128, 0.01, ideal_level_profile(kWidth, 7, snr_to_power(snr), 1.0));
        EXPECT_FALSE(r.degenerate);
        EXPECT_LT(r.tau_bound, prev) << snr;
        prev = r.tau_bound;
    }
}

TEST(StoppingTimeBound, RateAndExponentFromProfile) {
    const auto prof = ideal_level_profile(kWidth, 7, 1.0, 1.0);
    const auto r = stopping_time_bound(1.0 / 128, 1e-3, prof);
    EXPECT_NEAR(r.R_h, bsc_mutual_info(1.0 / 3.0, prof.at(r.l_prime)), 1e-15);
    EXPECT_NEAR(r.E_h, c1_exponent(prof.at(7)), 1e-15);
    EXPECT_NEAR(r.tau_bound, std::log(128.0) / r.R_h + std::log(1e3) / r.E_h, 1e-12);
}

TEST(FixedLengthBound, PreconditionAndMonotonicity) {
    const auto prof = ideal_level_profile(kWidth, 7, 1.0, 1.0);
    const auto r = stopping_time_bound(1.0 / 128, 0.5, prof);
    const double n_edge = std::log(128.0) / r.R_h;
    EXPECT_EQ(fixed_length_error_bound(n_edge * 0.99, 1.0 / 128, prof), 1.0);
    double prev = 1.0;
    for (double n = std::ceil(n_edge); n < 60; n += 1) {
        const double b = fixed_length_error_bound(n, 1.0 / 128, prof);
        EXPECT_LE(b, prev);
        prev = b;
        const double ref = std::exp(-n * r.E_h * (1 - std::log(128.0) / (n * r.R_h)));
        EXPECT_NEAR(b, ref, 1e-12 * std::max(ref, 1e-300));
    }
    // coin-flip leaves
    const auto flat = ideal_level_profile(kWidth, 7, snr_to_power(-60), 1.0);
    EXPECT_EQ(fixed_length_error_bound(28, 1.0 / 128, flat), 1.0);
}

TEST(Constants, PiTildeAndAzuma) {
    EXPECT_NEAR(pi_tilde(28, 0.01), 1.0 - 1.0 / 29.0, 1e-15);
    EXPECT_NEAR(pi_tilde(2, 1e-6), 1.0 - 1.0 / (1.0 + std::log(1e6)), 1e-15);
    const auto a = azuma_constants(0.3, 2);
    const double c = 4 * std::numbers::ln2 + 0.3;
    EXPECT_NEAR(a.e0, 0.09 / (2 * c * c), 1e-15);
    EXPECT_NEAR(a.k0, std::exp(0.3 * 3 * std::numbers::ln2 / (c * c)), 1e-15);
}

TEST(Acquisition, RateGrowsWithResolution) {
    const auto rows = acquisition_rate_check(kWidth, 7, 12, snr_to_power(10), 1.0, 0.01);
    ASSERT_EQ(rows.size(), 6u);
    const double H13 = std::log(3.0) - 2.0 / 3.0 * std::numbers::ln2;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_LE(rows[i].R_h, H13 + 1e-15);
        EXPECT_NEAR(rows[i].R_h_bits, rows[i].R_h / std::numbers::ln2, 1e-15);
        if (i > 0) {
            EXPECT_GE(rows[i].R_h, rows[i - 1].R_h - 1e-15);
        }
    }
}

TEST(DriftAudit, AuditOnShortRunsHasNoViolations) {
    AuditSettings as;
    as.snr_db = {-10.0, 0.0};
    as.sessions_per_point = 15;
    const auto rep = ejs_audit_run(AngleGrid(-std::numbers::pi / 3, std::numbers::pi / 3, 128), as);
    EXPECT_EQ(rep.sessions, 30);
    EXPECT_EQ(rep.drift.steps, 30 * 28);
    EXPECT_EQ(rep.drift.violations_drift, 0);
    EXPECT_EQ(rep.drift.violations_confident, 0);
    EXPECT_EQ(rep.js_violations, 0);
    EXPECT_LE(rep.max_identity_residual, 1e-10);
    EXPECT_GT(rep.steps, 0);
}

TEST(DriftAudit, RejectsTraceWithoutSnapshots) {
    SessionTrace tr;
    tr.steps.resize(1);
    DriftAuditReport rep;
    EXPECT_THROW(drift_audit(tr, ideal_level_profile(kWidth, 7, 1.0, 1.0), 28, 0.01, rep), std::invalid_argument);
}

TEST(RandomScanBound, RangeAndSnrTrend) {
    double prev = 1.0;
    for (double snr : {-10.0, -5.0, 0.0, 5.0}) {
        const double b = random_scan_bound(28, 128, snr_to_power(snr), 1.0);
        EXPECT_GE(b, 0.0);
        EXPECT_LE(b, prev + 1e-12);  // below capacity the exponent is 0 up to rounding
        prev = b;
    }
    // gain 1.5/q for a fraction q of the sector
    EXPECT_NEAR(ideal_scan_crossover(0.125, 1.0, 1.0), optimal_threshold(12.0, 0.0, 1.0, 1.0).crossover, 1e-15);
}
