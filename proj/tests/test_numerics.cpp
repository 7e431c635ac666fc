#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "hiepm/numerics.hpp"

using namespace hiepm;

namespace {

double integrate_pdf(double a, double b, const RicianParams& r) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double x) { return rice_pdf(x, r); }, a, b, 15, 1e-14);
}

// I(q;p) straight from the joint law, as sum p(x,y) log p(x,y)/(p(x)p(y)).
double mutual_info_joint(double q, double p) {
    const double px[2] = {1.0 - q, q};
    double joint[2][2];
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y) joint[x][y] = px[x] * (x == y ? 1.0 - p : p);
    const double py[2] = {joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]};
    double i = 0.0;
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y)
            if (joint[x][y] > 0.0) i += joint[x][y] * std::log(joint[x][y] / (px[x] * py[y]));
    return i;
}

}  // namespace

TEST(Bessel, ScaledI0MatchesStdLibrary) {
    for (double x : {0.0, 1e-3, 0.5, 2.0, 10.0, 29.9, 30.1, 45.0, 200.0}) {
        const double ref = std::cyl_bessel_i(0.0, x) * std::exp(-x);
        EXPECT_NEAR(bessel_i0_scaled(x), ref, 1e-13 * ref) << x;
    }
    // beyond the range where I0 itself overflows: leading asymptotic term
    const double x = 5000.0;
    EXPECT_NEAR(bessel_i0_scaled(x), 1.0 / std::sqrt(2.0 * std::numbers::pi * x) * (1.0 + 1.0 / (8.0 * x)), 1e-10);
}

TEST(Rice, PdfIntegratesToOne) {
    for (RicianParams r : {RicianParams{0.0, 1.0}, RicianParams{3.0, 0.7}, RicianParams{40.0, 0.5}}) {
        const double hi = r.nu + 40.0 * r.s;
        EXPECT_NEAR(integrate_pdf(0.0, hi, r), 1.0, 1e-10);
    }
}

TEST(Rice, CdfMatchesQuadratureOfPdf) {
    const RicianParams r{2.5, 0.9};
    for (double x : {0.1, 0.8, 1.5, 2.5, 3.3, 5.0}) {
        EXPECT_NEAR(rice_cdf(x, r), integrate_pdf(0.0, x, r), 1e-11) << x;
        EXPECT_NEAR(rice_ccdf(x, r), integrate_pdf(x, r.nu + 40.0 * r.s, r), 1e-11) << x;
    }
}

TEST(Rice, RayleighClosedForm) {
    const RicianParams r{0.0, 1.3};
    for (double x : {0.2, 1.0, 4.0}) {
        EXPECT_NEAR(rice_cdf(x, r), 1.0 - std::exp(-x * x / (2 * 1.69)), 1e-15);
        EXPECT_NEAR(marcum_q1(0.0, x), std::exp(-x * x / 2.0), 1e-15);
    }
}

TEST(Rice, TailsAreComplementary) {
    const RicianParams r{6.0, 1.0};
    for (double x : {1.0, 5.0, 6.0, 9.0}) EXPECT_NEAR(rice_cdf(x, r) + rice_ccdf(x, r), 1.0, 1e-14);
}

TEST(Rice, RejectsBadArguments) {
    EXPECT_THROW(rice_pdf(-1.0, {}), std::domain_error);
    EXPECT_THROW(rice_cdf(1.0, {1.0, 0.0}), std::domain_error);
    EXPECT_THROW(rice_ccdf(1.0, {-1.0, 1.0}), std::domain_error);
}

TEST(Entropy, KnownValues) {
    EXPECT_NEAR(binary_entropy(0.5), std::numbers::ln2, 1e-15);
    EXPECT_EQ(binary_entropy(0.0), 0.0);
    EXPECT_NEAR(bsc_mutual_info(0.5, 0.0), std::numbers::ln2, 1e-15);
    EXPECT_NEAR(bsc_mutual_info(0.3, 0.5), 0.0, 1e-15);
    // H(1/3) = ln 3 - (2/3) ln 2
    EXPECT_NEAR(bsc_mutual_info(1.0 / 3.0, 0.0), std::log(3.0) - 2.0 / 3.0 * std::numbers::ln2, 1e-15);
}

TEST(Entropy, MutualInfoMatchesJointLaw) {
    for (double q : {0.1, 1.0 / 3.0, 0.5, 0.8})
        for (double p : {0.01, 0.1, 0.25, 0.45}) {
            EXPECT_NEAR(bsc_mutual_info(q, p), mutual_info_joint(q, p), 1e-14);
            EXPECT_NEAR(bsc_mutual_info(BernoulliPair{p, q}), mutual_info_joint(q, p), 1e-14);
        }
}

TEST(Divergence, C1AndBernoulliKl) {
    // C1(0.1) = 0.8 ln 9
    EXPECT_NEAR(c1_exponent(0.1), 0.8 * std::log(9.0), 1e-15);
    EXPECT_NEAR(c1_exponent(0.1), 1.7577796618689758, 1e-14);
    EXPECT_NEAR(bernoulli_kl(0.1, 0.9), c1_exponent(0.1), 1e-15);
    EXPECT_EQ(bernoulli_kl(0.3, 0.3), 0.0);
    EXPECT_EQ(bernoulli_kl(0.3, 0.0), kInf);
    EXPECT_THROW(c1_exponent(0.0), std::domain_error);
}

TEST(Divergence, GeneralKl) {
    const std::vector<double> P{0.2, 0.3, 0.5}, Q{0.4, 0.4, 0.2};
    const double ref = 0.2 * std::log(0.5) + 0.3 * std::log(0.75) + 0.5 * std::log(2.5);
    EXPECT_NEAR(kl_divergence(P, Q), ref, 1e-15);
    EXPECT_EQ(kl_divergence(P, P), 0.0);
    const std::vector<double> Z{0.5, 0.5, 0.0};
    EXPECT_EQ(kl_divergence(P, Z), kInf);
    EXPECT_THROW(kl_divergence(P, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(RootSolver, FindsSqrtTwo) {
    const double r = solve_root_monotone([](double x) { return x * x - 2.0; }, 0.0, 2.0, 0.0);
    EXPECT_NEAR(r, std::numbers::sqrt2, 4e-16);
    EXPECT_THROW(solve_root_monotone([](double x) { return x + 1.0; }, 0.0, 1.0, 1e-12), std::domain_error);
}

TEST(Gallager, ZeroAtRhoZeroAndSlopeIsMutualInfo) {
    for (double q : {0.1, 0.3, 0.5})
        for (double p : {0.05, 0.2}) {
            EXPECT_NEAR(gallager_e0(0.0, q, p), 0.0, 1e-15);
            const double h = 1e-6;
            const double slope = (gallager_e0(h, q, p) - gallager_e0(-h, q, p)) / (2 * h);
            EXPECT_NEAR(slope, bsc_mutual_info(q, p), 1e-8);
        }
}

TEST(Gallager, RandomCodingBoundRange) {
    EXPECT_DOUBLE_EQ(random_coding_bound(28, 128, [](double) { return 0.5; }), 1.0);
    const double a = random_coding_bound(28, 128, [](double) { return 0.05; });
    const double b = random_coding_bound(28, 128, [](double) { return 0.01; });
    EXPECT_GT(a, 0.0);
    EXPECT_LT(b, a);
    EXPECT_LE(a, 1.0);
    EXPECT_THROW(random_coding_bound(0, 128, [](double) { return 0.1; }), std::invalid_argument);
}
