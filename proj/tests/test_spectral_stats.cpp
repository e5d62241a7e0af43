#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "billiard/errors.hpp"
#include "billiard/rng.hpp"
#include "billiard/spectral_stats.hpp"
#include "oracles.hpp"

using namespace billiard;
using std::numbers::pi;

TEST_CASE("Brody limits: beta = 0 is Poisson, beta = 1 the Wigner surmise") {
    for (double s = 0.0; s <= 5.0; s += 0.01) {
        CHECK(std::abs(brody_pdf(s, 0.0) - std::exp(-s)) < 1e-12);
        CHECK(std::abs(brody_gap(s, 0.0) - std::exp(-s)) < 1e-10);
        CHECK(std::abs(brody_pdf(s, 1.0) - wigner_pdf(s)) < 1e-12);
        CHECK(std::abs(brody_gap(s, 1.0) - wigner_gap(s)) < 1e-10);
    }
}

TEST_CASE("E'' = P by finite differences for random (beta, rho_r)") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const double beta = rng.uniform(0.0, 1.0);
        const double rho_r = rng.uniform(0.0, 1.0);
        for (double s : {0.3, 0.7, 1.0, 1.9, 3.1}) {
            const double d2 = oracles::second_difference(
                [&](double x) { return brb_gap(x, beta, rho_r); }, s, 1e-4);
            CHECK(std::abs(d2 - brb_pdf(s, beta, rho_r)) < 1e-6);
        }
    }
}

TEST_CASE("Brody gap against double quadrature of the density") {
    // E(S) = integral_S^inf (y - S) P(y) dy
    const double e_oracle = oracles::integrate(
        [](double y) { return (y - 1.0) * brody_pdf(y, 0.45); }, 1.0, 50.0, 1e-12);
    CHECK(brody_gap(1.0, 0.45) == doctest::Approx(e_oracle).epsilon(1e-8));
}

TEST_CASE("BRB reductions at the parameter edges") {
    for (double s = 0.05; s < 5.0; s += 0.1) {
        CHECK(brb_pdf(s, 0.45, 0.0) == doctest::Approx(brody_pdf(s, 0.45)).epsilon(1e-12));
        CHECK(brb_pdf(s, 0.45, 1.0) == doctest::Approx(std::exp(-s)).epsilon(1e-12));
        CHECK(brb_gap(s, 0.7, 0.0) == doctest::Approx(brody_gap(s, 0.7)).epsilon(1e-12));
    }
}

TEST_CASE("BRB density at the paper operating point vs differenced gap product") {
    for (double s : {0.2, 0.5, 1.0, 1.7, 2.6}) {
        const double d2 = oracles::second_difference(
            [](double x) { return std::exp(-0.175 * x) * brody_gap(0.825 * x, 0.45); }, s, 1e-4);
        CHECK(std::abs(d2 - brb_pdf(s, 0.45, 0.175)) < 1e-6);
    }
}

TEST_CASE("model construction checks norm and mean; E is monotone with E(0) = 1") {
    for (auto family : {SpacingFamily::poisson, SpacingFamily::wigner, SpacingFamily::brody,
                        SpacingFamily::brb}) {
        const SpacingModel model(family, 0.45, 0.175);
        CHECK(model.gap(0.0) == doctest::Approx(1.0).epsilon(1e-12));
        double prev = 1.0;
        for (double s = 0.1; s < 8.0; s += 0.1) {
            const double e = model.gap(s);
            CHECK(e <= prev + 1e-14);
            prev = e;
        }
        // cdf consistency with the quadrature of pdf
        const double f_oracle = oracles::integrate(
            [&](double x) { return model.pdf(x); }, 0.0, 1.3, 1e-12);
        CHECK(model.cdf(1.3) == doctest::Approx(f_oracle).epsilon(1e-8));
    }
    CHECK_THROWS_AS(SpacingModel(SpacingFamily::brody, 1.4), ConfigError);
    CHECK_THROWS_AS((void)brb_pdf(1.0, 0.5, -0.1), ConfigError);
}

TEST_CASE("fit recovery from inverse-CDF samples") {
    // oracle sampler lives in test code and builds its own CDF from GSL
    for (double beta : {0.2, 0.45, 0.8}) {
        const auto sample = oracles::sample_brb(100000, beta, 0.175, 314159);
        const auto fit = fit_beta(sample, 0.175);
        CHECK(std::abs(fit.beta - beta) < 0.05);
    }
    {
        const auto sample = oracles::sample_brb(100000, 1.0, 0.0, 2718);
        const auto fit = fit_beta(sample, 0.0);
        CHECK(fit.beta > 0.98);
    }
    {
        const auto sample = oracles::sample_brb(100000, 0.0, 0.0, 577);
        const auto fit = fit_beta(sample, 0.0);
        CHECK(fit.beta < 0.03);
    }
}

TEST_CASE("fit_beta is monotone in the generating beta") {
    double prev = -1.0;
    for (double beta : {0.15, 0.35, 0.55, 0.75, 0.95}) {
        const auto sample = oracles::sample_brb(100000, beta, 0.175, 1234);
        const auto fit = fit_beta(sample, 0.175);
        CHECK(fit.beta > prev);
        prev = fit.beta;
    }
}

TEST_CASE("fit_beta input contracts") {
    std::vector<double> tiny(100, 1.0);
    CHECK_THROWS_AS((void)fit_beta(tiny, 0.1), ConfigError);
    std::vector<double> degenerate(2000, 1.0);
    CHECK_THROWS_AS((void)fit_beta(degenerate, 0.1), NumericalError);
}

TEST_CASE("unfolding enforces unit mean spacing") {
    const BilliardShape shape(0.15);
    // synthetic levels equally spaced in the Weyl coordinate unfold to S = 1
    std::vector<double> levels;
    const double n0 = weyl_count(shape, 100.0, true, Parity::odd);
    for (int i = 0; i < 200; ++i) {
        // invert N(k) = n0 + i by bisection
        double lo = 100.0, hi = 150.0;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (weyl_count(shape, mid, true, Parity::odd) < n0 + i ? lo : hi) = mid;
        }
        levels.push_back(0.5 * (lo + hi));
    }
    const auto unf = unfold(levels, shape, Parity::odd);
    for (double s : unf.spacings) CHECK(s == doctest::Approx(1.0).epsilon(1e-6));

    double mean = 0.0;
    for (double s : unf.spacings) mean += s;
    mean /= static_cast<double>(unf.spacings.size());
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-3));

    std::vector<double> bad = {1.0, 2.0, 1.5};
    CHECK_THROWS_AS((void)unfold(bad, shape, Parity::odd), ConfigError);
}

TEST_CASE("weyl count basics") {
    const BilliardShape disk(0.0);
    // leading term A k^2 / (4 pi) = 25 at k = 10 for the full disk
    const double lead = disk.area() * 100.0 / (4.0 * pi);
    CHECK(lead == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(weyl_count(disk, 0.0) == 0.0);
    CHECK(weyl_count(disk, 10.0) == doctest::Approx(25.0 - 2.0 * pi * 10.0 / (4.0 * pi)));

    // scale of the paper's statistics: ~1e6 levels below k = 2000 at lambda = 0.15
    const BilliardShape s15(0.15);
    const double lead15 = s15.area() * 2000.0 * 2000.0 / (4.0 * pi);
    CHECK(lead15 == doctest::Approx(1.0449e6).epsilon(1e-3));

    // parity-resolved counts sum to the full count
    for (double k : {50.0, 100.0}) {
        const double full = weyl_count(s15, k);
        const double split = weyl_count(s15, k, true, Parity::odd) +
                             weyl_count(s15, k, true, Parity::even);
        CHECK(full == doctest::Approx(split).epsilon(1e-12));
    }
}

TEST_CASE("Poisson histogram sanity from 1e6 samples") {
    Rng rng(17);
    std::vector<double> sample(1000000);
    for (double& s : sample) s = -std::log(1.0 - rng.uniform());
    const auto h = spacing_histogram(sample, 30);
    // bin contents match exp(-S) within 4 sigma per bin
    const auto n = static_cast<double>(sample.size());
    for (size_t b = 0; b < h.density.size(); ++b) {
        const double lo = h.edges[b], hi = h.edges[b + 1];
        const double prob = std::exp(-lo) - std::exp(-hi);
        const double expect = prob / (hi - lo);
        const double sigma = std::sqrt(std::max(prob * n, 1.0)) / (n * (hi - lo));
        CHECK(std::abs(h.density[b] - expect) <= 4.0 * sigma + 1e-12);
    }
    CHECK(h.ecdf_f.back() == doctest::Approx(1.0));

    const auto single = spacing_histogram(std::vector<double>{1.0}, 1);
    CHECK(single.density.size() == 1);
    CHECK(single.density[0] * single.edges[1] == doctest::Approx(1.0));
}
