#include <doctest.h>

#include <cmath>
#include <numbers>

#include "billiard/classical.hpp"
#include "billiard/errors.hpp"
#include "billiard/rng.hpp"

using namespace billiard;
using std::numbers::pi;

TEST_CASE("circle diameters and chords") {
    const BilliardShape circle(0.0);
    {
        const auto r = bounce_step(circle, {0.0, 0.0});
        CHECK(r.next.s == doctest::Approx(pi).epsilon(1e-12));
        CHECK(std::abs(r.next.p) < 1e-12);
        CHECK(r.chord == doctest::Approx(2.0).epsilon(1e-12));
    }
    {
        // p = sin(pi/4): arc advance pi - 2 arcsin p = pi/2, p conserved
        const double p = std::sin(pi / 4.0);
        const auto r = bounce_step(circle, {0.0, p});
        CHECK(r.next.s == doctest::Approx(pi / 2.0).epsilon(1e-12));
        CHECK(r.next.p == doctest::Approx(p).epsilon(1e-12));
    }
}

TEST_CASE("reflection-symmetric orbit along the x-axis") {
    const BilliardShape shape(0.15);
    const auto r = bounce_step(shape, {0.0, 0.0});
    CHECK(r.next.s == doctest::Approx(0.5 * shape.perimeter()).epsilon(1e-12));
    CHECK(std::abs(r.next.p) < 1e-12);
}

TEST_CASE("quartic and reference bounce agree on random states") {
    for (double lambda : {0.08, 0.15, 0.25, 0.42}) {
        const BilliardShape shape(lambda);
        Rng rng(11);
        for (int i = 0; i < 400; ++i) {
            const SosState st{rng.uniform(0.0, shape.perimeter()), rng.uniform(-0.999, 0.999)};
            const auto fast = bounce_step(shape, st);
            const auto ref = bounce_step_reference(shape, st);
            CHECK(std::abs(fast.next.s - ref.next.s) < 1e-9);
            CHECK(std::abs(fast.next.p - ref.next.p) < 1e-9);
            CHECK(fast.chord == doctest::Approx(ref.chord).epsilon(1e-9));
        }
    }
}

TEST_CASE("time reversal") {
    const BilliardShape shape(0.2);
    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
        const SosState st{rng.uniform(0.0, shape.perimeter()), rng.uniform(-0.99, 0.99)};
        const auto fwd = bounce_step(shape, st);
        const auto back = bounce_step(shape, {fwd.next.s, -fwd.next.p});
        CHECK(std::abs(back.next.s - st.s) < 1e-9);
        CHECK(std::abs(back.next.p - (-st.p)) < 1e-9);
    }
}

TEST_CASE("circle conserves p along orbits") {
    const BilliardShape circle(0.0);
    SosState st{1.0, 0.37};
    for (int i = 0; i < 5000; ++i) {
        st = bounce_step(circle, st).next;
        CHECK(std::abs(st.p - 0.37) < 1e-12);
    }
}

TEST_CASE("orbits map to orbits under (s, p) -> (L - s, -p)") {
    const BilliardShape shape(0.18);
    const double L = shape.perimeter();
    Rng rng(23);
    for (int i = 0; i < 100; ++i) {
        SosState a{rng.uniform(0.0, L), rng.uniform(-0.95, 0.95)};
        SosState b{shape.wrap(L - a.s), -a.p};
        for (int n = 0; n < 20; ++n) {
            a = bounce_step(shape, a).next;
            b = bounce_step(shape, b).next;
        }
        CHECK(std::abs(shape.wrap(L - a.s) - b.s) < 1e-8);
        CHECK(std::abs(-a.p - b.p) < 1e-8);
    }
}

TEST_CASE("ensemble mean free path obeys Santalo's formula") {
    for (double lambda : {0.15, 0.25}) {
        const BilliardShape shape(lambda);
        Rng rng(77);
        double mean = 0.0;
        constexpr int n = 20000;
        for (int i = 0; i < n; ++i) {
            const SosState st{rng.uniform(0.0, shape.perimeter()), rng.uniform(-1.0, 1.0)};
            mean += bounce_step(shape, st).chord;
        }
        mean /= n;
        const double santalo = pi * shape.area() / shape.perimeter();
        CHECK(std::abs(mean - santalo) / santalo < 0.01);
    }
}

TEST_CASE("tangential states cannot advance") {
    const BilliardShape shape(0.15);
    CHECK_THROWS_AS((void)bounce_step(shape, {0.3, 1.0}), NumericalError);
}

TEST_CASE("chaos grid rejects the integrable circle") {
    const BilliardShape circle(0.0);
    CHECK_THROWS_WITH_AS(
        (void)build_chaos_grid(circle, 1000000), doctest::Contains("seed not chaotic"),
        NumericalError);
}

TEST_CASE("chaos grid: lambda = 0.25 is almost fully chaotic") {
    const BilliardShape shape(0.25);
    // short orbit for test runtime; the pipeline default of 1e8 collisions
    // reaches the converged flag (growth < 0.1% over the last decade)
    const ChaosGrid grid = build_chaos_grid(shape, 20000000, std::nullopt, 1, 0);
    CHECK(grid.n_chaotic > 0.90 * 160000);
    CHECK(grid.growth_last_decade < 0.02);

    const RhoEstimate rho = estimate_rho_r(shape, grid, 1024 + 1000, 1, 0, 4000);
    CHECK(rho.rho_r < 0.05);
}

TEST_CASE("invariant measure: chaotic orbit visits chaotic cells uniformly") {
    const BilliardShape shape(0.25);
    const ChaosGrid grid = build_chaos_grid(shape, 10000000, std::nullopt, 1, 0);
    // histogram a fresh orbit over the chaotic cells; under the invariant
    // measure ds dp each cell of equal area gets an equal share
    SosState st{0.13 * shape.perimeter(), 0.18};
    for (int i = 0; i < 1000; ++i) st = bounce_step(shape, st).next;  // settle into the sea
    constexpr long n_hits = 4000000;
    std::vector<long> hits(ChaosGrid::kCells * ChaosGrid::kCells, 0);
    for (long i = 0; i < n_hits; ++i) {
        st = bounce_step(shape, st).next;
        const auto [iq, jp] = ChaosGrid::cell_of(shape, st.s, st.p);
        ++hits[iq * ChaosGrid::kCells + jp];
    }
    // multinomial fluctuation test at 4 sigma on a coarse 16x16 blocking
    // (single cells are too sparsely filled for a per-cell bound)
    constexpr int kBlock = 25;  // 400/16
    const double L = shape.perimeter();
    long total = 0;
    std::vector<long> block_hits(16 * 16, 0), block_cells(16 * 16, 0);
    for (int iq = 0; iq < ChaosGrid::kCells; ++iq) {
        for (int jp = 0; jp < ChaosGrid::kCells; ++jp) {
            if (!grid.visited[iq * ChaosGrid::kCells + jp]) continue;
            const int b = (iq / kBlock) * 16 + jp / kBlock;
            block_hits[b] += hits[iq * ChaosGrid::kCells + jp];
            block_cells[b] += 1;
            total += hits[iq * ChaosGrid::kCells + jp];
        }
    }
    (void)L;
    int violations = 0;
    int tested = 0;
    for (int b = 0; b < 256; ++b) {
        if (block_cells[b] < kBlock * kBlock / 2) continue;  // skip edge blocks
        const double expected =
            static_cast<double>(total) * block_cells[b] / grid.n_chaotic;
        const double sigma = std::sqrt(expected);
        ++tested;
        if (std::abs(block_hits[b] - expected) > 4.0 * sigma) ++violations;
    }
    CHECK(tested > 100);
    // 4-sigma outliers should be essentially absent; allow a stray pair of
    // blocks near sticky islands
    CHECK(violations <= tested / 50);
}

TEST_CASE("rho_r = 1 when no chaotic component exists") {
    const BilliardShape circle(0.0);
    ChaosGrid empty;
    empty.visited.assign(ChaosGrid::kCells * ChaosGrid::kCells, 0);
    empty.n_chaotic = 0;
    const RhoEstimate rho = estimate_rho_r(circle, empty, 1000, 1, 0, 200);
    CHECK(rho.rho_r == doctest::Approx(1.0));
}

TEST_CASE("rho_r estimator rejects tiny sample counts") {
    const BilliardShape shape(0.25);
    ChaosGrid dummy;
    dummy.visited.assign(ChaosGrid::kCells * ChaosGrid::kCells, 1);
    dummy.n_chaotic = 160000;
    CHECK_THROWS_AS((void)estimate_rho_r(shape, dummy, 999), ConfigError);
}

TEST_CASE("transport saturates quickly in the strongly chaotic billiard") {
    const BilliardShape shape(0.25);
    const ChaosGrid grid = build_chaos_grid(shape, 5000000, std::nullopt, 1, 0);
    const TransportResult tr = transport_time(shape, grid, 10000, 10000, 1, 0);
    CHECK(tr.saturated);
    // order of magnitude 1e2 collisions
    CHECK(tr.transport_collisions >= 33);
    CHECK(tr.transport_collisions <= 300);
    // <p^2> trend: nondecreasing within noise
    for (size_t i = 1; i < tr.p2_curve.size(); ++i) {
        CHECK(tr.p2_curve[i].second > tr.p2_curve[i - 1].second - 0.05 * tr.saturation);
    }

    // serial reference reproduces the parallel curve exactly
    const TransportResult ts = transport_time_serial(shape, grid, 10000, 10000, 1);
    CHECK(ts.p2_curve == tr.p2_curve);
}

TEST_CASE("alpha parameter and the localization condition") {
    {
        const auto a = alpha_parameter(2000.0, 1e5);
        CHECK(a.alpha == doctest::Approx(0.04).epsilon(1e-12));
        CHECK(a.localization_expected);
    }
    {
        const auto a = alpha_parameter(2000.0, 100.0);
        CHECK(a.alpha == doctest::Approx(40.0).epsilon(1e-12));
        CHECK(!a.localization_expected);
    }
    {
        const auto a = alpha_parameter(50.0, 100.0);
        CHECK(a.alpha == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(a.localization_expected);  // boundary case alpha = 1
    }
    CHECK_THROWS_AS((void)alpha_parameter(-1.0, 10.0), ConfigError);
}
