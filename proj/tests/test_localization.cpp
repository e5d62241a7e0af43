#include <doctest.h>

#include <cmath>
#include <vector>

#include "billiard/errors.hpp"
#include "billiard/localization.hpp"
#include "billiard/rng.hpp"

using namespace billiard;

namespace {

constexpr size_t kCells = static_cast<size_t>(HusimiGrid::kN) * HusimiGrid::kN;

// chaos grid with the first n_chaotic cells marked chaotic
ChaosGrid synthetic_grid(long n_chaotic) {
    ChaosGrid g;
    g.visited.assign(kCells, 0);
    for (long c = 0; c < n_chaotic; ++c) g.visited[c] = 1;
    g.n_chaotic = n_chaotic;
    return g;
}

HusimiGrid uniform_on(const ChaosGrid& grid) {
    HusimiGrid h;
    h.h.assign(kCells, 0.0);
    for (size_t c = 0; c < kCells; ++c) {
        if (grid.visited[c]) h.h[c] = 1.0 / static_cast<double>(grid.n_chaotic);
    }
    h.sum_check = 1.0;
    return h;
}

HusimiGrid single_cell(size_t cell) {
    HusimiGrid h;
    h.h.assign(kCells, 0.0);
    h.h[cell] = 1.0;
    h.sum_check = 1.0;
    return h;
}

}  // namespace

TEST_CASE("overlap index at its extremes and for the uniform state") {
    const ChaosGrid grid = synthetic_grid(100000);
    {
        const auto c = overlap_index(uniform_on(grid), grid);
        CHECK(c.overlap_index == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(c.chaotic);
    }
    {
        const auto c = overlap_index(single_cell(150000), grid);  // regular cell
        CHECK(c.overlap_index == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(!c.chaotic);
    }
    {
        HusimiGrid h;
        h.h.assign(kCells, 1.0 / kCells);
        const auto c = overlap_index(h, grid);
        const double expect = (100000.0 - 60000.0) / 160000.0;
        CHECK(c.overlap_index == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("entropy measure attains its bounds") {
    const ChaosGrid grid = synthetic_grid(120000);
    {
        const std::vector<HusimiGrid> set{uniform_on(grid)};
        const auto em = entropy_measure(set, grid);
        CHECK(em.a == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(em.mean_entropy == doctest::Approx(std::log(120000.0)).epsilon(1e-9));
    }
    {
        const std::vector<HusimiGrid> set{single_cell(10)};
        const auto em = entropy_measure(set, grid);
        CHECK(em.mean_entropy == doctest::Approx(0.0));
        CHECK(em.a == doctest::Approx(1.0 / 120000.0).epsilon(1e-12));
    }
    {
        // two-cell equal split: I = log 2, A = 2/N_c
        HusimiGrid h;
        h.h.assign(kCells, 0.0);
        h.h[0] = h.h[1] = 0.5;
        const std::vector<HusimiGrid> set{h};
        const auto em = entropy_measure(set, grid);
        CHECK(em.mean_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(em.a == doctest::Approx(2.0 / 120000.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS((void)entropy_measure({}, grid), ConfigError);
}

TEST_CASE("correlation pairs: equality, disjoint supports, half overlap") {
    const ChaosGrid grid = synthetic_grid(100000);
    const auto u = uniform_on(grid);
    CHECK(correlation_pair(u, u) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK(correlation_pair(single_cell(0), single_cell(1)) == doctest::Approx(0.0));

    // H_m uniform on N_c cells, H_n uniform on half of them: C = 1/sqrt(2)
    HusimiGrid half;
    half.h.assign(kCells, 0.0);
    for (long c = 0; c < 50000; ++c) half.h[c] = 1.0 / 50000.0;
    CHECK(correlation_pair(half, u) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

    HusimiGrid null;
    null.h.assign(kCells, 0.0);
    CHECK_THROWS_AS((void)correlation_pair(null, u), NumericalError);
}

TEST_CASE("measure bounds hold exactly on random synthetic grids") {
    const ChaosGrid grid = synthetic_grid(100000);
    Rng rng(31337);
    std::vector<HusimiGrid> set;
    for (int trial = 0; trial < 50; ++trial) {
        HusimiGrid h;
        h.h.assign(kCells, 0.0);
        // random support inside the chaotic cells
        const int n_support = 1 + static_cast<int>(rng.uniform(0.0, 2000.0));
        double sum = 0.0;
        for (int i = 0; i < n_support; ++i) {
            const auto c = static_cast<size_t>(rng.uniform(0.0, 100000.0));
            const double w = rng.uniform();
            h.h[c] += w;
            sum += w;
        }
        for (double& v : h.h) v /= sum;
        set.push_back(std::move(h));
    }
    for (const auto& h : set) {
        const std::vector<HusimiGrid> one{h};
        const auto em = entropy_measure(one, grid);
        CHECK(em.a >= 1.0 / 100000.0 - 1e-15);
        CHECK(em.a <= 1.0 + 1e-12);
    }
    for (size_t i = 0; i + 1 < set.size(); i += 2) {
        const double c = correlation_pair(set[i], set[i + 1]);
        CHECK(c >= 0.0);
        CHECK(c <= 1.0 + 1e-12);
    }
}

TEST_CASE("overlap index is invariant under gamma-preserving permutations") {
    const ChaosGrid grid = synthetic_grid(80000);
    Rng rng(5);
    HusimiGrid h;
    h.h.assign(kCells, 0.0);
    for (int i = 0; i < 500; ++i) {
        h.h[static_cast<size_t>(rng.uniform(0.0, kCells))] += 1.0;
    }
    double sum = 0.0;
    for (double v : h.h) sum += v;
    for (double& v : h.h) v /= sum;
    const double m0 = overlap_index(h, grid).overlap_index;
    // swap mass between two chaotic cells and between two regular cells
    HusimiGrid hp = h;
    std::swap(hp.h[100], hp.h[200]);      // both chaotic
    std::swap(hp.h[90000], hp.h[90001]);  // both regular
    CHECK(overlap_index(hp, grid).overlap_index == doctest::Approx(m0).epsilon(1e-14));
    CHECK(std::abs(m0) <= 1.0);
}

TEST_CASE("a_max calibration") {
    const ChaosGrid grid = synthetic_grid(100000);
    {
        const std::vector<HusimiGrid> ref{uniform_on(grid)};
        const auto am = a_max_calibration(ref, grid);
        CHECK(am.a_max == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(am.low_confidence);  // tiny reference set
    }
    {
        std::vector<HusimiGrid> ref;
        for (int i = 0; i < 120; ++i) ref.push_back(single_cell(static_cast<size_t>(i)));
        const auto am = a_max_calibration(ref, grid);
        CHECK(!am.low_confidence);
        CHECK(am.a_max == doctest::Approx(1.0 / 100000.0).epsilon(1e-12));
    }
}

TEST_CASE("separation partitions order-preservingly") {
    const ChaosGrid grid = synthetic_grid(100000);
    std::vector<HusimiGrid> set;
    set.push_back(uniform_on(grid));       // chaotic
    set.push_back(single_cell(150000));    // regular
    set.push_back(uniform_on(grid));       // chaotic
    set.push_back(single_cell(159999));    // regular
    const auto sep = separate_states(set, grid);
    CHECK(sep.chaotic_indices == std::vector<int>{0, 2});
    CHECK(sep.regular_indices == std::vector<int>{1, 3});
    CHECK(sep.chaotic_fraction == doctest::Approx(0.5));

    // all regular for a gamma = -1 grid (integrable circle analogue)
    const ChaosGrid empty = synthetic_grid(0);
    std::vector<HusimiGrid> states{single_cell(5), single_cell(99)};
    const auto sep2 = separate_states(states, empty);
    CHECK(sep2.chaotic_indices.empty());
    CHECK(sep2.regular_indices.size() == 2);
}

TEST_CASE("correlation measure windows over consecutive states") {
    const ChaosGrid grid = synthetic_grid(100000);
    std::vector<HusimiGrid> set;
    for (int i = 0; i < 10; ++i) set.push_back(uniform_on(grid));
    CHECK(correlation_measure(set, 5) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<HusimiGrid> disjoint;
    for (int i = 0; i < 6; ++i) disjoint.push_back(single_cell(static_cast<size_t>(i)));
    CHECK(correlation_measure(disjoint, 3) == doctest::Approx(0.0));
    CHECK_THROWS_AS((void)correlation_measure({}, 5), ConfigError);
}

TEST_CASE("grid shape mismatch is rejected") {
    const ChaosGrid grid = synthetic_grid(1000);
    HusimiGrid bad;
    bad.h.assign(100, 0.01);
    CHECK_THROWS_AS((void)overlap_index(bad, grid), ConfigError);
}
