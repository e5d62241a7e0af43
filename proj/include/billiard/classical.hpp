#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "billiard/geometry.hpp"

namespace billiard {

/// Point on the Poincare-Birkhoff surface of section: arclength s in [0, L)
/// and tangential momentum p = v . t in [-1, 1].
struct SosState {
    double s = 0.0;
    double p = 0.0;
};

struct BounceResult {
    SosState next;
    double chord = 0.0;  // free path between the two collisions
};

/// One step of the bounce map. The next boundary intersection is found by
/// reducing the chord-boundary condition to a quartic in z = e^{i theta}
/// (the boundary is the image of the unit circle under a quadratic map),
/// deflating the known root at the current point and solving the remaining
/// cubic in closed form, followed by a Newton polish.
BounceResult bounce_step(const BilliardShape& shape, const SosState& state);

/// Reference bounce map: 256-sector angular scan, bisection, and Newton on
/// the implicit chord-boundary equation. Slower but independent of the
/// closed-form route; kept for testing and as a fallback.
BounceResult bounce_step_reference(const BilliardShape& shape, const SosState& state);

/// Chaotic/regular classification of the 400x400 cell grid over the reduced
/// quadrant q in [0, L/2], p in [0, 1]. A cell is chaotic when a long
/// chaotic orbit, folded into the quadrant, visits it at least once.
struct ChaosGrid {
    static constexpr int kCells = 400;

    std::vector<uint8_t> visited;  // kCells*kCells, row-major [iq * kCells + jp]
    long n_chaotic = 0;            // N_c
    uint64_t collisions = 0;
    bool converged = false;        // cell count grew < 0.1% over the last 10%
    double growth_last_decade = 0.0;

    int gamma(int iq, int jp) const { return visited[iq * kCells + jp] ? +1 : -1; }

    /// Fold (s, p) into the quadrant and return the (iq, jp) cell index.
    static std::pair<int, int> cell_of(const BilliardShape& shape, double s, double p);
};

/// Build the chaotic-cell grid from a long orbit (default seed chosen
/// automatically from a short list of candidates verified by a positive
/// Lyapunov estimate). Throws NumericalError("seed not chaotic") when the
/// orbit footprint stays small, e.g. for the integrable circle.
ChaosGrid build_chaos_grid(const BilliardShape& shape, uint64_t n_collisions,
                           std::optional<SosState> seed_state = std::nullopt,
                           uint64_t rng_seed = 1, int jobs = 0);

/// Crude largest-Lyapunov-exponent estimate (per collision) from the growth
/// of a small separation, renormalized each step.
double lyapunov_estimate(const BilliardShape& shape, const SosState& seed, int n_steps = 2000);

struct RhoEstimate {
    double rho_r = 0.0;      // regular fraction of the flow-invariant volume
    double rho_c = 0.0;      // 1 - rho_r
    double std_error = 0.0;  // batch-means standard error on rho_c
    long n_samples = 0;
};

/// Monte Carlo estimate of the relative phase-space (flow) volumes. Samples
/// uniform in (s, p), classifies each sample by the fraction of its orbit
/// footprint on chaotic cells, and weights it by its mean free path so the
/// result is a flow-volume fraction rather than an SOS-area fraction.
RhoEstimate estimate_rho_r(const BilliardShape& shape, const ChaosGrid& grid, long n_samples,
                           uint64_t rng_seed = 1, int jobs = 0, int footprint_steps = 10000,
                           double chaotic_threshold = 0.5);

struct TransportResult {
    std::vector<std::pair<uint64_t, double>> p2_curve;  // (n, <p^2>) on log-spaced n
    uint64_t transport_collisions = 0;                  // N_T
    double saturation = 0.0;                            // mean <p^2> over the last decade
    bool saturated = false;  // false: curve still rising, N_T is a lower bound
};

/// Momentum diffusion curve <p^2>(n) for an ensemble started uniformly in
/// the chaotic component at p = 0, s in [0, L/2]. N_T is the first n with
/// <p^2> >= 0.9 * saturation.
TransportResult transport_time(const BilliardShape& shape, const ChaosGrid& grid, long n_ensemble,
                               uint64_t max_collisions, uint64_t rng_seed = 1, int jobs = 0);

/// Serial reference implementation of transport_time (same arithmetic,
/// no OpenMP); kept for testing and benchmarking.
TransportResult transport_time_serial(const BilliardShape& shape, const ChaosGrid& grid,
                                      long n_ensemble, uint64_t max_collisions,
                                      uint64_t rng_seed = 1);

struct AlphaResult {
    double alpha = 0.0;  // ratio of Heisenberg to transport time, 2k / N_T
    bool localization_expected = false;  // alpha <= 1
};

AlphaResult alpha_parameter(double k, double n_transport);

}  // namespace billiard
