#pragma once

#include <complex>
#include <span>
#include <vector>

#include "billiard/eigensolver.hpp"
#include "billiard/geometry.hpp"

namespace billiard {

/// Poincare Husimi function of one eigenstate on the fixed 400x400 grid
/// over the reduced quadrant q in [0, L/2], p in [0, 1], with cell centers
/// (dq/2 + i dq, dp/2 + j dp), dq = L/800, dp = 1/400. Values are rescaled
/// so their sum is exactly one.
struct HusimiGrid {
    static constexpr int kN = 400;

    std::vector<double> h;  // kN * kN, row-major [iq * kN + jp]
    double k = 0.0;
    double sum_check = 0.0;  // grid sum before the final rescale

    double at(int iq, int jp) const { return h[iq * kN + jp]; }
};

/// Overlap of the periodized boundary coherent state centered at (q, p)
/// with a boundary function sampled at s_i = i ds (trapezoid rule). The
/// image sum is truncated where the Gaussian factor drops below 1e-16.
/// Throws when the sampling is coarser than lambda_B / 20.
std::complex<double> coherent_overlap(std::span<const double> u, double ds, double k, double L,
                                      double q, double p);

std::complex<double> coherent_overlap(const EigenState& state, const BilliardShape& shape,
                                      double q, double p);

/// Husimi grid of a state, parallelized over grid cells. For the real
/// definite-parity boundary functions produced by the eigensolver the four
/// symmetry images (p -> -p, q -> L - q) carry identical H, so the quadrant
/// evaluation equals the folded average.
HusimiGrid husimi_grid(const EigenState& state, const BilliardShape& shape, int jobs = 0);

/// Serial twin of husimi_grid (identical arithmetic, no OpenMP).
HusimiGrid husimi_grid_serial(const EigenState& state, const BilliardShape& shape);

}  // namespace billiard
