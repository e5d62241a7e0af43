#pragma once

#include <span>
#include <vector>

#include "billiard/geometry.hpp"
#include "billiard/spectral_stats.hpp"

namespace billiard {

/// One Dirichlet eigenstate of the billiard, represented by its
/// eigenwavenumber and the boundary function u(s) = n . grad psi sampled on
/// a uniform arclength grid with ds <= lambda_B / 20. The interior
/// wavefunction is normalized to unit L2 norm through the boundary identity
/// integral psi^2 dA = (1/2k^2) * closed-integral (r.n) u^2 ds.
struct EigenState {
    double k = 0.0;
    Parity parity = Parity::odd;
    std::vector<double> u;  // u(s_i) at s_i = i * ds, full boundary
    double ds = 0.0;
    double tension = 0.0;        // boundary-norm residual at k
    double norm_residual = 0.0;  // metric vs boundary-identity norm mismatch
};

struct SpectrumWindow {
    double lambda = 0.0;
    Parity parity = Parity::odd;
    double k_lo = 0.0, k_hi = 0.0;
    std::vector<double> levels;    // sorted eigenwavenumbers
    std::vector<double> tensions;  // residual at each level
    std::vector<double> flagged_degenerate;  // unresolvable double minima
    double weyl_expected = 0.0;    // two-term Weyl count for the window
    bool complete = false;         // |count - expected| <= max(2, 0.5%)
};

struct SolverOptions {
    /// Plane waves per boundary wavelength counted on the desymmetrized
    /// half boundary (the basis functions carry the parity, so the full
    /// boundary would double-count).
    double waves_per_wavelength = 3.0;
    int basis_min = 32;
    double collocation_factor = 2.0;   // collocation points per basis function
    double scan_step_fraction = 0.125; // scan step as a fraction of the mean spacing
    double refine_tol_fraction = 1e-4; // |dk| target as a fraction of the mean spacing
    double metric_cutoff = 1e-12;      // drop metric directions below cutoff * max
    double dip_factor = 0.25;          // a minimum must undercut its bracket edges
    int max_rescue_passes = 3;         // extra fine scans when Weyl says levels are missing
    int jobs = 0;                      // 0: use the OpenMP default
};

/// Default basis size for wavenumber k (floor of basis_min at low k).
int basis_size_for(const BilliardShape& shape, double k, const SolverOptions& opts = {});

/// Boundary-norm residual of the best Helmholtz-solution superposition at
/// wavenumber k: the smallest generalized singular value of the boundary
/// collocation matrix against the interior-norm metric. Eigenwavenumbers
/// are sharp local minima. Throws NumericalError when the regularized
/// metric keeps too few directions (basis too large for this k).
double tension(const BilliardShape& shape, Parity parity, double k, int basis_size);

/// All eigenwavenumbers in [k_lo, k_hi]: tension scan at a step of
/// (mean spacing)/8, bracketing of local minima, golden-section refinement,
/// and Weyl-guided rescue scans for suspected missing levels.
SpectrumWindow eigenvalues_in_range(const BilliardShape& shape, Parity parity, double k_lo,
                                    double k_hi, const SolverOptions& opts = {});

/// Boundary function of the eigenstate at (refined) wavenumber k.
EigenState boundary_function(const BilliardShape& shape, Parity parity, double k,
                             const SolverOptions& opts = {});

/// Interior wavefunction of the eigenstate at k, normalized like the
/// boundary function it corresponds to. Used to cross-check the
/// boundary-identity norm against direct interior quadrature.
struct InteriorEval {
    double k = 0.0;
    Parity parity = Parity::odd;
    std::vector<double> alphas;  // direction angles
    std::vector<double> coeffs;  // 2 per direction (cos/sin carriers)

    double psi(const Vec2& r) const;
};

InteriorEval interior_eval(const BilliardShape& shape, Parity parity, double k,
                           const SolverOptions& opts = {});

/// Boundary functions for a batch of levels, parallelized over levels.
std::vector<EigenState> boundary_functions(const BilliardShape& shape, Parity parity,
                                           std::span<const double> levels,
                                           const SolverOptions& opts = {});

}  // namespace billiard
