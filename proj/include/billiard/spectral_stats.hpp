#pragma once

#include <span>
#include <vector>

#include "billiard/geometry.hpp"

namespace billiard {

enum class Parity { even, odd };

/// Two-term Weyl counting function N(k) = A k^2/(4 pi) - L k/(4 pi) for the
/// full billiard with Dirichlet conditions. With parity_resolved the
/// half-domain area and boundary are used; the symmetry segment enters the
/// perimeter term with the Dirichlet sign for odd parity and the Neumann
/// sign for even parity.
double weyl_count(const BilliardShape& shape, double k, bool parity_resolved = false,
                  Parity parity = Parity::odd);

/// Unfolded spectrum: spacings of N_weyl(k_n) rescaled to unit mean.
struct UnfoldedSpectrum {
    std::vector<double> spacings;  // mean exactly 1 after the affine rescale
    double k_lo = 0.0, k_hi = 0.0;
    double lambda = 0.0;
    Parity parity = Parity::odd;
};

UnfoldedSpectrum unfold(std::span<const double> levels, const BilliardShape& shape, Parity parity);

// Level spacing families. All densities have unit norm and unit mean; gap
// probabilities E(S) satisfy E'' = P, E(0) = 1.
double poisson_pdf(double s);
double poisson_gap(double s);
double wigner_pdf(double s);
double wigner_gap(double s);

/// Brody density (beta + 1) b S^beta exp(-b S^{beta+1}),
/// b = Gamma((beta+2)/(beta+1))^{beta+1}. beta = 0 is Poisson, beta = 1 the
/// Wigner surmise.
double brody_pdf(double s, double beta);
double brody_gap(double s, double beta);
/// W_B = -E_B' = exp(-b S^{beta+1}), the survival function of the spacing.
double brody_survival(double s, double beta);

/// Berry-Robnik-Brody density: second derivative of the gap-probability
/// product E_exp(rho_r S) E_Brody(rho_c S), expanded analytically.
double brb_pdf(double s, double beta, double rho_r);
double brb_gap(double s, double beta, double rho_r);
double brb_cdf(double s, double beta, double rho_r);

enum class SpacingFamily { poisson, wigner, brody, brb };

/// Parametrized spacing model; construction verifies unit norm and unit
/// mean by quadrature to 1e-8.
struct SpacingModel {
    SpacingFamily family = SpacingFamily::poisson;
    double beta = 0.0;
    double rho_r = 0.0;

    SpacingModel(SpacingFamily family, double beta = 0.0, double rho_r = 0.0);

    double pdf(double s) const;
    double gap(double s) const;
    double cdf(double s) const;
};

struct FitResult {
    double beta = 0.0;
    double residual = 0.0;  // rms ECDF misfit at the optimum
    double ks = 0.0;        // Kolmogorov-Smirnov statistic
    long n_spacings = 0;
    double rho_r = 0.0;
};

/// Fit the Brody exponent of the BRB model to a spacing sample with rho_r
/// held fixed, minimizing the L2 distance between the empirical and model
/// CDFs by golden-section search to 1e-4.
FitResult fit_beta(std::span<const double> spacings, double rho_r);

struct SpacingHistogram {
    std::vector<double> edges;    // n_bins + 1
    std::vector<double> density;  // unit area
    std::vector<double> ecdf_s;   // sorted spacings
    std::vector<double> ecdf_f;   // i/n at ecdf_s[i-1]
};

SpacingHistogram spacing_histogram(std::span<const double> spacings, int n_bins);

}  // namespace billiard
