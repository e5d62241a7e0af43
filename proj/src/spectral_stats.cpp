#include "billiard/spectral_stats.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_sf_erf.h>
#include <gsl/gsl_sf_gamma.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include "billiard/errors.hpp"

namespace billiard {

namespace {

const auto kGslHandlerOff = [] {
    gsl_set_error_handler_off();
    return 0;
}();

constexpr double kPi = std::numbers::pi;

void check_beta(double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw ConfigError("Brody exponent beta must lie in [0, 1], got " + std::to_string(beta));
    }
}

void check_rho(double rho_r) {
    if (!(rho_r >= 0.0 && rho_r <= 1.0)) {
        throw ConfigError("rho_r must lie in [0, 1], got " + std::to_string(rho_r));
    }
}

// normalization constant of the unit-mean Brody density
double brody_b(double beta) {
    return std::pow(gsl_sf_gamma((beta + 2.0) / (beta + 1.0)), beta + 1.0);
}

// tanh-sinh quadrature on [a, b]; handles the S^beta endpoint singularity
// of the Brody density at machine precision
double tanh_sinh_integral(const std::function<double(double)>& f, double a, double b) {
    const double c = 0.5 * (a + b), half = 0.5 * (b - a);
    constexpr double t_max = 3.6;
    constexpr int n = 120;
    const double h = t_max / n;
    double acc = 0.0;
    for (int i = -n; i <= n; ++i) {
        const double t = i * h;
        const double sh = 0.5 * kPi * std::sinh(t);
        const double x = std::tanh(sh);
        const double w = 0.5 * kPi * std::cosh(t) / (std::cosh(sh) * std::cosh(sh));
        acc += w * f(c + half * x);
    }
    return acc * half * h;
}

}  // namespace

double weyl_count(const BilliardShape& shape, double k, bool parity_resolved, Parity parity) {
    if (k <= 0.0) return 0.0;
    double area = shape.area();
    double dirichlet_len = shape.perimeter();
    if (parity_resolved) {
        // half domain: upper boundary arc plus the symmetry segment of
        // length 2 on the x-axis (from theta = pi to theta = 0)
        area *= 0.5;
        const double arc = 0.5 * shape.perimeter();
        const double segment = 2.0;
        dirichlet_len = parity == Parity::odd ? arc + segment : arc - segment;
    }
    return area * k * k / (4.0 * kPi) - dirichlet_len * k / (4.0 * kPi);
}

UnfoldedSpectrum unfold(std::span<const double> levels, const BilliardShape& shape, Parity parity) {
    if (levels.size() < 50) {
        throw ConfigError("unfold: need at least 50 levels, got " + std::to_string(levels.size()));
    }
    UnfoldedSpectrum out;
    out.lambda = shape.lambda();
    out.parity = parity;
    out.k_lo = levels.front();
    out.k_hi = levels.back();
    out.spacings.reserve(levels.size() - 1);
    double prev = weyl_count(shape, levels[0], true, parity);
    for (size_t i = 1; i < levels.size(); ++i) {
        if (levels[i] <= levels[i - 1]) {
            throw ConfigError("unfold: levels must be strictly increasing");
        }
        const double x = weyl_count(shape, levels[i], true, parity);
        out.spacings.push_back(x - prev);
        prev = x;
    }
    double mean = 0.0;
    for (double s : out.spacings) mean += s;
    mean /= static_cast<double>(out.spacings.size());
    for (double& s : out.spacings) s /= mean;
    return out;
}

double poisson_pdf(double s) { return std::exp(-s); }
double poisson_gap(double s) { return std::exp(-s); }

double wigner_pdf(double s) { return 0.5 * kPi * s * std::exp(-0.25 * kPi * s * s); }
double wigner_gap(double s) { return gsl_sf_erfc(0.5 * std::sqrt(kPi) * s); }

double brody_pdf(double s, double beta) {
    check_beta(beta);
    if (s < 0.0) return 0.0;
    const double b = brody_b(beta);
    return (beta + 1.0) * b * std::pow(s, beta) * std::exp(-b * std::pow(s, beta + 1.0));
}

double brody_survival(double s, double beta) {
    check_beta(beta);
    if (s <= 0.0) return 1.0;
    return std::exp(-brody_b(beta) * std::pow(s, beta + 1.0));
}

double brody_gap(double s, double beta) {
    check_beta(beta);
    if (s <= 0.0) return 1.0;
    const double b = brody_b(beta);
    const double a = 1.0 / (beta + 1.0);
    // E_B(S) = b^{-1/(beta+1)} / (beta+1) * Gamma_upper(1/(beta+1), b S^{beta+1})
    return std::pow(b, -a) * a * gsl_sf_gamma_inc(a, b * std::pow(s, beta + 1.0));
}

double brb_gap(double s, double beta, double rho_r) {
    check_beta(beta);
    check_rho(rho_r);
    if (s <= 0.0) return 1.0;
    return std::exp(-rho_r * s) * brody_gap((1.0 - rho_r) * s, beta);
}

double brb_pdf(double s, double beta, double rho_r) {
    check_beta(beta);
    check_rho(rho_r);
    if (s < 0.0) return 0.0;
    const double rho_c = 1.0 - rho_r;
    const double x = rho_c * s;
    return std::exp(-rho_r * s) *
           (rho_r * rho_r * brody_gap(x, beta) +
            2.0 * rho_r * rho_c * brody_survival(x, beta) + rho_c * rho_c * brody_pdf(x, beta));
}

double brb_cdf(double s, double beta, double rho_r) {
    check_beta(beta);
    check_rho(rho_r);
    if (s <= 0.0) return 0.0;
    const double rho_c = 1.0 - rho_r;
    const double x = rho_c * s;
    // F(S) = 1 + E'(S) with E'(S) = -e^{-rho_r S} (rho_r E_B + rho_c W_B)
    return 1.0 - std::exp(-rho_r * s) *
                     (rho_r * brody_gap(x, beta) + rho_c * brody_survival(x, beta));
}

SpacingModel::SpacingModel(SpacingFamily family_, double beta_, double rho_r_)
    : family(family_), beta(beta_), rho_r(rho_r_) {
    if (family == SpacingFamily::brody || family == SpacingFamily::brb) check_beta(beta);
    if (family == SpacingFamily::brb) check_rho(rho_r);
    // construction-time sanity: unit norm and unit mean by quadrature
    const double norm =
        tanh_sinh_integral([this](double s) { return pdf(s); }, 0.0, 16.0) +
        tanh_sinh_integral([this](double s) { return pdf(s); }, 16.0, 64.0);
    const double mean =
        tanh_sinh_integral([this](double s) { return s * pdf(s); }, 0.0, 16.0) +
        tanh_sinh_integral([this](double s) { return s * pdf(s); }, 16.0, 64.0);
    if (std::abs(norm - 1.0) > 1e-8 || std::abs(mean - 1.0) > 1e-8) {
        throw NumericalError("SpacingModel: normalization check failed (norm = " +
                             std::to_string(norm) + ", mean = " + std::to_string(mean) + ")");
    }
}

double SpacingModel::pdf(double s) const {
    switch (family) {
        case SpacingFamily::poisson: return poisson_pdf(s);
        case SpacingFamily::wigner: return wigner_pdf(s);
        case SpacingFamily::brody: return brody_pdf(s, beta);
        case SpacingFamily::brb: return brb_pdf(s, beta, rho_r);
    }
    return 0.0;
}

double SpacingModel::gap(double s) const {
    switch (family) {
        case SpacingFamily::poisson: return poisson_gap(s);
        case SpacingFamily::wigner: return wigner_gap(s);
        case SpacingFamily::brody: return brody_gap(s, beta);
        case SpacingFamily::brb: return brb_gap(s, beta, rho_r);
    }
    return 0.0;
}

double SpacingModel::cdf(double s) const {
    switch (family) {
        case SpacingFamily::poisson: return s <= 0.0 ? 0.0 : 1.0 - std::exp(-s);
        case SpacingFamily::wigner:
            return s <= 0.0 ? 0.0 : 1.0 - std::exp(-0.25 * kPi * s * s);
        case SpacingFamily::brody: return s <= 0.0 ? 0.0 : 1.0 - brody_survival(s, beta);
        case SpacingFamily::brb: return brb_cdf(s, beta, rho_r);
    }
    return 0.0;
}

namespace {

double ecdf_objective(const std::vector<double>& sorted, double beta, double rho_r) {
    const auto n = static_cast<double>(sorted.size());
    double acc = 0.0;
    for (size_t i = 0; i < sorted.size(); ++i) {
        const double f = brb_cdf(sorted[i], beta, rho_r);
        const double d = f - (static_cast<double>(i) + 0.5) / n;
        acc += d * d;
    }
    return acc;
}

}  // namespace

FitResult fit_beta(std::span<const double> spacings, double rho_r) {
    check_rho(rho_r);
    if (spacings.size() < 1000) {
        throw ConfigError("fit_beta: need at least 1e3 spacings, got " +
                          std::to_string(spacings.size()));
    }
    std::vector<double> sorted(spacings.begin(), spacings.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.back() - sorted.front() < 1e-12) {
        throw NumericalError("fit_beta: degenerate spectrum, all spacings equal");
    }

    // golden-section search on [0, 1]
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.0, b = 1.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = ecdf_objective(sorted, c, rho_r), fd = ecdf_objective(sorted, d, rho_r);
    while (b - a > 1e-4) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = ecdf_objective(sorted, c, rho_r);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = ecdf_objective(sorted, d, rho_r);
        }
    }
    FitResult res;
    res.beta = 0.5 * (a + b);
    res.rho_r = rho_r;
    res.n_spacings = static_cast<long>(sorted.size());
    const auto n = static_cast<double>(sorted.size());
    res.residual = std::sqrt(ecdf_objective(sorted, res.beta, rho_r) / n);
    double ks = 0.0;
    for (size_t i = 0; i < sorted.size(); ++i) {
        const double f = brb_cdf(sorted[i], res.beta, rho_r);
        ks = std::max(ks, std::abs(f - static_cast<double>(i) / n));
        ks = std::max(ks, std::abs(f - static_cast<double>(i + 1) / n));
    }
    res.ks = ks;
    return res;
}

SpacingHistogram spacing_histogram(std::span<const double> spacings, int n_bins) {
    if (spacings.empty()) {
        throw ConfigError("spacing_histogram: empty input");
    }
    SpacingHistogram h;
    h.ecdf_s.assign(spacings.begin(), spacings.end());
    std::sort(h.ecdf_s.begin(), h.ecdf_s.end());
    const auto n = static_cast<double>(h.ecdf_s.size());
    h.ecdf_f.resize(h.ecdf_s.size());
    for (size_t i = 0; i < h.ecdf_s.size(); ++i)
        h.ecdf_f[i] = static_cast<double>(i + 1) / n;

    const double s_max = std::max(h.ecdf_s.back() * (1.0 + 1e-12), 1e-12);
    n_bins = std::max(1, n_bins);
    h.edges.resize(n_bins + 1);
    for (int i = 0; i <= n_bins; ++i) h.edges[i] = s_max * i / n_bins;
    h.density.assign(n_bins, 0.0);
    const double bin_w = s_max / n_bins;
    for (double s : h.ecdf_s) {
        const int b = std::min(n_bins - 1, static_cast<int>(s / bin_w));
        h.density[b] += 1.0;
    }
    for (double& dv : h.density) dv /= n * bin_w;  // unit area
    return h;
}

}  // namespace billiard
