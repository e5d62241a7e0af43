#include "billiard/husimi.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "billiard/errors.hpp"

namespace billiard {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Gaussian tail cut: exp(-k tau^2 / 2) < 1e-16 outside |tau| < w(k).
double window_width(double k) { return std::sqrt(2.0 * 36.85 / k); }

void check_sampling(double ds, double k) {
    if (ds > (kTwoPi / k) / 20.0 * (1.0 + 1e-9)) {
        throw NumericalError("husimi: boundary function undersampled (ds = " +
                             std::to_string(ds) + " > lambda_B/20 at k = " + std::to_string(k) +
                             ")");
    }
}

double kahan_sum(std::span<const double> v) {
    double sum = 0.0, comp = 0.0;
    for (double x : v) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

HusimiGrid grid_impl(const EigenState& state, const BilliardShape& shape, bool parallel,
                     int jobs) {
    check_sampling(state.ds, state.k);
    const double L = shape.perimeter();
    const double k = state.k;
    const double ds = state.ds;
    const auto n_u = static_cast<long>(state.u.size());
    const double w = window_width(k);
    const double dq = L / (2.0 * HusimiGrid::kN);
    const double dp = 1.0 / HusimiGrid::kN;

    HusimiGrid grid;
    grid.k = k;
    grid.h.assign(static_cast<size_t>(HusimiGrid::kN) * HusimiGrid::kN, 0.0);

    if (parallel && jobs > 0) omp_set_num_threads(jobs);
#pragma omp parallel if (parallel)
    {
        std::vector<double> gu;   // Gaussian-weighted samples in the window
        std::vector<double> tau;  // offsets s_j - q
#pragma omp for schedule(static)
        for (int iq = 0; iq < HusimiGrid::kN; ++iq) {
            const double q = (iq + 0.5) * dq;
            const long j_lo = static_cast<long>(std::ceil((q - w) / ds));
            const long j_hi = static_cast<long>(std::floor((q + w) / ds));
            const long nw = j_hi - j_lo + 1;
            gu.resize(nw);
            tau.resize(nw);
            for (long j = 0; j < nw; ++j) {
                const long idx = ((j_lo + j) % n_u + n_u) % n_u;
                const double t = (j_lo + j) * ds - q;
                tau[j] = t;
                gu[j] = state.u[idx] * std::exp(-0.5 * k * t * t);
            }
            for (int jp = 0; jp < HusimiGrid::kN; ++jp) {
                const double p = (jp + 0.5) * dp;
                // rotate exp(-i k p tau) across the uniform tau grid
                const double ang0 = -k * p * tau[0];
                double cr = std::cos(ang0), ci = std::sin(ang0);
                const double sa = -k * p * ds;
                const double step_c = std::cos(sa), step_s = std::sin(sa);
                double acc_re = 0.0, acc_im = 0.0;
                for (long j = 0; j < nw; ++j) {
                    acc_re += gu[j] * cr;
                    acc_im += gu[j] * ci;
                    const double ncr = cr * step_c - ci * step_s;
                    ci = cr * step_s + ci * step_c;
                    cr = ncr;
                }
                const double amp2 = (acc_re * acc_re + acc_im * acc_im) * ds * ds;
                grid.h[static_cast<size_t>(iq) * HusimiGrid::kN + jp] = amp2;
            }
        }
    }

    grid.sum_check = kahan_sum(grid.h);
    if (!(grid.sum_check > 0.0)) {
        throw NumericalError("husimi: null boundary function (grid sum is zero)");
    }
    const double inv = 1.0 / grid.sum_check;
    for (double& v : grid.h) v *= inv;
    return grid;
}

}  // namespace

std::complex<double> coherent_overlap(std::span<const double> u, double ds, double k, double L,
                                      double q, double p) {
    check_sampling(ds, k);
    const auto n_u = static_cast<long>(u.size());
    const double w = window_width(k);
    const long j_lo = static_cast<long>(std::ceil((q - w) / ds));
    const long j_hi = static_cast<long>(std::floor((q + w) / ds));
    double acc_re = 0.0, acc_im = 0.0;
    for (long j = j_lo; j <= j_hi; ++j) {
        const long idx = (j % n_u + n_u) % n_u;
        const double tau = j * ds - q;
        const double g = std::exp(-0.5 * k * tau * tau);
        const double ang = -k * p * tau;  // conjugated coherent state
        acc_re += u[idx] * g * std::cos(ang);
        acc_im += u[idx] * g * std::sin(ang);
    }
    return {acc_re * ds, acc_im * ds};
}

std::complex<double> coherent_overlap(const EigenState& state, const BilliardShape& shape,
                                      double q, double p) {
    return coherent_overlap(state.u, state.ds, state.k, shape.perimeter(), q, p);
}

HusimiGrid husimi_grid(const EigenState& state, const BilliardShape& shape, int jobs) {
    return grid_impl(state, shape, true, jobs);
}

HusimiGrid husimi_grid_serial(const EigenState& state, const BilliardShape& shape) {
    return grid_impl(state, shape, false, 0);
}

}  // namespace billiard
