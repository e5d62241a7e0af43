#include "billiard/geometry.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "billiard/errors.hpp"

namespace billiard {

namespace {

// GSL must not abort the process on a quadrature failure; errors are
// propagated as exceptions instead.
const auto kGslHandlerOff = [] {
    gsl_set_error_handler_off();
    return 0;
}();

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// 5-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr double kGx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                           0.5384693101056831, 0.9061798459386640};
constexpr double kGw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                           0.4786286704993665, 0.2369268850561891};

double speed_of(double lambda, double theta) {
    return std::sqrt(1.0 + 4.0 * lambda * std::cos(theta) + 4.0 * lambda * lambda);
}

// Gauss-Legendre integral of |w'| over [a, b].
double arc_segment(double lambda, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double acc = 0.0;
    for (int g = 0; g < 5; ++g) acc += kGw[g] * speed_of(lambda, c + h * kGx[g]);
    return acc * h;
}

}  // namespace

BilliardShape::BilliardShape(double lambda, int table_size) : lambda_(lambda), n_(table_size) {
    if (lambda < 0.0 || lambda > 0.5) {
        throw ConfigError("BilliardShape: lambda must lie in [0, 1/2], got " +
                          std::to_string(lambda));
    }
    area_ = std::numbers::pi * (1.0 + 2.0 * lambda * lambda);
    dtheta_ = kTwoPi / n_;

    cum_s_.resize(n_ + 1);
    cum_s_[0] = 0.0;
    for (int i = 0; i < n_; ++i)
        cum_s_[i + 1] = cum_s_[i] + arc_segment(lambda_, i * dtheta_, (i + 1) * dtheta_);
    perimeter_ = cum_s_[n_];

    // Uniform-in-s inverse table, refined by Newton on s(theta) - s = 0.
    // Near the lambda = 1/2 cusp the speed vanishes and Newton is skipped.
    theta_of_s_.resize(n_ + 1);
    theta_of_s_[0] = 0.0;
    theta_of_s_[n_] = kTwoPi;
    int hint = 0;
    for (int j = 1; j < n_; ++j) {
        const double s = perimeter_ * j / n_;
        while (cum_s_[hint + 1] < s) ++hint;
        double theta = (hint + (s - cum_s_[hint]) / (cum_s_[hint + 1] - cum_s_[hint])) * dtheta_;
        for (int it = 0; it < 3; ++it) {
            const double v = speed_of(lambda_, theta);
            if (v < 1e-6) break;
            const int node = std::clamp(static_cast<int>(theta / dtheta_), 0, n_ - 1);
            const double f = cum_s_[node] + partial_arc(node, theta) - s;
            theta = std::clamp(theta - f / v, 0.0, kTwoPi);
        }
        theta_of_s_[j] = theta;
    }
}

double BilliardShape::partial_arc(int node, double theta) const {
    return arc_segment(lambda_, node * dtheta_, theta);
}

Vec2 BilliardShape::tangent(double theta) const {
    // w'(theta) = i e^{i theta} (1 + 2 lambda e^{i theta})
    const double v = speed(theta);
    if (v < 1e-12) {
        throw NumericalError("tangent undefined at boundary cusp (lambda = 1/2, theta = pi)");
    }
    const double ct = std::cos(theta), st = std::sin(theta);
    const double c2 = std::cos(2.0 * theta), s2 = std::sin(2.0 * theta);
    return {(-st - 2.0 * lambda_ * s2) / v, (ct + 2.0 * lambda_ * c2) / v};
}

double BilliardShape::arclength(double theta) const {
    if (theta <= 0.0) return 0.0;
    if (theta >= kTwoPi) return perimeter_;
    const int node = std::min(static_cast<int>(theta / dtheta_), n_ - 1);
    return cum_s_[node] + partial_arc(node, theta);
}

double BilliardShape::theta_from_arclength(double s) const {
    s = wrap(s);
    const double u = s / perimeter_ * n_;
    const int j = std::min(static_cast<int>(u), n_ - 1);
    double theta = theta_of_s_[j] + (u - j) * (theta_of_s_[j + 1] - theta_of_s_[j]);
    for (int it = 0; it < 2; ++it) {
        const double v = speed(theta);
        if (v < 1e-6) break;
        const int node = std::clamp(static_cast<int>(theta / dtheta_), 0, n_ - 1);
        const double f = cum_s_[node] + partial_arc(node, theta) - s;
        theta = std::clamp(theta - f / v, 0.0, kTwoPi);
    }
    if (theta >= kTwoPi) theta -= kTwoPi;
    return theta;
}

std::pair<double, double> perimeter_area(double lambda) {
    if (lambda < 0.0 || lambda > 0.5) {
        throw ConfigError("perimeter_area: lambda must lie in [0, 1/2]");
    }
    struct Params {
        double lambda;
    } p{lambda};
    gsl_function f;
    f.function = [](double theta, void* params) {
        return speed_of(static_cast<Params*>(params)->lambda, theta);
    };
    f.params = &p;

    gsl_integration_workspace* ws = gsl_integration_workspace_alloc(2000);
    double result = 0.0, abserr = 0.0;
    const int status =
        gsl_integration_qag(&f, 0.0, kTwoPi, 0.0, 1e-12, 2000, GSL_INTEG_GAUSS61, ws, &result, &abserr);
    gsl_integration_workspace_free(ws);
    if (status != GSL_SUCCESS) {
        throw NumericalError("perimeter quadrature failed for lambda = " + std::to_string(lambda));
    }
    return {result, std::numbers::pi * (1.0 + 2.0 * lambda * lambda)};
}

}  // namespace billiard
