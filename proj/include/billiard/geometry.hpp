#pragma once

#include <cmath>
#include <utility>
#include <vector>

namespace billiard {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double c) const { return {c * x, c * y}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
};

/// Boundary of the quadratic conformal billiard: the image of the unit
/// circle under w(z) = z + lambda z^2, traversed counterclockwise with
/// arclength anchored at theta = 0.
///
/// The family interpolates from the circle (lambda = 0) to the cusped
/// cardioid-like shape at lambda = 1/2. Immutable after construction and
/// safe for shared concurrent reads.
class BilliardShape {
public:
    explicit BilliardShape(double lambda, int table_size = 4096);

    double lambda() const { return lambda_; }
    /// Total arclength of the boundary.
    double perimeter() const { return perimeter_; }
    /// Enclosed area, pi (1 + 2 lambda^2) exactly.
    double area() const { return area_; }

    /// Boundary point (cos t + lambda cos 2t, sin t + lambda sin 2t).
    Vec2 point(double theta) const {
        return {std::cos(theta) + lambda_ * std::cos(2.0 * theta),
                std::sin(theta) + lambda_ * std::sin(2.0 * theta)};
    }

    /// |w'(theta)| = |1 + 2 lambda e^{i theta}|, the arclength speed.
    double speed(double theta) const {
        return std::sqrt(1.0 + 4.0 * lambda_ * std::cos(theta) + 4.0 * lambda_ * lambda_);
    }

    /// Unit tangent in the direction of increasing theta. Throws
    /// NumericalError at the cusp (lambda = 1/2, theta = pi).
    Vec2 tangent(double theta) const;

    /// Outward unit normal (tangent rotated by -pi/2).
    Vec2 normal(double theta) const {
        const Vec2 t = tangent(theta);
        return {t.y, -t.x};
    }

    /// Signed curvature; positive where the boundary is convex.
    double curvature(double theta) const {
        const double v = speed(theta);
        return (1.0 + 8.0 * lambda_ * lambda_ + 6.0 * lambda_ * std::cos(theta)) / (v * v * v);
    }

    /// Arclength s(theta) from the anchor theta = 0, in [0, L] for theta in [0, 2pi].
    double arclength(double theta) const;

    /// Inverse of arclength(); s is wrapped modulo L. Mutually inverse with
    /// arclength() to 1e-10 or better.
    double theta_from_arclength(double s) const;

    /// Wrap an arclength coordinate into [0, L).
    double wrap(double s) const {
        s = std::fmod(s, perimeter_);
        return s < 0.0 ? s + perimeter_ : s;
    }

private:
    double lambda_;
    double perimeter_;
    double area_;
    int n_;                          // angular table intervals
    double dtheta_;                  // 2pi / n_
    std::vector<double> cum_s_;      // cumulative arclength at theta = i * dtheta_
    std::vector<double> theta_of_s_; // theta at s = j * L / n_ (uniform inverse table)

    double partial_arc(int node, double theta) const;  // integral over [node*dtheta, theta]
};

/// Perimeter by adaptive quadrature (relative error < 1e-10) and the
/// closed-form area pi (1 + 2 lambda^2).
std::pair<double, double> perimeter_area(double lambda);

}  // namespace billiard
