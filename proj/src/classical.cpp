#include "billiard/classical.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <string>

#include "billiard/errors.hpp"
#include "billiard/rng.hpp"

namespace billiard {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Small complex helper. std::complex multiplication lowers to __muldc3
// without fast-math, which is too slow for the bounce inner loop.
struct Cplx {
    double re = 0.0, im = 0.0;
    Cplx operator+(const Cplx& o) const { return {re + o.re, im + o.im}; }
    Cplx operator-(const Cplx& o) const { return {re - o.re, im - o.im}; }
    Cplx operator*(const Cplx& o) const {
        return {re * o.re - im * o.im, re * o.im + im * o.re};
    }
    Cplx operator*(double c) const { return {c * re, c * im}; }
    Cplx conj() const { return {re, -im}; }
    double abs2() const { return re * re + im * im; }
    double abs() const { return std::sqrt(abs2()); }
};

Cplx operator*(double c, const Cplx& z) { return {c * z.re, c * z.im}; }

Cplx cdiv(const Cplx& a, const Cplx& b) {
    const double d = b.abs2();
    return {(a.re * b.re + a.im * b.im) / d, (a.im * b.re - a.re * b.im) / d};
}

Cplx csqrt(const Cplx& z) {
    const double r = z.abs();
    const double u = std::sqrt(0.5 * (r + z.re));
    const double v = std::sqrt(0.5 * (r - z.re));
    return {u, z.im >= 0.0 ? v : -v};
}

Cplx ccbrt(const Cplx& z) {
    const double r = std::cbrt(z.abs());
    const double a = std::atan2(z.im, z.re) / 3.0;
    return {r * std::cos(a), r * std::sin(a)};
}

// State in boundary-angle coordinates; the hot loops avoid the s <-> theta
// conversion until a cell index is actually needed.
struct ThetaState {
    double theta = 0.0;
    double p = 0.0;
};

struct Frame {
    Vec2 r;        // boundary point
    Vec2 tangent;  // unit, counterclockwise
    Vec2 normal;   // unit, outward
};

inline Frame frame_at(double lambda, double theta) {
    const double ct = std::cos(theta), st = std::sin(theta);
    const double c2 = ct * ct - st * st, s2 = 2.0 * st * ct;
    const double dx = -st - 2.0 * lambda * s2;
    const double dy = ct + 2.0 * lambda * c2;
    const double v = std::sqrt(dx * dx + dy * dy);
    Frame f;
    f.r = {ct + lambda * c2, st + lambda * s2};
    f.tangent = {dx / v, dy / v};
    f.normal = {f.tangent.y, -f.tangent.x};
    return f;
}

inline double chord_equation(double lambda, double theta, const Vec2& r0, const Vec2& nv) {
    const double ct = std::cos(theta), st = std::sin(theta);
    const double c2 = ct * ct - st * st, s2 = 2.0 * st * ct;
    return (ct + lambda * c2 - r0.x) * nv.x + (st + lambda * s2 - r0.y) * nv.y;
}

inline double chord_equation_deriv(double lambda, double theta, const Vec2& nv) {
    const double ct = std::cos(theta), st = std::sin(theta);
    const double c2 = ct * ct - st * st, s2 = 2.0 * st * ct;
    return (-st - 2.0 * lambda * s2) * nv.x + (ct + 2.0 * lambda * c2) * nv.y;
}

// Roots of b3 z^3 + b2 z^2 + b1 z + b0 (complex coefficients). Degenerate
// leading coefficients fall back to the quadratic/linear formulas.
int cubic_roots(const Cplx& b3, const Cplx& b2, const Cplx& b1, const Cplx& b0,
                std::array<Cplx, 3>& roots) {
    const double scale = std::max({b3.abs(), b2.abs(), b1.abs(), b0.abs()});
    if (scale == 0.0) return 0;
    if (b3.abs() < 1e-13 * scale) {
        if (b2.abs() < 1e-13 * scale) {
            if (b1.abs() < 1e-13 * scale) return 0;
            roots[0] = cdiv(Cplx{-b0.re, -b0.im}, b1);
            return 1;
        }
        // stable quadratic: pick the sqrt branch that avoids cancellation
        const Cplx disc = csqrt(b1 * b1 - 4.0 * (b2 * b0));
        const Cplx cand1 = b1 + disc, cand2 = b1 - disc;
        const Cplx q = (cand1.abs2() >= cand2.abs2() ? cand1 : cand2) * -0.5;
        roots[0] = cdiv(q, b2);
        roots[1] = q.abs2() > 0.0 ? cdiv(b0, q) : Cplx{0.0, 0.0};
        return 2;
    }
    const Cplx a = cdiv(b2, b3), b = cdiv(b1, b3), c = cdiv(b0, b3);
    const Cplx shift = a * (1.0 / 3.0);
    const Cplx p = b - a * a * (1.0 / 3.0);
    const Cplx q = a * a * a * (2.0 / 27.0) - a * b * (1.0 / 3.0) + c;
    const Cplx sq = csqrt(q * q * 0.25 + p * p * p * (1.0 / 27.0));
    Cplx u3 = q * -0.5 + sq;
    const Cplx u3b = q * -0.5 - sq;
    if (u3b.abs2() > u3.abs2()) u3 = u3b;
    if (u3.abs2() == 0.0) {
        roots[0] = roots[1] = roots[2] = Cplx{0.0, 0.0} - shift;
        return 3;
    }
    const Cplx u = ccbrt(u3);
    const Cplx v = cdiv(p * (-1.0 / 3.0), u);
    const Cplx w{-0.5, 0.5 * std::sqrt(3.0)};
    roots[0] = u + v - shift;
    roots[1] = w * u + w.conj() * v - shift;
    roots[2] = w.conj() * u + w * v - shift;
    // one Newton step per root against the cubic tightens Cardano roundoff
    for (auto& z : roots) {
        const Cplx f = ((b3 * z + b2) * z + b1) * z + b0;
        const Cplx df = (3.0 * (b3 * z) + 2.0 * b2) * z + b1;
        if (df.abs2() > 0.0) z = z - cdiv(f, df);
    }
    return 3;
}

// Next intersection of the ray from theta0 along v with the boundary.
// On the unit circle in z-space the chord condition Re(conj(n)(w(z)-r0)) = 0
// becomes a quartic with a known root at z0 = e^{i theta0}.
bool next_intersection_quartic(double lambda, double theta0, const Vec2& r0, const Vec2& v,
                               double& theta_out, double& travel_out) {
    const Vec2 nv{-v.y, v.x};
    const Cplx n{nv.x, nv.y};
    const double h = r0.x * nv.x + r0.y * nv.y;

    const Cplx a4 = lambda * n.conj();
    const Cplx a3 = n.conj();
    const Cplx a2{-2.0 * h, 0.0};
    const Cplx a1 = n;
    const Cplx a0 = lambda * n;

    const Cplx z0{std::cos(theta0), std::sin(theta0)};
    const Cplx b3 = a4;
    const Cplx b2 = a3 + b3 * z0;
    const Cplx b1 = a2 + b2 * z0;
    const Cplx b0 = a1 + b1 * z0;

    std::array<Cplx, 3> roots;
    const int nr = cubic_roots(b3, b2, b1, b0, roots);

    double best_travel = std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    for (int i = 0; i < nr; ++i) {
        const double mod = roots[i].abs();
        if (std::abs(mod - 1.0) > 1e-6) continue;
        double theta = std::atan2(roots[i].im, roots[i].re);
        if (theta < 0.0) theta += kTwoPi;
        for (int it = 0; it < 3; ++it) {
            const double g = chord_equation(lambda, theta, r0, nv);
            const double dg = chord_equation_deriv(lambda, theta, nv);
            if (std::abs(dg) < 1e-14) break;
            theta -= g / dg;
        }
        if (theta < 0.0) theta += kTwoPi;
        if (theta >= kTwoPi) theta -= kTwoPi;
        if (std::abs(chord_equation(lambda, theta, r0, nv)) > 1e-8) continue;
        const double ct = std::cos(theta), st = std::sin(theta);
        const Vec2 r{ct + lambda * (ct * ct - st * st), st + lambda * 2.0 * st * ct};
        const double travel = (r.x - r0.x) * v.x + (r.y - r0.y) * v.y;
        if (travel > 1e-12 && travel < best_travel) {
            best_travel = travel;
            best_theta = theta;
        }
    }
    if (!std::isfinite(best_travel)) return false;
    theta_out = best_theta;
    travel_out = best_travel;
    return true;
}

// Reference route: coarse angular scan, bisection, Newton.
bool next_intersection_scan(double lambda, double theta0, const Vec2& r0, const Vec2& v,
                            double& theta_out, double& travel_out) {
    const Vec2 nv{-v.y, v.x};
    constexpr int kSectors = 256;
    const double delta = kTwoPi / (8.0 * kSectors);
    const double lo = theta0 + delta, hi = theta0 + kTwoPi - delta;
    const double step = (hi - lo) / kSectors;

    double best_travel = std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    double ga = chord_equation(lambda, lo, r0, nv);
    for (int i = 0; i < kSectors; ++i) {
        const double xb = lo + (i + 1) * step;
        const double gb = chord_equation(lambda, xb, r0, nv);
        if (ga == 0.0 || ga * gb < 0.0) {
            double a = lo + i * step, b = xb;
            for (int it = 0; it < 60 && (b - a) > 1e-13; ++it) {
                const double m = 0.5 * (a + b);
                const double gm = chord_equation(lambda, m, r0, nv);
                if (gm == 0.0) {
                    a = b = m;
                } else if (gm * chord_equation(lambda, a, r0, nv) < 0.0) {
                    b = m;
                } else {
                    a = m;
                }
            }
            double theta = 0.5 * (a + b);
            for (int it = 0; it < 2; ++it) {
                const double g = chord_equation(lambda, theta, r0, nv);
                const double dg = chord_equation_deriv(lambda, theta, nv);
                if (std::abs(dg) < 1e-14) break;
                theta -= g / dg;
            }
            double tw = std::fmod(theta, kTwoPi);
            if (tw < 0.0) tw += kTwoPi;
            const double ct = std::cos(tw), st = std::sin(tw);
            const Vec2 r{ct + lambda * (ct * ct - st * st), st + lambda * 2.0 * st * ct};
            const double travel = (r.x - r0.x) * v.x + (r.y - r0.y) * v.y;
            if (travel > 1e-12 && travel < best_travel) {
                best_travel = travel;
                best_theta = tw;
            }
        }
        ga = gb;
    }
    if (!std::isfinite(best_travel)) return false;
    theta_out = best_theta;
    travel_out = best_travel;
    return true;
}

template <bool UseQuartic>
ThetaState step_theta(const BilliardShape& shape, const ThetaState& in, double& chord) {
    const double lambda = shape.lambda();
    if (std::abs(in.p) >= 1.0 - 1e-14) {
        throw NumericalError("bounce_step: tangential state |p| = 1 cannot advance (s-angle " +
                             std::to_string(in.theta) + ")");
    }
    const Frame f0 = frame_at(lambda, in.theta);
    const double inward = std::sqrt(1.0 - in.p * in.p);
    const Vec2 v{in.p * f0.tangent.x - inward * f0.normal.x,
                 in.p * f0.tangent.y - inward * f0.normal.y};

    double theta1 = 0.0, travel = 0.0;
    bool ok = false;
    if constexpr (UseQuartic) {
        ok = next_intersection_quartic(lambda, in.theta, f0.r, v, theta1, travel);
        if (!ok) ok = next_intersection_scan(lambda, in.theta, f0.r, v, theta1, travel);
    } else {
        ok = next_intersection_scan(lambda, in.theta, f0.r, v, theta1, travel);
    }
    if (!ok) {
        throw NumericalError("bounce_step: no forward boundary intersection (lambda = " +
                             std::to_string(lambda) + ", theta = " + std::to_string(in.theta) +
                             ", p = " + std::to_string(in.p) + ")");
    }
    const Frame f1 = frame_at(lambda, theta1);
    const double p1 = v.x * f1.tangent.x + v.y * f1.tangent.y;
    chord = travel;
    return {theta1, std::clamp(p1, -1.0, 1.0)};
}

inline std::pair<int, int> cell_of_theta(const BilliardShape& shape, double theta, double p) {
    const double L = shape.perimeter();
    double q = shape.arclength(theta);
    if (q > 0.5 * L) q = L - q;
    const double pp = std::abs(p);
    const int iq = std::min(ChaosGrid::kCells - 1,
                            static_cast<int>(q * (2.0 * ChaosGrid::kCells) / L));
    const int jp = std::min(ChaosGrid::kCells - 1, static_cast<int>(pp * ChaosGrid::kCells));
    return {iq, jp};
}

long count_bits(const std::vector<uint8_t>& grid) {
    long n = 0;
    for (uint8_t b : grid) n += b;
    return n;
}

}  // namespace

BounceResult bounce_step(const BilliardShape& shape, const SosState& state) {
    double chord = 0.0;
    const ThetaState out =
        step_theta<true>(shape, {shape.theta_from_arclength(state.s), state.p}, chord);
    return {{shape.arclength(out.theta), out.p}, chord};
}

BounceResult bounce_step_reference(const BilliardShape& shape, const SosState& state) {
    double chord = 0.0;
    const ThetaState out =
        step_theta<false>(shape, {shape.theta_from_arclength(state.s), state.p}, chord);
    return {{shape.arclength(out.theta), out.p}, chord};
}

std::pair<int, int> ChaosGrid::cell_of(const BilliardShape& shape, double s, double p) {
    const double L = shape.perimeter();
    double q = shape.wrap(s);
    if (q > 0.5 * L) q = L - q;
    const double pp = std::min(std::abs(p), 1.0);
    const int iq = std::min(kCells - 1, static_cast<int>(q * (2.0 * kCells) / L));
    const int jp = std::min(kCells - 1, static_cast<int>(pp * kCells));
    return {iq, jp};
}

double lyapunov_estimate(const BilliardShape& shape, const SosState& seed, int n_steps) {
    constexpr double d0 = 1e-9;
    const double L = shape.perimeter();
    ThetaState a{shape.theta_from_arclength(seed.s), seed.p};
    ThetaState b{shape.theta_from_arclength(shape.wrap(seed.s + d0)), seed.p};
    double chord = 0.0;
    double sum = 0.0;
    for (int i = 0; i < n_steps; ++i) {
        a = step_theta<true>(shape, a, chord);
        b = step_theta<true>(shape, b, chord);
        double ds = shape.arclength(a.theta) - shape.arclength(b.theta);
        ds -= L * std::round(ds / L);
        const double dp = a.p - b.p;
        const double d = std::sqrt(ds * ds + dp * dp);
        if (d <= 0.0) return 0.0;
        sum += std::log(d / d0);
        // renormalize the companion orbit back to distance d0
        const double f = d0 / d;
        double s_b = shape.wrap(shape.arclength(a.theta) - ds * f);
        b.theta = shape.theta_from_arclength(s_b);
        b.p = std::clamp(a.p - dp * f, -1.0, 1.0);
    }
    return sum / n_steps;
}

ChaosGrid build_chaos_grid(const BilliardShape& shape, uint64_t n_collisions,
                           std::optional<SosState> seed_state, uint64_t rng_seed, int jobs) {
    constexpr int kSubOrbits = 64;
    constexpr uint64_t kPilot = 200000;
    const double L = shape.perimeter();

    // Candidate seeds: an explicit one if given, otherwise a deterministic
    // list drawn from the RNG. A candidate qualifies when its Lyapunov
    // estimate is positive and its pilot footprint keeps growing.
    std::vector<SosState> candidates;
    if (seed_state) {
        candidates.push_back(*seed_state);
    } else {
        Rng rng(rng_seed, 0xC0FFEE);
        candidates.push_back({0.13 * L, 0.18});
        for (int i = 0; i < 8; ++i)
            candidates.push_back({rng.uniform(0.0, L), rng.uniform(0.05, 0.7)});
    }

    std::vector<ThetaState> starts;
    bool found = false;
    for (const auto& cand : candidates) {
        if (lyapunov_estimate(shape, cand) < 0.05) continue;
        // pilot orbit: footprint growth test + sub-orbit start states
        std::vector<uint8_t> pilot_grid(ChaosGrid::kCells * ChaosGrid::kCells, 0);
        ThetaState st{shape.theta_from_arclength(cand.s), cand.p};
        double chord = 0.0;
        long half_count = 0;
        starts.clear();
        const uint64_t stride = kPilot / kSubOrbits;
        for (uint64_t i = 0; i < kPilot; ++i) {
            st = step_theta<true>(shape, st, chord);
            const auto [iq, jp] = cell_of_theta(shape, st.theta, st.p);
            pilot_grid[iq * ChaosGrid::kCells + jp] = 1;
            if (i == kPilot / 2) half_count = count_bits(pilot_grid);
            if ((i + 1) % stride == 0) starts.push_back(st);
        }
        const long full_count = count_bits(pilot_grid);
        if (full_count < 4000 && full_count < half_count + half_count / 50) continue;
        found = true;
        break;
    }
    if (!found) {
        throw NumericalError("build_chaos_grid: seed not chaotic (lambda = " +
                             std::to_string(shape.lambda()) + ")");
    }

    const uint64_t per_orbit = std::max<uint64_t>(1, n_collisions / kSubOrbits);
    const uint64_t checkpoint = per_orbit - per_orbit / 10;
    const int grid_bytes = ChaosGrid::kCells * ChaosGrid::kCells;
    std::vector<std::vector<uint8_t>> full(kSubOrbits), at90(kSubOrbits);

    if (jobs > 0) omp_set_num_threads(jobs);
#pragma omp parallel for schedule(dynamic)
    for (int w = 0; w < kSubOrbits; ++w) {
        std::vector<uint8_t> g(grid_bytes, 0);
        ThetaState st = starts[w % starts.size()];
        double chord = 0.0;
        for (uint64_t i = 0; i < per_orbit; ++i) {
            st = step_theta<true>(shape, st, chord);
            const auto [iq, jp] = cell_of_theta(shape, st.theta, st.p);
            g[iq * ChaosGrid::kCells + jp] = 1;
            if (i + 1 == checkpoint) at90[w] = g;
        }
        full[w] = std::move(g);
    }

    ChaosGrid grid;
    grid.visited.assign(grid_bytes, 0);
    std::vector<uint8_t> merged90(grid_bytes, 0);
    for (int w = 0; w < kSubOrbits; ++w) {
        for (int c = 0; c < grid_bytes; ++c) {
            grid.visited[c] |= full[w][c];
            merged90[c] |= at90[w][c];
        }
    }
    grid.n_chaotic = count_bits(grid.visited);
    const long n90 = count_bits(merged90);
    grid.growth_last_decade =
        grid.n_chaotic > 0 ? static_cast<double>(grid.n_chaotic - n90) / grid.n_chaotic : 0.0;
    grid.converged = grid.growth_last_decade < 1e-3;
    grid.collisions = per_orbit * kSubOrbits;
    return grid;
}

RhoEstimate estimate_rho_r(const BilliardShape& shape, const ChaosGrid& grid, long n_samples,
                           uint64_t rng_seed, int jobs, int footprint_steps,
                           double chaotic_threshold) {
    if (n_samples < 1000) {
        throw ConfigError("estimate_rho_r: n_samples must be >= 1000");
    }
    const double L = shape.perimeter();
    std::vector<double> weight(n_samples, 0.0);
    std::vector<uint8_t> chaotic(n_samples, 0);

    if (jobs > 0) omp_set_num_threads(jobs);
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < n_samples; ++i) {
        Rng rng(rng_seed, static_cast<uint64_t>(i));
        ThetaState st{shape.theta_from_arclength(rng.uniform(0.0, L)), rng.uniform(-1.0, 1.0)};
        double chord_sum = 0.0;
        long on_chaotic = 0;
        double chord = 0.0;
        for (int n = 0; n < footprint_steps; ++n) {
            st = step_theta<true>(shape, st, chord);
            chord_sum += chord;
            const auto [iq, jp] = cell_of_theta(shape, st.theta, st.p);
            if (grid.visited[iq * ChaosGrid::kCells + jp]) ++on_chaotic;
        }
        weight[i] = chord_sum / footprint_steps;
        chaotic[i] = static_cast<double>(on_chaotic) > chaotic_threshold * footprint_steps;
    }

    // index-ordered reductions keep the result independent of the schedule
    double w_tot = 0.0, w_chaotic = 0.0;
    for (long i = 0; i < n_samples; ++i) {
        w_tot += weight[i];
        if (chaotic[i]) w_chaotic += weight[i];
    }
    const double rho_c = w_tot > 0.0 ? w_chaotic / w_tot : 0.0;

    constexpr int kBatches = 32;
    double mean_sq = 0.0;
    int used = 0;
    for (int b = 0; b < kBatches; ++b) {
        const long lo = n_samples * b / kBatches, hi = n_samples * (b + 1) / kBatches;
        double wt = 0.0, wc = 0.0;
        for (long i = lo; i < hi; ++i) {
            wt += weight[i];
            if (chaotic[i]) wc += weight[i];
        }
        if (wt > 0.0) {
            const double d = wc / wt - rho_c;
            mean_sq += d * d;
            ++used;
        }
    }
    RhoEstimate est;
    est.rho_c = rho_c;
    est.rho_r = 1.0 - rho_c;
    est.std_error = used > 1 ? std::sqrt(mean_sq / (used - 1) / used) : 0.0;
    est.n_samples = n_samples;
    return est;
}

namespace {

std::vector<uint64_t> log_checkpoints(uint64_t max_collisions) {
    std::vector<uint64_t> pts;
    for (uint64_t n = 1; n <= 9 && n <= max_collisions; ++n) pts.push_back(n);
    for (int k = 16;; ++k) {
        const auto n = static_cast<uint64_t>(std::llround(std::pow(10.0, k / 16.0)));
        if (n > max_collisions) break;
        if (pts.empty() || n > pts.back()) pts.push_back(n);
    }
    if (pts.empty() || pts.back() != max_collisions) pts.push_back(max_collisions);
    return pts;
}

TransportResult transport_impl(const BilliardShape& shape, const ChaosGrid& grid, long n_ensemble,
                               uint64_t max_collisions, uint64_t rng_seed, int jobs,
                               bool parallel) {
    if (n_ensemble < 10000) {
        throw ConfigError("transport_time: n_ensemble must be >= 1e4");
    }
    const double L = shape.perimeter();
    const auto checkpoints = log_checkpoints(max_collisions);
    const auto n_cp = static_cast<long>(checkpoints.size());

    // fixed chunk decomposition: per-chunk sums are later merged in index
    // order, so the result does not depend on the thread count
    constexpr long kChunks = 256;
    std::vector<std::vector<double>> chunk_sum(kChunks, std::vector<double>(n_cp, 0.0));

    if (parallel && jobs > 0) omp_set_num_threads(jobs);
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (long c = 0; c < kChunks; ++c) {
        auto& acc = chunk_sum[c];
        const long lo = n_ensemble * c / kChunks, hi = n_ensemble * (c + 1) / kChunks;
        for (long orbit = lo; orbit < hi; ++orbit) {
            Rng rng(rng_seed, 0x7A5E0000ULL + static_cast<uint64_t>(orbit));
            // uniform in the chaotic component at p = 0, s in [0, L/2]
            double s0 = 0.0;
            bool placed = false;
            for (int tries = 0; tries < 40000; ++tries) {
                s0 = rng.uniform(0.0, 0.5 * L);
                const auto [iq, jp] = ChaosGrid::cell_of(shape, s0, 0.0);
                if (grid.visited[iq * ChaosGrid::kCells + jp]) {
                    placed = true;
                    break;
                }
            }
            if (!placed) {
                throw NumericalError("transport_time: no chaotic cells on the p = 0 line");
            }
            ThetaState st{shape.theta_from_arclength(s0), 0.0};
            double chord = 0.0;
            uint64_t n = 0;
            for (long icp = 0; icp < n_cp; ++icp) {
                for (; n < checkpoints[icp]; ++n) st = step_theta<true>(shape, st, chord);
                acc[icp] += st.p * st.p;
            }
        }
    }

    TransportResult out;
    out.p2_curve.resize(n_cp);
    for (long icp = 0; icp < n_cp; ++icp) {
        double sum = 0.0;
        for (long c = 0; c < kChunks; ++c) sum += chunk_sum[c][icp];
        out.p2_curve[icp] = {checkpoints[icp], sum / static_cast<double>(n_ensemble)};
    }

    // saturation = mean over the last decade; the curve counts as saturated
    // when the relative rise across that decade is below 5%
    const double n_hi = static_cast<double>(max_collisions);
    const double n_lo = n_hi / 10.0;
    double sat = 0.0;
    long n_sat = 0;
    double first_in_decade = 0.0, last_in_decade = 0.0;
    bool first_set = false;
    for (const auto& [n, p2] : out.p2_curve) {
        if (static_cast<double>(n) >= n_lo) {
            sat += p2;
            ++n_sat;
            if (!first_set) {
                first_in_decade = p2;
                first_set = true;
            }
            last_in_decade = p2;
        }
    }
    sat = n_sat > 0 ? sat / n_sat : 0.0;
    out.saturation = sat;
    out.saturated =
        sat > 0.0 && std::abs(last_in_decade - first_in_decade) < 0.05 * sat;

    out.transport_collisions = max_collisions;
    for (const auto& [n, p2] : out.p2_curve) {
        if (p2 >= 0.9 * sat) {
            out.transport_collisions = std::max<uint64_t>(n, 1);
            break;
        }
    }
    return out;
}

}  // namespace

TransportResult transport_time(const BilliardShape& shape, const ChaosGrid& grid, long n_ensemble,
                               uint64_t max_collisions, uint64_t rng_seed, int jobs) {
    return transport_impl(shape, grid, n_ensemble, max_collisions, rng_seed, jobs, true);
}

TransportResult transport_time_serial(const BilliardShape& shape, const ChaosGrid& grid,
                                      long n_ensemble, uint64_t max_collisions,
                                      uint64_t rng_seed) {
    return transport_impl(shape, grid, n_ensemble, max_collisions, rng_seed, 1, false);
}

AlphaResult alpha_parameter(double k, double n_transport) {
    if (k <= 0.0 || n_transport < 1.0) {
        throw ConfigError("alpha_parameter: requires k > 0 and N_T >= 1");
    }
    AlphaResult r;
    r.alpha = 2.0 * k / n_transport;
    r.localization_expected = r.alpha <= 1.0;
    return r;
}

}  // namespace billiard
