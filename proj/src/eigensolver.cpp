#include "billiard/eigensolver.hpp"

#include <lapacke.h>
#include <omp.h>

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>

#include "billiard/errors.hpp"

namespace billiard {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// mean level spacing in k from the two-term Weyl law; the density is
// floored because the perimeter term drives it negative at small k where
// the true spacings are O(1)
double mean_spacing(const BilliardShape& shape, double k, Parity parity) {
    const double area = 0.5 * shape.area();
    const double len = 0.5 * shape.perimeter() + (parity == Parity::odd ? 2.0 : -2.0);
    const double density = (2.0 * area * k - len) / (4.0 * kPi);
    return 1.0 / std::max(density, 0.4);
}

struct BasisEval {
    // value, x.grad, n.grad, n.grad + n^T H x for one basis function
    double phi, xg, ng, ngx;
};

// Symmetrized plane waves: phi = X(a x) Y(b y) with X in {cos, sin} and
// Y = sin (odd parity) or cos (even parity); a = k cos(alpha),
// b = k sin(alpha).
template <bool Odd>
inline void eval_pair(double a, double b, const Vec2& r, const Vec2& n, BasisEval& e1,
                      BasisEval& e2) {
    const double ca = std::cos(a * r.x), sa = std::sin(a * r.x);
    const double cb = std::cos(b * r.y), sb = std::sin(b * r.y);
    const double Y = Odd ? sb : cb;
    const double Yp = Odd ? cb : -sb;  // d/d(arg)

    // X = cos
    {
        const double phi = ca * Y;
        const double gx = -a * sa * Y;
        const double gy = b * ca * Yp;
        const double hxx = -a * a * phi;
        const double hxy = -a * b * sa * Yp;
        const double hyy = -b * b * phi;
        e1.phi = phi;
        e1.xg = r.x * gx + r.y * gy;
        e1.ng = n.x * gx + n.y * gy;
        e1.ngx = e1.ng + n.x * (hxx * r.x + hxy * r.y) + n.y * (hxy * r.x + hyy * r.y);
    }
    // X = sin
    {
        const double phi = sa * Y;
        const double gx = a * ca * Y;
        const double gy = b * sa * Yp;
        const double hxx = -a * a * phi;
        const double hxy = a * b * ca * Yp;
        const double hyy = -b * b * phi;
        e2.phi = phi;
        e2.xg = r.x * gx + r.y * gy;
        e2.ng = n.x * gx + n.y * gy;
        e2.ngx = e2.ng + n.x * (hxx * r.x + hxy * r.y) + n.y * (hxy * r.x + hyy * r.y);
    }
}

struct TensionSolution {
    double tension = 0.0;
    double tension2 = 0.0;      // second generalized singular value; dips
                                // only when a second level is nearby
    Eigen::VectorXd coeffs;     // basis coefficients of the minimizer
    double interior_norm = 0.0; // c^T G c of the minimizer
    std::vector<double> alphas; // basis direction angles
};

// Assemble the boundary collocation matrix and the interior-norm metric on
// the upper half boundary and return the smallest generalized singular
// value (with minimizer if requested). The metric follows from the Rellich
// identity for two Helmholtz solutions; the symmetry segment drops out for
// both parities.
TensionSolution tension_solve(const BilliardShape& shape, Parity parity, double k, int basis_size,
                              double metric_cutoff, bool want_vector) {
    if (k <= 0.0) throw ConfigError("tension: k must be positive");
    const int n_dir = std::max(1, (basis_size + 1) / 2);
    const int n_basis = 2 * n_dir;
    const int n_coll = static_cast<int>(std::lround(2.0 * n_basis));

    TensionSolution sol;
    sol.alphas.resize(n_dir);
    for (int j = 0; j < n_dir; ++j) sol.alphas[j] = (j + 0.5) * (0.5 * kPi) / n_dir;

    Eigen::MatrixXd Phi(n_coll, n_basis), G1(n_coll, n_basis), G2(n_coll, n_basis),
        G3(n_coll, n_basis);
    Eigen::VectorXd w(n_coll);

    const double dtheta = kPi / n_coll;
    for (int i = 0; i < n_coll; ++i) {
        const double theta = (i + 0.5) * dtheta;
        const Vec2 r = shape.point(theta);
        const Vec2 nrm = shape.normal(theta);
        w(i) = shape.speed(theta) * dtheta;
        for (int j = 0; j < n_dir; ++j) {
            const double a = k * std::cos(sol.alphas[j]);
            const double b = k * std::sin(sol.alphas[j]);
            BasisEval e1, e2;
            if (parity == Parity::odd) {
                eval_pair<true>(a, b, r, nrm, e1, e2);
            } else {
                eval_pair<false>(a, b, r, nrm, e1, e2);
            }
            Phi(i, 2 * j) = e1.phi;
            G1(i, 2 * j) = e1.xg;
            G2(i, 2 * j) = e1.ng;
            G3(i, 2 * j) = e1.ngx;
            Phi(i, 2 * j + 1) = e2.phi;
            G1(i, 2 * j + 1) = e2.xg;
            G2(i, 2 * j + 1) = e2.ng;
            G3(i, 2 * j + 1) = e2.ngx;
        }
    }

    const Eigen::MatrixXd WPhi = w.asDiagonal() * Phi;
    Eigen::MatrixXd B = Phi.transpose() * WPhi;
    const Eigen::MatrixXd P = (w.asDiagonal() * G1).transpose() * G2;
    const Eigen::MatrixXd Q = WPhi.transpose() * G3;
    Eigen::MatrixXd G =
        (P + P.transpose() - Q - Q.transpose()) * (1.0 / (4.0 * k * k));

    // eigendecomposition of the metric; directions below the cutoff are
    // evanescent-degenerate and dropped
    Eigen::VectorXd evals(n_basis);
    int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n_basis, G.data(), n_basis,
                              evals.data());
    if (info != 0) {
        throw NumericalError("tension: metric eigendecomposition failed (info = " +
                             std::to_string(info) + ")");
    }
    const double cutoff = metric_cutoff * std::max(evals.maxCoeff(), 0.0);
    int first_kept = n_basis;
    for (int i = 0; i < n_basis; ++i) {
        if (evals(i) > cutoff && evals(i) > 0.0) {
            first_kept = i;
            break;
        }
    }
    const int rank = n_basis - first_kept;
    if (rank < std::max(4, n_basis / 8)) {
        throw NumericalError(
            "tension: interior-norm metric is ill-conditioned (rank " + std::to_string(rank) +
            " of " + std::to_string(n_basis) + "); reduce basis_size for k = " +
            std::to_string(k));
    }

    Eigen::MatrixXd S = G.rightCols(rank);
    for (int c = 0; c < rank; ++c) S.col(c) /= std::sqrt(evals(first_kept + c));
    Eigen::MatrixXd Bt = S.transpose() * B * S;

    // two smallest eigenpairs of the projected boundary form
    const int n_want = std::min(2, rank);
    Eigen::VectorXd mu(rank);
    Eigen::MatrixXd z(rank, n_want);
    int m_found = 0;
    std::vector<lapack_int> isuppz(2 * std::max(1, rank));
    info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, want_vector ? 'V' : 'N', 'I', 'L', rank, Bt.data(),
                          rank, 0.0, 0.0, 1, n_want, 0.0, &m_found, mu.data(),
                          want_vector ? z.data() : nullptr, rank, isuppz.data());
    if (info != 0 || m_found < 1) {
        throw NumericalError("tension: projected eigenproblem failed (info = " +
                             std::to_string(info) + ")");
    }
    sol.tension = std::sqrt(std::max(mu(0), 0.0));
    sol.tension2 = m_found > 1 ? std::sqrt(std::max(mu(1), 0.0)) : sol.tension;
    if (want_vector) {
        sol.coeffs = S * z.col(0);
        // c^T G c = z^T z in the scaled subspace
        sol.interior_norm = z.col(0).squaredNorm();
    }
    return sol;
}

double golden_minimize(const std::function<double(double)>& f, double a, double b, double xtol,
                       double* fmin) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > xtol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    if (fmin) *fmin = std::min(fc, fd);
    return 0.5 * (a + b);
}

}  // namespace

int basis_size_for(const BilliardShape& shape, double k, const SolverOptions& opts) {
    const double half_len = 0.5 * shape.perimeter();
    const int n = static_cast<int>(std::ceil(opts.waves_per_wavelength * half_len * k / kTwoPi));
    return std::max(opts.basis_min, n);
}

double tension(const BilliardShape& shape, Parity parity, double k, int basis_size) {
    return tension_solve(shape, parity, k, basis_size, SolverOptions{}.metric_cutoff, false)
        .tension;
}

namespace {

struct Minimum {
    double k = 0.0;
    double t = 0.0;
    double flank = -1.0;    // tension of the higher bracket edge, if known
    double flank_h = 0.0;   // distance from k to that edge
};

// refine a bracketed tension minimum and accept it when it genuinely
// undercuts the bracket edges
bool refine_minimum(const BilliardShape& shape, Parity parity, double a, double b, double edge_t,
                    int basis, const SolverOptions& opts, double xtol, Minimum& out) {
    double fmin = 0.0;
    const double km = golden_minimize(
        [&](double k) { return tension_solve(shape, parity, k, basis, opts.metric_cutoff, false)
                            .tension; },
        a, b, xtol, &fmin);
    if (fmin >= opts.dip_factor * edge_t) return false;
    out = {km, fmin};
    return true;
}

void insert_level(std::vector<Minimum>& levels, const Minimum& m, double min_sep) {
    for (const auto& l : levels) {
        if (std::abs(l.k - m.k) < min_sep) return;
    }
    levels.push_back(m);
}

}  // namespace

SpectrumWindow eigenvalues_in_range(const BilliardShape& shape, Parity parity, double k_lo,
                                    double k_hi, const SolverOptions& opts) {
    SpectrumWindow win;
    win.lambda = shape.lambda();
    win.parity = parity;
    win.k_lo = k_lo;
    win.k_hi = k_hi;
    if (k_hi <= k_lo) {
        win.complete = true;
        return win;
    }
    if (k_lo <= 0.0) throw ConfigError("eigenvalues_in_range: k_lo must be positive");
    win.weyl_expected =
        weyl_count(shape, k_hi, true, parity) - weyl_count(shape, k_lo, true, parity);
    if (win.weyl_expected < 10.0) {
        throw ConfigError("eigenvalues_in_range: window must cover >= 10 mean spacings");
    }
    if (opts.jobs > 0) omp_set_num_threads(opts.jobs);

    // scan grid at <= (mean spacing)/8, padded by two steps on each side
    std::vector<double> ks;
    {
        double k = k_lo - 2.0 * opts.scan_step_fraction * mean_spacing(shape, k_lo, parity);
        k = std::max(k, 0.5 * k_lo);
        const double k_end =
            k_hi + 2.0 * opts.scan_step_fraction * mean_spacing(shape, k_hi, parity);
        while (k <= k_end) {
            ks.push_back(k);
            k += opts.scan_step_fraction * mean_spacing(shape, k, parity);
        }
    }
    const auto n_scan = static_cast<long>(ks.size());
    std::vector<double> ts(n_scan);
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n_scan; ++i) {
        ts[i] = tension_solve(shape, parity, ks[i], basis_size_for(shape, ks[i], opts),
                              opts.metric_cutoff, false)
                    .tension;
    }

    // bracket and refine local minima
    std::vector<std::array<double, 4>> brackets;  // a, b, min edge t, max edge t
    for (long i = 1; i + 1 < n_scan; ++i) {
        if (ts[i] < ts[i - 1] && ts[i] <= ts[i + 1]) {
            brackets.push_back({ks[i - 1], ks[i + 1], std::min(ts[i - 1], ts[i + 1]),
                                std::max(ts[i - 1], ts[i + 1])});
        }
    }
    std::vector<Minimum> found;
    const auto n_br = static_cast<long>(brackets.size());
    std::vector<Minimum> refined(n_br);
    std::vector<uint8_t> ok(n_br, 0);
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n_br; ++i) {
        const double kmid = 0.5 * (brackets[i][0] + brackets[i][1]);
        const double xtol = opts.refine_tol_fraction * mean_spacing(shape, kmid, parity);
        Minimum m;
        if (refine_minimum(shape, parity, brackets[i][0], brackets[i][1], brackets[i][2],
                           basis_size_for(shape, kmid, opts), opts, xtol, m)) {
            m.flank = brackets[i][3];
            m.flank_h = 0.5 * (brackets[i][1] - brackets[i][0]);
            refined[i] = m;
            ok[i] = 1;
        }
    }
    for (long i = 0; i < n_br; ++i) {
        if (ok[i]) {
            insert_level(found, refined[i],
                         0.05 * mean_spacing(shape, refined[i].k, parity));
        }
    }
    std::sort(found.begin(), found.end(), [](auto& a, auto& b) { return a.k < b.k; });

    // completeness, local pass 1: rescan anomalously wide gaps at twice the
    // scan resolution (cheap; catches minima the coarse scan undersampled)
    {
        std::vector<std::pair<double, double>> gaps;
        for (size_t i = 0; i + 1 < found.size(); ++i) {
            const double g = weyl_count(shape, found[i + 1].k, true, parity) -
                             weyl_count(shape, found[i].k, true, parity);
            if (g > 2.2) gaps.emplace_back(found[i].k, found[i + 1].k);
        }
        std::vector<Minimum> extra;
        for (const auto& [a, b] : gaps) {
            std::vector<double> fk;
            double k = a + 0.3 * opts.scan_step_fraction * mean_spacing(shape, a, parity);
            while (k < b) {
                fk.push_back(k);
                k += 0.5 * opts.scan_step_fraction * mean_spacing(shape, k, parity);
            }
            const auto nf = static_cast<long>(fk.size());
            std::vector<double> ft(nf);
#pragma omp parallel for schedule(dynamic)
            for (long i = 0; i < nf; ++i) {
                ft[i] = tension_solve(shape, parity, fk[i], basis_size_for(shape, fk[i], opts),
                                      opts.metric_cutoff, false)
                            .tension;
            }
            for (long i = 1; i + 1 < nf; ++i) {
                if (ft[i] < ft[i - 1] && ft[i] <= ft[i + 1]) {
                    const double xtol =
                        opts.refine_tol_fraction * mean_spacing(shape, fk[i], parity);
                    Minimum m;
                    if (refine_minimum(shape, parity, fk[i - 1], fk[i + 1],
                                       std::min(ft[i - 1], ft[i + 1]),
                                       basis_size_for(shape, fk[i], opts), opts, xtol, m)) {
                        extra.push_back(m);
                    }
                }
            }
        }
        for (const auto& m : extra) {
            insert_level(found, m, 0.05 * mean_spacing(shape, m.k, parity));
        }
        std::sort(found.begin(), found.end(), [](auto& a, auto& b) { return a.k < b.k; });
    }

    // completeness, local pass 2: near-degenerate partners. A level merged
    // with a neighbor inside one scan step leaves a single minimum of the
    // smallest singular value, but the SECOND singular value at the
    // refined position dips in proportion to the pair separation. When it
    // does, hunt the partner with one-sided golden searches.
    {
        const auto n_found = static_cast<long>(found.size());
        std::vector<std::vector<Minimum>> extra(n_found);
        std::vector<uint8_t> degenerate(n_found, 0);
        SolverOptions tight = opts;
        tight.dip_factor = 0.05;
#pragma omp parallel for schedule(dynamic)
        for (long i = 0; i < n_found; ++i) {
            const double k0 = found[i].k;
            const double delta = mean_spacing(shape, k0, parity);
            const int basis = basis_size_for(shape, k0, opts);
            const auto sol = tension_solve(shape, parity, k0, basis, opts.metric_cutoff, false);
            // V-flank scale from the higher scan-bracket edge (clean of any
            // partner); levels without bracket data get fresh probes at
            // +-2 scan steps
            double flank = found[i].flank;
            double h = found[i].flank_h;
            if (flank < 0.0) {
                h = 2.0 * opts.scan_step_fraction * delta;
                const double t_hi =
                    tension_solve(shape, parity, k0 + h, basis, opts.metric_cutoff, false)
                        .tension;
                const double t_lo =
                    tension_solve(shape, parity, k0 - h, basis, opts.metric_cutoff, false)
                        .tension;
                flank = std::max(t_lo, t_hi);
            }
            const double slope = flank / h;
            if (slope <= 0.0) continue;
            const double d_est = sol.tension2 / slope;  // partner distance estimate
            if (d_est > 0.35 * delta) continue;         // nearest level is far: isolated
            if (d_est < 4.0 * opts.refine_tol_fraction * delta) {
                degenerate[i] = 1;  // unresolvable double minimum
                continue;
            }
            const double xtol = 0.2 * opts.refine_tol_fraction * delta;
            const double inner = 1.5 * opts.refine_tol_fraction * delta;
            const double outer = std::min(3.0 * d_est, 0.45 * delta);
            for (int side = -1; side <= 1; side += 2) {
                const double a = side < 0 ? k0 - outer : k0 + inner;
                const double b = side < 0 ? k0 - inner : k0 + outer;
                Minimum m;
                if (!refine_minimum(shape, parity, a, b, flank, basis, tight, xtol, m)) continue;
                // golden slides to a bracket edge on a monotone flank; a
                // genuine partner is an interior, orders-deep notch
                if (m.k - a < 2.0 * xtol || b - m.k < 2.0 * xtol) continue;
                if (m.t > 2e-3 * flank) continue;
                extra[i].push_back(m);
            }
        }
        for (long i = 0; i < n_found; ++i) {
            for (const auto& m : extra[i]) {
                insert_level(found, m, 3.0 * opts.refine_tol_fraction *
                                           mean_spacing(shape, m.k, parity));
            }
            if (degenerate[i]) win.flagged_degenerate.push_back(found[i].k);
        }
        std::sort(found.begin(), found.end(), [](auto& a, auto& b) { return a.k < b.k; });
    }

    for (const auto& m : found) {
        if (m.k >= k_lo && m.k <= k_hi) {
            win.levels.push_back(m.k);
            win.tensions.push_back(m.t);
        }
    }
    const double dev = std::abs(static_cast<double>(win.levels.size()) - win.weyl_expected);
    win.complete = dev <= std::max(2.0, 0.005 * win.weyl_expected);
    return win;
}

namespace {

struct NormalizedSolution {
    EigenState state;
    TensionSolution sol;
    double scale = 1.0;
};

NormalizedSolution normalized_solution(const BilliardShape& shape, Parity parity, double k,
                                       const SolverOptions& opts);

}  // namespace

EigenState boundary_function(const BilliardShape& shape, Parity parity, double k,
                             const SolverOptions& opts) {
    return normalized_solution(shape, parity, k, opts).state;
}

double InteriorEval::psi(const Vec2& r) const {
    double acc = 0.0;
    for (size_t j = 0; j < alphas.size(); ++j) {
        const double a = k * std::cos(alphas[j]);
        const double b = k * std::sin(alphas[j]);
        const double y = parity == Parity::odd ? std::sin(b * r.y) : std::cos(b * r.y);
        acc += (coeffs[2 * j] * std::cos(a * r.x) + coeffs[2 * j + 1] * std::sin(a * r.x)) * y;
    }
    return acc;
}

InteriorEval interior_eval(const BilliardShape& shape, Parity parity, double k,
                           const SolverOptions& opts) {
    const NormalizedSolution ns = normalized_solution(shape, parity, k, opts);
    InteriorEval ev;
    ev.k = k;
    ev.parity = parity;
    ev.alphas = ns.sol.alphas;
    ev.coeffs.resize(ns.sol.coeffs.size());
    for (int i = 0; i < ns.sol.coeffs.size(); ++i) ev.coeffs[i] = ns.sol.coeffs(i) * ns.scale;
    return ev;
}

namespace {

NormalizedSolution normalized_solution(const BilliardShape& shape, Parity parity, double k,
                                       const SolverOptions& opts) {
    const int basis = basis_size_for(shape, k, opts);
    TensionSolution sol = tension_solve(shape, parity, k, basis, opts.metric_cutoff, true);

    EigenState st;
    st.k = k;
    st.parity = parity;
    st.tension = sol.tension;

    const double L = shape.perimeter();
    const auto n_s = static_cast<int>(std::ceil(10.0 * k * L / kPi));  // ds <= lambda_B/20
    st.ds = L / n_s;
    st.u.resize(n_s);

    const int n_dir = static_cast<int>(sol.alphas.size());
    double norm_acc = 0.0;
    for (int i = 0; i < n_s; ++i) {
        const double theta = shape.theta_from_arclength(i * st.ds);
        const Vec2 r = shape.point(theta);
        const Vec2 nrm = shape.normal(theta);
        double u = 0.0;
        for (int j = 0; j < n_dir; ++j) {
            const double a = k * std::cos(sol.alphas[j]);
            const double b = k * std::sin(sol.alphas[j]);
            BasisEval e1, e2;
            if (parity == Parity::odd) {
                eval_pair<true>(a, b, r, nrm, e1, e2);
            } else {
                eval_pair<false>(a, b, r, nrm, e1, e2);
            }
            u += sol.coeffs(2 * j) * e1.ng + sol.coeffs(2 * j + 1) * e2.ng;
        }
        st.u[i] = u;
        norm_acc += (r.x * nrm.x + r.y * nrm.y) * u * u;
    }
    // interior norm over the full billiard from the boundary identity
    const double interior = norm_acc * st.ds / (2.0 * k * k);
    if (interior <= 0.0) {
        throw NumericalError("boundary_function: non-positive interior norm at k = " +
                             std::to_string(k));
    }
    const double scale = 1.0 / std::sqrt(interior);
    for (double& u : st.u) u *= scale;
    // cross-check against the half-domain metric norm (factor 2 for the
    // full domain)
    st.norm_residual = std::abs(2.0 * sol.interior_norm * scale * scale - 1.0);
    return {std::move(st), std::move(sol), scale};
}

}  // namespace

std::vector<EigenState> boundary_functions(const BilliardShape& shape, Parity parity,
                                           std::span<const double> levels,
                                           const SolverOptions& opts) {
    if (opts.jobs > 0) omp_set_num_threads(opts.jobs);
    std::vector<EigenState> states(levels.size());
    const auto n = static_cast<long>(levels.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        states[i] = boundary_function(shape, parity, levels[i], opts);
    }
    return states;
}

}  // namespace billiard
