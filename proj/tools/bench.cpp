// Serial-vs-parallel benchmark for the hot kernels: bounce map (closed-form
// quartic vs reference scan), transport ensemble, Husimi grid evaluation,
// and the tension scan.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <vector>

#include "billiard/classical.hpp"
#include "billiard/eigensolver.hpp"
#include "billiard/husimi.hpp"
#include "billiard/pipeline.hpp"
#include "billiard/rng.hpp"

using namespace billiard;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main() {
    init_runtime(0);
    const int threads = omp_get_max_threads();
    std::printf("threads: %d\n\n", threads);

    const BilliardShape shape(0.15);

    // bounce map: quartic vs reference scan
    {
        constexpr int n = 200000;
        SosState st{0.1, 0.2};
        auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < n; ++i) st = bounce_step(shape, st).next;
        const double t_fast = seconds_since(t0);

        st = {0.1, 0.2};
        constexpr int n_ref = 4000;
        t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < n_ref; ++i) st = bounce_step_reference(shape, st).next;
        const double t_ref = seconds_since(t0) * (static_cast<double>(n) / n_ref);

        std::printf("bounce map      %10.0f ns/step (quartic)\n", t_fast / n * 1e9);
        std::printf("bounce map ref  %10.0f ns/step (scan+bisection), x%.0f\n",
                    t_ref / n * 1e9, t_ref / t_fast);
    }

    // transport ensemble: serial vs OpenMP
    {
        const ChaosGrid grid = build_chaos_grid(shape, 2000000, std::nullopt, 1, 0);
        auto t0 = std::chrono::steady_clock::now();
        const auto serial = transport_time_serial(shape, grid, 10000, 2000, 1);
        const double t_serial = seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        const auto parallel = transport_time(shape, grid, 10000, 2000, 1, 0);
        const double t_parallel = seconds_since(t0);
        std::printf("\ntransport       %10.2f s serial, %.2f s x%d threads (speedup %.2f)\n",
                    t_serial, t_parallel, threads, t_serial / t_parallel);
        std::printf("                identical curves: %s\n",
                    serial.p2_curve == parallel.p2_curve ? "yes" : "NO");
    }

    // Husimi grid: serial vs OpenMP
    {
        const double k = 100.0;
        const auto n_s = static_cast<int>(std::ceil(10.0 * k * shape.perimeter() / M_PI));
        EigenState state;
        state.k = k;
        state.ds = shape.perimeter() / n_s;
        state.u.resize(n_s);
        for (int i = 0; i < n_s; ++i) state.u[i] = std::sin(34.0 * 2.0 * M_PI * i / n_s);

        auto t0 = std::chrono::steady_clock::now();
        const auto hs = husimi_grid_serial(state, shape);
        const double t_serial = seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        const auto hp = husimi_grid(state, shape, 0);
        const double t_parallel = seconds_since(t0);
        std::printf("\nhusimi grid     %10.2f s serial, %.2f s x%d threads (speedup %.2f)\n",
                    t_serial, t_parallel, threads, t_serial / t_parallel);
        std::printf("                identical grids: %s\n", hs.h == hp.h ? "yes" : "NO");
    }

    // tension evaluations at k ~ 100 and 200 (per-eval cost drives the
    // spectrum stage wall time)
    {
        for (double k : {100.0, 200.0}) {
            const int basis = basis_size_for(shape, k);
            const auto t0 = std::chrono::steady_clock::now();
            constexpr int n = 8;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += tension(shape, Parity::odd, k + 1e-3 * i, basis);
            }
            const double dt = seconds_since(t0) / n;
            std::printf("tension k=%-5.0f %10.3f s/eval (basis %d), checksum %.3e\n", k, dt,
                        basis, acc);
        }
    }
    return 0;
}
