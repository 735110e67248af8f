#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sdcl/gradcheck.hpp"
#include "sdcl/matrix.hpp"
#include "sdcl/rng.hpp"
#include "sdcl/subspace.hpp"
#include "sdcl/svd_backprop.hpp"

namespace sdcl {

struct BenchRow {
    std::string op;
    std::size_t d = 0, p = 0, m = 0;
    int reps = 0;
    double median_us = 0.0;
};

namespace detail {

/// Median of 7 measurements of `fn`, each averaging over enough repetitions
/// to stay above a few milliseconds of wall time.
template <typename Fn>
std::pair<double, int> median_timing_us(Fn&& fn) {
    using clock = std::chrono::steady_clock;

    fn(); // warm up
    auto t0 = clock::now();
    fn();
    double once_us =
        std::chrono::duration<double, std::micro>(clock::now() - t0).count();
    const int reps = std::max(1, static_cast<int>(5000.0 / std::max(once_us, 0.01)));

    std::vector<double> samples;
    for (int trial = 0; trial < 7; ++trial) {
        auto a = clock::now();
        for (int r = 0; r < reps; ++r) fn();
        auto b = clock::now();
        samples.push_back(
            std::chrono::duration<double, std::micro>(b - a).count() / reps);
    }
    std::sort(samples.begin(), samples.end());
    return {samples[3], reps};
}

} // namespace detail

/// Times thin_svd and the SVD vector-Jacobian product across an ambient-dim
/// grid at fixed (p, m). The cost of both should grow linearly in d.
inline std::vector<BenchRow> run_bench(const std::vector<std::size_t>& d_grid = {128, 256, 512,
                                                                                1024, 2048},
                                       std::size_t p = 16, std::size_t m = 5,
                                       std::uint64_t seed = 42) {
    std::vector<BenchRow> rows;
    for (std::size_t d : d_grid) {
        Rng rng(seed, d);
        Matrix f = gapped_random_matrix(d, p, 0.15, rng);
        ThinSvd svd = thin_svd(f);
        Matrix grad_p = Matrix::gaussian(d, m, rng);
        const double eps = default_degeneracy_eps(svd.s);

        volatile double sink = 0.0;
        auto [svd_us, svd_reps] = detail::median_timing_us([&] {
            ThinSvd s = thin_svd(f);
            sink = sink + s.s[0];
        });
        rows.push_back({"thin_svd", d, p, m, svd_reps, svd_us});

        auto [vjp_us, vjp_reps] = detail::median_timing_us([&] {
            Matrix g = svd_vjp(f, svd, grad_p, m, eps);
            sink = sink + g(0, 0);
        });
        rows.push_back({"svd_vjp", d, p, m, vjp_reps, vjp_us});
    }
    return rows;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
    os << "op,d,p,m,reps,median_us\n";
    for (const auto& r : rows)
        os << r.op << ',' << r.d << ',' << r.p << ',' << r.m << ',' << r.reps << ','
           << r.median_us << '\n';
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<std::pair<double, double>>& pts) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : pts) {
        const double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(pts.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Slope of combined (thin_svd + svd_vjp) per-call cost vs d.
inline double bench_combined_slope(const std::vector<BenchRow>& rows) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
        const double combined = rows[i].median_us + rows[i + 1].median_us;
        pts.emplace_back(static_cast<double>(rows[i].d), combined);
    }
    return loglog_slope(pts);
}

} // namespace sdcl
