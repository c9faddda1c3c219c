#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "membranes/config.hpp"
#include "membranes/errors.hpp"
#include "membranes/pipeline.hpp"

namespace membranes {

struct SimplexResult {
    std::vector<double> x;
    double f = 0.0;
    long iterations = 0;
    bool converged = false;
    std::vector<double> trace; // best f after each iteration
};

// Nelder-Mead minimization, standard coefficients (reflect 1, expand 2,
// contract 0.5, shrink 0.5). Chosen because the surfaces this project
// optimizes have a kink where entanglement sets in, which defeats
// gradient-based methods.
inline SimplexResult nelder_mead_min(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x0, double step,
                                     long max_iter, double xatol = 1e-4,
                                     double fatol = 1e-6) {
    const size_t n = x0.size();
    std::vector<std::vector<double>> xs(n + 1, x0);
    for (size_t i = 0; i < n; ++i) xs[i + 1][i] += step * (x0[i] != 0.0 ? std::abs(x0[i]) : 1.0);
    std::vector<double> fs(n + 1);
    for (size_t i = 0; i <= n; ++i) fs[i] = f(xs[i]);

    SimplexResult res;
    std::vector<size_t> order(n + 1);
    for (long it = 0; it < max_iter; ++it) {
        for (size_t i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](size_t a, size_t b) { return fs[a] < fs[b]; });
        const size_t best = order[0], worst = order[n], second = order[n - 1];
        res.trace.push_back(fs[best]);

        double xspread = 0.0;
        for (size_t i = 0; i <= n; ++i)
            for (size_t d = 0; d < n; ++d)
                xspread = std::max(xspread, std::abs(xs[i][d] - xs[best][d]));
        if (xspread < xatol && std::abs(fs[worst] - fs[best]) < fatol) {
            res.converged = true;
            res.iterations = it;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (size_t d = 0; d < n; ++d) centroid[d] += xs[i][d];
        }
        for (size_t d = 0; d < n; ++d) centroid[d] /= static_cast<double>(n);

        auto blend = [&](double t) {
            std::vector<double> x(n);
            for (size_t d = 0; d < n; ++d)
                x[d] = centroid[d] + t * (centroid[d] - xs[worst][d]);
            return x;
        };

        const std::vector<double> xr = blend(1.0);
        const double fr = f(xr);
        if (fr < fs[best]) {
            const std::vector<double> xe = blend(2.0);
            const double fe = f(xe);
            if (fe < fr) { xs[worst] = xe; fs[worst] = fe; }
            else { xs[worst] = xr; fs[worst] = fr; }
        } else if (fr < fs[second]) {
            xs[worst] = xr;
            fs[worst] = fr;
        } else {
            const bool outside = fr < fs[worst];
            const std::vector<double> xc = blend(outside ? 0.5 : -0.5);
            const double fc = f(xc);
            if (fc < (outside ? fr : fs[worst])) {
                xs[worst] = xc;
                fs[worst] = fc;
            } else {
                for (size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (size_t d = 0; d < n; ++d)
                        xs[i][d] = xs[best][d] + 0.5 * (xs[i][d] - xs[best][d]);
                    fs[i] = f(xs[i]);
                }
            }
        }
        res.iterations = it + 1;
    }

    size_t ib = 0;
    for (size_t i = 1; i <= n; ++i)
        if (fs[i] < fs[ib]) ib = i;
    res.x = xs[ib];
    res.f = fs[ib];
    return res;
}

struct OptimizeResult {
    double Delta_bn = 0.0, Delta_cm = 0.0;
    double c_bn = 0.0, c_cm = 0.0;
    PointResult at_best;        // re-evaluated through the full pipeline
    long iterations = 0;        // summed over starts
    int starts_run = 0;
    std::vector<double> trace;  // objective history of the winning start
};

// Maximizes E_N over (Delta_bn, Delta_cm, |c_bn|, |c_cm|). Coordinates are
// scaled by the config values so one step size fits detunings in the 1e7
// range and fields in the 1e2 range. Unstable points score -1: flat, so
// the simplex backs out of the unstable region instead of chasing noise.
inline OptimizeResult optimize_drives(const Config& cfg) {
    const GeometricCouplings geo = couplings_for(cfg);
    if (!(cfg.c_bn > 0.0 && cfg.c_cm > 0.0))
        throw config_error("optimize needs positive c_bn and c_cm as scale references");
    const double ref_db = cfg.params.Delta_bn != 0.0 ? cfg.params.Delta_bn : cfg.params.omega_m;
    const double ref_dc = cfg.params.Delta_cm != 0.0 ? cfg.params.Delta_cm : cfg.params.omega_m;
    const double ref_cb = cfg.c_bn, ref_cc = cfg.c_cm;

    auto objective = [&](const std::vector<double>& z) {
        try {
            SystemParams p = cfg.params;
            p.Delta_bn = z[0] * ref_db;
            p.Delta_cm = z[1] * ref_dc;
            const PointResult r =
                evaluate_point(p, geo, std::abs(z[2]) * ref_cb, std::abs(z[3]) * ref_cc);
            return r.stable ? r.E_N : -1.0;
        } catch (const error&) {
            return -1.0;
        }
    };

    // Coarse field scan at the config detunings seeds the starts. No
    // randomness anywhere: same config, same optimum.
    const int scan_n = 12;
    struct Seed {
        double zb, zc, score;
    };
    std::vector<Seed> seeds;
    std::ostringstream scan_map;
    for (int i = 0; i < scan_n; ++i) {
        const double zb = 0.2 + 1.8 * i / (scan_n - 1.0);
        for (int j = 0; j < scan_n; ++j) {
            const double zc = 0.2 + 1.8 * j / (scan_n - 1.0);
            const double s = objective({1.0, 1.0, zb, zc});
            if (s > -1.0) seeds.push_back({zb, zc, s});
            scan_map << (s > -1.0 ? (s > 0.0 ? 'E' : 's') : '.');
        }
        scan_map << '\n';
    }
    if (seeds.empty())
        throw optimization_failed(
            "optimize: every pre-scan point is unstable; field-scale scan map "
            "(rows |c_bn| 0.2..2x, cols |c_cm| 0.2..2x; E entangled, s stable, . unstable):\n" +
            scan_map.str());
    std::sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.zb != b.zb) return a.zb < b.zb;
        return a.zc < b.zc;
    });
    if (static_cast<long>(seeds.size()) > cfg.opt_starts)
        seeds.resize(static_cast<size_t>(cfg.opt_starts));

    OptimizeResult out;
    SimplexResult best;
    best.f = 1.0; // objective is minimized as -E_N; anything beats this
    for (const Seed& s : seeds) {
        SimplexResult r = nelder_mead_min(
            [&](const std::vector<double>& z) { return -objective(z); },
            {1.0, 1.0, s.zb, s.zc}, 0.05, cfg.opt_max_iter);
        out.iterations += r.iterations;
        ++out.starts_run;
        if (r.f < best.f) best = r;
    }

    out.Delta_bn = best.x[0] * ref_db;
    out.Delta_cm = best.x[1] * ref_dc;
    out.c_bn = std::abs(best.x[2]) * ref_cb;
    out.c_cm = std::abs(best.x[3]) * ref_cc;
    out.trace = best.trace;
    for (double& v : out.trace) v = -v;

    // Report what the pipeline says at the returned point, not the
    // optimizer's cached score.
    SystemParams p = cfg.params;
    p.Delta_bn = out.Delta_bn;
    p.Delta_cm = out.Delta_cm;
    out.at_best = evaluate_point(p, geo, out.c_bn, out.c_cm);
    out.at_best.p1 = out.c_bn;
    out.at_best.p2 = out.c_cm;
    return out;
}

} // namespace membranes
