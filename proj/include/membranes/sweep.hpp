#pragma once

#include <atomic>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "membranes/config.hpp"
#include "membranes/csv.hpp"
#include "membranes/errors.hpp"
#include "membranes/pipeline.hpp"

namespace membranes {

inline std::vector<double> linspace(double lo, double hi, long n) {
    std::vector<double> v(n);
    for (long i = 0; i < n; ++i)
        v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

inline std::vector<double> logspace(double lo, double hi, long n) {
    std::vector<double> v(n);
    const double llo = std::log(lo), lhi = std::log(hi);
    for (long i = 0; i < n; ++i)
        v[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(n - 1));
    return v;
}

struct SweepTable {
    std::string p1_name, p2_name;
    std::vector<double> p1_values, p2_values;
    std::vector<PointResult> rows; // row-major: p1 outer, p2 inner
};

namespace detail {

// Writes one swept value into the per-point state. Couplings stay
// geometric, so mass and omega_m moves rescale xi-tilde downstream without
// touching them; only T_mem invalidates the geometry (handled by the
// caller's per-value memo).
inline void apply_axis(const Config& base, const std::string& name, double value,
                       SystemParams& p, double& cb, double& cc) {
    if (name == "c_bn") cb = value;
    else if (name == "c_cm") cc = value;
    else if (name == "Delta_bn") p.Delta_bn = value;
    else if (name == "Delta_cm") p.Delta_cm = value;
    else if (name == "Gamma_bn") p.Gamma_bn = value;
    else if (name == "Gamma_cm") p.Gamma_cm = value;
    else if (name == "mass") p.mass = value;
    else if (name == "omega_m") {
        p.omega_m = value;
        if (base.nbar_from_temperature)
            p.nbar = thermal_occupation(value, base.bath_temperature_K);
    }
    else if (name == "Q_f") p.Q_f = value;
    else if (name == "T_mem") p.T_mem = value;
    else if (name == "nbar") p.nbar = value;
    else throw config_error("unknown sweep parameter '" + name + "'");
}

inline void check_axis_domain(const std::string& name, double lo, double hi) {
    const bool needs_positive = name == "Gamma_bn" || name == "Gamma_cm" ||
                                name == "mass" || name == "omega_m" ||
                                name == "Q_f" || name == "T_mem";
    if (needs_positive && !(lo > 0.0))
        throw config_error("sweep range for '" + name + "' must be positive");
    if (name == "T_mem" && !(hi < 1.0))
        throw config_error("sweep range for 'T_mem' must stay below 1");
    if ((name == "nbar" || name == "c_bn" || name == "c_cm") && !(lo >= 0.0))
        throw config_error("sweep range for '" + name + "' must be nonnegative");
}

} // namespace detail

// Evaluates the full grid. Per-point physics failures (no steady state,
// lost numerical contracts) land in the row as an unentangled unstable
// point; only configuration mistakes abort.
inline SweepTable run_sweep(const Config& cfg, int n_threads = 1) {
    require_sweep(cfg);
    detail::check_axis_domain(cfg.sweep_p1, cfg.p1_min, cfg.p1_max);
    detail::check_axis_domain(cfg.sweep_p2, cfg.p2_min, cfg.p2_max);

    SweepTable t;
    t.p1_name = cfg.sweep_p1;
    t.p2_name = cfg.sweep_p2;
    t.p1_values = cfg.p1_log ? logspace(cfg.p1_min, cfg.p1_max, cfg.p1_points)
                             : linspace(cfg.p1_min, cfg.p1_max, cfg.p1_points);
    t.p2_values = cfg.p2_log ? logspace(cfg.p2_min, cfg.p2_max, cfg.p2_points)
                             : linspace(cfg.p2_min, cfg.p2_max, cfg.p2_points);
    const long n1 = cfg.p1_points, n2 = cfg.p2_points;
    t.rows.resize(static_cast<size_t>(n1 * n2));

    // T_mem is the only axis that moves the cavity geometry; precompute
    // couplings once per distinct value of that axis.
    const bool tmem1 = cfg.sweep_p1 == "T_mem", tmem2 = cfg.sweep_p2 == "T_mem";
    std::vector<GeometricCouplings> memo;
    std::vector<char> memo_ok;
    GeometricCouplings fixed;
    if (tmem1 || tmem2) {
        const std::vector<double>& ts = tmem1 ? t.p1_values : t.p2_values;
        memo.resize(ts.size());
        memo_ok.assign(ts.size(), 0);
        for (size_t i = 0; i < ts.size(); ++i) {
            SystemParams p = cfg.params;
            p.T_mem = ts[i];
            Config c2 = cfg;
            c2.params = p;
            try {
                memo[i] = couplings_for(c2);
                memo_ok[i] = 1;
            } catch (const error&) {
                memo_ok[i] = 0;
            }
        }
    } else {
        fixed = couplings_for(cfg);
    }

    std::atomic<long> next{0};
    auto worker = [&]() {
        for (;;) {
            const long i = next.fetch_add(1);
            if (i >= n1 * n2) return;
            const long i1 = i / n2, i2 = i % n2;
            const double v1 = t.p1_values[i1], v2 = t.p2_values[i2];
            PointResult& row = t.rows[static_cast<size_t>(i)];
            row.p1 = v1;
            row.p2 = v2;
            try {
                SystemParams p = cfg.params;
                double cb = cfg.c_bn, cc = cfg.c_cm;
                detail::apply_axis(cfg, cfg.sweep_p1, v1, p, cb, cc);
                detail::apply_axis(cfg, cfg.sweep_p2, v2, p, cb, cc);
                const GeometricCouplings* g = &fixed;
                if (tmem1 || tmem2) {
                    const size_t mi = static_cast<size_t>(tmem1 ? i1 : i2);
                    if (!memo_ok[mi]) continue; // row stays unstable/zero
                    g = &memo[mi];
                }
                PointResult r = evaluate_point(p, *g, cb, cc);
                r.p1 = v1;
                r.p2 = v2;
                row = r;
            } catch (const error&) {
                // row keeps E_N = 0, stable = false
            }
        }
    };

    const int nt = std::max(1, n_threads);
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nt);
        for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return t;
}

inline void write_sweep_csv(const SweepTable& t, const std::string& path) {
    CsvWriter w(path);
    w.raw_line(t.p1_name + "," + t.p2_name + ",E_N,stable,n1,n2,S_m,nu12_over_wm");
    for (const PointResult& r : t.rows) {
        w.row({g9(r.p1), g9(r.p2), g9(r.E_N), r.stable ? "1" : "0", g9(r.n1),
               g9(r.n2), g9(r.S_m), g9(r.nu12_over_wm)});
    }
}

// Fraction of grid points carrying entanglement; the headline statistic of
// every map.
inline double entangled_fraction(const SweepTable& t, double threshold = 0.0) {
    if (t.rows.empty()) return 0.0;
    size_t n = 0;
    for (const PointResult& r : t.rows)
        if (r.stable && r.E_N > threshold) ++n;
    return static_cast<double>(n) / static_cast<double>(t.rows.size());
}

inline const PointResult* best_row(const SweepTable& t) {
    const PointResult* best = nullptr;
    for (const PointResult& r : t.rows)
        if (r.stable && (!best || r.E_N > best->E_N)) best = &r;
    return best;
}

} // namespace membranes
