#pragma once

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "membranes/config.hpp"
#include "membranes/csv.hpp"
#include "membranes/optimize.hpp"
#include "membranes/pipeline.hpp"
#include "membranes/readout.hpp"
#include "membranes/sweep.hpp"

namespace membranes {

namespace cli_detail {

using nlohmann::json;

inline void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open output file '" + path + "'");
    out << j.dump(2) << "\n";
}

inline std::string strip_json_ext(const std::string& path) {
    const std::string ext = ".json";
    if (path.size() > ext.size() &&
        path.compare(path.size() - ext.size(), ext.size(), ext) == 0)
        return path.substr(0, path.size() - ext.size());
    return path;
}

inline json point_json(const PointResult& r) {
    return json{{"E_N", r.E_N},     {"stable", r.stable}, {"n1", r.n1},
                {"n2", r.n2},       {"S_m", r.S_m},       {"nu12_over_wm", r.nu12_over_wm},
                {"abscissa", r.abscissa}};
}

struct Options {
    std::string config_path, out_path;
    std::uint64_t seed = 0;
    int threads = 1;
    bool json_diag = false;
};

inline int run_modes(const Options& opt) {
    const Config cfg = load_config(opt.config_path);
    const SystemParams& p = cfg.params;
    const CavityGeometry rest = CavityGeometry::at_rest(p);
    const LadderFit fit = fit_theta(rest, p.n_idx, p.m_idx);
    const double center = p.n_idx * pi;
    const auto roots = detail::scan_roots(rest, center - 0.5 * pi, center + 0.5 * pi);

    struct Row { double kappa; std::string label; };
    std::vector<Row> rows;
    for (double r : roots) {
        // nearest ladder prediction names the branch
        const double off = r - center;
        std::string label = "?";
        double best = 1e9;
        const struct { double k; const char* name; } cand[] = {
            {ladder_kappa_a(p.n_idx) - center, "a"},
            {ladder_kappa_b(p.n_idx, fit.theta) - center, "b"},
            {ladder_kappa_b_prime(p.n_idx, fit.theta) - center, "b'"},
            {ladder_kappa_c(p.m_idx - 1, fit.theta) - center, "c-1"},
            {ladder_kappa_c(p.m_idx, fit.theta) - center, "c"},
            {ladder_kappa_c(p.m_idx + 1, fit.theta) - center, "c+1"},
        };
        for (const auto& c : cand)
            if (std::abs(off - c.k) < best) { best = std::abs(off - c.k); label = c.name; }
        rows.push_back({r, label});
    }

    const std::string out = opt.out_path.empty() ? "modes.csv" : opt.out_path;
    CsvWriter w(out);
    w.raw_line("label,kappa,offset,omega,xi1,xi2");
    for (const Row& row : rows) {
        CavityMode m;
        m.kappa = row.kappa;
        m.k = m.kappa / p.L;
        m.omega = c_light * m.k;
        double x1 = 0.0, x2 = 0.0;
        try {
            std::tie(x1, x2) = couplings_numeric(rest, m);
        } catch (const error&) {
            // a symmetry-protected root can have a vanishing kappa-derivative
        }
        w.row({row.label, g9(row.kappa), g9(row.kappa - center), g9(m.omega),
               g9(x1), g9(x2)});
    }
    std::cout << "modes: " << rows.size() << " resonances in the free spectral range about kappa = "
              << p.n_idx << " pi; theta = " << g9(fit.theta) << " -> " << out << "\n";
    if (opt.json_diag) {
        json j{{"subcommand", "modes"}, {"theta", fit.theta},
               {"theta_residual", fit.residual}, {"n_roots", rows.size()}, {"out", out}};
        std::cout << j.dump() << "\n";
    }
    return 0;
}

inline int run_couplings(const Options& opt) {
    const Config cfg = load_config(opt.config_path);
    const SystemParams& p = cfg.params;
    const GeometricCouplings num = couplings_from_geometry(p);
    const GeometricCouplings ana = couplings_from_truncation(p);
    const CouplingSet scaled = scaled_couplings(num, p);

    const std::string out = opt.out_path.empty() ? "couplings.csv" : opt.out_path;
    CsvWriter w(out);
    w.raw_line("quantity,numeric,analytic");
    w.row({"xi_b1", g9(num.xi_b1), g9(ana.xi_b1)});
    w.row({"xi_b2", g9(num.xi_b2), g9(ana.xi_b2)});
    w.row({"xi_c1", g9(num.xi_c1), g9(ana.xi_c1)});
    w.row({"xi_c2", g9(num.xi_c2), g9(ana.xi_c2)});
    w.row({"omega_bn", g9(num.omega_bn), g9(ana.omega_bn)});
    w.row({"omega_cm", g9(num.omega_cm), g9(ana.omega_cm)});
    w.row({"xi_b1_scaled", g9(scaled.b1), ""});
    w.row({"xi_b2_scaled", g9(scaled.b2), ""});
    w.row({"xi_c1_scaled", g9(scaled.c1), ""});
    w.row({"xi_c2_scaled", g9(scaled.c2), ""});
    std::cout << "couplings: scaled (b1, b2, c1, c2) = (" << g9(scaled.b1) << ", "
              << g9(scaled.b2) << ", " << g9(scaled.c1) << ", " << g9(scaled.c2)
              << ") 1/s -> " << out << "\n";
    if (opt.json_diag) {
        json j{{"subcommand", "couplings"},
               {"numeric", {num.xi_b1, num.xi_b2, num.xi_c1, num.xi_c2}},
               {"analytic", {ana.xi_b1, ana.xi_b2, ana.xi_c1, ana.xi_c2}},
               {"scaled", {scaled.b1, scaled.b2, scaled.c1, scaled.c2}},
               {"omega_bn", num.omega_bn}, {"omega_cm", num.omega_cm}, {"out", out}};
        std::cout << j.dump() << "\n";
    }
    return 0;
}

inline int run_steady(const Options& opt) {
    const Config cfg = load_config(opt.config_path);
    const GeometricCouplings geo = couplings_for(cfg);
    const CouplingSet xi = scaled_couplings(geo, cfg.params);
    const WorkingPoint wp = solve_inverse(cfg.c_bn, cfg.c_cm, cfg.params.Delta_bn,
                                          cfg.params.Delta_cm, xi, cfg.params);
    const LinearSystem sys = build_drift(wp, xi, cfg.params);
    const StabilityRecord st = stability(sys);
    const double omega_laser_bn = geo.omega_bn + cfg.params.Delta_bn;
    const double omega_laser_cm = geo.omega_cm + cfg.params.Delta_cm;
    const double P_bn = laser_power(std::abs(wp.Omega_bn), omega_laser_bn,
                                    cfg.params.Gamma_bn);
    const double P_cm = laser_power(std::abs(wp.Omega_cm), omega_laser_cm,
                                    cfg.params.Gamma_cm);
    const ValidityReport rep = validate(cfg.params, geo.omega_bn, geo.omega_cm,
                                        std::abs(wp.Omega_bn), std::abs(wp.Omega_cm),
                                        std::abs(wp.c_bn), std::abs(wp.c_cm));

    json j{{"subcommand", "steady"},
           {"Q1", wp.Q1},
           {"Q2", wp.Q2},
           {"c_bn", {wp.c_bn.real(), wp.c_bn.imag()}},
           {"c_cm", {wp.c_cm.real(), wp.c_cm.imag()}},
           {"mu_bn", wp.mu_bn},
           {"mu_cm", wp.mu_cm},
           {"Omega_bn_mag", std::abs(wp.Omega_bn)},
           {"Omega_cm_mag", std::abs(wp.Omega_cm)},
           {"laser_power_bn_W", P_bn},
           {"laser_power_cm_W", P_cm},
           {"stable", st.stable},
           {"abscissa", st.abscissa},
           {"settling_time", st.settling_time},
           {"validity_all_pass", rep.all_pass}};
    json evs = json::array();
    for (const auto& ev : st.eigenvalues) evs.push_back({ev.real(), ev.imag()});
    j["eigenvalues"] = evs;
    json checks = json::array();
    for (const auto& c : rep.checks)
        checks.push_back({{"name", c.name}, {"ratio", c.ratio},
                          {"threshold", c.threshold}, {"pass", c.pass}});
    j["validity"] = checks;
    const std::string out = opt.out_path.empty() ? "steady.json" : opt.out_path;
    write_json_file(j, out);
    std::cout << "steady: stable=" << (st.stable ? 1 : 0) << " abscissa="
              << g9(st.abscissa) << " |c_bn|=" << g9(std::abs(wp.c_bn))
              << " |c_cm|=" << g9(std::abs(wp.c_cm)) << " P=("
              << g9(P_bn) << ", " << g9(P_cm) << ") W -> " << out << "\n";
    if (opt.json_diag) std::cout << j.dump() << "\n";
    return 0;
}

inline int run_entangle(const Options& opt) {
    const Config cfg = load_config(opt.config_path);
    const GeometricCouplings geo = couplings_for(cfg);
    const PointDetail d = evaluate_detail(cfg.params, geo, cfg.c_bn, cfg.c_cm);
    if (!d.st.stable)
        throw no_steady_state("entangle: no steady state at the working point",
                              d.st.abscissa);
    const std::string out = opt.out_path.empty() ? "covariance.csv" : opt.out_path;
    CsvWriter w(out);
    for (int i = 0; i < n_core_vars; ++i) {
        std::vector<std::string> row;
        for (int k = 0; k < n_core_vars; ++k) row.push_back(g9(d.V(i, k)));
        w.row(row);
    }
    std::cout << "entangle: E_N=" << g9(d.result.E_N) << " n=(" << g9(d.result.n1)
              << ", " << g9(d.result.n2) << ") S_m=" << g9(d.result.S_m)
              << " nu12/omega_m=" << g9(d.result.nu12_over_wm) << " -> " << out << "\n";
    if (opt.json_diag) {
        json j = point_json(d.result);
        j["subcommand"] = "entangle";
        j["out"] = out;
        j["lyapunov_residual_rel"] = d.residual_rel;
        std::cout << j.dump() << "\n";
    }
    return 0;
}

inline int run_sweep(const Options& opt) {
    const Config cfg = load_config(opt.config_path);
    const SweepTable t = membranes::run_sweep(cfg, opt.threads);
    const std::string out = opt.out_path.empty() ? "sweep.csv" : opt.out_path;
    write_sweep_csv(t, out);
    const double frac = entangled_fraction(t);
    const PointResult* best = best_row(t);
    std::cout << "sweep: " << t.p1_name << " x " << t.p2_name << " ("
              << t.p1_values.size() << " x " << t.p2_values.size()
              << "), entangled fraction " << g9(frac);
    if (best && best->stable)
        std::cout << ", best E_N=" << g9(best->E_N) << " at (" << g9(best->p1)
                  << ", " << g9(best->p2) << ")";
    std::cout << " -> " << out << "\n";
    if (opt.json_diag) {
        json j{{"subcommand", "sweep"}, {"p1", t.p1_name}, {"p2", t.p2_name},
               {"n1", t.p1_values.size()}, {"n2", t.p2_values.size()},
               {"entangled_fraction", frac}, {"out", out}};
        if (best && best->stable) {
            j["best_E_N"] = best->E_N;
            j["best_at"] = {best->p1, best->p2};
        }
        std::cout << j.dump() << "\n";
    }
    return 0;
}

inline int run_optimize(const Options& opt) {
    const Config cfg = load_config(opt.config_path);
    const OptimizeResult r = optimize_drives(cfg);
    json j{{"subcommand", "optimize"},
           {"Delta_bn", r.Delta_bn},
           {"Delta_cm", r.Delta_cm},
           {"c_bn", r.c_bn},
           {"c_cm", r.c_cm},
           {"iterations", r.iterations},
           {"starts_run", r.starts_run},
           {"best", point_json(r.at_best)}};
    const std::string out = opt.out_path.empty() ? "optimize.json" : opt.out_path;
    write_json_file(j, out);
    std::cout << "optimize: E_N=" << g9(r.at_best.E_N) << " at Delta=("
              << g9(r.Delta_bn) << ", " << g9(r.Delta_cm) << ") c=("
              << g9(r.c_bn) << ", " << g9(r.c_cm) << ") after " << r.iterations
              << " iterations -> " << out << "\n";
    if (opt.json_diag) std::cout << j.dump() << "\n";
    return 0;
}

inline int run_verify(const Options& opt) {
    const Config cfg = load_config(opt.config_path);
    const VerifyResult vr = verify_run(cfg, opt.seed, opt.threads);
    json j{{"subcommand", "verify"},
           {"seed", vr.master_seed},
           {"E_N_true", vr.E_N_true},
           {"E_N_est", vr.recon.E_N},
           {"E_N_se", vr.recon.E_N_se},
           {"conditioning", vr.conditioning},
           {"probe_backaction_rel", vr.probe_backaction},
           {"clamped", vr.recon.clamped},
           {"n_windows", vr.recon.n_windows_total},
           {"q_within_3se", vr.q_within_3se},
           {"EN_within_3sigma", vr.EN_within_3sigma},
           {"plan", {{"record_dt", vr.plan.record_dt},
                     {"inner_dt", vr.plan.inner_dt},
                     {"inner_per", vr.plan.inner_per},
                     {"samples_per_window", vr.plan.samples_per_window},
                     {"n_discard", vr.plan.n_discard},
                     {"total_samples", vr.plan.total_samples},
                     {"settling_time", vr.plan.settling_time}}}};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const std::string key = std::to_string(a) + std::to_string(b);
            j["q_block_true"][key] = vr.q_block_true(a, b);
            j["q_block_est"][key] = vr.recon.q_block(a, b);
            j["q_block_se"][key] = vr.recon.q_block_se(a, b);
            j["z"][key] = vr.z_scores(a, b);
        }
    const std::string out = opt.out_path.empty() ? "verify.json" : opt.out_path;
    write_json_file(j, out);
    if (!vr.sample_records.empty()) {
        const std::string stem = strip_json_ext(out);
        for (size_t a = 0; a < vr.sample_records.size(); ++a)
            write_record_csv(vr.sample_records[a],
                             stem + "_probe" + std::to_string(a + 1) + ".csv");
    }
    std::cout << "verify: E_N est " << g9(vr.recon.E_N) << " +- "
              << g9(vr.recon.E_N_se) << " (lyapunov " << g9(vr.E_N_true)
              << "), max |z| " << g9(vr.z_scores.cwiseAbs().maxCoeff())
              << ", q-block " << (vr.q_within_3se ? "within" : "OUTSIDE")
              << " 3 SE -> " << out << "\n";
    if (opt.json_diag) std::cout << j.dump() << "\n";
    return 0;
}

} // namespace cli_detail

inline int cli_main(int argc, char** argv) {
    using cli_detail::Options;
    using nlohmann::json;

    CLI::App app{"steady-state entanglement of two membranes in a driven cavity"};
    app.require_subcommand(1);

    Options opt;
    int which = 0;
    struct Sub { const char* name; const char* desc; int id; bool needs_seed; };
    const Sub subs[] = {
        {"modes", "resonances of one free spectral range", 1, false},
        {"couplings", "numeric and truncated-form couplings", 2, false},
        {"steady", "semiclassical working point and stability", 3, false},
        {"entangle", "steady covariance and entanglement at one point", 4, false},
        {"sweep", "two-parameter grid of the full pipeline", 5, false},
        {"optimize", "search drives for maximal entanglement", 6, false},
        {"verify", "stochastic homodyne cross-check of the covariance", 7, true},
    };
    for (const Sub& s : subs) {
        CLI::App* sc = app.add_subcommand(s.name, s.desc);
        sc->add_option("--config", opt.config_path, "flat key = value config file")
            ->required();
        sc->add_option("--out", opt.out_path, "output CSV/JSON path");
        sc->add_option("--threads", opt.threads, "worker threads")
            ->check(CLI::PositiveNumber);
        sc->add_flag("--json-diagnostics", opt.json_diag,
                     "print one machine-readable JSON line");
        if (s.needs_seed)
            sc->add_option("--seed", opt.seed, "master seed for the trajectories")
                ->required();
        sc->callback([&which, id = s.id]() { which = id; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage problems are config-class errors
    }

    try {
        switch (which) {
            case 1: return cli_detail::run_modes(opt);
            case 2: return cli_detail::run_couplings(opt);
            case 3: return cli_detail::run_steady(opt);
            case 4: return cli_detail::run_entangle(opt);
            case 5: return cli_detail::run_sweep(opt);
            case 6: return cli_detail::run_optimize(opt);
            case 7: return cli_detail::run_verify(opt);
        }
        return 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        if (opt.json_diag)
            std::cout << json{{"error", "config"}, {"what", e.what()}}.dump() << "\n";
        return 2;
    } catch (const domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        if (opt.json_diag)
            std::cout << json{{"error", "config"}, {"what", e.what()}}.dump() << "\n";
        return 2;
    } catch (const error& e) {
        std::cerr << "physics error: " << e.what() << "\n";
        if (opt.json_diag)
            std::cout << json{{"error", "physics"}, {"what", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (opt.json_diag)
            std::cout << json{{"error", "internal"}, {"what", e.what()}}.dump() << "\n";
        return 1;
    }
}

} // namespace membranes
