#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "membranes/dynamics.hpp"
#include "membranes/effective.hpp"
#include "membranes/errors.hpp"
#include "membranes/measures.hpp"
#include "membranes/modes.hpp"
#include "membranes/params.hpp"
#include "membranes/semiclassical.hpp"

namespace membranes {

enum class CouplingSource { numeric, analytic, quoted };

inline const char* coupling_source_name(CouplingSource s) {
    switch (s) {
        case CouplingSource::numeric: return "numeric";
        case CouplingSource::analytic: return "analytic";
        case CouplingSource::quoted: return "quoted";
    }
    return "?";
}

// Couplings in geometric units [1/(s m)] plus the mode frequencies they
// belong to. Mass- and frequency-independent, so one of these can serve a
// whole sweep; only a change of T_mem (or geometry) invalidates it.
struct GeometricCouplings {
    CouplingSource source = CouplingSource::numeric;
    double xi_b1 = 0.0, xi_b2 = 0.0; // [1/(s m)]
    double xi_c1 = 0.0, xi_c2 = 0.0;
    double omega_bn = 0.0, omega_cm = 0.0; // [1/s]
    double theta = 0.0;                    // ladder parameter of the fit
    bool warning = false; // ladder fit marginal or truncation stretched
};

// xi-tilde at the current mass and mechanical frequency.
inline CouplingSet scaled_couplings(const GeometricCouplings& g,
                                    const SystemParams& p) {
    const double xz = p.x_zpf();
    return {g.xi_b1 * xz, g.xi_b2 * xz, g.xi_c1 * xz, g.xi_c2 * xz};
}

namespace detail {

inline double ladder_frequency(Branch br, long idx, double theta, double L) {
    double kap = 0.0;
    switch (br) {
        case Branch::a: kap = ladder_kappa_a(idx); break;
        case Branch::b: kap = ladder_kappa_b(idx, theta); break;
        case Branch::b_prime: kap = ladder_kappa_b_prime(idx, theta); break;
        case Branch::c: kap = ladder_kappa_c(idx, theta); break;
    }
    return c_light * kap / L;
}

} // namespace detail

// Full route: fit the ladder on the rest geometry, polish the two driven
// roots, differentiate the characteristic function.
inline GeometricCouplings couplings_from_geometry(const SystemParams& p) {
    const CavityGeometry rest = CavityGeometry::at_rest(p);
    const LadderFit fit = fit_theta(rest, p.n_idx, p.m_idx);

    auto resolve = [&](Branch br, long idx) {
        const double guess = br == Branch::b ? ladder_kappa_b(idx, fit.theta)
                                             : ladder_kappa_c(idx, fit.theta);
        CavityMode m;
        m.branch = br;
        m.index = idx;
        m.kappa = refine_root_near(rest, guess);
        m.k = m.kappa / rest.L;
        m.omega = c_light * m.k;
        auto [x1, x2] = couplings_numeric(rest, m);
        m.xi1 = x1;
        m.xi2 = x2;
        return m;
    };
    const CavityMode mb = resolve(Branch::b, p.n_idx);
    const CavityMode mc = resolve(Branch::c, p.m_idx);

    GeometricCouplings g;
    g.source = CouplingSource::numeric;
    g.xi_b1 = mb.xi1;
    g.xi_b2 = mb.xi2;
    g.xi_c1 = mc.xi1;
    g.xi_c2 = mc.xi2;
    g.omega_bn = mb.omega;
    g.omega_cm = mc.omega;
    g.theta = fit.theta;
    g.warning = !fit.consistent;
    return g;
}

// Closed-form small-T route; frequencies from the ladder at theta fixed by
// the transmissivity.
inline GeometricCouplings couplings_from_truncation(const SystemParams& p) {
    const AnalyticCouplings a =
        couplings_analytic(p.T_mem, p.n_idx, p.m_idx, p.L);
    const double theta = std::atan(0.5 * CavityGeometry::eta_of(p.T_mem));
    GeometricCouplings g;
    g.source = CouplingSource::analytic;
    g.xi_b1 = a.xi_b1;
    g.xi_b2 = a.xi_b2;
    g.xi_c1 = a.xi_c1;
    g.xi_c2 = a.xi_c2;
    g.omega_bn = detail::ladder_frequency(Branch::b, p.n_idx, theta, p.L);
    g.omega_cm = detail::ladder_frequency(Branch::c, p.m_idx, theta, p.L);
    g.theta = theta;
    g.warning = a.truncation_warning;
    return g;
}

// Externally supplied xi-tilde [1/s], pinned to the mass and frequency of
// the configuration that supplied them. Dividing by that x_zpf turns them
// into geometric couplings, so mass and omega_m sweeps rescale them the
// same way as computed ones. T_mem sweeps cannot use this source.
inline GeometricCouplings couplings_from_quoted(double xt_b1, double xt_b2,
                                                double xt_c1, double xt_c2,
                                                const SystemParams& base) {
    const double xz = base.x_zpf();
    const double theta = std::atan(0.5 * CavityGeometry::eta_of(base.T_mem));
    GeometricCouplings g;
    g.source = CouplingSource::quoted;
    g.xi_b1 = xt_b1 / xz;
    g.xi_b2 = xt_b2 / xz;
    g.xi_c1 = xt_c1 / xz;
    g.xi_c2 = xt_c2 / xz;
    g.omega_bn = detail::ladder_frequency(Branch::b, base.n_idx, theta, base.L);
    g.omega_cm = detail::ladder_frequency(Branch::c, base.m_idx, theta, base.L);
    g.theta = theta;
    return g;
}

// One row of every table this library produces.
struct PointResult {
    double p1 = 0.0, p2 = 0.0; // sweep coordinates, if any
    double E_N = 0.0;
    bool stable = false;
    double n1 = 0.0, n2 = 0.0;
    double S_m = 0.0; // [bits]
    double nu12_over_wm = 0.0;
    double abscissa = 0.0;
    double settling_time = std::numeric_limits<double>::infinity();
};

// Everything evaluate_detail learned on the way to the PointResult.
struct PointDetail {
    CouplingSet xi;
    WorkingPoint wp;
    LinearSystem sys;
    StabilityRecord st;
    Eigen::MatrixXd V; // 8x8 steady covariance; empty when unstable
    double residual_rel = 0.0;
    EffectiveCouplings eff;
    bool eff_pole = false; // some effective detuning vanished
    ValidityReport validity;
    PointResult result;
};

inline PointDetail evaluate_detail(const SystemParams& p,
                                   const GeometricCouplings& g,
                                   double c_bn_mag, double c_cm_mag) {
    p.check();
    PointDetail d;
    d.xi = scaled_couplings(g, p);
    d.wp = solve_inverse(c_bn_mag, c_cm_mag, p.Delta_bn, p.Delta_cm, d.xi, p);
    d.sys = build_drift(d.wp, d.xi, p);
    d.st = stability(d.sys);
    d.validity = validate(p, g.omega_bn, g.omega_cm, std::abs(d.wp.Omega_bn),
                          std::abs(d.wp.Omega_cm), c_bn_mag, c_cm_mag);

    PointResult& r = d.result;
    r.stable = d.st.stable;
    r.abscissa = d.st.abscissa;
    r.settling_time = d.st.settling_time;

    try {
        d.eff = effective_couplings(d.wp, d.xi);
        r.nu12_over_wm = d.eff.nu12 / p.omega_m;
    } catch (const pole_error&) {
        d.eff_pole = true;
    }

    if (d.st.stable) {
        CovarianceState cs = steady_covariance(d.sys);
        d.V = cs.V;
        d.residual_rel = cs.residual_rel;
        const Eigen::Matrix4d mech = mechanical_block(d.V);
        r.E_N = log_negativity(mech);
        auto [na, nb] = phonon_numbers(mech);
        r.n1 = na;
        r.n2 = nb;
        r.S_m = entropy_mechanical(mech);
    }
    return d;
}

inline PointResult evaluate_point(const SystemParams& p,
                                  const GeometricCouplings& g,
                                  double c_bn_mag, double c_cm_mag) {
    return evaluate_detail(p, g, c_bn_mag, c_cm_mag).result;
}

} // namespace membranes
