#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "membranes/errors.hpp"
#include "membranes/params.hpp"

namespace membranes {

// Scaled couplings xi-tilde = xi * x_zpf of the two driven modes, [1/s].
struct CouplingSet {
    double b1 = 0.0, b2 = 0.0;
    double c1 = 0.0, c2 = 0.0;
};

// Classical operating point. Identities held exactly by construction:
//   Q_j  = -(xi_b j |c_b|^2 + xi_c j |c_c|^2) / omega_m
//   mu_x = Delta_x + xi_x1 Q_1 + xi_x2 Q_2
//   conj(Omega_x) = -2 (mu_x - i Gamma_x/2) c_x
struct WorkingPoint {
    std::complex<double> c_bn{0.0, 0.0}, c_cm{0.0, 0.0};
    double Q1 = 0.0, Q2 = 0.0;       // [x_zpf units]
    double mu_bn = 0.0, mu_cm = 0.0; // [1/s]
    std::complex<double> Omega_bn{0.0, 0.0}, Omega_cm{0.0, 0.0};
};

// Fields given (phases fixed to zero), drives derived. The workflow of
// every sweep: all results are parametrized by |c_bn|, |c_cm|.
inline WorkingPoint solve_inverse(double c_bn_mag, double c_cm_mag,
                                  double Delta_bn, double Delta_cm,
                                  const CouplingSet& xi, const SystemParams& p) {
    WorkingPoint wp;
    wp.c_bn = c_bn_mag;
    wp.c_cm = c_cm_mag;
    const double sb = c_bn_mag * c_bn_mag, sc = c_cm_mag * c_cm_mag;
    wp.Q1 = -(xi.b1 * sb + xi.c1 * sc) / p.omega_m;
    wp.Q2 = -(xi.b2 * sb + xi.c2 * sc) / p.omega_m;
    wp.mu_bn = Delta_bn + xi.b1 * wp.Q1 + xi.b2 * wp.Q2;
    wp.mu_cm = Delta_cm + xi.c1 * wp.Q1 + xi.c2 * wp.Q2;
    wp.Omega_bn = rabi_from_field(wp.c_bn, wp.mu_bn, p.Gamma_bn);
    wp.Omega_cm = rabi_from_field(wp.c_cm, wp.mu_cm, p.Gamma_cm);
    return wp;
}

// Drives given, fields found. Reduces to two real unknowns (Q1, Q2):
// given Q the fields follow from the drive balance, and Q must reproduce
// the radiation-pressure displacement they cause. All solutions inside the
// search box are returned (optical multistability), sorted by Q1 then Q2.
inline std::vector<WorkingPoint> solve_forward(std::complex<double> Omega_bn,
                                               std::complex<double> Omega_cm,
                                               double Delta_bn, double Delta_cm,
                                               const CouplingSet& xi,
                                               const SystemParams& p,
                                               int grid_n = 200) {
    const double wm = p.omega_m;
    const double ob2 = std::norm(Omega_bn), oc2 = std::norm(Omega_cm);

    auto s_of_mu = [](double o2, double mu, double Gamma) {
        return 0.25 * o2 / (mu * mu + 0.25 * Gamma * Gamma); // |c|^2
    };
    // residual g_j(Q) = Q_j + sum_x xi_xj |c_x(Q)|^2 / omega_m
    auto eval = [&](double Q1, double Q2, double g[2], double J[2][2]) {
        const double mub = Delta_bn + xi.b1 * Q1 + xi.b2 * Q2;
        const double muc = Delta_cm + xi.c1 * Q1 + xi.c2 * Q2;
        const double sb = s_of_mu(ob2, mub, p.Gamma_bn);
        const double sc = s_of_mu(oc2, muc, p.Gamma_cm);
        g[0] = Q1 + (xi.b1 * sb + xi.c1 * sc) / wm;
        g[1] = Q2 + (xi.b2 * sb + xi.c2 * sc) / wm;
        if (J) {
            const double dsb = -2.0 * mub * sb / (mub * mub + 0.25 * p.Gamma_bn * p.Gamma_bn);
            const double dsc = -2.0 * muc * sc / (muc * muc + 0.25 * p.Gamma_cm * p.Gamma_cm);
            J[0][0] = 1.0 + (xi.b1 * dsb * xi.b1 + xi.c1 * dsc * xi.c1) / wm;
            J[0][1] = (xi.b1 * dsb * xi.b2 + xi.c1 * dsc * xi.c2) / wm;
            J[1][0] = (xi.b2 * dsb * xi.b1 + xi.c2 * dsc * xi.c1) / wm;
            J[1][1] = 1.0 + (xi.b2 * dsb * xi.b2 + xi.c2 * dsc * xi.c2) / wm;
        }
    };

    // Box from the undepleted-cavity field estimate.
    const double cb_max2 = s_of_mu(ob2, Delta_bn, p.Gamma_bn);
    const double cc_max2 = s_of_mu(oc2, Delta_cm, p.Gamma_cm);
    double B1 = 10.0 * (std::abs(xi.b1) * cb_max2 + std::abs(xi.c1) * cc_max2) / wm;
    double B2 = 10.0 * (std::abs(xi.b2) * cb_max2 + std::abs(xi.c2) * cc_max2) / wm;
    B1 = std::max(B1, 1e-9);
    B2 = std::max(B2, 1e-9);

    // Grid pass: cells whose corners change sign in both components seed a
    // damped Newton refinement.
    std::vector<std::array<double, 2>> seeds;
    std::vector<double> g1s((grid_n + 1) * (grid_n + 1)), g2s(g1s.size());
    for (int i = 0; i <= grid_n; ++i) {
        const double Q1 = -B1 + 2.0 * B1 * i / grid_n;
        for (int j = 0; j <= grid_n; ++j) {
            const double Q2 = -B2 + 2.0 * B2 * j / grid_n;
            double g[2];
            eval(Q1, Q2, g, nullptr);
            g1s[i * (grid_n + 1) + j] = g[0];
            g2s[i * (grid_n + 1) + j] = g[1];
        }
    }
    auto sgn_change = [](double a, double b) { return (a <= 0.0) != (b <= 0.0); };
    for (int i = 0; i < grid_n; ++i) {
        for (int j = 0; j < grid_n; ++j) {
            const int idx = i * (grid_n + 1) + j;
            const double a1 = g1s[idx], b1 = g1s[idx + 1];
            const double c1v = g1s[idx + grid_n + 1], d1 = g1s[idx + grid_n + 2];
            const double a2 = g2s[idx], b2 = g2s[idx + 1];
            const double c2v = g2s[idx + grid_n + 1], d2 = g2s[idx + grid_n + 2];
            const bool ch1 = sgn_change(a1, b1) || sgn_change(a1, c1v) || sgn_change(a1, d1);
            const bool ch2 = sgn_change(a2, b2) || sgn_change(a2, c2v) || sgn_change(a2, d2);
            if (ch1 && ch2) {
                seeds.push_back({-B1 + 2.0 * B1 * (i + 0.5) / grid_n,
                                 -B2 + 2.0 * B2 * (j + 0.5) / grid_n});
            }
        }
    }

    const double res_scale = std::max({B1 / 10.0, B2 / 10.0, 1e-30});
    std::vector<std::array<double, 2>> sols;
    for (const auto& seed : seeds) {
        double Q1 = seed[0], Q2 = seed[1];
        bool ok = false;
        double g[2], J[2][2];
        for (int it = 0; it < 80; ++it) {
            eval(Q1, Q2, g, J);
            const double res = std::hypot(g[0], g[1]);
            if (res < 1e-12 * res_scale) { ok = true; break; }
            const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
            if (std::abs(det) < 1e-300) break;
            const double dQ1 = -(J[1][1] * g[0] - J[0][1] * g[1]) / det;
            const double dQ2 = -(-J[1][0] * g[0] + J[0][0] * g[1]) / det;
            // damping: halve until the residual decreases
            double t = 1.0;
            for (int back = 0; back < 30; ++back) {
                double gt[2];
                eval(Q1 + t * dQ1, Q2 + t * dQ2, gt, nullptr);
                if (std::hypot(gt[0], gt[1]) < res) break;
                t *= 0.5;
            }
            Q1 += t * dQ1;
            Q2 += t * dQ2;
        }
        if (!ok) continue;
        bool dup = false;
        for (const auto& s : sols) {
            if (std::abs(s[0] - Q1) < 1e-8 * res_scale && std::abs(s[1] - Q2) < 1e-8 * res_scale) {
                dup = true;
                break;
            }
        }
        if (!dup) sols.push_back({Q1, Q2});
    }
    std::sort(sols.begin(), sols.end(), [](const auto& a, const auto& b) {
        return a[0] != b[0] ? a[0] < b[0] : a[1] < b[1];
    });

    std::vector<WorkingPoint> out;
    for (const auto& s : sols) {
        WorkingPoint wp;
        wp.Q1 = s[0];
        wp.Q2 = s[1];
        wp.mu_bn = Delta_bn + xi.b1 * wp.Q1 + xi.b2 * wp.Q2;
        wp.mu_cm = Delta_cm + xi.c1 * wp.Q1 + xi.c2 * wp.Q2;
        wp.c_bn = field_from_rabi(Omega_bn, wp.mu_bn, p.Gamma_bn);
        wp.c_cm = field_from_rabi(Omega_cm, wp.mu_cm, p.Gamma_cm);
        wp.Omega_bn = Omega_bn;
        wp.Omega_cm = Omega_cm;
        out.push_back(wp);
    }
    return out;
}

} // namespace membranes
