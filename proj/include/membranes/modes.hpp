#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "membranes/constants.hpp"
#include "membranes/errors.hpp"
#include "membranes/params.hpp"
#include "membranes/root_find.hpp"

namespace membranes {

// Three-region cavity: rigid mirrors at -3L and +3L, membranes at q1 < q2.
// eta encodes the boundary-condition jump at each membrane.
struct CavityGeometry {
    double L = 1e-3;   // [m]
    double eta = 4.0;  // = 2 sqrt((1-T)/T), dimensionless
    double q1 = -1e-3; // [m]
    double q2 = 2e-3;  // [m]

    static double eta_of(double T_mem) {
        if (!(T_mem > 0.0 && T_mem < 1.0))
            throw domain_error("eta_of: T_mem must be in (0,1)");
        return 2.0 * std::sqrt((1.0 - T_mem) / T_mem);
    }

    static CavityGeometry at_rest(const SystemParams& p) {
        return {p.L, eta_of(p.T_mem), p.q01, p.q02};
    }

    void check() const {
        if (!(eta > 0.0)) throw domain_error("CavityGeometry: eta must be positive");
        if (!(-3.0 * L < q1 && q1 < q2 && q2 < 3.0 * L))
            throw domain_error("CavityGeometry: need -3L < q1 < q2 < 3L");
    }
};

enum class Branch { a, b, b_prime, c };

inline const char* branch_name(Branch b) {
    switch (b) {
        case Branch::a: return "a";
        case Branch::b: return "b";
        case Branch::b_prime: return "b'";
        case Branch::c: return "c";
    }
    return "?";
}

struct CavityMode {
    Branch branch = Branch::a;
    long index = 0;      // n for a/b/b', m for c
    double kappa = 0.0;  // k L, dimensionless
    double k = 0.0;      // [1/m]
    double omega = 0.0;  // [1/s]
    double xi1 = 0.0, xi2 = 0.0;               // [1/(s m)]
    double xi1_scaled = 0.0, xi2_scaled = 0.0; // [1/s]
    bool degenerate_warning = false; // another root within one scan cell
};

// Characteristic function of the boundary-value problem in the scaled
// variable kappa = k L with qh_j = q_j / L. Zeros are the resonances.
inline double resonance_residual_scaled(double kappa, double qh1, double qh2,
                                        double eta) {
    const double c3 = std::cos(3.0 * kappa), s3 = std::sin(3.0 * kappa);
    const double a1 = kappa * qh1, a2 = kappa * qh2;
    const double b1 = std::sin(a1 + 3.0 * kappa); // membrane 1 phase factor
    const double b2 = std::sin(a2 - 3.0 * kappa); // membrane 2 phase factor
    return (c3 - eta * std::cos(a1) * b1) * (s3 + eta * std::sin(a2) * b2)
         + (c3 + eta * std::cos(a2) * b2) * (s3 + eta * std::sin(a1) * b1);
}

inline double resonance_residual(double k, const CavityGeometry& g) {
    if (!(k > 0.0)) throw domain_error("resonance_residual: k must be positive");
    return resonance_residual_scaled(k * g.L, g.q1 / g.L, g.q2 / g.L, g.eta);
}

// Resonance ladder in kappa for membranes at rest. theta is the fitted
// phase parameter; adjacent c roots are spaced pi/3 apart.
inline double ladder_kappa_a(long n) { return n * pi; }
inline double ladder_kappa_b(long n, double theta) {
    return n * pi - 0.5 * theta + 0.5 * std::acos(-0.5 * std::cos(theta));
}
inline double ladder_kappa_b_prime(long n, double theta) {
    return n * pi - 0.5 * theta - 0.5 * std::acos(-0.5 * std::cos(theta));
}
inline double ladder_kappa_c(long m, double theta) {
    return m * pi / 3.0 + pi / 6.0 - theta / 3.0;
}

struct LadderFit {
    double theta = 0.0;    // radians, in (0, pi)
    double residual = 0.0; // worst |kappa_predicted - kappa_root| / (pi/3)
    bool consistent = true;
};

namespace detail {

// Default scan resolution: 1e-3 of the closest expected root spacing pi/3.
inline constexpr double scan_cell = (pi / 3.0) * 1e-3;

inline std::vector<double> scan_roots(const CavityGeometry& g, double kap_lo,
                                      double kap_hi) {
    const double qh1 = g.q1 / g.L, qh2 = g.q2 / g.L;
    auto f = [&](double kap) {
        return resonance_residual_scaled(kap, qh1, qh2, g.eta);
    };
    const int n_steps = std::max(8, static_cast<int>(std::ceil((kap_hi - kap_lo) / scan_cell)));
    std::vector<double> roots;
    for (const Bracket& br : scan_sign_changes(f, kap_lo, kap_hi, n_steps))
        roots.push_back(brent(f, br.lo, br.hi, 1e-14));
    std::sort(roots.begin(), roots.end());
    // A root landing exactly on a scan node is reported by both adjacent
    // cells; merge those before anything downstream counts roots.
    std::vector<double> merged;
    for (double r : roots) {
        if (!merged.empty() && std::abs(r - merged.back()) < 1e-9 * std::abs(r))
            continue;
        merged.push_back(r);
    }
    return merged;
}

inline double nearest(const std::vector<double>& sorted, double x) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), x);
    double best = std::numeric_limits<double>::infinity();
    if (it != sorted.end()) best = *it;
    if (it != sorted.begin()) {
        const double lo = *(it - 1);
        if (std::abs(lo - x) < std::abs(best - x)) best = lo;
    }
    return best;
}

} // namespace detail

// Extract theta by inverting the (linear) c-ladder formula on a numeric
// root, then cross-validate against the b, b' and neighboring-c formulas.
// Among the roots that could play the role of kappa_c(m_idx), the candidate
// whose ladder predictions match the full numeric root set best wins.
inline LadderFit fit_theta(const CavityGeometry& rest, long n_idx, long m_idx) {
    rest.check();
    if (m_idx != 3 * n_idx)
        throw domain_error("fit_theta: expects the triplet configuration m_idx = 3 n_idx");
    const double center = n_idx * pi;
    const std::vector<double> roots = detail::scan_roots(rest, center - 1.8, center + 1.8);
    if (roots.size() < 4) throw domain_error("fit_theta: too few roots in scan window");

    LadderFit best;
    best.residual = std::numeric_limits<double>::infinity();
    for (double r : roots) {
        const double theta = m_idx * pi + 0.5 * pi - 3.0 * r;
        if (!(theta > 1e-6 && theta < pi - 1e-6)) continue;
        double worst = 0.0;
        const double preds[] = {
            ladder_kappa_b(n_idx, theta),
            ladder_kappa_b_prime(n_idx, theta),
            ladder_kappa_c(m_idx - 1, theta),
            ladder_kappa_c(m_idx + 1, theta),
        };
        for (double p : preds) {
            const double miss = std::abs(detail::nearest(roots, p) - p) / (pi / 3.0);
            worst = std::max(worst, miss);
        }
        if (worst < best.residual) {
            best.theta = theta;
            best.residual = worst;
        }
    }
    if (!std::isfinite(best.residual))
        throw domain_error("fit_theta: no candidate root admits theta in (0, pi)");
    best.consistent = best.residual < 1e-3;
    return best;
}

// All resonances with kappa in [kappa(k_center) - kL_halfwidth, ... + kL_halfwidth],
// found by dense scan plus Brent refinement, labeled by proximity to the
// fitted ladder. An empty window yields an empty list.
inline std::vector<CavityMode> find_resonances(const CavityGeometry& g,
                                               double k_center,
                                               double k_halfwidth,
                                               const LadderFit& fit) {
    g.check();
    const double kap_lo = (k_center - k_halfwidth) * g.L;
    const double kap_hi = (k_center + k_halfwidth) * g.L;
    const std::vector<double> roots = detail::scan_roots(g, kap_lo, kap_hi);

    std::vector<CavityMode> out;
    for (double kap : roots) {
        CavityMode m;
        m.kappa = kap;
        m.k = kap / g.L;
        m.omega = m.k * c_light;
        // Nearest ladder prediction decides the label.
        const double th = fit.theta;
        const long na = std::lround(kap / pi);
        const long nb = std::lround((kap - (ladder_kappa_b(0, th))) / pi);
        const long nbp = std::lround((kap - (ladder_kappa_b_prime(0, th))) / pi);
        const long mc = std::lround((kap - pi / 6.0 + th / 3.0) / (pi / 3.0));
        struct Cand { Branch br; long idx; double miss; };
        const Cand cands[] = {
            {Branch::a, na, std::abs(kap - ladder_kappa_a(na))},
            {Branch::b, nb, std::abs(kap - ladder_kappa_b(nb, th))},
            {Branch::b_prime, nbp, std::abs(kap - ladder_kappa_b_prime(nbp, th))},
            {Branch::c, mc, std::abs(kap - ladder_kappa_c(mc, th))},
        };
        const Cand* pick = &cands[0];
        for (const Cand& c : cands)
            if (c.miss < pick->miss) pick = &c;
        m.branch = pick->br;
        m.index = pick->idx;
        out.push_back(m);
    }
    // Distinct roots closer than one scan cell were likely under-resolved.
    for (size_t i = 0; i + 1 < out.size(); ++i) {
        if (out[i + 1].kappa - out[i].kappa < detail::scan_cell) {
            out[i].degenerate_warning = true;
            out[i + 1].degenerate_warning = true;
        }
    }
    return out;
}

// Single root near a ladder prediction; used where the full scan is not needed.
inline double refine_root_near(const CavityGeometry& g, double kappa_guess,
                               double halfwidth = 0.15) {
    const double qh1 = g.q1 / g.L, qh2 = g.q2 / g.L;
    auto f = [&](double kap) {
        return resonance_residual_scaled(kap, qh1, qh2, g.eta);
    };
    double lo = kappa_guess - halfwidth, hi = kappa_guess + halfwidth;
    double flo = f(lo), fhi = f(hi);
    if ((flo < 0.0) == (fhi < 0.0)) {
        // widen once, then fall back to a local scan
        lo -= halfwidth; hi += halfwidth;
        flo = f(lo); fhi = f(hi);
        if ((flo < 0.0) == (fhi < 0.0)) {
            const std::vector<double> roots = detail::scan_roots(g, lo, hi);
            if (roots.empty())
                throw domain_error("refine_root_near: no sign change near guess");
            return detail::nearest(roots, kappa_guess);
        }
    }
    return brent(f, lo, hi, 1e-14);
}

namespace detail {

// Richardson-extrapolated central difference with steps h and h/10.
template <class F>
double central_richardson(F&& f, double x, double h1, double h2) {
    const double d1 = (f(x + h1) - f(x - h1)) / (2.0 * h1);
    const double d2 = (f(x + h2) - f(x - h2)) / (2.0 * h2);
    const double r = (h1 / h2) * (h1 / h2);
    return (r * d2 - d1) / (r - 1.0);
}

} // namespace detail

// Couplings by implicit differentiation of the characteristic function at a
// root: dk/dq_j = -(df/dq_j)/(df/dk). Partial derivatives use central
// differences at three step sizes with Richardson extrapolation; the two
// extrapolants must agree to 1e-6 relative or the result is rejected.
inline std::pair<double, double> couplings_numeric(const CavityGeometry& g,
                                                   const CavityMode& mode) {
    g.check();
    const double kap = mode.kappa;
    const double qh1 = g.q1 / g.L, qh2 = g.q2 / g.L;
    const double h[3] = {1e-6, 1e-7, 1e-8}; // in qhat = q/L, i.e. {1e-6,...} * L in q
    // kappa varies on an O(1) scale (period pi) while the membrane terms
    // oscillate on the 1/kappa scale in qhat, so the two arguments need
    // different step ladders to balance truncation against roundoff
    const double hk[3] = {1e-3, 1e-4, 1e-5};

    auto deriv = [&](auto&& f, double x, const double* hs) {
        const double r1 = detail::central_richardson(f, x, hs[0], hs[1]);
        const double r2 = detail::central_richardson(f, x, hs[1], hs[2]);
        const double scale = std::max({std::abs(r1), std::abs(r2), 1e-12});
        if (std::abs(r1 - r2) > 1e-6 * scale)
            throw numerical_degeneracy("couplings_numeric: finite-difference derivative not converged");
        return r1;
    };

    const double dfdkap = deriv(
        [&](double x) { return resonance_residual_scaled(x, qh1, qh2, g.eta); }, kap, hk);
    const double dfdq1 = deriv(
        [&](double x) { return resonance_residual_scaled(kap, x, qh2, g.eta); }, qh1, h);
    const double dfdq2 = deriv(
        [&](double x) { return resonance_residual_scaled(kap, qh1, x, g.eta); }, qh2, h);

    const double fscale = (1.0 + g.eta) * (1.0 + g.eta);
    if (std::abs(dfdkap) < 1e-9 * fscale)
        throw singular_derivative("couplings_numeric: df/dk vanishes at the root");

    const double pref = -c_light / (g.L * g.L);
    return {pref * dfdq1 / dfdkap, pref * dfdq2 / dfdkap};
}

// Closed-form low-transmissivity truncations of the couplings, [1/(s m)].
struct AnalyticCouplings {
    double xi_b1 = 0.0, xi_b2 = 0.0;
    double xi_c1 = 0.0, xi_c2 = 0.0;
    bool truncation_warning = false; // T_mem beyond the small-T regime
};

inline AnalyticCouplings couplings_analytic(double T_mem, long n_idx,
                                            long m_idx, double L) {
    if (!(T_mem >= 0.0 && T_mem < 1.0))
        throw domain_error("couplings_analytic: T_mem must be in [0,1)");
    AnalyticCouplings a;
    const double bn = n_idx * pi * c_light / (L * L);
    const double cm = m_idx * pi * c_light / (L * L);
    a.xi_b1 = (0.1 + (3.0 / 400.0) * T_mem) * bn;
    a.xi_b2 = (0.4 - (39.0 / 200.0) * T_mem) * bn;
    a.xi_c1 = -((4.0 / 45.0) - (28.0 / 675.0) * T_mem) * cm;
    a.xi_c2 = -a.xi_c1;
    a.truncation_warning = T_mem > 0.3;
    return a;
}

} // namespace membranes
