#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "membranes/errors.hpp"
#include "membranes/params.hpp"
#include "membranes/semiclassical.hpp"

namespace membranes {

// Variable ordering of the fluctuation vector, used by every matrix in the
// library: (dq1, dp1, dq2, dp2, X_b, Y_b, X_c, Y_c). Probe modes, when
// present, append further (X_y, Y_y) pairs.
inline constexpr int n_core_vars = 8;

using Matrix8 = Eigen::Matrix<double, 8, 8>;

struct LinearSystem {
    Matrix8 A = Matrix8::Zero(); // drift, column convention xdot = A x + noise
    Matrix8 D = Matrix8::Zero(); // diffusion, <n_i(t) n_j(t')> = D_ij delta(t-t')
};

struct StabilityRecord {
    bool stable = false;
    double abscissa = 0.0;      // max Re eigenvalue [1/s]
    double settling_time = 0.0; // 1/|abscissa| [s]
    bool slowest_below_1k = false;
    std::array<std::complex<double>, 8> eigenvalues{};
};

struct CovarianceState {
    Matrix8 V = Matrix8::Zero(); // 2 Re <dO dO>, vacuum = identity
    StabilityRecord stability;
    double residual_rel = 0.0;   // ||A V + V A^T + D||_F / ||D||_F
};

inline Matrix8 build_diffusion(const SystemParams& p) {
    if (!(p.nbar >= 0.0)) throw domain_error("build_diffusion: nbar must be nonnegative");
    Matrix8 D = Matrix8::Zero();
    const double mech = p.gamma() * (2.0 * p.nbar + 1.0);
    D(1, 1) = mech;
    D(3, 3) = mech;
    D(4, 4) = p.Gamma_bn;
    D(5, 5) = p.Gamma_bn;
    D(6, 6) = p.Gamma_cm;
    D(7, 7) = p.Gamma_cm;
    return D;
}

// Linearized fluctuation drift around a working point. Mechanical rows
// carry the radiation-pressure force, optical rows the field response to
// membrane motion; real fields put all optical forcing into Y.
inline LinearSystem build_drift(const WorkingPoint& wp, const CouplingSet& xi,
                                const SystemParams& p) {
    const double s2 = std::sqrt(2.0);
    const double g = p.gamma();
    const double reb = wp.c_bn.real(), imb = wp.c_bn.imag();
    const double rec = wp.c_cm.real(), imc = wp.c_cm.imag();

    LinearSystem sys;
    Matrix8& A = sys.A;

    A(0, 1) = p.omega_m;
    A(1, 0) = -p.omega_m;
    A(1, 1) = -0.5 * g;
    A(2, 3) = p.omega_m;
    A(3, 2) = -p.omega_m;
    A(3, 3) = -0.5 * g;

    A(4, 4) = -0.5 * p.Gamma_bn;
    A(4, 5) = wp.mu_bn;
    A(5, 4) = -wp.mu_bn;
    A(5, 5) = -0.5 * p.Gamma_bn;
    A(6, 6) = -0.5 * p.Gamma_cm;
    A(6, 7) = wp.mu_cm;
    A(7, 6) = -wp.mu_cm;
    A(7, 7) = -0.5 * p.Gamma_cm;

    // membrane j feels -sqrt(2) xi_xj (Re c_x X_x + Im c_x Y_x)
    A(1, 4) = -s2 * xi.b1 * reb;
    A(1, 5) = -s2 * xi.b1 * imb;
    A(1, 6) = -s2 * xi.c1 * rec;
    A(1, 7) = -s2 * xi.c1 * imc;
    A(3, 4) = -s2 * xi.b2 * reb;
    A(3, 5) = -s2 * xi.b2 * imb;
    A(3, 6) = -s2 * xi.c2 * rec;
    A(3, 7) = -s2 * xi.c2 * imc;

    // field x responds to sum_j xi_xj dq_j
    A(4, 0) = s2 * xi.b1 * imb;
    A(4, 2) = s2 * xi.b2 * imb;
    A(5, 0) = -s2 * xi.b1 * reb;
    A(5, 2) = -s2 * xi.b2 * reb;
    A(6, 0) = s2 * xi.c1 * imc;
    A(6, 2) = s2 * xi.c2 * imc;
    A(7, 0) = -s2 * xi.c1 * rec;
    A(7, 2) = -s2 * xi.c2 * rec;

    sys.D = build_diffusion(p);
    return sys;
}

template <class Matrix>
StabilityRecord stability_of(const Matrix& A) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
    StabilityRecord rec;
    double abscissa = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < A.rows(); ++i) {
        const std::complex<double> ev = es.eigenvalues()(i);
        if (i < static_cast<int>(rec.eigenvalues.size())) rec.eigenvalues[i] = ev;
        abscissa = std::max(abscissa, ev.real());
    }
    rec.abscissa = abscissa;
    rec.stable = abscissa < 0.0;
    rec.settling_time = rec.stable ? 1.0 / -abscissa
                                   : std::numeric_limits<double>::infinity();
    rec.slowest_below_1k = rec.stable && (-abscissa < 1e3);
    return rec;
}

inline StabilityRecord stability(const LinearSystem& sys) {
    return stability_of(sys.A);
}

// Dense Bartels-Stewart solve of A V + V A^T = -D via the complex Schur
// form of A. Stable A makes every diagonal divisor T_ii + T_jj nonzero.
inline Eigen::MatrixXd lyapunov_solve(const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& D) {
    const int n = static_cast<int>(A.rows());
    Eigen::ComplexSchur<Eigen::MatrixXcd> schur(A.cast<std::complex<double>>());
    const Eigen::MatrixXcd T = schur.matrixT();
    const Eigen::MatrixXcd U = schur.matrixU();

    // Transformed equation: T W + W T^T = -Uh D conj(U), W = Uh V conj(U).
    const Eigen::MatrixXcd Dt = U.adjoint() * D * U.conjugate();
    Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(n, n);
    for (int i = n - 1; i >= 0; --i) {
        for (int j = n - 1; j >= 0; --j) {
            std::complex<double> rhs = -Dt(i, j);
            for (int k = i + 1; k < n; ++k) rhs -= T(i, k) * W(k, j);
            for (int k = j + 1; k < n; ++k) rhs -= W(i, k) * T(j, k);
            W(i, j) = rhs / (T(i, i) + T(j, j));
        }
    }
    Eigen::MatrixXd V = (U * W * U.transpose()).real();
    return 0.5 * (V + V.transpose());
}

// Residual acceptance: the nominal bound 1e-10 ||D|| cannot be met in
// double precision once ||V|| dwarfs ||D|| (heavy thermal load or a
// near-marginal drift), so the bound is floored at the attainable
// round-off scale eps ||A|| ||V||.
inline bool lyapunov_residual_ok(double res_norm, double D_norm, double A_norm,
                                 double V_norm) {
    const double eps = std::numeric_limits<double>::epsilon();
    return res_norm <= std::max(1e-10 * D_norm, 64.0 * eps * A_norm * V_norm);
}

inline CovarianceState steady_covariance(const LinearSystem& sys) {
    CovarianceState st;
    st.stability = stability(sys);
    if (!st.stability.stable) {
        throw no_steady_state("steady_covariance: drift matrix is not Hurwitz",
                              st.stability.abscissa);
    }
    const Eigen::MatrixXd V = lyapunov_solve(sys.A, sys.D);
    const Eigen::MatrixXd R = sys.A * V + V * sys.A.transpose() + sys.D;
    const double rn = R.norm(), dn = sys.D.norm();
    st.V = V;
    st.residual_rel = rn / dn;
    if (!lyapunov_residual_ok(rn, dn, sys.A.norm(), V.norm()))
        throw numerical_degeneracy("steady_covariance: Lyapunov residual exceeds tolerance");
    return st;
}

} // namespace membranes
