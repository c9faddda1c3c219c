#pragma once

#include <cmath>
#include <complex>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "membranes/errors.hpp"
#include "membranes/measures.hpp"
#include "membranes/semiclassical.hpp"

namespace membranes {

// Membrane-membrane couplings left after adiabatically eliminating the
// optical fields: frequency shifts nu_1, nu_2 and the cross spring nu_12.
struct EffectiveCouplings {
    double nu1 = 0.0, nu2 = 0.0, nu12 = 0.0; // [1/s]
    // |xi_xj c_x| / mu_x for (b,1), (b,2), (c,1), (c,2); small ratios keep
    // the elimination honest.
    double validity[4] = {0.0, 0.0, 0.0, 0.0};
    bool validity_warning = false; // any ratio above 0.3
};

inline EffectiveCouplings effective_couplings(const WorkingPoint& wp,
                                              const CouplingSet& xi) {
    if (wp.mu_bn == 0.0 || wp.mu_cm == 0.0)
        throw pole_error("effective_couplings: effective detuning mu = 0");
    const double sb = std::norm(wp.c_bn), sc = std::norm(wp.c_cm);
    EffectiveCouplings e;
    e.nu1 = -2.0 * (xi.b1 * xi.b1 * sb / wp.mu_bn + xi.c1 * xi.c1 * sc / wp.mu_cm);
    e.nu2 = -2.0 * (xi.b2 * xi.b2 * sb / wp.mu_bn + xi.c2 * xi.c2 * sc / wp.mu_cm);
    e.nu12 = -4.0 * (xi.b1 * xi.b2 * sb / wp.mu_bn + xi.c1 * xi.c2 * sc / wp.mu_cm);
    const double cb = std::abs(wp.c_bn), cc = std::abs(wp.c_cm);
    e.validity[0] = std::abs(xi.b1) * cb / std::abs(wp.mu_bn);
    e.validity[1] = std::abs(xi.b2) * cb / std::abs(wp.mu_bn);
    e.validity[2] = std::abs(xi.c1) * cc / std::abs(wp.mu_cm);
    e.validity[3] = std::abs(xi.c2) * cc / std::abs(wp.mu_cm);
    for (double r : e.validity) e.validity_warning |= r > 0.3;
    return e;
}

// Ground-state entanglement of the effective two-membrane Hamiltonian:
// kinetic part omega_m (p1^2 + p2^2)/2, potential (1/2) q^T K q with
//   K = [[omega_m + nu1, nu12/2], [nu12/2, omega_m + nu2]].
// Normal-mode frequencies are sqrt(omega_m * lambda_k); the ground
// covariance in (q1, p1, q2, p2) ordering feeds log_negativity.
inline double ground_state_entanglement(const EffectiveCouplings& e,
                                        double omega_m) {
    Eigen::Matrix2d K;
    K << omega_m + e.nu1, 0.5 * e.nu12, 0.5 * e.nu12, omega_m + e.nu2;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(K);
    const double l0 = es.eigenvalues()(0), l1 = es.eigenvalues()(1);
    if (!(l0 > 0.0))
        throw effective_model_unstable(
            "ground_state_entanglement: effective stiffness not positive definite");
    const Eigen::Matrix2d R = es.eigenvectors(); // K = R diag(l) R^T

    // per normal mode: V_qq = omega_m / omega_k, V_pp = omega_k / omega_m
    const double w0 = std::sqrt(omega_m * l0), w1 = std::sqrt(omega_m * l1);
    const Eigen::Vector2d vq(omega_m / w0, omega_m / w1);
    const Eigen::Vector2d vp(w0 / omega_m, w1 / omega_m);
    const Eigen::Matrix2d Vq = R * vq.asDiagonal() * R.transpose();
    const Eigen::Matrix2d Vp = R * vp.asDiagonal() * R.transpose();

    Eigen::Matrix4d V4 = Eigen::Matrix4d::Zero();
    V4(0, 0) = Vq(0, 0); V4(0, 2) = Vq(0, 1);
    V4(2, 0) = Vq(1, 0); V4(2, 2) = Vq(1, 1);
    V4(1, 1) = Vp(0, 0); V4(1, 3) = Vp(0, 1);
    V4(3, 1) = Vp(1, 0); V4(3, 3) = Vp(1, 1);
    return log_negativity(V4);
}

} // namespace membranes
