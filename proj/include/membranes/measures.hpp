#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "membranes/errors.hpp"

namespace membranes {

// Symplectic form for n modes in (q1, p1, q2, p2, ...) ordering.
inline Eigen::MatrixXd symplectic_form(int n_modes) {
    Eigen::MatrixXd Om = Eigen::MatrixXd::Zero(2 * n_modes, 2 * n_modes);
    for (int m = 0; m < n_modes; ++m) {
        Om(2 * m, 2 * m + 1) = 1.0;
        Om(2 * m + 1, 2 * m) = -1.0;
    }
    return Om;
}

namespace detail {

inline void require_symmetric(const Eigen::MatrixXd& V, const char* who) {
    const double asym = (V - V.transpose()).norm();
    if (asym > 1e-10 * std::max(1.0, V.norm()))
        throw contract_violation(std::string(who) + ": covariance must be symmetric");
}

} // namespace detail

// Moduli of the eigenvalues of i Omega V, deduplicated from +/- pairs into
// one value per mode, ascending. Physical states have every value >= 1.
inline std::vector<double> symplectic_eigenvalues(const Eigen::MatrixXd& V) {
    detail::require_symmetric(V, "symplectic_eigenvalues");
    const int n_modes = static_cast<int>(V.rows()) / 2;
    const Eigen::MatrixXd OmV = symplectic_form(n_modes) * V;
    Eigen::EigenSolver<Eigen::MatrixXd> es(OmV, false);
    std::vector<double> mags(2 * n_modes);
    for (int i = 0; i < 2 * n_modes; ++i) mags[i] = std::abs(es.eigenvalues()(i));
    std::sort(mags.begin(), mags.end());
    std::vector<double> out(n_modes);
    for (int m = 0; m < n_modes; ++m) out[m] = 0.5 * (mags[2 * m] + mags[2 * m + 1]);
    return out;
}

// Minimum eigenvalue of the Hermitian matrix V + i Omega; >= -1e-8 is the
// uncertainty-principle acceptance used throughout the tests.
inline double uncertainty_margin(const Eigen::MatrixXd& V) {
    detail::require_symmetric(V, "uncertainty_margin");
    const int n_modes = static_cast<int>(V.rows()) / 2;
    Eigen::MatrixXcd H = V.cast<std::complex<double>>();
    H += std::complex<double>(0.0, 1.0) * symplectic_form(n_modes).cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    return es.eigenvalues().minCoeff();
}

// Two-mode block data of a 4x4 covariance in (q1, p1, q2, p2) ordering.
struct TwoModeBlocks {
    double detA = 0.0, detB = 0.0, detC = 0.0, detV = 0.0;
};

inline TwoModeBlocks two_mode_blocks(const Eigen::Matrix4d& V4) {
    TwoModeBlocks b;
    b.detA = V4(0, 0) * V4(1, 1) - V4(0, 1) * V4(1, 0);
    b.detB = V4(2, 2) * V4(3, 3) - V4(2, 3) * V4(3, 2);
    b.detC = V4(0, 2) * V4(1, 3) - V4(0, 3) * V4(1, 2);
    // det V as the product of symmetric eigenvalues: the LU determinant
    // carries eps*||V||^4 of absolute error, which buries det V = O(1) for
    // strongly squeezed states; each eigenvalue is accurate to eps*||V||
    b.detV = Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(V4).eigenvalues().prod();
    return b;
}

namespace detail {

// Smaller symplectic eigenvalue squared from the closed two-mode formula
// nu^2 = (S - sqrt(S^2 - 4 detV)) / 2, evaluated in the rationalized form
// 2 detV / (S + sqrt(...)) so huge covariances do not cancel to noise.
inline double nu_minus_sq(double S, double detV, const char* who) {
    double disc = S * S - 4.0 * detV;
    if (disc < 0.0) {
        if (disc < -1e-8 * std::max(S * S, 1.0))
            throw numerical_degeneracy(std::string(who) + ": negative discriminant");
        disc = 0.0;
    }
    const double denom = S + std::sqrt(disc);
    if (!(denom > 0.0))
        throw numerical_degeneracy(std::string(who) + ": nonpositive symplectic invariant");
    return 2.0 * detV / denom;
}

inline double nu_plus_sq(double S, double detV) {
    const double disc = std::max(0.0, S * S - 4.0 * detV);
    return 0.5 * (S + std::sqrt(disc));
}

} // namespace detail

// Logarithmic negativity of a two-mode covariance (natural log). The
// partial transpose flips the sign of det C in the symplectic invariant.
inline double log_negativity(const Eigen::Matrix4d& V4) {
    detail::require_symmetric(V4, "log_negativity");
    const TwoModeBlocks b = two_mode_blocks(V4);
    const double S_pt = b.detA + b.detB - 2.0 * b.detC;
    const double nt2 = detail::nu_minus_sq(S_pt, b.detV, "log_negativity");
    return std::max(0.0, -0.5 * std::log(nt2));
}

// Phonon numbers of the two membranes from the mechanical diagonal of an
// 8x8 (or larger) covariance: n_j = (V_qq + V_pp)/4 - 1/2.
inline std::pair<double, double> phonon_numbers(const Eigen::MatrixXd& V) {
    detail::require_symmetric(V, "phonon_numbers");
    const double n1 = 0.25 * (V(0, 0) + V(1, 1)) - 0.5;
    const double n2 = 0.25 * (V(2, 2) + V(3, 3)) - 0.5;
    return {n1, n2};
}

// Binary-entropy-style weight of one symplectic eigenvalue, in bits.
// Values below 1 (solver noise on pure directions) clamp to the pure-state
// value 0; physicality itself is policed by uncertainty_margin, not here.
inline double entropy_of_nu(double nu) {
    if (nu < 1.0) return 0.0;
    const double up = 0.5 * (nu + 1.0), dn = 0.5 * (nu - 1.0);
    const double t = dn > 0.0 ? dn * std::log2(dn) : 0.0;
    return up * std::log2(up) - t;
}

// Von Neumann entropy of the reduced two-membrane state, in bits.
inline double entropy_mechanical(const Eigen::Matrix4d& V4) {
    detail::require_symmetric(V4, "entropy_mechanical");
    const TwoModeBlocks b = two_mode_blocks(V4);
    const double S = b.detA + b.detB + 2.0 * b.detC;
    const double num = detail::nu_minus_sq(S, b.detV, "entropy_mechanical");
    const double nup = detail::nu_plus_sq(S, b.detV);
    return entropy_of_nu(std::sqrt(num)) + entropy_of_nu(std::sqrt(nup));
}

inline Eigen::Matrix4d mechanical_block(const Eigen::MatrixXd& V) {
    return V.topLeftCorner<4, 4>();
}

} // namespace membranes
