#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "membranes/constants.hpp"
#include "membranes/errors.hpp"

namespace membranes {

// Device and environment parameters. All frequencies and rates are angular,
// in 1/s; lengths in m; masses in kg. Membranes sit inside a cavity whose
// rigid mirrors are at -3L and +3L.
struct SystemParams {
    double L = 1e-3;          // cavity half-span scale [m]
    double T_mem = 0.2;       // membrane power transmissivity, in (0,1)
    double mass = 1e-12;      // effective membrane mass [kg], same for both
    double omega_m = 1e6;     // mechanical frequency [1/s], same for both
    double Q_f = 1e7;         // mechanical quality factor; gamma = omega_m/Q_f
    double Gamma_bn = 1e5;    // decay rate of the driven b mode [1/s]
    double Gamma_cm = 1e5;    // decay rate of the driven c mode [1/s]
    double q01 = -1e-3;       // membrane 1 rest position [m] (default -L)
    double q02 = 2e-3;        // membrane 2 rest position [m] (default +2L)
    long n_idx = 2000;        // driven b-branch longitudinal index
    long m_idx = 6000;        // driven c-branch longitudinal index
    double nbar = 1000.0;     // thermal phonon occupation of the bath
    double Delta_bn = 0.0;    // drive detuning of the b mode [1/s]
    double Delta_cm = 0.0;    // drive detuning of the c mode [1/s]
    double much_less_ratio = 0.1; // threshold implementing "much smaller than"

    // Returns defaults with rest positions tied to the given half-span.
    static SystemParams with_L(double L_) {
        SystemParams p;
        p.L = L_;
        p.q01 = -L_;
        p.q02 = 2.0 * L_;
        return p;
    }

    double gamma() const { return omega_m / Q_f; }

    // Zero-point position spread; the unit of dimensionless membrane
    // coordinates and the factor between xi [1/(s m)] and xi-tilde [1/s].
    double x_zpf() const { return std::sqrt(hbar / (mass * omega_m)); }

    void check() const {
        if (!(L > 0.0)) throw domain_error("L must be positive");
        if (!(T_mem > 0.0 && T_mem < 1.0)) throw domain_error("T_mem must be in (0,1)");
        if (!(mass > 0.0)) throw domain_error("mass must be positive");
        if (!(omega_m > 0.0)) throw domain_error("omega_m must be positive");
        if (!(Q_f > 0.0)) throw domain_error("Q_f must be positive");
        if (!(Gamma_bn > 0.0 && Gamma_cm > 0.0)) throw domain_error("decay rates must be positive");
        if (!(nbar >= 0.0)) throw domain_error("nbar must be nonnegative");
        if (!(q01 > -3.0 * L && q01 < q02 && q02 < 3.0 * L))
            throw domain_error("rest positions must satisfy -3L < q01 < q02 < 3L");
        if (n_idx <= 0 || m_idx <= 0) throw domain_error("mode indices must be positive");
    }
};

// Exact Bose occupation. No high-temperature shortcut: the same expression
// serves from millikelvin to room temperature.
inline double thermal_occupation(double omega_m, double temperature) {
    if (!(omega_m > 0.0)) throw domain_error("thermal_occupation: omega_m must be positive");
    if (!(temperature > 0.0)) throw domain_error("thermal_occupation: temperature must be positive");
    return 1.0 / std::expm1(hbar * omega_m / (k_B * temperature));
}

// Inverse of thermal_occupation in the temperature argument.
inline double temperature_for_occupation(double omega_m, double nbar) {
    if (!(omega_m > 0.0)) throw domain_error("temperature_for_occupation: omega_m must be positive");
    if (!(nbar > 0.0)) throw domain_error("temperature_for_occupation: nbar must be positive");
    return hbar * omega_m / (k_B * std::log1p(1.0 / nbar));
}

// Drive amplitude that sustains the steady field c at effective detuning mu:
// conj(Omega) = -2 (mu - i Gamma/2) c.
inline std::complex<double> rabi_from_field(std::complex<double> c, double mu, double Gamma) {
    return std::conj(-2.0 * std::complex<double>(mu, -0.5 * Gamma) * c);
}

// Steady field sustained by the drive Omega: the inverse of rabi_from_field.
inline std::complex<double> field_from_rabi(std::complex<double> Omega, double mu, double Gamma) {
    return -std::conj(Omega) / (2.0 * std::complex<double>(mu, -0.5 * Gamma));
}

// Input power behind a drive of Rabi frequency Omega on a mode of decay
// Gamma at laser frequency omega_laser: P = hbar omega |Omega|^2 / (4 Gamma).
inline double laser_power(double Omega_mag, double omega_laser, double Gamma) {
    if (!(Gamma > 0.0)) throw domain_error("laser_power: Gamma must be positive");
    return hbar * omega_laser * Omega_mag * Omega_mag / (4.0 * Gamma);
}

// One validity condition: a ratio that is supposed to be small.
struct ValidityCheck {
    std::string name;
    double ratio = 0.0;     // measured value / bound
    double threshold = 0.1; // "much less" cutoff the ratio is held against
    bool pass = false;
};

struct ValidityReport {
    std::vector<ValidityCheck> checks;
    bool all_pass = true;

    void add(const std::string& name, double ratio, double threshold) {
        bool ok = ratio < threshold;
        checks.push_back({name, ratio, threshold, ok});
        all_pass = all_pass && ok;
    }
};

// Regime checks behind the two-mode model: the membranes must move slowly
// compared to the optical mode separation, and the drives must not bridge
// that separation either. Field magnitudes are checked against the
// linearization requirement |c| >> 1 (fixed threshold 10).
inline ValidityReport validate(const SystemParams& p,
                               double omega_bn, double omega_cm,
                               double Omega_bn_mag, double Omega_cm_mag,
                               double c_bn_mag, double c_cm_mag) {
    ValidityReport rep;
    const double sep = std::abs(omega_bn - omega_cm);
    const double r = p.much_less_ratio;
    if (sep <= 0.0) {
        rep.add("mode_separation_positive", 1.0, r);
        return rep;
    }
    rep.add("omega_m_below_mode_separation", p.omega_m / sep, r);
    rep.add("rabi_bn_below_mode_separation", Omega_bn_mag / sep, r);
    rep.add("rabi_cm_below_mode_separation", Omega_cm_mag / sep, r);
    // |c| >> 1 keeps the linearized fluctuation expansion honest.
    rep.add("linearization_c_bn", 10.0 / std::max(c_bn_mag, 1e-300), 1.0);
    rep.add("linearization_c_cm", 10.0 / std::max(c_cm_mag, 1e-300), 1.0);
    return rep;
}

} // namespace membranes
