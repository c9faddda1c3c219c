#pragma once

#include <stdexcept>
#include <string>

namespace membranes {

// Base class for everything this library throws on purpose.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: unknown key, value out of range, missing required entry.
struct config_error : error {
    using error::error;
};

// Mathematical-domain violation (negative temperature, zero decay, ...).
struct domain_error : error {
    using error::error;
};

// The drift matrix has an eigenvalue with nonnegative real part where a
// steady state was required. Carries the spectral abscissa for diagnostics.
struct no_steady_state : error {
    double abscissa;
    no_steady_state(const std::string& msg, double a) : error(msg), abscissa(a) {}
};

// Implicit differentiation hit df/dk ~ 0 at a root (grazing resonance).
struct singular_derivative : error {
    using error::error;
};

// The two probe modes measure (nearly) the same membrane combination.
struct degenerate_probe : error {
    using error::error;
};

// Effective detuning mu = 0 makes the adiabatic elimination formulas blow up.
struct pole_error : error {
    using error::error;
};

// Effective stiffness matrix is not positive definite; the adiabatic model
// has no ground state to build a covariance from.
struct effective_model_unstable : error {
    using error::error;
};

// A closed-form expression lost all significant digits (e.g. the partial
// transpose discriminant went negative beyond tolerance).
struct numerical_degeneracy : error {
    using error::error;
};

// Caller broke a documented precondition (non-symmetric covariance, ...).
struct contract_violation : error {
    using error::error;
};

// Stochastic integrator refused to run (unstable extended system or a time
// step too coarse for the fastest eigenvalue).
struct simulation_refused : error {
    using error::error;
};

// Every optimizer start landed in the unstable region.
struct optimization_failed : error {
    using error::error;
};

} // namespace membranes
