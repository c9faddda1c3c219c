#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace membranes {

// Classic Brent root refinement on a bracketing interval [a,b] with
// f(a) f(b) <= 0. Tolerance is relative to the root location, with a small
// absolute floor so brackets straddling zero still terminate.
template <class F>
double brent(F&& f, double a, double b, double rel_tol = 1e-14,
             int max_iter = 200) {
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (std::abs(fa) < std::abs(fb)) { std::swap(a, b); std::swap(fa, fb); }
    double c = a, fc = fa;
    bool mflag = true;
    double d = 0.0;
    for (int i = 0; i < max_iter; ++i) {
        const double tol = rel_tol * std::abs(b) + 1e-300;
        if (fb == 0.0 || std::abs(b - a) < tol) break;
        double s;
        if (fa != fc && fb != fc) {
            // inverse quadratic interpolation
            s = a * fb * fc / ((fa - fb) * (fa - fc))
              + b * fa * fc / ((fb - fa) * (fb - fc))
              + c * fa * fb / ((fc - fa) * (fc - fb));
        } else {
            s = b - fb * (b - a) / (fb - fa); // secant
        }
        const double lo = (3.0 * a + b) / 4.0;
        const bool out_of_range = !((s > std::min(lo, b)) && (s < std::max(lo, b)));
        const bool slow = mflag ? (std::abs(s - b) >= std::abs(b - c) / 2.0)
                                : (std::abs(s - b) >= std::abs(c - d) / 2.0);
        const bool tiny = mflag ? (std::abs(b - c) < tol) : (std::abs(c - d) < tol);
        if (out_of_range || slow || tiny) {
            s = 0.5 * (a + b); // bisection fallback
            mflag = true;
        } else {
            mflag = false;
        }
        const double fs = f(s);
        d = c;
        c = b; fc = fb;
        if (fa * fs < 0.0) { b = s; fb = fs; }
        else               { a = s; fa = fs; }
        if (std::abs(fa) < std::abs(fb)) { std::swap(a, b); std::swap(fa, fb); }
    }
    return b;
}

struct Bracket {
    double lo = 0.0, hi = 0.0;
};

// Uniform scan of [lo, hi] in n_steps cells; returns every cell whose
// endpoint values change sign (or hit zero). Roots of even multiplicity do
// not change sign and are invisible to this scan; callers choose n_steps so
// that expected roots are separated by several cells.
template <class F>
std::vector<Bracket> scan_sign_changes(F&& f, double lo, double hi, int n_steps) {
    std::vector<Bracket> out;
    double x0 = lo, f0 = f(lo);
    for (int i = 1; i <= n_steps; ++i) {
        const double x1 = lo + (hi - lo) * static_cast<double>(i) / n_steps;
        const double f1 = f(x1);
        if (f0 == 0.0 || (f0 < 0.0) != (f1 < 0.0)) out.push_back({x0, x1});
        x0 = x1; f0 = f1;
    }
    return out;
}

} // namespace membranes
