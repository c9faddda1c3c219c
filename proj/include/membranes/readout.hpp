#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "membranes/config.hpp"
#include "membranes/csv.hpp"
#include "membranes/dynamics.hpp"
#include "membranes/errors.hpp"
#include "membranes/measures.hpp"
#include "membranes/modes.hpp"
#include "membranes/pipeline.hpp"
#include "membranes/rng.hpp"

namespace membranes {

// A weak auxiliary mode reading out the membranes without steering them.
struct ProbeMode {
    ProbeSpec spec;
    double w1 = 0.0, w2 = 0.0; // scaled weights xi-tilde_y1, xi-tilde_y2 [1/s]
};

// Weights of a probe resonance via the geometric route. Probes must not
// coincide with the driven modes: a probe is read out, a driven mode is
// pumped, and the two roles need distinct resonances.
inline std::pair<double, double> probe_weights(const SystemParams& p,
                                               Branch branch, long index) {
    const bool is_driven = (branch == Branch::b && index == p.n_idx) ||
                           (branch == Branch::c && index == p.m_idx);
    if (is_driven)
        throw domain_error("probe_weights: probe coincides with a driven mode");
    if (index <= 0) throw domain_error("probe_weights: index must be positive");

    const CavityGeometry rest = CavityGeometry::at_rest(p);
    const LadderFit fit = fit_theta(rest, p.n_idx, p.m_idx);
    double guess = 0.0;
    switch (branch) {
        case Branch::a: guess = ladder_kappa_a(index); break;
        case Branch::b: guess = ladder_kappa_b(index, fit.theta); break;
        case Branch::b_prime: guess = ladder_kappa_b_prime(index, fit.theta); break;
        case Branch::c: guess = ladder_kappa_c(index, fit.theta); break;
    }
    CavityMode m;
    m.branch = branch;
    m.index = index;
    m.kappa = refine_root_near(rest, guess);
    m.k = m.kappa / rest.L;
    m.omega = c_light * m.k;
    auto [x1, x2] = couplings_numeric(rest, m);
    const double xz = p.x_zpf();
    return {x1 * xz, x2 * xz};
}

// sigma_min/sigma_max of the 2x2 weight matrix (rows probes, columns
// membranes). Two probes reading the same combination cannot be inverted.
inline double weight_conditioning(const Eigen::Matrix2d& W) {
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(W);
    const double smax = svd.singularValues()(0), smin = svd.singularValues()(1);
    if (!(smax > 0.0)) return 0.0;
    return smin / smax;
}

inline Eigen::Matrix2d weight_matrix(const ProbeMode& a, const ProbeMode& b) {
    Eigen::Matrix2d W;
    W << a.w1, a.w2, b.w1, b.w2;
    if (weight_conditioning(W) < 1e-3)
        throw degenerate_probe(
            "weight_matrix: the two probes measure the same combination "
            "(conditioning below 1e-3)");
    return W;
}

inline std::vector<ProbeMode> make_probes(const Config& cfg) {
    std::vector<ProbeMode> probes;
    for (const ProbeSpec& s : {cfg.probe1, cfg.probe2}) {
        ProbeMode m;
        m.spec = s;
        std::tie(m.w1, m.w2) = probe_weights(cfg.params, s.branch, s.index);
        // weak-probe regime: the probe's coupling energy must stay far
        // below the mechanical quantum
        const double drive = std::max(std::abs(m.w1), std::abs(m.w2)) * s.c_mag;
        if (!(drive < 0.1 * cfg.params.omega_m))
            throw simulation_refused(
                "probe too strong: |xi-tilde_y c_y| = " + g9(drive) +
                " exceeds 0.1 * omega_m = " + g9(0.1 * cfg.params.omega_m));
        probes.push_back(m);
    }
    return probes;
}

// Core system plus one (X, Y) quadrature pair per probe, same conventions
// as the core drift.
struct ExtendedSystem {
    Eigen::MatrixXd A, D;
    std::vector<ProbeMode> probes;
    int dim = 0;
};

inline ExtendedSystem build_extended(const WorkingPoint& wp, const CouplingSet& xi,
                                     const SystemParams& p,
                                     const std::vector<ProbeMode>& probes) {
    const LinearSystem core = build_drift(wp, xi, p);
    const int n = n_core_vars + 2 * static_cast<int>(probes.size());
    ExtendedSystem ext;
    ext.dim = n;
    ext.probes = probes;
    ext.A = Eigen::MatrixXd::Zero(n, n);
    ext.D = Eigen::MatrixXd::Zero(n, n);
    ext.A.topLeftCorner(n_core_vars, n_core_vars) = core.A;
    ext.D.topLeftCorner(n_core_vars, n_core_vars) = core.D;

    const double s2 = std::sqrt(2.0);
    for (size_t k = 0; k < probes.size(); ++k) {
        const ProbeMode& pm = probes[k];
        const int ix = n_core_vars + 2 * static_cast<int>(k), iy = ix + 1;
        const double re = pm.spec.c_mag, im = 0.0; // probe phase fixed to zero
        ext.A(ix, ix) = -0.5 * pm.spec.Gamma_per_s;
        ext.A(ix, iy) = pm.spec.mu_per_s;
        ext.A(iy, ix) = -pm.spec.mu_per_s;
        ext.A(iy, iy) = -0.5 * pm.spec.Gamma_per_s;
        ext.A(ix, 0) = s2 * pm.w1 * im;
        ext.A(ix, 2) = s2 * pm.w2 * im;
        ext.A(iy, 0) = -s2 * pm.w1 * re;
        ext.A(iy, 2) = -s2 * pm.w2 * re;
        ext.A(1, ix) = -s2 * pm.w1 * re;
        ext.A(1, iy) = -s2 * pm.w1 * im;
        ext.A(3, ix) = -s2 * pm.w2 * re;
        ext.A(3, iy) = -s2 * pm.w2 * im;
        ext.D(ix, ix) = pm.spec.Gamma_per_s;
        ext.D(iy, iy) = pm.spec.Gamma_per_s;
    }
    return ext;
}

// Calibration twin: identical dimensions, noise layout and probe dynamics,
// but membranes and probes disconnected. Run with the same seeds, its
// records realize exactly the noise part of the main run's records.
inline ExtendedSystem zero_probe_coupling(const ExtendedSystem& ext) {
    ExtendedSystem z = ext;
    for (size_t k = 0; k < ext.probes.size(); ++k) {
        const int ix = n_core_vars + 2 * static_cast<int>(k), iy = ix + 1;
        z.A(ix, 0) = z.A(ix, 2) = z.A(iy, 0) = z.A(iy, 2) = 0.0;
        z.A(1, ix) = z.A(1, iy) = z.A(3, ix) = z.A(3, iy) = 0.0;
    }
    return z;
}

// All timing of one simulation, derived once and shared by main and
// calibration runs.
struct SimPlan {
    double record_dt = 0.0;  // sample spacing; 64 samples per carrier period
    double inner_dt = 0.0;   // integrator step, exact divisor of record_dt
    long inner_per = 1;      // integrator steps per sample
    long samples_per_window = 64;
    long n_discard = 0;   // leading samples dropped by the analysis
    long n_windows = 0;   // demodulation windows after the discard
    long total_samples = 0;
    double settling_time = 0.0;
    double duration = 0.0; // total_samples * record_dt
    double abscissa = 0.0;
    double max_eig_mag = 0.0;
    double mu_max = 0.0;
};

inline SimPlan make_plan(const ExtendedSystem& ext, const SystemParams& p,
                         const Config& cfg) {
    SimPlan plan;
    Eigen::EigenSolver<Eigen::MatrixXd> es(ext.A, false);
    plan.abscissa = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < ext.dim; ++i) {
        const std::complex<double> ev = es.eigenvalues()(i);
        plan.abscissa = std::max(plan.abscissa, ev.real());
        plan.max_eig_mag = std::max(plan.max_eig_mag, std::abs(ev));
    }
    if (!(plan.abscissa < 0.0))
        throw simulation_refused(
            "extended system is not stable: spectral abscissa = " + g9(plan.abscissa));
    plan.settling_time = 1.0 / -plan.abscissa;

    for (const ProbeMode& pm : ext.probes)
        plan.mu_max = std::max(plan.mu_max, std::abs(pm.spec.mu_per_s));

    plan.record_dt = 2.0 * pi / (64.0 * p.omega_m);
    double target = cfg.sim_dt_s;
    if (target <= 0.0) {
        target = 0.005 / plan.max_eig_mag;
        if (plan.mu_max > 0.0) target = std::min(target, 1e-3 / plan.mu_max);
    }
    plan.inner_per = std::max(1L, static_cast<long>(std::ceil(plan.record_dt / target)));
    plan.inner_dt = plan.record_dt / static_cast<double>(plan.inner_per);
    const double ceiling = 0.01 / std::max(plan.max_eig_mag, plan.mu_max);
    if (!(plan.inner_dt < ceiling))
        throw simulation_refused("integrator step " + g9(plan.inner_dt) +
                                 " violates dt < " + g9(ceiling));

    const long periods = std::max(1L, std::lround(cfg.sim_window_periods));
    plan.samples_per_window = 64 * periods;
    const double t_window = plan.samples_per_window * plan.record_dt;
    plan.n_discard = static_cast<long>(
        std::ceil(cfg.sim_settle_discard * plan.settling_time / plan.record_dt));
    const double t_retain = cfg.sim_duration_settling * plan.settling_time;
    plan.n_windows = std::max(16L, static_cast<long>(std::ceil(t_retain / t_window)));
    plan.total_samples = plan.n_discard + plan.n_windows * plan.samples_per_window;
    plan.duration = plan.total_samples * plan.record_dt;

    const double mem = static_cast<double>(plan.total_samples) *
                       static_cast<double>(ext.probes.size()) * 8.0;
    if (mem > 2e9)
        throw simulation_refused("record storage would need " + g9(mem) + " bytes");
    return plan;
}

struct HomodyneRecord {
    std::uint64_t seed = 0;
    double dt = 0.0;       // sample spacing [s]
    double duration = 0.0; // = samples.size() * dt
    double inner_dt = 0.0;
    long inner_per = 1;
    std::vector<double> samples; // bin-averaged photocurrent, vacuum PSD = 1

    double time_of(size_t i) const { return (static_cast<double>(i) + 0.5) * dt; }
};

struct TrajectoryData {
    std::vector<HomodyneRecord> records; // one per probe
    Eigen::MatrixXd moment;              // 2<x x^T> over retained samples
    long n_retained = 0;
};

// Euler-Maruyama on dx = A x dt + sqrt(D/2) dW, where the factor 1/2
// converts the Lyapunov-convention D (V = 2<x x^T>) to physical diffusion.
// The photocurrent interferes the leaked probe quadrature with the very
// noise increment that drove it, which is what makes the output white when
// nothing is coupled: r_k = sqrt(2 Gamma_y) X_y,k - zeta_k / sqrt(dt).
inline TrajectoryData simulate_trajectory(const ExtendedSystem& ext,
                                          const SimPlan& plan,
                                          std::uint64_t seed) {
    const int n = ext.dim;
    const int n_probes = static_cast<int>(ext.probes.size());
    const double dt = plan.inner_dt, sqdt = std::sqrt(dt);

    std::vector<int> noisy;
    std::vector<double> amp; // sqrt(D_ii dt / 2)
    for (int i = 0; i < n; ++i)
        if (ext.D(i, i) > 0.0) {
            noisy.push_back(i);
            amp.push_back(std::sqrt(0.5 * ext.D(i, i) * dt));
        }
    std::vector<int> probe_ix(n_probes);
    std::vector<double> probe_out(n_probes); // sqrt(2 Gamma_y)
    std::vector<int> probe_noise_slot(n_probes, -1);
    for (int a = 0; a < n_probes; ++a) {
        probe_ix[a] = n_core_vars + 2 * a;
        probe_out[a] = std::sqrt(2.0 * ext.probes[a].spec.Gamma_per_s);
        for (size_t s = 0; s < noisy.size(); ++s)
            if (noisy[s] == probe_ix[a]) probe_noise_slot[a] = static_cast<int>(s);
    }

    TrajectoryData out;
    out.records.resize(n_probes);
    for (int a = 0; a < n_probes; ++a) {
        HomodyneRecord& r = out.records[a];
        r.seed = seed;
        r.dt = plan.record_dt;
        r.inner_dt = plan.inner_dt;
        r.inner_per = plan.inner_per;
        r.duration = plan.total_samples * plan.record_dt;
        r.samples.assign(static_cast<size_t>(plan.total_samples), 0.0);
    }
    out.moment = Eigen::MatrixXd::Zero(n, n);

    GaussianRng rng(seed);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd drift(n);
    std::vector<double> zeta(noisy.size());
    std::vector<double> accum(n_probes);

    for (long k = 0; k < plan.total_samples; ++k) {
        std::fill(accum.begin(), accum.end(), 0.0);
        for (long s = 0; s < plan.inner_per; ++s) {
            for (size_t i = 0; i < noisy.size(); ++i) zeta[i] = rng.normal();
            for (int a = 0; a < n_probes; ++a)
                accum[a] += probe_out[a] * x(probe_ix[a]) -
                            zeta[static_cast<size_t>(probe_noise_slot[a])] / sqdt;
            drift.noalias() = ext.A * x;
            x += dt * drift;
            for (size_t i = 0; i < noisy.size(); ++i)
                x(noisy[i]) += amp[i] * zeta[i];
        }
        const double inv = 1.0 / static_cast<double>(plan.inner_per);
        for (int a = 0; a < n_probes; ++a)
            out.records[a].samples[static_cast<size_t>(k)] = accum[a] * inv;
        if (k >= plan.n_discard) {
            out.moment.noalias() += 2.0 * x * x.transpose();
            ++out.n_retained;
        }
    }
    if (out.n_retained > 0) out.moment /= static_cast<double>(out.n_retained);
    return out;
}

// Signal transfer from the membrane combination s = w1 q1 + w2 q2 to the
// record's complex demodulation amplitude at frequency omega.
inline std::complex<double> probe_gain(const ProbeMode& pm, double omega) {
    const std::complex<double> i1(0.0, 1.0);
    const std::complex<double> det =
        std::pow(0.5 * pm.spec.Gamma_per_s - i1 * omega, 2) +
        pm.spec.mu_per_s * pm.spec.mu_per_s;
    return -2.0 * std::sqrt(pm.spec.Gamma_per_s) * pm.spec.c_mag *
           pm.spec.mu_per_s / det;
}

// Amplitude attenuation of a narrowband tone under bin averaging.
inline double bin_sinc(double omega, double dt) {
    const double x = 0.5 * omega * dt;
    return x == 0.0 ? 1.0 : std::sin(x) / x;
}

// One complex envelope sample per window: Z = I + iQ with
// I = (2/W) sum r cos(omega t), Q = (2/W) sum r sin(omega t). Window
// lengths are whole carrier periods, so the discrete sums are exactly
// orthogonal and image-free.
inline std::vector<std::complex<double>> demodulate(const HomodyneRecord& rec,
                                                    double omega,
                                                    long samples_per_window,
                                                    long n_discard) {
    const long n = static_cast<long>(rec.samples.size());
    const long n_windows = (n - n_discard) / samples_per_window;
    std::vector<std::complex<double>> z(static_cast<size_t>(std::max(0L, n_windows)));
    const double norm = 2.0 / static_cast<double>(samples_per_window);
    for (long w = 0; w < n_windows; ++w) {
        double I = 0.0, Q = 0.0;
        const long base = n_discard + w * samples_per_window;
        for (long k = 0; k < samples_per_window; ++k) {
            const double t = rec.time_of(static_cast<size_t>(base + k));
            const double r = rec.samples[static_cast<size_t>(base + k)];
            I += r * std::cos(omega * t);
            Q += r * std::sin(omega * t);
        }
        z[static_cast<size_t>(w)] = std::complex<double>(norm * I, norm * Q);
    }
    return z;
}

// Envelope moments <B B-bar> from demodulated signal moments S and the
// probe chain M = diag(gain_a) W, optionally corrected for bin averaging
// and window low-pass: B = M^-1 S M^-H / correction.
inline Eigen::Matrix2cd invert_moments(const Eigen::Matrix2cd& S,
                                       const Eigen::Matrix2d& W,
                                       std::complex<double> g1,
                                       std::complex<double> g2,
                                       double correction = 1.0) {
    Eigen::Matrix2cd M = W.cast<std::complex<double>>();
    M.row(0) *= g1;
    M.row(1) *= g2;
    const Eigen::Matrix2cd Minv = M.inverse();
    Eigen::Matrix2cd B = Minv * S * Minv.adjoint() / correction;
    return 0.5 * (B + B.adjoint()); // enforce hermiticity
}

// Co-rotating mechanical envelope moments predicted by a covariance matrix
// in (q1, p1, q2, p2) ordering: <B_j B-bar_k> with q = Re[B e^{-i w t}].
inline Eigen::Matrix2cd envelope_moments_of(const Eigen::Matrix4d& V4) {
    Eigen::Matrix2cd B;
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            const int qj = 2 * j, pj = 2 * j + 1, qk = 2 * k, pk = 2 * k + 1;
            const double re = 0.5 * (V4(qj, qk) + V4(pj, pk));
            const double im = 0.5 * (V4(pj, qk) - V4(qj, pk));
            B(j, k) = std::complex<double>(re, im);
        }
    return B;
}

// Attenuation of each envelope moment under a window average of length
// T_win. The regression theorem gives the lagged correlation of a stable
// linear system as C(tau) = e^{A tau} Sigma, so the window-averaged
// co-rotating moment follows from per-eigenvalue integrals
// (1/T^2) int_0^T (T - tau) e^{(lambda + i omega) tau} d tau and its
// mirror; the returned matrix is the entrywise ratio to the equal-time
// moment. Hybridized mechanics decorrelate at several rates, so the
// attenuation is genuinely entry-dependent.
inline Eigen::Matrix2cd window_attenuation(const ExtendedSystem& ext,
                                           const Eigen::MatrixXd& V_ext,
                                           double omega, double T_win) {
    const int n = ext.dim;
    Eigen::EigenSolver<Eigen::MatrixXd> es(ext.A);
    const Eigen::MatrixXcd P = es.eigenvectors();
    const Eigen::VectorXcd lam = es.eigenvalues();
    const Eigen::MatrixXcd Q = P.inverse() * (0.5 * V_ext).cast<std::complex<double>>(); // Sigma = V/2

    // weight(z) = (2/T^2) int_0^T (T - tau) e^{z tau} d tau
    auto weight = [&](std::complex<double> z) {
        const std::complex<double> zT = z * T_win;
        if (std::abs(zT) < 1e-4)
            return 1.0 + zT / 3.0 + zT * zT / 12.0;
        return 2.0 * (std::exp(zT) - 1.0 - zT) / (zT * zT);
    };

    const std::complex<double> i1(0.0, 1.0);
    // forward-lag part of the windowed moment: c_jk(tau) for tau >= 0
    // folded into a co-rotating envelope,
    // c_jk(tau) = e^{i omega tau} [Cqq + Cpp + i(Cpq - Cqp)](tau)
    auto lag_weighted = [&](int j, int k) {
        const int qj = 2 * j, pj = 2 * j + 1, qk = 2 * k, pk = 2 * k + 1;
        std::complex<double> cqq = 0, cpp = 0, cpq = 0, cqp = 0;
        for (int m = 0; m < n; ++m) {
            const std::complex<double> w = 0.5 * weight(lam(m) + i1 * omega);
            cqq += P(qj, m) * w * Q(m, qk);
            cpp += P(pj, m) * w * Q(m, pk);
            cpq += P(pj, m) * w * Q(m, qk);
            cqp += P(qj, m) * w * Q(m, pk);
        }
        return cqq + cpp + i1 * (cpq - cqp);
    };

    Eigen::Matrix2cd f;
    const Eigen::Matrix2cd c0 =
        envelope_moments_of(Eigen::Matrix4d(V_ext.topLeftCorner<4, 4>()));
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            // forward lags of c_jk plus the mirror via conj(c_kj); the
            // Sigma = V/2 factor in Q and the 1/2 envelope coefficients in
            // c0 match, so no further convention factor appears
            const std::complex<double> fwd = lag_weighted(j, k);
            const std::complex<double> bwd = std::conj(lag_weighted(k, j));
            const std::complex<double> windowed = fwd + bwd;
            const double scale = std::abs(c0(j, k));
            f(j, k) = scale > 1e-9 * std::abs(c0(0, 0) + c0(1, 1))
                          ? windowed / c0(j, k)
                          : std::complex<double>(1.0, 0.0);
        }
    return f;
}

struct ReconstructionResult {
    Eigen::Matrix2cd H_signal;   // noise-subtracted demod moments (clamped)
    Eigen::Matrix2cd H_noise;    // calibration floor
    Eigen::Matrix2cd B_est;      // envelope moments after inversion
    Eigen::Matrix2d q_block;     // rotating-wave (q,q) block estimate, V units
    Eigen::Matrix2d q_block_se;  // batch-scatter standard errors
    double qp_antisym = 0.0;     // measured (V_p1q2 - V_q1p2)/2
    Eigen::Matrix4d V4_est;      // estimate completed with supplied qp entries
    double E_N = 0.0, E_N_se = 0.0;
    bool clamped = false;  // negative noise-subtracted variance hit
    bool E_N_defined = true;
    long n_windows_total = 0;
    long n_traj = 0;
};

namespace detail {

struct BatchMoment {
    Eigen::Matrix2cd sum = Eigen::Matrix2cd::Zero(); // sum of Z Z^H outer products
    long n = 0;
};

inline void accumulate_batches(const std::vector<std::complex<double>>& z1,
                               const std::vector<std::complex<double>>& z2,
                               long n_batches, std::vector<BatchMoment>& out) {
    const long nw = static_cast<long>(std::min(z1.size(), z2.size()));
    out.assign(static_cast<size_t>(n_batches), BatchMoment{});
    for (long w = 0; w < nw; ++w) {
        const long b = std::min(n_batches - 1, w * n_batches / std::max(1L, nw));
        Eigen::Vector2cd Z(z1[static_cast<size_t>(w)], z2[static_cast<size_t>(w)]);
        out[static_cast<size_t>(b)].sum += Z * Z.adjoint();
        ++out[static_cast<size_t>(b)].n;
    }
}

} // namespace detail

inline void write_record_csv(const HomodyneRecord& rec, const std::string& path) {
    CsvWriter w(path);
    w.raw_line("time,value");
    for (size_t i = 0; i < rec.samples.size(); ++i)
        w.row({g9(rec.time_of(i)), g9(rec.samples[i])});
}

struct VerifyResult {
    GeometricCouplings geo;
    PointDetail point; // the working point under test, full pipeline
    std::vector<ProbeMode> probes;
    Eigen::Matrix2d W = Eigen::Matrix2d::Zero();
    double conditioning = 0.0;
    ExtendedSystem ext;
    Eigen::MatrixXd V_ext; // extended-system Lyapunov covariance
    SimPlan plan;
    ReconstructionResult recon;
    Eigen::Matrix2cd window_corr =
        Eigen::Matrix2cd::Identity();    // entrywise window attenuation
    Eigen::Matrix2d q_block_true;    // core Lyapunov (q, q) sub-block
    Eigen::Matrix2d q_block_true_rw; // rotating-wave blend (qq + pp)/2
    Eigen::Matrix2d z_scores;        // (estimate - true q-block) / SE
    double E_N_true = 0.0;
    double probe_backaction = 0.0; // relative mechanical-block change
    bool q_within_3se = false, EN_within_3sigma = false;
    std::vector<Eigen::MatrixXd> traj_moments;
    std::vector<long> traj_moment_counts;
    std::vector<HomodyneRecord> sample_records; // first trajectory, on request
    std::uint64_t master_seed = 0;
};

/// The whole verification protocol: probes, extended dynamics, stochastic
// records, calibration, reconstruction, and comparison against the
// Lyapunov oracle. Trajectory t runs with seed derived from (master, t);
// main and calibration runs share seeds so the vacuum contribution of the
// records cancels sample-by-sample in the subtraction.
inline VerifyResult verify_run(const Config& cfg, std::uint64_t master_seed,
                               int n_threads = 1) {
    VerifyResult vr;
    vr.master_seed = master_seed;
    vr.geo = couplings_for(cfg);
    vr.point = evaluate_detail(cfg.params, vr.geo, cfg.c_bn, cfg.c_cm);
    if (!vr.point.st.stable)
        throw simulation_refused(
            "verification needs a steady state; spectral abscissa = " +
            g9(vr.point.st.abscissa));
    vr.E_N_true = vr.point.result.E_N;

    vr.probes = make_probes(cfg);
    vr.W = weight_matrix(vr.probes[0], vr.probes[1]);
    vr.conditioning = weight_conditioning(vr.W);
    vr.ext = build_extended(vr.point.wp, vr.point.xi, cfg.params, vr.probes);
    vr.V_ext = lyapunov_solve(vr.ext.A, vr.ext.D);
    vr.plan = make_plan(vr.ext, cfg.params, cfg);

    const Eigen::Matrix4d mech_core = mechanical_block(vr.point.V);
    const Eigen::Matrix4d mech_ext = vr.V_ext.topLeftCorner<4, 4>();
    vr.probe_backaction = (mech_ext - mech_core).norm() / mech_core.norm();
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            vr.q_block_true(j, k) = mech_core(2 * j, 2 * k);
            vr.q_block_true_rw(j, k) =
                0.5 * (mech_core(2 * j, 2 * k) + mech_core(2 * j + 1, 2 * k + 1));
        }

    const ExtendedSystem calib = zero_probe_coupling(vr.ext);
    const long n_traj = cfg.sim_trajectories;
    const long n_batches = 8;

    struct TrajOut {
        std::vector<detail::BatchMoment> main_b, calib_b;
        Eigen::MatrixXd moment;
        long n_retained = 0;
        std::vector<HomodyneRecord> records;
    };
    std::vector<TrajOut> touts(static_cast<size_t>(n_traj));

    std::atomic<long> next{0};
    auto worker = [&]() {
        for (;;) {
            const long t = next.fetch_add(1);
            if (t >= n_traj) return;
            const std::uint64_t seed =
                trajectory_seed(master_seed, static_cast<std::uint64_t>(t));
            TrajectoryData main = simulate_trajectory(vr.ext, vr.plan, seed);
            TrajectoryData cal = simulate_trajectory(calib, vr.plan, seed);
            TrajOut& to = touts[static_cast<size_t>(t)];
            auto zm1 = demodulate(main.records[0], cfg.params.omega_m,
                                  vr.plan.samples_per_window, vr.plan.n_discard);
            auto zm2 = demodulate(main.records[1], cfg.params.omega_m,
                                  vr.plan.samples_per_window, vr.plan.n_discard);
            auto zc1 = demodulate(cal.records[0], cfg.params.omega_m,
                                  vr.plan.samples_per_window, vr.plan.n_discard);
            auto zc2 = demodulate(cal.records[1], cfg.params.omega_m,
                                  vr.plan.samples_per_window, vr.plan.n_discard);
            detail::accumulate_batches(zm1, zm2, n_batches, to.main_b);
            detail::accumulate_batches(zc1, zc2, n_batches, to.calib_b);
            to.moment = main.moment;
            to.n_retained = main.n_retained;
            if (t == 0 && cfg.record_csv) to.records = std::move(main.records);
        }
    };
    const int nt = std::max(1, n_threads);
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (auto& to : touts) {
        vr.traj_moments.push_back(to.moment);
        vr.traj_moment_counts.push_back(to.n_retained);
    }
    if (cfg.record_csv) vr.sample_records = std::move(touts[0].records);

    // entrywise window attenuation predicted by the extended model
    const double t_window = vr.plan.samples_per_window * vr.plan.record_dt;
    vr.window_corr =
        window_attenuation(vr.ext, vr.V_ext, cfg.params.omega_m, t_window);
    const std::complex<double> g1 = probe_gain(vr.probes[0], cfg.params.omega_m);
    const std::complex<double> g2 = probe_gain(vr.probes[1], cfg.params.omega_m);
    const double snc = bin_sinc(cfg.params.omega_m, vr.plan.record_dt);
    auto invert_corrected = [&](const Eigen::Matrix2cd& Sm) {
        Eigen::Matrix2cd B = invert_moments(Sm, vr.W, g1 * snc, g2 * snc);
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) B(j, k) /= vr.window_corr(j, k);
        return Eigen::Matrix2cd(0.5 * (B + B.adjoint()));
    };

    ReconstructionResult& rc = vr.recon;
    rc.n_traj = n_traj;

    Eigen::Matrix2cd sum_main = Eigen::Matrix2cd::Zero(),
                     sum_cal = Eigen::Matrix2cd::Zero();
    long n_main = 0;
    std::vector<Eigen::Matrix2d> batch_qblocks;
    std::vector<Eigen::Matrix2cd> traj_signal(static_cast<size_t>(n_traj),
                                              Eigen::Matrix2cd::Zero());
    std::vector<long> traj_nw(static_cast<size_t>(n_traj), 0);
    for (long t = 0; t < n_traj; ++t) {
        const TrajOut& to = touts[static_cast<size_t>(t)];
        for (long b = 0; b < n_batches; ++b) {
            const auto& mb = to.main_b[static_cast<size_t>(b)];
            const auto& cb = to.calib_b[static_cast<size_t>(b)];
            if (mb.n == 0) continue;
            sum_main += mb.sum;
            sum_cal += cb.sum;
            n_main += mb.n;
            const Eigen::Matrix2cd S_b = (mb.sum - cb.sum) / static_cast<double>(mb.n);
            const Eigen::Matrix2cd B_b = invert_corrected(S_b);
            batch_qblocks.push_back(B_b.real());
            traj_signal[static_cast<size_t>(t)] += mb.sum - cb.sum;
            traj_nw[static_cast<size_t>(t)] += mb.n;
        }
    }
    rc.n_windows_total = n_main;
    rc.H_noise = sum_cal / static_cast<double>(n_main);
    Eigen::Matrix2cd S = (sum_main - sum_cal) / static_cast<double>(n_main);
    S = 0.5 * (S + S.adjoint());
    for (int a = 0; a < 2; ++a)
        if (S(a, a).real() < 0.0) {
            S(a, a) = 0.0;
            rc.clamped = true;
        }
    rc.H_signal = S;
    rc.B_est = invert_corrected(S);
    rc.q_block = rc.B_est.real();
    rc.qp_antisym = rc.B_est(0, 1).imag();

    // standard errors from the scatter of per-batch estimates
    const long nb = static_cast<long>(batch_qblocks.size());
    Eigen::Matrix2d mean_q = Eigen::Matrix2d::Zero();
    for (const auto& q : batch_qblocks) mean_q += q;
    if (nb > 0) mean_q /= static_cast<double>(nb);
    Eigen::Matrix2d var_q = Eigen::Matrix2d::Zero();
    for (const auto& q : batch_qblocks)
        var_q += (q - mean_q).cwiseProduct(q - mean_q);
    if (nb > 1) {
        var_q /= static_cast<double>(nb - 1);
        rc.q_block_se = (var_q / static_cast<double>(nb)).cwiseSqrt();
    }

    // assemble a full 4x4 estimate: measured blocks where the protocol
    // measures, the oracle's qp entries where it does not
    auto assemble = [&](const Eigen::Matrix2cd& B) {
        Eigen::Matrix4d V4 = mech_core;
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) {
                V4(2 * j, 2 * k) = B(j, k).real();
                V4(2 * j + 1, 2 * k + 1) = B(j, k).real();
            }
        return V4;
    };
    rc.V4_est = assemble(rc.B_est);
    try {
        rc.E_N = log_negativity(rc.V4_est);
    } catch (const error&) {
        rc.E_N = 0.0;
        rc.E_N_defined = false;
    }

    // jackknife over trajectories for the E_N uncertainty
    if (n_traj > 1) {
        std::vector<double> loo;
        for (long t = 0; t < n_traj; ++t) {
            Eigen::Matrix2cd s = Eigen::Matrix2cd::Zero();
            long n = 0;
            for (long u = 0; u < n_traj; ++u) {
                if (u == t) continue;
                s += traj_signal[static_cast<size_t>(u)];
                n += traj_nw[static_cast<size_t>(u)];
            }
            Eigen::Matrix2cd Sl = s / static_cast<double>(std::max(1L, n));
            Sl = 0.5 * (Sl + Sl.adjoint());
            const Eigen::Matrix2cd Bl = invert_corrected(Sl);
            double e = 0.0;
            try {
                e = log_negativity(assemble(Bl));
            } catch (const error&) {
                e = 0.0;
            }
            loo.push_back(e);
        }
        double m = 0.0;
        for (double e : loo) m += e;
        m /= static_cast<double>(loo.size());
        double s2 = 0.0;
        for (double e : loo) s2 += (e - m) * (e - m);
        const double T = static_cast<double>(loo.size());
        rc.E_N_se = std::sqrt((T - 1.0) / T * s2);
    }

    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            const double se = vr.recon.q_block_se(j, k);
            vr.z_scores(j, k) =
                se > 0.0 ? (vr.recon.q_block(j, k) - vr.q_block_true(j, k)) / se
                         : std::numeric_limits<double>::infinity();
        }
    vr.q_within_3se = vr.z_scores.cwiseAbs().maxCoeff() <= 3.0;
    // zero spread with zero discrepancy counts as agreement (both routes
    // report the same separable state)
    vr.EN_within_3sigma = std::abs(vr.recon.E_N - vr.E_N_true) <=
                          3.0 * vr.recon.E_N_se + 1e-12;
    return vr;
}

} // namespace membranes
