#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "membranes/readout.hpp"
#include "test_support.hpp"

using namespace membranes;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

using cd = std::complex<double>;

// Extended system at the configured working point, same chain verify_run
// uses internally.
ExtendedSystem extended_of(const Config& cfg) {
    const GeometricCouplings geo = couplings_for(cfg);
    const PointDetail pd = evaluate_detail(cfg.params, geo, cfg.c_bn, cfg.c_cm);
    return build_extended(pd.wp, pd.xi, cfg.params, make_probes(cfg));
}

} // namespace

TEST_CASE("probe weights come from the resonance ladder") {
    const Config cfg = testsup::mild_config();
    const SystemParams& p = cfg.params;

    // the b rung above the driven one repeats the driven rung's overlap
    // pattern one half-turn up, so each weight scales by the frequency
    // ratio of the two rungs and the rows stay exactly parallel
    const auto [b1, b2] = probe_weights(p, Branch::b, 2001);
    const CouplingSet xi0 = scaled_couplings(couplings_from_geometry(p), p);
    const LadderFit fit =
        fit_theta(CavityGeometry::at_rest(p), p.n_idx, p.m_idx);
    const double kratio =
        ladder_kappa_b(2001, fit.theta) / ladder_kappa_b(2000, fit.theta);
    CHECK_THAT(b1 / xi0.b1, WithinRel(kratio, 1e-6));
    CHECK_THAT(b2 / xi0.b2, WithinRel(kratio, 1e-6));
    CHECK_THAT(b1 / xi0.b1, WithinRel(b2 / xi0.b2, 1e-9));
    CHECK_THAT(b1, WithinRel(1954.50378, 1e-5));
    CHECK_THAT(b2, WithinRel(6925.90058, 1e-5));
    CHECK(b1 * b2 > 0.0);

    // a c rung sits pi/3 up in kappa, a non-integer phase shift at the
    // membranes: different overlap magnitude, but still exactly odd
    const auto [c1, c2] = probe_weights(p, Branch::c, 6001);
    CHECK(c1 != 0.0);
    CHECK(std::abs(c1 + c2) <= 1e-6 * std::abs(c1));

    // a probe may not coincide with a driven mode, and indices are positive
    CHECK_THROWS_AS(probe_weights(cfg.params, Branch::b, cfg.params.n_idx),
                    domain_error);
    CHECK_THROWS_AS(probe_weights(cfg.params, Branch::c, cfg.params.m_idx),
                    domain_error);
    CHECK_THROWS_AS(probe_weights(cfg.params, Branch::a, 0), domain_error);
}

TEST_CASE("two probes of the same branch make a singular weight matrix") {
    const Config cfg = testsup::mild_config();
    // adjacent b rungs differ only by a common frequency factor, so the
    // two weight rows are parallel and the matrix has no usable inverse
    ProbeMode a, b;
    a.spec = {Branch::b, 2001, 5.0, 5e5, 1e5};
    std::tie(a.w1, a.w2) = probe_weights(cfg.params, Branch::b, 2001);
    b.spec = {Branch::b, 2002, 5.0, 5e5, 1e5};
    std::tie(b.w1, b.w2) = probe_weights(cfg.params, Branch::b, 2002);
    CHECK_THROWS_AS(weight_matrix(a, b), degenerate_probe);
}

TEST_CASE("a probe strong enough to shake the membranes is refused") {
    Config cfg = testsup::mild_config();
    cfg.probe1.c_mag = 2e4;
    CHECK_THROWS_AS(make_probes(cfg), simulation_refused);
}

TEST_CASE("an integration step too coarse for the dynamics is refused") {
    Config cfg = testsup::mild_config();
    cfg.sim_dt_s = 1e-6;
    const ExtendedSystem ext = extended_of(cfg);
    CHECK_THROWS_AS(make_plan(ext, cfg.params, cfg), simulation_refused);
}

TEST_CASE("probe gain and bin averaging algebra") {
    ProbeMode pm;
    pm.spec = {Branch::b, 2001, 5.0, 5e5, 1e5};
    pm.w1 = 1.0;
    pm.w2 = 0.5;
    const double w = 1e6;
    const cd G = probe_gain(pm, w);
    const cd detM = std::pow(cd(0.5 * pm.spec.Gamma_per_s, -w), 2.0) +
                    cd(pm.spec.mu_per_s * pm.spec.mu_per_s, 0.0);
    const double expect = 2.0 * std::sqrt(pm.spec.Gamma_per_s) *
                          pm.spec.c_mag * pm.spec.mu_per_s / std::abs(detM);
    CHECK_THAT(std::abs(G), WithinRel(expect, 1e-12));

    // bin averaging attenuates a tone like sinc(w dt / 2)
    const double dt = 2.0 * pi / (64.0 * w);
    const double x = 0.5 * w * dt;
    CHECK_THAT(bin_sinc(w, dt), WithinRel(std::sin(x) / x, 1e-12));
    CHECK_THAT(bin_sinc(w, 1e-12), WithinAbs(1.0, 1e-9));
}

TEST_CASE("demodulation recovers a pure tone exactly") {
    const double w = 1e6;
    const long spw = 64, n_windows = 7;
    HomodyneRecord rec;
    rec.dt = 2.0 * pi / (static_cast<double>(spw) * w);
    const long total = spw * (n_windows + 1);
    const cd amp(0.83, -0.41);
    for (long k = 0; k < total; ++k) {
        const double t = rec.time_of(static_cast<size_t>(k));
        rec.samples.push_back((amp * std::exp(cd(0.0, -w * t))).real());
    }
    const auto z = demodulate(rec, w, spw, spw); // discard one window
    REQUIRE(z.size() == static_cast<size_t>(n_windows));
    for (const cd& zi : z) CHECK_THAT(std::abs(zi - amp), WithinAbs(0.0, 1e-12));

    // a tone at twice the frequency integrates away over whole windows
    HomodyneRecord rec2;
    rec2.dt = rec.dt;
    for (long k = 0; k < total; ++k) {
        const double t = rec2.time_of(static_cast<size_t>(k));
        rec2.samples.push_back(std::cos(2.0 * w * t + 0.3));
    }
    for (const cd& zi : demodulate(rec2, w, spw, 0))
        CHECK_THAT(std::abs(zi), WithinAbs(0.0, 1e-12));
}

TEST_CASE("moment inversion undoes the synthetic probe chain exactly") {
    Eigen::Matrix2cd B;
    B << cd(15.4, 0.0), cd(1.55, 0.4), cd(1.55, -0.4), cd(6.9, 0.0);
    Eigen::Matrix2d W;
    W << 1900.0, 6750.0, -4530.0, 4530.0;
    const cd g1(2.3, -1.1), g2(0.7, 1.9);
    Eigen::Matrix2cd M = W.cast<cd>();
    M.row(0) *= g1;
    M.row(1) *= g2;
    const Eigen::Matrix2cd S = M * B * M.adjoint();
    const Eigen::Matrix2cd back = invert_moments(S, W, g1, g2);
    CHECK((back - B).norm() < 1e-10 * B.norm());
}

TEST_CASE("window attenuation approaches one for short windows") {
    const Config cfg = testsup::mild_config();
    const ExtendedSystem ext = extended_of(cfg);
    const Eigen::MatrixXd V_ext = lyapunov_solve(ext.A, ext.D);

    const Eigen::Matrix2cd f_short =
        window_attenuation(ext, V_ext, cfg.params.omega_m, 1e-9);
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
            CHECK_THAT(std::abs(f_short(j, k)), WithinAbs(1.0, 2e-3));

    // at the production window length the attenuation is a few percent,
    // entry dependent, and hermitian in pattern
    const double t_win = 2.0 * 2.0 * pi / cfg.params.omega_m;
    const Eigen::Matrix2cd f =
        window_attenuation(ext, V_ext, cfg.params.omega_m, t_win);
    for (int j = 0; j < 2; ++j) {
        CHECK(f(j, j).real() > 0.9);
        CHECK(f(j, j).real() < 1.0);
    }
    CHECK_THAT(std::abs(f(0, 1) - std::conj(f(1, 0))), WithinAbs(0.0, 1e-12));
}

TEST_CASE("full readout verification at the mild point") {
    const Config cfg = testsup::mild_config();
    const VerifyResult vr = verify_run(cfg, 7);

    // the probes see the membranes through a well-conditioned matrix and
    // track the fast dynamics with a comfortably fine step
    CHECK(vr.conditioning > 0.3);
    CHECK(vr.plan.n_windows >= 16);
    CHECK(vr.plan.inner_per >= 40);
    CHECK(vr.plan.inner_per <= 60);

    // Lyapunov truth at this point: separable, q variances of order ten
    CHECK(vr.E_N_true == 0.0);
    CHECK_THAT(vr.q_block_true(0, 0), WithinRel(15.368465530921464, 1e-9));

    // weak probes: their back-action on the mechanical block is small and
    // deterministic (it comes from the extended Lyapunov solve, not noise)
    CHECK_THAT(vr.probe_backaction, WithinRel(0.0184561115900962, 1e-6));
    CHECK(vr.probe_backaction < 0.05);

    // the stochastic estimate agrees with the oracle within its errors
    CHECK(vr.q_within_3se);
    CHECK(vr.EN_within_3sigma);
    CHECK(vr.recon.E_N == 0.0);
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            CHECK(vr.recon.q_block_se(j, k) > 0.0);
            CHECK(std::abs(vr.z_scores(j, k)) <= 3.0);
        }

    // window attenuation applied during inversion sits just below one
    for (int j = 0; j < 2; ++j) {
        CHECK(vr.window_corr(j, j).real() > 0.9);
        CHECK(vr.window_corr(j, j).real() < 1.0);
    }

    // the calibration channel realizes white vacuum noise: demodulated
    // power 4 / T_window per window in these units
    const double t_win = vr.plan.samples_per_window * vr.plan.record_dt;
    const double floor = 4.0 / t_win;
    for (int a = 0; a < 2; ++a)
        CHECK_THAT(vr.recon.H_noise(a, a).real() / floor, WithinAbs(1.0, 0.08));

    // time-domain second moments of the trajectories track the extended
    // Lyapunov covariance on the position diagonal. Each trajectory spans
    // only a handful of mechanical correlation times, so the sample
    // variance scatters by O(1); the band guards units and ordering, the
    // calibrated statistics live in the demodulated q-block checks above.
    const Eigen::MatrixXd V_ext = lyapunov_solve(vr.ext.A, vr.ext.D);
    Eigen::MatrixXd mom = Eigen::MatrixXd::Zero(vr.ext.dim, vr.ext.dim);
    double wsum = 0.0;
    for (size_t t = 0; t < vr.traj_moments.size(); ++t) {
        mom += vr.traj_moments[t] * static_cast<double>(vr.traj_moment_counts[t]);
        wsum += static_cast<double>(vr.traj_moment_counts[t]);
    }
    mom /= wsum;
    for (int i : {0, 2}) {
        CHECK(mom(i, i) / V_ext(i, i) > 1.0 / 3.0);
        CHECK(mom(i, i) / V_ext(i, i) < 3.0);
    }

    // a rerun with the same master seed reproduces the estimate exactly
    const VerifyResult again = verify_run(cfg, 7);
    CHECK((again.recon.q_block - vr.recon.q_block).norm() == 0.0);
    CHECK(again.recon.E_N == vr.recon.E_N);

    // a different seed draws different noise and moves the estimate
    const VerifyResult other = verify_run(cfg, 42);
    CHECK((other.recon.q_block - vr.recon.q_block).norm() > 0.0);
}

TEST_CASE("readout refuses points without a steady state") {
    Config cfg = testsup::mild_config();
    cfg.params.Delta_bn = 4.2e6;
    cfg.params.Delta_cm = 2.09e7;
    cfg.c_bn = 60.0;
    cfg.c_cm = 386.4;
    CHECK_THROWS_AS(verify_run(cfg, 1), simulation_refused);
}
