#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "membranes/config.hpp"
#include "membranes/constants.hpp"
#include "membranes/csv.hpp"
#include "membranes/errors.hpp"
#include "membranes/params.hpp"
#include "membranes/rng.hpp"
#include "membranes/root_find.hpp"
#include "test_support.hpp"

using namespace membranes;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("physical constants") {
    CHECK(hbar == 1.054571817e-34);
    CHECK(k_B == 1.380649e-23);
    CHECK(c_light == 2.99792458e8);
    CHECK_THAT(pi, WithinRel(std::acos(-1.0), 1e-15));
}

TEST_CASE("parameter validation rejects unphysical values") {
    SystemParams p;
    CHECK_NOTHROW(p.check());

    auto bad = [](auto&& mutate) {
        SystemParams q;
        mutate(q);
        CHECK_THROWS_AS(q.check(), domain_error);
    };
    bad([](SystemParams& q) { q.L = 0.0; });
    bad([](SystemParams& q) { q.T_mem = 0.0; });
    bad([](SystemParams& q) { q.T_mem = 1.0; });
    bad([](SystemParams& q) { q.mass = -1e-12; });
    bad([](SystemParams& q) { q.omega_m = 0.0; });
    bad([](SystemParams& q) { q.Q_f = 0.0; });
    bad([](SystemParams& q) { q.Gamma_bn = 0.0; });
    bad([](SystemParams& q) { q.nbar = -1.0; });
    bad([](SystemParams& q) { q.q01 = q.q02 + 1e-4; }); // ordering violated
    bad([](SystemParams& q) { q.q02 = 4.0 * q.L; });    // outside the cavity
    bad([](SystemParams& q) { q.n_idx = 0; });
}

TEST_CASE("derived scales") {
    SystemParams p;
    CHECK_THAT(p.gamma(), WithinRel(0.1, 1e-12)); // 1e6 / 1e7
    CHECK_THAT(p.x_zpf(), WithinRel(1.0269234718322491e-14, 1e-12));
    const SystemParams q = SystemParams::with_L(2e-3);
    CHECK(q.q01 == -2e-3);
    CHECK(q.q02 == 4e-3);
}

TEST_CASE("thermal occupation") {
    CHECK_THAT(thermal_occupation(1e6, 0.1), WithinAbs(13091.5339, 1e-3));
    CHECK_THAT(thermal_occupation(1e6, 8e-3), WithinAbs(1046.8628, 1e-3));

    // monotone in temperature, vanishes at T -> 0
    CHECK(thermal_occupation(1e6, 0.2) > thermal_occupation(1e6, 0.1));
    CHECK(thermal_occupation(1e6, 1e-9) < 1e-30);

    // inverse round-trips
    CHECK_THAT(temperature_for_occupation(1e6, 1000.0),
               WithinRel(7.642051e-3, 1e-6));
    CHECK_THAT(temperature_for_occupation(1e6, 13085.0),
               WithinRel(0.0999501, 1e-5));
    const double T = temperature_for_occupation(3.7e6, 250.0);
    CHECK_THAT(thermal_occupation(3.7e6, T), WithinRel(250.0, 1e-10));
}

TEST_CASE("drive bookkeeping round-trips") {
    const double mu = 7.4e5, Gamma = 1e5;
    const std::complex<double> c{3.0, -1.5};
    const std::complex<double> Om = rabi_from_field(c, mu, Gamma);
    const std::complex<double> back = field_from_rabi(Om, mu, Gamma);
    CHECK_THAT(std::abs(back - c), WithinAbs(0.0, 1e-9 * std::abs(c)));

    CHECK_THAT(laser_power(1.1e6, 1.885e15, 1e5), WithinRel(6.01330032e-13, 1e-6));
    // quadratic in the drive amplitude
    const double p1 = laser_power(2.0e9, 1.885e15, 1e5);
    const double p4 = laser_power(4.0e9, 1.885e15, 1e5);
    CHECK_THAT(p4 / p1, WithinRel(4.0, 1e-12));
}

TEST_CASE("splitmix64 matches the reference sequence") {
    CHECK(splitmix64(0) == 16294208416658607535ull);
    CHECK(splitmix64(1) == 10451216379200822465ull);
    // trajectory seeds: distinct across indices and masters
    std::set<std::uint64_t> seen;
    for (std::uint64_t m : {0ull, 1ull, 42ull})
        for (std::uint64_t t = 0; t < 32; ++t)
            seen.insert(trajectory_seed(m, t));
    CHECK(seen.size() == 3 * 32);
}

TEST_CASE("gaussian rng is deterministic and well scaled") {
    GaussianRng a(1234), b(1234);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.normal() == b.normal());

    GaussianRng g(99);
    double sum = 0.0, sum2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = g.normal();
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n, var = sum2 / n - mean * mean;
    CHECK_THAT(mean, WithinAbs(0.0, 0.02));
    CHECK_THAT(var, WithinAbs(1.0, 0.02));

    GaussianRng u(7);
    for (int i = 0; i < 10000; ++i) {
        const double x = u.uniform();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
    }
}

TEST_CASE("brent finds simple roots to full precision") {
    const double r = brent([](double x) { return std::cos(x); }, 1.0, 2.0);
    CHECK_THAT(r, WithinRel(pi / 2.0, 1e-14));

    const double s = brent([](double x) { return x * x * x - 2.0; }, 0.0, 2.0);
    CHECK_THAT(s, WithinRel(std::cbrt(2.0), 1e-14));
}

TEST_CASE("sign-change scan brackets odd roots only") {
    const auto br = scan_sign_changes([](double x) { return std::sin(x); },
                                      0.1, 3.0 * pi + 0.1, 300);
    REQUIRE(br.size() == 3);
    for (size_t i = 0; i < br.size(); ++i) {
        const double root = brent([](double x) { return std::sin(x); },
                                  br[i].lo, br[i].hi);
        CHECK_THAT(root, WithinRel((i + 1) * pi, 1e-12));
    }
    // even root between scan nodes: no sign change, invisible by design
    const auto none = scan_sign_changes(
        [](double x) { return (x - 0.31) * (x - 0.31); }, -1.0, 1.0, 100);
    CHECK(none.empty());
    // but a node that lands exactly on a zero is caught by the f == 0 clause
    const auto hit = scan_sign_changes([](double x) { return x * x; },
                                       -1.0, 1.0, 100);
    REQUIRE(hit.size() == 1);
    CHECK(hit[0].lo == 0.0);
}

TEST_CASE("csv formatting is 9-significant-digit, LF only") {
    CHECK(g9(0.1) == "0.1");
    CHECK(g9(1.0 / 3.0) == "0.333333333");
    CHECK(g9(13091.5339) == "13091.5339");
    CHECK(g9(-4.53e3) == "-4530");
    CHECK(g9(6.4032e-5) == "6.4032e-05");

    const std::string path = "/tmp/membranes_test_csv_out.csv";
    {
        CsvWriter w(path);
        w.raw_line("a,b");
        w.row({g9(1.5), g9(2.5)});
    }
    const std::string bytes = testsup::slurp(path);
    CHECK(bytes == "a,b\n1.5,2.5\n");
    std::remove(path.c_str());
}

TEST_CASE("config parser round-trips and rejects bad input") {
    testsup::TempFile good(
        "# comment line\n"
        "coupling_source = quoted\n"
        "xi_b1_per_s = 1.90e3\n"
        "xi_b2_per_s = 6.75e3\n"
        "xi_c1_per_s = -4.53e3\n"
        "xi_c2_per_s = 4.53e3\n"
        "c_bn = 40\n"
        "c_cm = 400\n"
        "Delta_bn_per_s = 4.2e6\n"
        "Delta_cm_per_s = 2.09e7\n"
        "nbar = 1000\n"
        "Q_f = 1e7\n");
    const Config cfg = load_config(good.path());
    CHECK(cfg.coupling_source == CouplingSource::quoted);
    CHECK(cfg.c_bn == 40.0);
    CHECK(cfg.params.Delta_cm == 2.09e7);
    CHECK(cfg.params.nbar == 1000.0);

    testsup::TempFile unknown("frobnicate = 3\n");
    try {
        load_config(unknown.path());
        FAIL("unknown key accepted");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("frobnicate") != std::string::npos);
    }

    testsup::TempFile dup("c_bn = 40\nc_bn = 41\n");
    CHECK_THROWS_AS(load_config(dup.path()), config_error);

    // bath can be named either by occupation or by temperature, not both
    testsup::TempFile both("nbar = 1000\nbath_temperature_K = 0.1\n");
    CHECK_THROWS_AS(load_config(both.path()), config_error);

    testsup::TempFile byT("bath_temperature_K = 0.1\n");
    const Config ct = load_config(byT.path());
    CHECK_THAT(ct.params.nbar, WithinAbs(13091.5339, 1e-3));

    // quoted couplings cannot be swept through geometry they do not carry
    testsup::TempFile badsweep(
        "coupling_source = quoted\n"
        "sweep_p1 = T_mem\np1_min = 0.1\np1_max = 0.3\np1_points = 3\n"
        "sweep_p2 = Q_f\np2_min = 1e6\np2_max = 1e8\np2_points = 3\n"
        "p2_scale = log\n");
    CHECK_THROWS_AS(require_sweep(load_config(badsweep.path())), config_error);

    // sweeping an unknown axis name is caught before any work happens
    testsup::TempFile badaxis(
        "sweep_p1 = flux\np1_min = 1\np1_max = 2\np1_points = 3\n"
        "sweep_p2 = c_cm\np2_min = 300\np2_max = 500\np2_points = 3\n");
    CHECK_THROWS_AS(require_sweep(load_config(badaxis.path())), config_error);

    testsup::TempFile nonnum("c_bn = banana\n");
    CHECK_THROWS_AS(load_config(nonnum.path()), config_error);
}
