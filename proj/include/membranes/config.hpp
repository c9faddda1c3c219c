#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "membranes/errors.hpp"
#include "membranes/modes.hpp"
#include "membranes/params.hpp"
#include "membranes/pipeline.hpp"

namespace membranes {

// One weak probe mode for the verification run.
struct ProbeSpec {
    Branch branch = Branch::b;
    long index = 2001;
    double c_mag = 5.0;        // probe field magnitude, dimensionless
    double mu_per_s = 1e6;     // effective probe detuning [1/s]
    double Gamma_per_s = 1e5;  // probe decay [1/s]
};

// Names a run completely. Flat key = value text, '#' comments, every key
// carrying its unit; unknown or duplicate keys are rejected so a config
// cannot silently drift from the code.
struct Config {
    SystemParams params;

    double c_bn = 60.0;  // drive field magnitudes at the working point
    double c_cm = 386.4;

    CouplingSource coupling_source = CouplingSource::numeric;
    // used only when coupling_source = quoted; [1/s] at the config's
    // mass_kg and omega_m_per_s
    double xi_b1_per_s = 1.90e3;
    double xi_b2_per_s = 6.75e3;
    double xi_c1_per_s = -4.53e3;
    double xi_c2_per_s = 4.53e3;

    bool nbar_from_temperature = false; // nbar re-derived when omega_m moves
    double bath_temperature_K = 0.0;

    std::string sweep_p1, sweep_p2;
    double p1_min = 0.0, p1_max = 0.0, p2_min = 0.0, p2_max = 0.0;
    long p1_points = 0, p2_points = 0;
    bool p1_log = false, p2_log = false;

    long opt_starts = 8;
    long opt_max_iter = 400;

    ProbeSpec probe1{Branch::b, 2001, 5.0, 1e6, 1e5};
    ProbeSpec probe2{Branch::c, 6001, 5.0, 1e6, 1e5};
    double sim_duration_settling = 200.0; // run length in settling times
    double sim_settle_discard = 5.0;      // leading settling times dropped
    long sim_trajectories = 8;
    double sim_window_periods = 2.0; // demodulation window, carrier periods
    double sim_dt_s = 0.0;           // integrator step override; 0 = auto
    bool record_csv = false;         // export raw records alongside results
};

inline const std::vector<std::string>& sweepable_names() {
    static const std::vector<std::string> names = {
        "c_bn", "c_cm", "Delta_bn", "Delta_cm", "Gamma_bn", "Gamma_cm",
        "mass", "omega_m", "Q_f", "T_mem", "nbar"};
    return names;
}

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size())
            throw config_error("key '" + key + "': trailing characters in value '" + v + "'");
        return x;
    } catch (const config_error&) {
        throw;
    } catch (...) {
        throw config_error("key '" + key + "': cannot parse '" + v + "' as a number");
    }
}

inline long parse_long(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long x = std::stol(v, &pos);
        if (pos != v.size())
            throw config_error("key '" + key + "': trailing characters in value '" + v + "'");
        return x;
    } catch (const config_error&) {
        throw;
    } catch (...) {
        throw config_error("key '" + key + "': cannot parse '" + v + "' as an integer");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw config_error("key '" + key + "': expected a boolean, got '" + v + "'");
}

inline Branch parse_branch(const std::string& key, const std::string& v) {
    if (v == "a") return Branch::a;
    if (v == "b") return Branch::b;
    if (v == "b'" || v == "b_prime") return Branch::b_prime;
    if (v == "c") return Branch::c;
    throw config_error("key '" + key + "': unknown branch '" + v + "'");
}

inline bool parse_scale_is_log(const std::string& key, const std::string& v) {
    if (v == "linear") return false;
    if (v == "log") return true;
    throw config_error("key '" + key + "': expected 'linear' or 'log', got '" + v + "'");
}

} // namespace detail

inline Config parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(lineno) +
                               ": expected 'key = value', got '" + t + "'");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string val = detail::trim(t.substr(eq + 1));
        if (key.empty() || val.empty())
            throw config_error("line " + std::to_string(lineno) + ": empty key or value");
        if (!kv.emplace(key, val).second)
            throw config_error("duplicate config key '" + key + "'");
    }

    Config c;
    bool nbar_given = false, temp_given = false;
    bool q01_given = false, q02_given = false, L_given = false;

    using detail::parse_bool;
    using detail::parse_branch;
    using detail::parse_double;
    using detail::parse_long;

    for (const auto& [k, v] : kv) {
        if (k == "L_m") { c.params.L = parse_double(k, v); L_given = true; }
        else if (k == "T_mem") c.params.T_mem = parse_double(k, v);
        else if (k == "mass_kg") c.params.mass = parse_double(k, v);
        else if (k == "omega_m_per_s") c.params.omega_m = parse_double(k, v);
        else if (k == "Q_f") c.params.Q_f = parse_double(k, v);
        else if (k == "Gamma_bn_per_s") c.params.Gamma_bn = parse_double(k, v);
        else if (k == "Gamma_cm_per_s") c.params.Gamma_cm = parse_double(k, v);
        else if (k == "q01_m") { c.params.q01 = parse_double(k, v); q01_given = true; }
        else if (k == "q02_m") { c.params.q02 = parse_double(k, v); q02_given = true; }
        else if (k == "n_idx") c.params.n_idx = parse_long(k, v);
        else if (k == "m_idx") c.params.m_idx = parse_long(k, v);
        else if (k == "nbar") { c.params.nbar = parse_double(k, v); nbar_given = true; }
        else if (k == "bath_temperature_K") { c.bath_temperature_K = parse_double(k, v); temp_given = true; }
        else if (k == "Delta_bn_per_s") c.params.Delta_bn = parse_double(k, v);
        else if (k == "Delta_cm_per_s") c.params.Delta_cm = parse_double(k, v);
        else if (k == "much_less_ratio") c.params.much_less_ratio = parse_double(k, v);
        else if (k == "c_bn") c.c_bn = parse_double(k, v);
        else if (k == "c_cm") c.c_cm = parse_double(k, v);
        else if (k == "coupling_source") {
            if (v == "numeric") c.coupling_source = CouplingSource::numeric;
            else if (v == "analytic") c.coupling_source = CouplingSource::analytic;
            else if (v == "quoted") c.coupling_source = CouplingSource::quoted;
            else throw config_error("key 'coupling_source': expected numeric|analytic|quoted, got '" + v + "'");
        }
        else if (k == "xi_b1_per_s") c.xi_b1_per_s = parse_double(k, v);
        else if (k == "xi_b2_per_s") c.xi_b2_per_s = parse_double(k, v);
        else if (k == "xi_c1_per_s") c.xi_c1_per_s = parse_double(k, v);
        else if (k == "xi_c2_per_s") c.xi_c2_per_s = parse_double(k, v);
        else if (k == "sweep_p1") c.sweep_p1 = v;
        else if (k == "sweep_p2") c.sweep_p2 = v;
        else if (k == "p1_min") c.p1_min = parse_double(k, v);
        else if (k == "p1_max") c.p1_max = parse_double(k, v);
        else if (k == "p1_points") c.p1_points = parse_long(k, v);
        else if (k == "p1_scale") c.p1_log = detail::parse_scale_is_log(k, v);
        else if (k == "p2_min") c.p2_min = parse_double(k, v);
        else if (k == "p2_max") c.p2_max = parse_double(k, v);
        else if (k == "p2_points") c.p2_points = parse_long(k, v);
        else if (k == "p2_scale") c.p2_log = detail::parse_scale_is_log(k, v);
        else if (k == "opt_starts") c.opt_starts = parse_long(k, v);
        else if (k == "opt_max_iter") c.opt_max_iter = parse_long(k, v);
        else if (k == "probe1_branch") c.probe1.branch = parse_branch(k, v);
        else if (k == "probe1_index") c.probe1.index = parse_long(k, v);
        else if (k == "probe1_c") c.probe1.c_mag = parse_double(k, v);
        else if (k == "probe1_mu_per_s") c.probe1.mu_per_s = parse_double(k, v);
        else if (k == "probe1_Gamma_per_s") c.probe1.Gamma_per_s = parse_double(k, v);
        else if (k == "probe2_branch") c.probe2.branch = parse_branch(k, v);
        else if (k == "probe2_index") c.probe2.index = parse_long(k, v);
        else if (k == "probe2_c") c.probe2.c_mag = parse_double(k, v);
        else if (k == "probe2_mu_per_s") c.probe2.mu_per_s = parse_double(k, v);
        else if (k == "probe2_Gamma_per_s") c.probe2.Gamma_per_s = parse_double(k, v);
        else if (k == "sim_duration_settling") c.sim_duration_settling = parse_double(k, v);
        else if (k == "sim_settle_discard") c.sim_settle_discard = parse_double(k, v);
        else if (k == "sim_trajectories") c.sim_trajectories = parse_long(k, v);
        else if (k == "sim_window_periods") c.sim_window_periods = parse_double(k, v);
        else if (k == "sim_dt_s") c.sim_dt_s = parse_double(k, v);
        else if (k == "record_csv") c.record_csv = parse_bool(k, v);
        else throw config_error("unknown config key '" + k + "'");
    }

    if (L_given && !q01_given) c.params.q01 = -c.params.L;
    if (L_given && !q02_given) c.params.q02 = 2.0 * c.params.L;

    if (nbar_given && temp_given)
        throw config_error("give either 'nbar' or 'bath_temperature_K', not both");
    if (temp_given) {
        if (!(c.bath_temperature_K > 0.0))
            throw config_error("key 'bath_temperature_K': must be positive");
        c.nbar_from_temperature = true;
        c.params.nbar = thermal_occupation(c.params.omega_m, c.bath_temperature_K);
    }

    try {
        c.params.check();
    } catch (const domain_error& e) {
        throw config_error(std::string("invalid parameter: ") + e.what());
    }
    if (!(c.c_bn >= 0.0 && c.c_cm >= 0.0))
        throw config_error("drive field magnitudes must be nonnegative");
    if (c.opt_starts < 1) throw config_error("key 'opt_starts': must be >= 1");
    if (c.opt_max_iter < 1) throw config_error("key 'opt_max_iter': must be >= 1");
    if (c.sim_trajectories < 1) throw config_error("key 'sim_trajectories': must be >= 1");
    if (!(c.sim_duration_settling > 0.0))
        throw config_error("key 'sim_duration_settling': must be positive");
    if (!(c.sim_settle_discard >= 0.0))
        throw config_error("key 'sim_settle_discard': must be nonnegative");
    if (!(c.sim_window_periods > 0.0))
        throw config_error("key 'sim_window_periods': must be positive");
    if (c.sim_dt_s < 0.0) throw config_error("key 'sim_dt_s': must be nonnegative");
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

// Fails unless the config names a complete, well-formed sweep.
inline void require_sweep(const Config& c) {
    auto known = [](const std::string& n) {
        for (const auto& s : sweepable_names())
            if (s == n) return true;
        return false;
    };
    if (c.sweep_p1.empty() || c.sweep_p2.empty())
        throw config_error("sweep requires 'sweep_p1' and 'sweep_p2'");
    if (!known(c.sweep_p1))
        throw config_error("key 'sweep_p1': '" + c.sweep_p1 + "' is not sweepable");
    if (!known(c.sweep_p2))
        throw config_error("key 'sweep_p2': '" + c.sweep_p2 + "' is not sweepable");
    if (c.sweep_p1 == c.sweep_p2)
        throw config_error("sweep axes must differ");
    auto check_axis = [](const char* axis, double lo, double hi, long n, bool log) {
        const std::string a(axis);
        if (n < 2) throw config_error("key '" + a + "_points': grid size must be >= 2");
        if (!(lo < hi)) throw config_error("key '" + a + "_min': need min < max");
        if (log && !(lo > 0.0))
            throw config_error("key '" + a + "_min': log scale needs positive bounds");
    };
    check_axis("p1", c.p1_min, c.p1_max, c.p1_points, c.p1_log);
    check_axis("p2", c.p2_min, c.p2_max, c.p2_points, c.p2_log);
    if (c.coupling_source == CouplingSource::quoted &&
        (c.sweep_p1 == "T_mem" || c.sweep_p2 == "T_mem"))
        throw config_error("sweeping T_mem requires computed couplings "
                           "(coupling_source numeric or analytic)");
}

// Geometric couplings for the configured source at the config's base point.
inline GeometricCouplings couplings_for(const Config& c) {
    switch (c.coupling_source) {
        case CouplingSource::numeric: return couplings_from_geometry(c.params);
        case CouplingSource::analytic: return couplings_from_truncation(c.params);
        case CouplingSource::quoted:
            return couplings_from_quoted(c.xi_b1_per_s, c.xi_b2_per_s,
                                         c.xi_c1_per_s, c.xi_c2_per_s, c.params);
    }
    throw config_error("unreachable coupling source");
}

} // namespace membranes
