#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "membranes/config.hpp"
#include "membranes/pipeline.hpp"

namespace testsup {

// Operating point used by most anchors: both drives detuned well above
// resonance, 1e5 cavity decay, nbar = 1000 bath.
inline membranes::SystemParams anchor_params() {
    membranes::SystemParams p;
    p.Delta_bn = 4.2e6;
    p.Delta_cm = 2.09e7;
    return p; // defaults already carry Gamma = 1e5, Q_f = 1e7, nbar = 1000
}

inline membranes::GeometricCouplings quoted_geo(const membranes::SystemParams& p) {
    return membranes::couplings_from_quoted(1.90e3, 6.75e3, -4.53e3, 4.53e3, p);
}

// Readout cross-check configuration: both drives near resonance so every
// mechanical normal mode is optically damped and sits inside the
// demodulation passband.
inline membranes::Config mild_config() {
    membranes::Config cfg;
    cfg.coupling_source = membranes::CouplingSource::quoted;
    cfg.xi_b1_per_s = 1.90e3;
    cfg.xi_b2_per_s = 6.75e3;
    cfg.xi_c1_per_s = -4.53e3;
    cfg.xi_c2_per_s = 4.53e3;
    cfg.c_bn = 4.0;
    cfg.c_cm = 4.0;
    cfg.params.Delta_bn = 1e6;
    cfg.params.Delta_cm = 1e6;
    cfg.params.Q_f = 1e4;
    cfg.probe1 = {membranes::Branch::b, 2001, 5.0, 5e5, 1e5};
    cfg.probe2 = {membranes::Branch::c, 6001, 5.0, 5e5, 1e5};
    cfg.sim_trajectories = 4;
    cfg.sim_duration_settling = 100.0;
    cfg.sim_settle_discard = 5.0;
    cfg.sim_window_periods = 2.0;
    return cfg;
}

// Writes content to a unique temp file and returns its path.
class TempFile {
  public:
    explicit TempFile(const std::string& content, const char* tag = "cfg") {
        static int counter = 0;
        path_ = std::string("/tmp/membranes_test_") + tag + "_" +
                std::to_string(counter++) + ".txt";
        std::ofstream out(path_, std::ios::binary);
        out << content;
    }
    ~TempFile() { std::remove(path_.c_str()); }
    const std::string& path() const { return path_; }

  private:
    std::string path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

} // namespace testsup
