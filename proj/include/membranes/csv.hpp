#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "membranes/errors.hpp"

namespace membranes {

// 9 significant digits, '.' decimal separator, no locale surprises. Every
// number this project writes to CSV goes through here so outputs are
// byte-stable across platforms.
inline std::string g9(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

// LF-only writer; the stream is opened in binary mode so Windows runtimes
// cannot inject CR.
class CsvWriter {
  public:
    explicit CsvWriter(const std::string& path)
        : out_(path, std::ios::binary) {
        if (!out_) throw config_error("cannot open output file '" + path + "'");
    }

    void row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    void raw_line(const std::string& line) { out_ << line << '\n'; }

  private:
    std::ofstream out_;
};

} // namespace membranes
