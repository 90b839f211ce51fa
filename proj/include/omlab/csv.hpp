#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace omlab {

/// Locale-independent cell formatting: '.' decimal point, 17 significant
/// digits, so a double round-trips bit-exactly.
inline std::string csv_cell(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string csv_cell(std::size_t v) { return std::to_string(v); }
inline std::string csv_cell(bool v) { return v ? "1" : "0"; }
inline std::string csv_cell(const std::string& v) { return v; }
inline std::string csv_cell(const char* v) { return v; }

/// Minimal deterministic CSV writer: header once, '\n' line ends, single
/// writer per file.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& header) : out_(path) {
        if (!out_) throw std::runtime_error("CsvWriter: cannot open " + path);
        out_ << header << '\n';
    }

    template <typename... Cells>
    void row(const Cells&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << csv_cell(cells), first = false), ...);
        out_ << '\n';
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

} // namespace omlab
