#pragma once

// CSV reading/writing for design and response matrices. Numbers use '.' as
// the decimal separator; scientific notation is accepted. A leading header
// row is written by all writers and detected on read (a first line that does
// not parse as numbers is treated as the header).

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "dynemu/errors.hpp"

namespace dynemu {

using Matrix = Eigen::MatrixXd;

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool parse_double(const std::string& cell, double& out) {
    std::string t = trim(cell);
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (*first == '+') ++first;  // from_chars rejects a leading plus
    auto r = std::from_chars(first, last, out);
    return r.ec == std::errc() && r.ptr == last;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(pos));
            break;
        }
        cells.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return cells;
}

}  // namespace detail

// Reads a numeric CSV matrix. Ragged rows, unparsable or non-finite cells
// raise parse_error with the file, line and column of the offending cell.
inline Matrix read_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error(path + ": cannot open file");
    std::vector<std::vector<double>> rows;
    std::string line;
    long line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        std::vector<std::string> cells = detail::split_csv_line(line);
        std::vector<double> vals(cells.size());
        bool numeric = true;
        std::size_t bad_col = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (!detail::parse_double(cells[c], vals[c])) {
                numeric = false;
                bad_col = c;
                break;
            }
        }
        if (!numeric) {
            if (rows.empty() && line_no == 1) continue;  // header row
            throw parse_error(path + ":" + std::to_string(line_no) +
                              ": non-numeric cell in column " + std::to_string(bad_col + 1));
        }
        for (std::size_t c = 0; c < vals.size(); ++c)
            if (!std::isfinite(vals[c]))
                throw parse_error(path + ":" + std::to_string(line_no) +
                                  ": non-finite value in column " + std::to_string(c + 1));
        if (rows.empty()) {
            width = vals.size();
        } else if (vals.size() != width) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": ragged row (" +
                              std::to_string(vals.size()) + " cells, expected " +
                              std::to_string(width) + ")");
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw parse_error(path + ": no data rows");
    Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < width; ++c)
            M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return M;
}

// Writes a matrix with a generated header "<prefix>1,...,<prefix>C" using
// round-trip-exact formatting.
inline void write_csv_matrix(const std::string& path, const Matrix& M,
                             const std::string& col_prefix) {
    std::ofstream out(path);
    if (!out) throw error("write_csv_matrix: cannot open " + path);
    for (Eigen::Index c = 0; c < M.cols(); ++c)
        out << (c ? "," : "") << col_prefix << (c + 1);
    out << "\n";
    char buf[40];
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", M(r, c));
            out << (c ? "," : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw error("write_csv_matrix: write failed for " + path);
}

}  // namespace dynemu
