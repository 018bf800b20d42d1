#include "calsig/matrix.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "calsig/errors.hpp"

namespace calsig {

bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

void validate_matrix(const Matrix& m, const std::string& what) {
    if (m.rows < 1 || m.cols < 1)
        throw InvalidInputError(what + ": matrix must have at least one row and column");
    if (m.data.size() != m.rows * m.cols)
        throw InvalidInputError(what + ": data length does not match rows*cols");
    if (!all_finite(m))
        throw InvalidInputError(what + ": matrix contains non-finite entries");
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_matrix_csv(const Matrix& m, std::ostream& out) {
    out << m.rows << ',' << m.cols << '\n';
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (c) out << ',';
            out << format_value(m.at(r, c));
        }
        out << '\n';
    }
}

namespace {

double parse_double(std::string_view tok, const std::string& source, std::size_t line_no) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ParseError(source + ": line " + std::to_string(line_no) +
                         ": bad numeric value '" + std::string(tok) + "'");
    return v;
}

} // namespace

Matrix read_matrix_csv(std::istream& in, const std::string& source_name) {
    std::string line;
    if (!std::getline(in, line))
        throw ParseError(source_name + ": empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto comma = line.find(',');
    if (comma == std::string::npos)
        throw ParseError(source_name + ": line 1: expected 'rows,cols' header");
    std::size_t rows = 0, cols = 0;
    try {
        rows = std::stoul(line.substr(0, comma));
        cols = std::stoul(line.substr(comma + 1));
    } catch (const std::exception&) {
        throw ParseError(source_name + ": line 1: bad 'rows,cols' header");
    }
    if (rows < 1 || cols < 1)
        throw ParseError(source_name + ": line 1: rows and cols must be positive");

    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!std::getline(in, line))
            throw ParseError(source_name + ": unexpected end of file at row " +
                             std::to_string(r + 1));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t pos = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            std::size_t next = line.find(',', pos);
            std::string_view tok;
            if (next == std::string::npos) {
                if (c + 1 != cols)
                    throw ParseError(source_name + ": line " + std::to_string(r + 2) +
                                     ": expected " + std::to_string(cols) + " values");
                tok = std::string_view(line).substr(pos);
            } else {
                tok = std::string_view(line).substr(pos, next - pos);
                pos = next + 1;
            }
            m.at(r, c) = parse_double(tok, source_name, r + 2);
        }
    }
    return m;
}

void save_matrix_csv(const Matrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    write_matrix_csv(m, out);
    if (!out) throw ParseError("write failed: " + path);
}

Matrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open: " + path);
    return read_matrix_csv(in, path);
}

} // namespace calsig
