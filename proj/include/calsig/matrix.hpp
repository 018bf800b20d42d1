#ifndef CALSIG_MATRIX_HPP
#define CALSIG_MATRIX_HPP

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace calsig {

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

bool all_finite(const Matrix& m);

double frobenius_norm(const Matrix& m);

/// Validates the basic matrix invariants (nonempty, size match, finite).
/// Throws InvalidInputError naming `what` on violation.
void validate_matrix(const Matrix& m, const std::string& what);

// CSV format: first line "rows,cols", then one comma-separated line per row,
// values with 17 significant digits (round-trip exact).
void write_matrix_csv(const Matrix& m, std::ostream& out);
Matrix read_matrix_csv(std::istream& in, const std::string& source_name = "matrix csv");

void save_matrix_csv(const Matrix& m, const std::string& path);
Matrix load_matrix_csv(const std::string& path);

/// Formats a double with 17 significant digits (shared by all CSV writers).
std::string format_value(double v);

} // namespace calsig

#endif
