#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "calsig/errors.hpp"
#include "calsig/matrix.hpp"
#include "calsig/svd.hpp"
#include "oracles.hpp"

using calsig::Matrix;
using calsig::SvdTriplet;

namespace {

Matrix make(std::size_t r, std::size_t c, std::initializer_list<double> vals) {
    Matrix m(r, c);
    std::copy(vals.begin(), vals.end(), m.data.begin());
    return m;
}

double reconstruction_error(const Matrix& x, const SvdTriplet& t) {
    Matrix rec = rank_l_reconstruct(t, t.count());
    double err = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        double d = x.data[i] - rec.data[i];
        err += d * d;
    }
    return std::sqrt(err);
}

void check_orthonormal(const Matrix& vectors, double tol) {
    for (std::size_t a = 0; a < vectors.cols; ++a)
        for (std::size_t b = a; b < vectors.cols; ++b) {
            double dot = 0.0;
            for (std::size_t r = 0; r < vectors.rows; ++r)
                dot += vectors.at(r, a) * vectors.at(r, b);
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < tol);
        }
}

} // namespace

TEST_CASE("svd of a diagonal matrix") {
    Matrix x = make(2, 2, {2, 0, 0, 1});
    SvdTriplet t = calsig::svd(x, 2);
    CHECK(t.singular_values[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(t.singular_values[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.left_vectors.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(t.left_vectors.at(1, 0)) < 1e-12);
    CHECK(t.right_vectors.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd of a rank-1 outer product") {
    Matrix x = make(2, 2, {3, 4, 6, 8});  // outer([1,2],[3,4])
    SvdTriplet t = calsig::svd(x, 1);
    CHECK(t.singular_values[0] == doctest::Approx(std::sqrt(125.0)).epsilon(1e-12));
    double s5 = std::sqrt(5.0);
    CHECK(t.left_vectors.at(0, 0) == doctest::Approx(1.0 / s5).epsilon(1e-10));
    CHECK(t.left_vectors.at(1, 0) == doctest::Approx(2.0 / s5).epsilon(1e-10));
    CHECK(t.right_vectors.at(0, 0) == doctest::Approx(3.0 / 5.0).epsilon(1e-10));
    CHECK(t.right_vectors.at(1, 0) == doctest::Approx(4.0 / 5.0).epsilon(1e-10));
}

TEST_CASE("singular values match the brute-force eigensolver oracle") {
    Matrix x = oracles::random_matrix(5, 4, 42);
    SvdTriplet t = calsig::svd(x, 4);
    auto expected = oracles::singular_values_bruteforce(x);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(t.singular_values[j] == doctest::Approx(expected[j]).epsilon(1e-8));
}

TEST_CASE("svd rejects bad input") {
    CHECK_THROWS_AS(calsig::svd(Matrix(), 1), calsig::InvalidInputError);
    Matrix x = make(2, 2, {1, 2, 3, 4});
    CHECK_THROWS_AS(calsig::svd(x, 0), calsig::InvalidInputError);
    CHECK_THROWS_AS(calsig::svd(x, 3), calsig::InvalidInputError);
    x.at(0, 1) = std::nan("");
    CHECK_THROWS_AS(calsig::svd(x, 1), calsig::InvalidInputError);
}

TEST_CASE("rank_l_reconstruct examples") {
    SvdTriplet t = calsig::svd(make(2, 2, {2, 0, 0, 1}), 2);
    Matrix r1 = rank_l_reconstruct(t, 1);
    CHECK(r1.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(r1.at(0, 1)) < 1e-12);
    CHECK(std::abs(r1.at(1, 0)) < 1e-12);
    CHECK(std::abs(r1.at(1, 1)) < 1e-12);

    Matrix rank1 = make(2, 2, {3, 4, 6, 8});
    SvdTriplet t1 = calsig::svd(rank1, 1);
    Matrix rec = rank_l_reconstruct(t1, 1);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(rec.data[i] == doctest::Approx(rank1.data[i]).epsilon(1e-10));

    CHECK_THROWS_AS(rank_l_reconstruct(t1, 0), calsig::InvalidInputError);
    CHECK_THROWS_AS(rank_l_reconstruct(t1, 2), calsig::InvalidInputError);
}

TEST_CASE("rank-l error equals the tail singular values") {
    Matrix x = oracles::random_matrix(6, 5, 7);
    SvdTriplet t = calsig::svd(x, 5);
    Matrix rec = rank_l_reconstruct(t, 2);
    double err = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        double d = x.data[i] - rec.data[i];
        err += d * d;
    }
    double tail = 0.0;
    for (std::size_t j = 2; j < 5; ++j)
        tail += t.singular_values[j] * t.singular_values[j];
    CHECK(std::sqrt(err) == doctest::Approx(std::sqrt(tail)).epsilon(1e-8));
}

TEST_CASE("variance_explained examples") {
    SvdTriplet t;
    t.singular_values = {4.0, 3.0};
    auto f = calsig::variance_explained(t);
    CHECK(f[0] == doctest::Approx(0.64).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(0.36).epsilon(1e-12));

    t.singular_values = {5.0, 0.0, 0.0};
    f = calsig::variance_explained(t);
    CHECK(f[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f[1] == 0.0);
    CHECK(f[2] == 0.0);

    t.singular_values = {0.0, 0.0};
    CHECK_THROWS_AS(calsig::variance_explained(t), calsig::UndefinedRatioError);
}

TEST_CASE("variance_explained fractions sum to one") {
    Matrix x = oracles::random_matrix(8, 6, 99);
    SvdTriplet t = calsig::svd(x, 6);
    auto f = calsig::variance_explained(t);
    double sum = 0.0;
    for (double v : f) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rank-1 signal plus small noise is first-component dominated") {
    std::mt19937 gen(5);
    std::normal_distribution<double> noise(0.0, 0.01);
    Matrix x(30, 20);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) {
            double u = 1.0 + 0.5 * std::sin(0.3 * static_cast<double>(i));
            double v = 1.0 + 0.4 * std::cos(0.2 * static_cast<double>(j));
            x.at(i, j) = u * v + noise(gen);
        }
    SvdTriplet t = calsig::svd(x, 20);
    CHECK(calsig::variance_explained(t)[0] > 0.95);
}

TEST_CASE("full reconstruction and orthonormality on assorted shapes") {
    for (auto [r, c, seed] : {std::tuple<std::size_t, std::size_t, std::uint32_t>{7, 7, 1},
                              {9, 4, 2},
                              {4, 9, 3},
                              {1, 6, 4},
                              {6, 1, 5}}) {
        Matrix x = oracles::random_matrix(r, c, seed);
        SvdTriplet t = calsig::svd(x, std::min(r, c));
        double frob = calsig::frobenius_norm(x);
        CHECK(reconstruction_error(x, t) < 1e-8 * std::max(frob, 1.0));
        check_orthonormal(t.left_vectors, 1e-8);
        check_orthonormal(t.right_vectors, 1e-8);
        for (std::size_t j = 0; j + 1 < t.count(); ++j)
            CHECK(t.singular_values[j] >= t.singular_values[j + 1]);
    }
}

TEST_CASE("rank-deficient matrices get orthonormal basis completion") {
    // rank 1, but full decomposition requested
    Matrix x = make(3, 3, {1, 2, 3, 2, 4, 6, 3, 6, 9});
    SvdTriplet t = calsig::svd(x, 3);
    CHECK(t.singular_values[1] < 1e-10 * t.singular_values[0]);
    check_orthonormal(t.left_vectors, 1e-8);
    check_orthonormal(t.right_vectors, 1e-8);
    auto f = calsig::variance_explained(t);
    CHECK(f[0] == doctest::Approx(1.0).epsilon(1e-10));

    Matrix zero(3, 2, 0.0);
    SvdTriplet tz = calsig::svd(zero, 2);
    CHECK(tz.singular_values[0] == 0.0);
    check_orthonormal(tz.left_vectors, 1e-8);
    CHECK_THROWS_AS(calsig::variance_explained(tz), calsig::UndefinedRatioError);
}

TEST_CASE("best rank-l approximation beats random rank-l factorizations") {
    std::mt19937 gen(123);
    std::normal_distribution<double> dist;
    Matrix x = oracles::random_matrix(8, 6, 77);
    SvdTriplet t = calsig::svd(x, 6);
    for (std::size_t l = 1; l <= 3; ++l) {
        Matrix best = rank_l_reconstruct(t, l);
        double best_err = 0.0;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            double d = x.data[i] - best.data[i];
            best_err += d * d;
        }
        for (int trial = 0; trial < 100; ++trial) {
            Matrix a(8, l), b(l, 6);
            for (double& v : a.data) v = dist(gen);
            for (double& v : b.data) v = dist(gen);
            // least-squares optimal scale for the random factor product
            double num = 0.0, den = 0.0, err = 0.0;
            Matrix prod(8, 6, 0.0);
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 6; ++j) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < l; ++k) s += a.at(i, k) * b.at(k, j);
                    prod.at(i, j) = s;
                    num += s * x.at(i, j);
                    den += s * s;
                }
            double scale = den > 0 ? num / den : 0.0;
            for (std::size_t i = 0; i < x.data.size(); ++i) {
                double d = x.data[i] - scale * prod.data[i];
                err += d * d;
            }
            CHECK(best_err <= err + 1e-12);
        }
    }
}

TEST_CASE("sign convention and determinism") {
    Matrix x = oracles::random_matrix(6, 5, 2024);
    SvdTriplet a = calsig::svd(x, 5);
    SvdTriplet b = calsig::svd(x, 5);
    CHECK(std::memcmp(a.singular_values.data(), b.singular_values.data(),
                      a.singular_values.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.left_vectors.data.data(), b.left_vectors.data.data(),
                      a.left_vectors.data.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.right_vectors.data.data(), b.right_vectors.data.data(),
                      a.right_vectors.data.size() * sizeof(double)) == 0);
    for (std::size_t j = 0; j < a.count(); ++j) {
        double mag = 0.0, pivot = 0.0;
        for (std::size_t r = 0; r < a.left_vectors.rows; ++r) {
            double v = std::abs(a.left_vectors.at(r, j));
            if (v > mag) {
                mag = v;
                pivot = a.left_vectors.at(r, j);
            }
        }
        CHECK(pivot >= 0.0);
    }
}

TEST_CASE("matrix csv round trip") {
    Matrix x = oracles::random_matrix(4, 3, 9);
    std::ostringstream out;
    calsig::write_matrix_csv(x, out);
    std::istringstream in(out.str());
    Matrix back = calsig::read_matrix_csv(in);
    REQUIRE(back.rows == x.rows);
    REQUIRE(back.cols == x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(back.data[i] == x.data[i]);

    std::istringstream bad("2,2\n1,2\n3,oops\n");
    CHECK_THROWS_AS(calsig::read_matrix_csv(bad, "bad"), calsig::ParseError);
}
