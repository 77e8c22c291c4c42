#include <cmath>
#include <numbers>

#include "doctest.h"

#include "grip/error.hpp"
#include "grip/linalg.hpp"

using namespace grip;
using namespace grip::linalg;

namespace {

// Eigenvalues of a symmetric 3×3 from the characteristic polynomial
// (trigonometric solution of the depressed cubic).
std::array<double, 3> charpoly_eig3(const Matrix& a) {
    const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    const double q = a.trace() / 3.0;
    const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) +
                      (a(2, 2) - q) * (a(2, 2) - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    if (p == 0.0) return {q, q, q};
    const Matrix b = (a - q * Matrix::Identity(3, 3)) / p;
    const double r = std::clamp(b.determinant() / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    return {e3, 3.0 * q - e1 - e3, e1};
}

Matrix random_spd(Index p, Rng& rng, double floor = 0.1) {
    const Matrix g = rng.normal_matrix(p, p);
    return g * g.transpose() + floor * Matrix::Identity(p, p);
}

}  // namespace

TEST_CASE("SymMatrix rejects malformed input") {
    CHECK_THROWS_AS(SymMatrix(Matrix(2, 3)), Error);
    Matrix m(2, 2);
    m << 1, 2, 3, 1;
    CHECK_THROWS_AS(SymMatrix{m}, Error);
    CHECK(SymMatrix::symmetrize(m)(0, 1) == doctest::Approx(2.5));
}

TEST_CASE("cholesky of identity needs no jitter") {
    const auto c = cholesky_with_jitter(SymMatrix::identity(3), 1e-10);
    CHECK(c.jitter_used == 0.0);
    CHECK(max_abs(c.lower - Matrix::Identity(3, 3)) == 0.0);
}

TEST_CASE("cholesky of a 2x2 by hand") {
    Matrix m(2, 2);
    m << 4, 2, 2, 3;
    const auto c = cholesky_with_jitter(SymMatrix(m));
    CHECK(c.jitter_used == 0.0);
    CHECK(c.lower(0, 0) == doctest::Approx(2.0));
    CHECK(c.lower(0, 1) == 0.0);
    CHECK(c.lower(1, 0) == doctest::Approx(1.0));
    CHECK(c.lower(1, 1) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("rank-deficient input escalates jitter") {
    Matrix m = Matrix::Ones(2, 2);
    const auto c = cholesky_with_jitter(SymMatrix(m), 1e-8);
    CHECK(c.jitter_used > 0.0);
    const Matrix recon = c.lower * c.lower.transpose();
    CHECK(max_abs(recon - (m + c.jitter_used * Matrix::Identity(2, 2))) <= 1e-10);
}

TEST_CASE("indefinite input fails after the jitter schedule") {
    Matrix m(2, 2);
    m << 1, 0, 0, -5;
    CHECK_THROWS_AS(cholesky_with_jitter(SymMatrix(m)), Error);
}

TEST_CASE("cholesky reconstructs random SPD inputs") {
    Rng rng(11);
    for (Index p : {1, 5, 40, 200}) {
        const Matrix m = random_spd(p, rng);
        const auto c = cholesky_with_jitter(SymMatrix::symmetrize(m));
        const Matrix recon = c.lower * c.lower.transpose();
        CHECK(max_abs(recon - (m + c.jitter_used * Matrix::Identity(p, p))) <= 1e-8 * max_abs(m));
    }
}

TEST_CASE("eigen extremes on fixed inputs") {
    auto e = sym_eig_extremes(SymMatrix::identity(4));
    CHECK(e.lambda_min == doctest::Approx(1.0));
    CHECK(e.lambda_max == doctest::Approx(1.0));

    Matrix r(2, 2);
    r << 1, 0.6, 0.6, 1;
    e = sym_eig_extremes(SymMatrix(r));
    CHECK(e.lambda_min == doctest::Approx(0.4));
    CHECK(e.lambda_max == doctest::Approx(1.6));

    Matrix d = Matrix::Zero(3, 3);
    d.diagonal() << 0.1, 2, 5;
    e = sym_eig_extremes(SymMatrix(d));
    CHECK(e.lambda_min == doctest::Approx(0.1));
    CHECK(e.lambda_max == doctest::Approx(5.0));
}

TEST_CASE("eigen extremes agree with the characteristic polynomial") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        // 2×2: λ = t/2 ± √((a−c)²/4 + b²)
        const double a = rng.normal(), b = rng.normal(), c = rng.normal();
        Matrix m2(2, 2);
        m2 << a, b, b, c;
        const double mid = 0.5 * (a + c);
        const double rad = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
        const auto e2 = sym_eig_extremes(SymMatrix(m2));
        CHECK(std::abs(e2.lambda_min - (mid - rad)) <= 1e-8);
        CHECK(std::abs(e2.lambda_max - (mid + rad)) <= 1e-8);

        const Matrix g = rng.normal_matrix(3, 3);
        const Matrix m3 = 0.5 * (g + g.transpose());
        const auto ref = charpoly_eig3(m3);
        const auto e3 = sym_eig_extremes(SymMatrix::symmetrize(m3));
        CHECK(std::abs(e3.lambda_min - ref[0]) <= 1e-8);
        CHECK(std::abs(e3.lambda_max - ref[2]) <= 1e-8);
    }
}

TEST_CASE("solve_spd") {
    Rng rng(3);
    const Matrix b = rng.normal_matrix(3, 2);
    CHECK(max_abs(solve_spd(SymMatrix::identity(3), b) - b) == doctest::Approx(0.0));

    Matrix d = Matrix::Zero(2, 2);
    d.diagonal() << 2, 4;
    Matrix rhs(2, 1);
    rhs << 2, 8;
    const Matrix x = solve_spd(SymMatrix(d), rhs);
    CHECK(x(0, 0) == doctest::Approx(1.0));
    CHECK(x(1, 0) == doctest::Approx(2.0));

    for (int t = 0; t < 20; ++t) {
        const Matrix m = random_spd(5, rng);
        const Matrix v = rng.normal_matrix(5, 1);
        const Matrix sol = solve_spd(SymMatrix::symmetrize(m), m * v);
        CHECK(max_abs(sol - v) <= 1e-8);
        CHECK((m * sol - m * v).norm() <= 1e-8 * (m * v).norm());
    }
}

TEST_CASE("ledoit_wolf with full extra shrinkage returns mu*I") {
    Rng rng(9);
    Matrix z = rng.normal_matrix(200, 4);
    z.rowwise() -= z.colwise().mean();
    const auto lw = ledoit_wolf(z, 1.0);
    const double mu = sample_covariance(z).trace() / 4.0;
    CHECK(lw.alpha_prime == 1.0);
    CHECK(max_abs(lw.sigma_hat.matrix() - mu * Matrix::Identity(4, 4)) <= 1e-15);
}

TEST_CASE("ledoit_wolf recovers identity on iid normal data") {
    Rng rng(21);
    Matrix z = rng.normal_matrix(10000, 5);
    z.rowwise() -= z.colwise().mean();
    const auto lw = ledoit_wolf(z, 0.0);
    CHECK(max_abs(lw.sigma_hat.matrix() - Matrix::Identity(5, 5)) <= 0.1);
    CHECK(lw.alpha_prime >= 0.0);
    CHECK(lw.alpha_prime <= 1.0);
}

TEST_CASE("ledoit_wolf with one feature is the sample variance") {
    Rng rng(2);
    Matrix z = rng.normal_matrix(50, 1) * 3.0;
    z.rowwise() -= z.colwise().mean();
    const double var = z.squaredNorm() / 49.0;
    for (double extra : {0.0, 0.3, 1.0}) CHECK(ledoit_wolf(z, extra).sigma_hat(0, 0) == doctest::Approx(var));
}

TEST_CASE("ledoit_wolf output is symmetric PSD") {
    Rng rng(17);
    for (Index n : {3, 10, 100}) {
        for (Index p : {2, 8, 30}) {
            Matrix z = rng.normal_matrix(n, p);
            z.col(0) = z.col(1);  // force collinearity
            z.rowwise() -= z.colwise().mean();
            const auto lw = ledoit_wolf(z, 0.0);
            const Matrix& s = lw.sigma_hat.matrix();
            CHECK(max_abs(s - s.transpose()) == 0.0);
            CHECK(sym_eig_extremes(lw.sigma_hat).lambda_min >= -1e-10);
        }
    }
}
