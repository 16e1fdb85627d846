#include <doctest.h>

#include <cmath>

#include "rsl/geometry.hpp"
#include "rsl/rng.hpp"
#include "support/finite_diff.hpp"

using namespace rsl;

namespace {

CholeskyShape random_shape(int d, std::uint64_t seed) {
    StreamRng rng(seed, "test-shape");
    Matrix m = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) m(i, j) = 0.3 * rng.normal();
        m(i, i) = 0.5 + rng.uniform();
    }
    return CholeskyShape(d, m);
}

Vector random_vector(int d, std::uint64_t seed, const char* stream = "test-vec") {
    StreamRng rng(seed, stream);
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("gauge: identity and hand-computed cases") {
    CholeskyShape id = CholeskyShape::identity(2);
    Vector u(2);
    u << 3.0, 4.0;
    CHECK(gauge(id, u) == doctest::Approx(5.0).epsilon(1e-12));

    CholeskyShape dg(2, (Matrix(2, 2) << 2, 0, 0, 1).finished());
    Vector u2(2);
    u2 << 2.0, 0.0;
    CHECK(gauge(dg, u2) == doctest::Approx(1.0).epsilon(1e-12));

    CholeskyShape tri(2, (Matrix(2, 2) << 1, 0, 1, 1).finished());
    Vector u3(2);
    u3 << 1.0, 1.0;
    CHECK(gauge(tri, u3) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK(gauge(id, Vector::Zero(2)) == 0.0);
}

TEST_CASE("gauge: degenerate diagonal raises") {
    Matrix m = Matrix::Identity(2, 2);
    m(1, 1) = 1e-9;
    CholeskyShape bad(2, m);
    CHECK_THROWS_AS(gauge(bad, Vector::Ones(2)), DegenerateShape);
}

TEST_CASE("support: hand cases and homogeneity in rho") {
    CholeskyShape id = CholeskyShape::identity(2);
    Vector w(2);
    w << 3.0, 4.0;
    CHECK(support(id, 2.0, w) == doctest::Approx(10.0).epsilon(1e-12));

    CholeskyShape dg(2, (Matrix(2, 2) << 2, 0, 0, 1).finished());
    Vector w2(2);
    w2 << 1.0, 1.0;
    CHECK(support(dg, 1.0, w2) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));

    for (std::uint64_t s = 0; s < 100; ++s) {
        CholeskyShape L = random_shape(3, 100 + s);
        Vector v = random_vector(3, 200 + s);
        const double rho = 0.1 + 3.0 * StreamRng(s, "rho").uniform();
        const double lhs = support(L, rho, v);
        const double rhs = rho * support(L, 1.0, v);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("grad_support_L: unit case, finite differences, rho homogeneity") {
    CholeskyShape id = CholeskyShape::identity(2);
    Vector e1(2);
    e1 << 1.0, 0.0;
    ShapeGradient g = grad_support_L(id, 1.0, e1);
    CHECK(g.entries(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(g.entries(1, 0)) < 1e-12);
    CHECK(std::abs(g.entries(1, 1)) < 1e-12);

    Matrix fd = test::fd_shape_gradient(
        id, [&](const CholeskyShape& l) { return support(l, 1.0, e1); });
    CHECK(test::rel_error(g.entries, fd) < 1e-6);

    CholeskyShape L = random_shape(4, 7);
    Vector w = random_vector(4, 8);
    const double rho = 1.7;
    ShapeGradient g4 = grad_support_L(L, rho, w);
    Matrix fd4 = test::fd_shape_gradient(
        L, [&](const CholeskyShape& l) { return support(l, rho, w); });
    CHECK(test::rel_error(g4.entries, fd4) < 1e-5);

    ShapeGradient g2 = grad_support_L(L, 2.0 * rho, w);
    CHECK((g2.entries - 2.0 * g4.entries).norm() < 1e-12 * g4.entries.norm());

    CHECK_THROWS_AS(grad_support_L(L, 1.0, Vector::Zero(4)), ZeroDirection);
}

TEST_CASE("grad_gauge_L: unit case, finite differences, u homogeneity") {
    CholeskyShape id = CholeskyShape::identity(2);
    Vector e1(2);
    e1 << 1.0, 0.0;
    ShapeGradient g = grad_gauge_L(id, e1);
    CHECK(g.entries(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));

    Matrix fd = test::fd_shape_gradient(id, [&](const CholeskyShape& l) { return gauge(l, e1); });
    CHECK(test::rel_error(g.entries, fd) < 1e-6);

    CholeskyShape L = random_shape(4, 17);
    Vector u = random_vector(4, 18);
    ShapeGradient g4 = grad_gauge_L(L, u);
    Matrix fd4 = test::fd_shape_gradient(L, [&](const CholeskyShape& l) { return gauge(l, u); });
    CHECK(test::rel_error(g4.entries, fd4) < 1e-5);

    const double c = 2.75;
    ShapeGradient gc = grad_gauge_L(L, (c * u).eval());
    CHECK((gc.entries - c * g4.entries).norm() < 1e-10 * g4.entries.norm());

    CHECK_THROWS_AS(grad_gauge_L(L, Vector::Zero(4)), ZeroRealization);
}

TEST_CASE("gradients match finite differences over seeded suite d in {2,4,8}") {
    int checked = 0;
    for (int d : {2, 4, 8}) {
        for (std::uint64_t s = 0; s < 10; ++s) {
            CholeskyShape L = random_shape(d, 1000 * d + s);
            Vector w = random_vector(d, 2000 * d + s, "w");
            Vector u = random_vector(d, 3000 * d + s, "u");
            const double rho = 0.5 + StreamRng(s, "rho2").uniform();

            Matrix fd_s = test::fd_shape_gradient(
                L, [&](const CholeskyShape& l) { return support(l, rho, w); });
            CHECK(test::rel_error(grad_support_L(L, rho, w).entries, fd_s) < 1e-5);

            Matrix fd_g = test::fd_shape_gradient(
                L, [&](const CholeskyShape& l) { return gauge(l, u); });
            CHECK(test::rel_error(grad_gauge_L(L, u).entries, fd_g) < 1e-5);
            ++checked;
        }
    }
    CHECK(checked == 30);
}

TEST_CASE("project_shape: fixed point, trace renormalization, clamping, idempotence") {
    Matrix id = Matrix::Identity(3, 3);
    CholeskyShape p = project_shape(id, 1e-6, true);
    CHECK((p.entries - id).norm() < 1e-12);

    CholeskyShape q = project_shape((2.0 * Matrix::Identity(2, 2)).eval(), 1e-6, true);
    CHECK((q.entries - Matrix::Identity(2, 2)).norm() < 1e-12);

    Matrix neg = Matrix::Identity(2, 2);
    neg(0, 0) = -3.0;
    CholeskyShape r = project_shape(neg, 1e-6, false);
    CHECK(r.entries(0, 0) == doctest::Approx(1e-6));

    for (std::uint64_t s = 0; s < 20; ++s) {
        StreamRng rng(s, "proj");
        Matrix m(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) m(i, j) = rng.normal();
        CholeskyShape once = project_shape(m, 1e-6, true);
        CholeskyShape twice = project_shape(once.entries, 1e-6, true);
        CHECK((once.entries - twice.entries).norm() < 1e-12);
        once.validate();
        CHECK(std::abs(once.trace_gram() - 4.0) <= 1e-9);
    }
}

TEST_CASE("cholesky_factor: identity, hand case, diagonal, NotPSD") {
    CHECK((cholesky_factor(Matrix::Identity(3, 3)).entries - Matrix::Identity(3, 3)).norm() <
          1e-14);

    Matrix sigma(2, 2);
    sigma << 4, 2, 2, 2;
    Matrix want(2, 2);
    want << 2, 0, 1, 1;
    CHECK((cholesky_factor(sigma).entries - want).norm() < 1e-12);

    Matrix dg = Matrix::Zero(3, 3);
    dg.diagonal() << 4.0, 9.0, 0.25;
    Matrix wantd = Matrix::Zero(3, 3);
    wantd.diagonal() << 2.0, 3.0, 0.5;
    CHECK((cholesky_factor(dg).entries - wantd).norm() < 1e-12);

    Matrix indef(2, 2);
    indef << 1, 2, 2, 1;  // eigenvalues 3, -1
    CHECK_THROWS_AS(cholesky_factor(indef), NotPSD);
}

TEST_CASE("gauge/support duality on the unit-set boundary") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        CholeskyShape L = random_shape(3, 400 + s);
        Vector u = random_vector(3, 500 + s, "u");
        if (u.norm() == 0.0) continue;
        u /= gauge(L, u);  // now on the boundary of the unit set
        Vector w = random_vector(3, 600 + s, "w");
        CHECK(w.dot(u) <= support(L, 1.0, w) + 1e-9);
    }
}

TEST_CASE("membership consistency via support-function separation") {
    const double rho = 1.3;
    CholeskyShape L = random_shape(4, 42);
    for (std::uint64_t s = 0; s < 50; ++s) {
        Vector u = 2.0 * random_vector(4, 700 + s, "u");
        const double score = gauge(L, u);
        if (score <= rho) {
            // Inside: no sampled direction may separate it from the set.
            for (std::uint64_t t = 0; t < 50; ++t) {
                Vector w = random_vector(4, 10000 + 50 * s + t, "w");
                CHECK(w.dot(u) <= support(L, rho, w) + 1e-9);
            }
        } else {
            // Outside: the whitened direction certifies separation.
            Vector v = L.entries.triangularView<Eigen::Lower>().solve(u);
            Vector w = L.entries.transpose().triangularView<Eigen::Upper>().solve(v);
            CHECK(w.dot(u) > support(L, rho, w) + 1e-12);
        }
    }
}

TEST_CASE("shape JSON round trip") {
    CholeskyShape L = random_shape(3, 9);
    nlohmann::json j = L;
    CholeskyShape back = j.get<CholeskyShape>();
    CHECK(back.dim == L.dim);
    CHECK((back.entries - L.entries).norm() == 0.0);
    CHECK(j.at("rows").size() == 3);
}
