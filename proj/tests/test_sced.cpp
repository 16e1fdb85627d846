#include <doctest.h>

#include <cmath>

#include "rsl/sced.hpp"
#include "support/finite_diff.hpp"
#include "support/toy_systems.hpp"

using namespace rsl;

namespace {

double value_at(const ZonalSystem& sys, const CholeskyShape& L, double rho,
                const TransferLimits* tl = nullptr) {
    ScedSolution s = solve_sced(sys, L, rho, tl);
    REQUIRE(s.status == LpStatus::Optimal);
    return s.objective;
}

bool dispatch_degenerate(const ZonalSystem& sys, const CholeskyShape& L, double rho,
                         const TransferLimits* tl = nullptr) {
    LpProblem p = tl ? build_coupled(sys, L, rho, *tl) : build_decoupled(sys, L, rho);
    return duals_degenerate(p);
}

}  // namespace

TEST_CASE("reserve_requirement matches the support function") {
    ZonalSystem sys = test::one_zone_system();
    CholeskyShape id = CholeskyShape::identity(1);
    CHECK(reserve_requirement(id, 1.0, sys, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(reserve_requirement(id, 1e-12, sys, 0) == doctest::Approx(0.0).epsilon(1e-11));

    ZonalSystem t = test::toy_system(3, 4, 5);
    CholeskyShape L = test::toy_shape(4, 6);
    for (int z = 0; z < 3; ++z) {
        const double want = support(L, 1.7, t.exposure(z));
        CHECK(std::abs(reserve_requirement(L, 1.7, t, z) - want) <= 1e-12 * (1.0 + want));
    }
}

TEST_CASE("decoupled SCED: hand-solved one-zone system") {
    ZonalSystem sys = test::one_zone_system();
    CholeskyShape id = CholeskyShape::identity(1);

    ScedSolution s = solve_sced(sys, id, 10.0);  // R = 10
    REQUIRE(s.status == LpStatus::Optimal);
    CHECK(s.dispatch[0] == doctest::Approx(50.0));
    CHECK(s.reserve[0] == doctest::Approx(10.0));
    CHECK(s.objective == doctest::Approx(510.0));
    CHECK(s.reserve_duals[0] == doctest::Approx(1.0));
    CHECK(s.transfer_duals[0] == 0.0);

    // Vanishing requirement: reserves collapse.
    ScedSolution s0 = solve_sced(sys, id, 1e-13);
    REQUIRE(s0.status == LpStatus::Optimal);
    CHECK(s0.reserve[0] <= 1e-12);

    // Zero requirement (zone with no exposure): r = 0 and mu = 0 at optimum.
    ZonalSystem two = sys;
    two.zones.push_back({2, 30.0});
    two.generators.push_back({2, 0.0, 100.0, 20.0, 2.0});
    two.allocation = Matrix::Zero(2, 1);
    two.allocation(0, 0) = 1.0;  // zone 2 row is all zeros
    ScedSolution s2 = solve_sced(two, id, 10.0);
    REQUIRE(s2.status == LpStatus::Optimal);
    CHECK(s2.reserve[1] == doctest::Approx(0.0));
    CHECK(s2.reserve_duals[1] == 0.0);

    // Capacity 55 cannot host load 50 plus requirement 10.
    ZonalSystem tight = sys;
    tight.generators[0].g_max_mw = 55.0;
    CHECK(solve_sced(tight, id, 10.0).status == LpStatus::Infeasible);
}

TEST_CASE("transfer limits: construction and alpha=1 feasibility") {
    ZonalSystem sys = test::toy_system(2, 3, 11);
    CholeskyShape L = test::toy_shape(3, 12);
    const double rho = 2.0;

    std::set<int> tight = {1, 2};
    TransferLimits tl = compute_transfer_limits(sys, L, rho, tight, 1.0, 1.0);
    // At alpha = 1 the base dispatch is exactly feasible for the coupled problem.
    ScedSolution s = solve_sced(sys, L, rho, &tl);
    CHECK(s.status == LpStatus::Optimal);

    // One-zone system: balance makes |g - D| = 0, so T = alpha * rho * ||L^T A||.
    ZonalSystem one = test::one_zone_system();
    CholeskyShape id = CholeskyShape::identity(1);
    TransferLimits tl1 = compute_transfer_limits(one, id, 3.0, {1}, 0.9, 1.5);
    CHECK(tl1.limits.at(1) == doctest::Approx(0.9 * 3.0));

    // Base infeasible propagates.
    ZonalSystem bad = test::one_zone_system();
    bad.generators[0].g_max_mw = 55.0;
    CHECK_THROWS_AS(compute_transfer_limits(bad, id, 10.0, {1}, 0.9, 1.5), BaseInfeasible);
}

TEST_CASE("coupled SCED: slack limits reproduce decoupled; tight limits bind or kill") {
    ZonalSystem sys = test::toy_system(2, 3, 21);
    CholeskyShape L = test::toy_shape(3, 22);
    const double rho = 1.5;

    TransferLimits huge;
    huge.tight_zones = {1, 2};
    for (const auto& z : sys.zones) huge.limits[z.id] = 1e7;
    CHECK(std::abs(value_at(sys, L, rho, &huge) - value_at(sys, L, rho)) <= 1e-8);

    // T below the robust margin: the two rows are jointly unsatisfiable.
    TransferLimits tiny = huge;
    const double margin0 = rho * (L.entries.transpose() * sys.exposure(0)).norm();
    tiny.limits[sys.zones[0].id] = 0.5 * margin0;
    CHECK(solve_sced(sys, L, rho, &tiny).status == LpStatus::Infeasible);
}

TEST_CASE("coupled SCED: forcing local generation raises cost strictly") {
    // Zone 1 cheap and oversized, zone 2 expensive: flow 1 -> 2 is natural.
    ZonalSystem sys;
    sys.zones = {{1, 50.0}, {2, 100.0}};
    sys.generators = {{1, 0.0, 200.0, 10.0, 1.0}, {2, 0.0, 200.0, 40.0, 2.0}};
    sys.allocation = Matrix::Identity(2, 2);
    CholeskyShape id = CholeskyShape::identity(2);
    const double rho = 2.0;

    const double free_flow = value_at(sys, id, rho);
    TransferLimits tl;
    tl.tight_zones = {2};
    tl.limits[1] = 1e7;
    tl.limits[2] = 10.0;  // zone 2 may import at most 10 net of the robust margin
    const double capped = value_at(sys, id, rho, &tl);
    CHECK(capped > free_flow + 1.0);

    ScedSolution s = solve_sced(sys, id, rho, &tl);
    CHECK(s.transfer_duals[1] > 0.0);  // the import cap binds
    CHECK(s.transfer_duals[0] == 0.0);
}

TEST_CASE("envelope gradients: zero duals give zero gradients") {
    ZonalSystem sys = test::one_zone_system();
    sys.allocation.setZero();  // no exposure anywhere: every zonal dual is 0
    CholeskyShape id = CholeskyShape::identity(1);
    ScedSolution s = solve_sced(sys, id, 2.0);
    REQUIRE(s.status == LpStatus::Optimal);
    CHECK(s.reserve_duals.norm() == 0.0);
    CHECK(envelope_grad_L(sys, s, id, 2.0).entries.norm() == 0.0);
    CHECK(envelope_grad_rho(sys, s, id) == 0.0);
}

TEST_CASE("envelope gradient in rho: hand value and finite differences") {
    ZonalSystem sys = test::one_zone_system();
    CholeskyShape id = CholeskyShape::identity(1);
    ScedSolution s = solve_sced(sys, id, 10.0);
    CHECK(envelope_grad_rho(sys, s, id) == doctest::Approx(1.0));

    ZonalSystem t = test::toy_system(3, 4, 31);
    CholeskyShape L = test::toy_shape(4, 32);
    const double rho = 2.0;
    REQUIRE_FALSE(dispatch_degenerate(t, L, rho));
    ScedSolution st = solve_sced(t, L, rho);
    REQUIRE(st.status == LpStatus::Optimal);
    const double grad = envelope_grad_rho(t, st, L);
    const double fd = test::fd_scalar([&](double r) { return value_at(t, L, r); }, rho, 1e-5);
    CHECK(std::abs(grad - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    CHECK(grad >= 0.0);
}

TEST_CASE("envelope gradient in L matches finite differences (decoupled)") {
    ZonalSystem sys = test::toy_system(2, 2, 41);
    CholeskyShape L = test::toy_shape(2, 42);
    const double rho = 2.5;
    REQUIRE_FALSE(dispatch_degenerate(sys, L, rho));

    ScedSolution s = solve_sced(sys, L, rho);
    REQUIRE(s.status == LpStatus::Optimal);
    ShapeGradient g = envelope_grad_L(sys, s, L, rho);
    Matrix fd = test::fd_shape_gradient(
        L, [&](const CholeskyShape& l) { return value_at(sys, l, rho); }, 1e-5);
    CHECK(test::rel_error(g.entries, fd) < 1e-4);
}

TEST_CASE("envelope gradient in L matches finite differences (coupled, binding row)") {
    ZonalSystem sys;
    sys.zones = {{1, 50.0}, {2, 100.0}};
    sys.generators = {{1, 0.0, 200.0, 10.0, 1.0}, {2, 0.0, 200.0, 40.0, 2.0}};
    sys.allocation = Matrix::Identity(2, 2);
    CholeskyShape L = test::toy_shape(2, 52);
    const double rho = 2.0;

    TransferLimits tl;
    tl.tight_zones = {2};
    tl.limits[1] = 1e7;
    tl.limits[2] = 10.0;
    ScedSolution s = solve_sced(sys, L, rho, &tl);
    REQUIRE(s.status == LpStatus::Optimal);
    REQUIRE(s.transfer_duals[1] > 0.0);

    ShapeGradient g = envelope_grad_L(sys, s, L, rho);
    Matrix fd = test::fd_shape_gradient(
        L, [&](const CholeskyShape& l) { return value_at(sys, l, rho, &tl); }, 1e-5);
    CHECK(test::rel_error(g.entries, fd) < 1e-4);

    const double grad_rho = envelope_grad_rho(sys, s, L);
    const double fd_rho =
        test::fd_scalar([&](double r) { return value_at(sys, L, r, &tl); }, rho, 1e-5);
    CHECK(std::abs(grad_rho - fd_rho) <= 1e-4 * std::max(1.0, std::abs(fd_rho)));
}

TEST_CASE("value function is nondecreasing in rho") {
    ZonalSystem sys = test::toy_system(3, 4, 61);
    CholeskyShape L = test::toy_shape(4, 62);
    double prev = -kInf;
    for (double rho : {0.2, 0.5, 1.0, 1.8, 2.7, 4.0}) {
        const double v = value_at(sys, L, rho);
        CHECK(v >= prev - 1e-9);
        prev = v;
    }
}

TEST_CASE("coupled objective dominates decoupled for identical inputs") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ZonalSystem sys = test::toy_system(3, 3, 70 + seed);
        CholeskyShape L = test::toy_shape(3, 80 + seed);
        const double rho = 1.0 + 0.3 * static_cast<double>(seed);
        TransferLimits tl = compute_transfer_limits(sys, L, rho, {sys.zones[0].id}, 0.9, 1.5);
        ScedSolution c = solve_sced(sys, L, rho, &tl);
        if (c.status != LpStatus::Optimal) continue;  // alpha_tight may cut too deep
        const double dec = value_at(sys, L, rho);
        CHECK(c.objective >= dec - 1e-9);
    }
}

TEST_CASE("robust absolute-value bound: sampled worst case never exceeds it") {
    StreamRng rng(7, "robust-abs");
    for (int inst = 0; inst < 5; ++inst) {
        CholeskyShape L = test::toy_shape(3, 90 + inst);
        const double rho = 0.5 + 2.0 * rng.uniform();
        Vector w(3);
        for (int k = 0; k < 3; ++k) w[k] = rng.normal();
        const double f0 = 2.0 * rng.normal();
        const double bound = std::abs(f0) + support(L, rho, w);
        double worst = 0.0;
        for (int s = 0; s < 2000; ++s) {
            Vector v(3);
            for (int k = 0; k < 3; ++k) v[k] = rng.normal();
            v *= rho * std::pow(rng.uniform(), 1.0 / 3.0) / v.norm();  // gauge(u) <= rho
            Vector u = L.entries * v;
            worst = std::max(worst, std::abs(f0 + w.dot(u)));
        }
        CHECK(worst <= bound + 1e-9);
    }
}

TEST_CASE("system JSON round trip preserves the LP it builds") {
    ZonalSystem sys = test::toy_system(3, 4, 99);
    nlohmann::json j = sys;
    ZonalSystem back = j.get<ZonalSystem>();
    CholeskyShape L = test::toy_shape(4, 100);
    CHECK(value_at(back, L, 1.3) == doctest::Approx(value_at(sys, L, 1.3)).epsilon(1e-12));
}
