#pragma once

// Built-in oracle suites behind `rsl selftest`: quick independent checks of
// the analytic gradients, the LP solver, the conformal guarantee, and the
// assembled profiled gradient. Each oracle recomputes its expected values from
// first principles (finite differences, vertex enumeration, Monte-Carlo).

#include <Eigen/LU>
#include <cstdio>
#include <functional>
#include <vector>

#include "rsl/eval.hpp"
#include "rsl/quantile.hpp"
#include "rsl/rng.hpp"
#include "rsl/sced.hpp"
#include "rsl/train.hpp"

namespace rsl::selftest {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline CholeskyShape random_shape(int d, std::uint64_t seed) {
    StreamRng rng(seed, "selftest-shape");
    Matrix m = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) m(i, j) = 0.3 * rng.normal();
        m(i, i) = 0.5 + rng.uniform();
    }
    return CholeskyShape(d, m);
}

inline Matrix fd_lower(const CholeskyShape& L,
                       const std::function<double(const CholeskyShape&)>& f, double h) {
    Matrix g = Matrix::Zero(L.dim, L.dim);
    for (int i = 0; i < L.dim; ++i)
        for (int j = 0; j <= i; ++j) {
            CholeskyShape p = L, q = L;
            p.entries(i, j) += h;
            q.entries(i, j) -= h;
            g(i, j) = (f(p) - f(q)) / (2.0 * h);
        }
    return g;
}

inline double rel_err(const Matrix& got, const Matrix& want) {
    return (got - want).norm() / std::max(want.norm(), 1e-300);
}

inline CheckResult check_ellipsoid_gradients() {
    CheckResult r{"ellipsoid-gradients-fd", true, ""};
    double worst = 0.0;
    for (int d : {2, 4, 8}) {
        for (std::uint64_t s = 0; s < 4; ++s) {
            CholeskyShape L = random_shape(d, 100 * d + s);
            StreamRng rng(s, "selftest-vec", d);
            Vector w(d), u(d);
            for (int k = 0; k < d; ++k) {
                w[k] = rng.normal();
                u[k] = rng.normal();
            }
            const double rho = 0.5 + rng.uniform();
            worst = std::max(worst, rel_err(grad_support_L(L, rho, w).entries,
                                            fd_lower(L, [&](const CholeskyShape& l) {
                                                return support(l, rho, w);
                                            }, 1e-6)));
            worst = std::max(worst, rel_err(grad_gauge_L(L, u).entries,
                                            fd_lower(L, [&](const CholeskyShape& l) {
                                                return gauge(l, u);
                                            }, 1e-6)));
            const double hom =
                std::abs(support(L, 2.0 * rho, w) - 2.0 * support(L, rho, w));
            if (hom > 1e-12 * std::max(1.0, support(L, rho, w))) {
                r.pass = false;
                r.detail = "homogeneity violated";
            }
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max fd rel err %.2e (need <= 1e-5)", worst);
    if (worst > 1e-5) r.pass = false;
    if (r.detail.empty()) r.detail = buf;
    return r;
}

// Compact vertex enumeration over active-set systems, independent of simplex.
inline double enumerate_lp_min(const LpProblem& p) {
    const int n = p.num_vars();
    const int m_eq = p.num_eq();
    std::vector<std::pair<Vector, double>> cands;
    for (int i = 0; i < p.num_ub(); ++i)
        cands.push_back({p.ub_matrix.row(i).transpose(), p.ub_rhs[i]});
    for (int j = 0; j < n; ++j) {
        Vector e = Vector::Zero(n);
        e[j] = 1.0;
        if (std::isfinite(p.lower[j])) cands.push_back({e, p.lower[j]});
        if (std::isfinite(p.upper[j])) cands.push_back({e, p.upper[j]});
    }
    const int pick = n - m_eq;
    double best = kInf;
    std::vector<int> idx(pick);
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == pick) {
            Matrix a(n, n);
            Vector b(n);
            for (int i = 0; i < m_eq; ++i) {
                a.row(i) = p.eq_matrix.row(i);
                b[i] = p.eq_rhs[i];
            }
            for (int k = 0; k < pick; ++k) {
                a.row(m_eq + k) = cands[idx[k]].first.transpose();
                b[m_eq + k] = cands[idx[k]].second;
            }
            Eigen::FullPivLU<Matrix> lu(a);
            if (lu.rank() < n) return;
            Vector x = lu.solve(b);
            for (int j = 0; j < n; ++j) {
                if (std::isfinite(p.lower[j]) && x[j] < p.lower[j] - 1e-9) return;
                if (std::isfinite(p.upper[j]) && x[j] > p.upper[j] + 1e-9) return;
            }
            for (int i = 0; i < p.num_ub(); ++i)
                if (p.ub_matrix.row(i).dot(x) > p.ub_rhs[i] + 1e-9) return;
            best = std::min(best, p.cost.dot(x));
            return;
        }
        for (int i = start; i <= static_cast<int>(cands.size()) - (pick - depth); ++i) {
            idx[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

inline CheckResult check_lp_oracle() {
    CheckResult r{"lp-vertex-enumeration", true, ""};
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const int n = 5, m = 6;
        StreamRng rng(s, "selftest-lp");
        LpProblem p;
        p.cost = Vector(n);
        for (int j = 0; j < n; ++j) p.cost[j] = rng.normal();
        p.lower = Vector::Zero(n);
        p.upper = Vector::Ones(n);
        p.ub_matrix = Matrix(m, n);
        p.ub_rhs = Vector(m);
        Vector center = Vector::Constant(n, 0.5);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) p.ub_matrix(i, j) = rng.normal();
            p.ub_rhs[i] = p.ub_matrix.row(i).dot(center) + 0.1 + 0.5 * rng.uniform();
        }
        p.tags.assign(m, RowTag::other());
        if (s % 3 == 0) {
            p.eq_matrix = Matrix::Constant(1, n, 1.0);
            p.eq_rhs = Vector::Constant(1, 2.5);
        } else {
            p.eq_matrix = Matrix(0, n);
            p.eq_rhs = Vector(0);
        }
        LpSolution sol = solve_lp(p);
        if (sol.status != LpStatus::Optimal) {
            r.pass = false;
            r.detail = "solver failed a feasible bounded instance";
            return r;
        }
        worst = std::max(worst, std::abs(sol.objective - enumerate_lp_min(p)));
        worst = std::max(worst, std::abs(sol.objective - dual_objective(p, sol)));
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max objective deviation %.2e (need <= 1e-8)", worst);
    if (worst > 1e-8) r.pass = false;
    r.detail = buf;
    return r;
}

inline CheckResult check_conformal_mc() {
    CheckResult r{"conformal-monte-carlo", true, ""};
    const int d = 3, n_cal = 99, trials = 2000;
    const double tau = 0.9;
    CholeskyShape L = random_shape(d, 777);
    long covered = 0;
    for (int trial = 0; trial < trials; ++trial) {
        StreamRng rng(12345, "conformal-mc", trial);
        Vector s(n_cal), fresh(d);
        for (int i = 0; i < n_cal; ++i) {
            Vector u(d);
            for (int k = 0; k < d; ++k) u[k] = rng.normal();
            s[i] = gauge(L, u);
        }
        for (int k = 0; k < d; ++k) fresh[k] = rng.normal();
        if (gauge(L, fresh) <= conformal_radius(s, tau).rho_tau) ++covered;
    }
    const double mean = static_cast<double>(covered) / trials;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "mean coverage %.4f (need in [0.90, 0.93])", mean);
    r.detail = buf;
    r.pass = mean >= 0.90 && mean <= 0.93;
    return r;
}

inline CheckResult check_profiled_gradient() {
    CheckResult r{"profiled-gradient-fd", true, ""};
    ZonalSystem sys;
    sys.zones = {{1, 50.0}};
    sys.generators = {{1, 0.0, 60.0, 12.0, 2.0}, {1, 0.0, 60.0, 28.0, 5.0}};
    sys.allocation = Matrix::Zero(1, 2);
    sys.allocation << 0.7, 0.3;

    StreamRng rng(7, "selftest-tune");
    Matrix tune(500, 2);
    for (int i = 0; i < 500; ++i) {
        const double a = rng.normal(), b = rng.normal();
        tune(i, 0) = a;
        tune(i, 1) = 0.4 * a + 0.8 * b;
    }
    CholeskyShape L = random_shape(2, 5);
    TrainConfig cfg;
    cfg.tau = 0.9;
    cfg.eps = 0.3;
    ProfiledGradient pg = profiled_gradient(L, sys, tune, cfg);
    Matrix fd = fd_lower(
        L,
        [&](const CholeskyShape& l) {
            SmoothedQuantile sq = smoothed_quantile(scores(l, tune), cfg.tau, cfg.eps, cfg.kernel);
            return solve_sced(sys, l, sq.rho_eps).objective;
        },
        1e-5);
    const double err = rel_err(pg.grad.entries, fd);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "end-to-end fd rel err %.2e (need <= 1e-3)", err);
    r.detail = buf;
    r.pass = err <= 1e-3;
    return r;
}

}  // namespace detail

inline int run_selftest() {
    std::vector<CheckResult> results;
    results.push_back(detail::check_ellipsoid_gradients());
    results.push_back(detail::check_lp_oracle());
    results.push_back(detail::check_conformal_mc());
    results.push_back(detail::check_profiled_gradient());
    bool all = true;
    for (const auto& r : results) {
        std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        all = all && r.pass;
    }
    return all ? 0 : 1;
}

}  // namespace rsl::selftest

namespace rsl {

inline int cmd_selftest() { return selftest::run_selftest(); }

}  // namespace rsl
