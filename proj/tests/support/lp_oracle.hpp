#pragma once

// Brute-force LP oracle: enumerates candidate vertices as solutions of square
// active-constraint systems (all equalities plus n - m_eq rows chosen from the
// inequality rows and variable bounds), keeps the feasible ones, and returns
// the best objective. Independent of the simplex implementation.

#include <Eigen/LU>
#include <cmath>
#include <functional>
#include <vector>

#include "rsl/lp.hpp"

namespace rsl::test {

struct VertexOracleResult {
    bool feasible = false;
    double objective = 0.0;
    Vector argmin;
};

namespace oracle_detail {

struct CandidateRow {
    Vector coeffs;
    double rhs;
};

inline void combinations(int n, int k, const std::function<void(const std::vector<int>&)>& visit) {
    std::vector<int> idx(k);
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == k) {
            visit(idx);
            return;
        }
        for (int i = start; i <= n - (k - depth); ++i) {
            idx[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    if (k == 0)
        visit({});
    else
        rec(0, 0);
}

}  // namespace oracle_detail

inline VertexOracleResult enumerate_lp_vertices(const LpProblem& p, double tol = 1e-9) {
    using oracle_detail::CandidateRow;
    const int n = p.num_vars();
    const int m_eq = p.num_eq();

    std::vector<CandidateRow> cands;
    for (int i = 0; i < p.num_ub(); ++i)
        cands.push_back({p.ub_matrix.row(i).transpose(), p.ub_rhs[i]});
    for (int j = 0; j < n; ++j) {
        if (std::isfinite(p.lower[j])) {
            Vector e = Vector::Zero(n);
            e[j] = 1.0;
            cands.push_back({e, p.lower[j]});
        }
        if (std::isfinite(p.upper[j])) {
            Vector e = Vector::Zero(n);
            e[j] = 1.0;
            cands.push_back({e, p.upper[j]});
        }
    }

    VertexOracleResult best;
    const int pick = n - m_eq;
    if (pick < 0 || pick > static_cast<int>(cands.size())) return best;

    oracle_detail::combinations(static_cast<int>(cands.size()), pick,
                                [&](const std::vector<int>& chosen) {
        Matrix A(n, n);
        Vector b(n);
        for (int i = 0; i < m_eq; ++i) {
            A.row(i) = p.eq_matrix.row(i);
            b[i] = p.eq_rhs[i];
        }
        for (int k = 0; k < pick; ++k) {
            A.row(m_eq + k) = cands[chosen[k]].coeffs.transpose();
            b[m_eq + k] = cands[chosen[k]].rhs;
        }
        Eigen::FullPivLU<Matrix> lu(A);
        if (lu.rank() < n) return;
        Vector x = lu.solve(b);
        if (!x.allFinite()) return;

        for (int j = 0; j < n; ++j) {
            if (std::isfinite(p.lower[j]) && x[j] < p.lower[j] - tol) return;
            if (std::isfinite(p.upper[j]) && x[j] > p.upper[j] + tol) return;
        }
        for (int i = 0; i < p.num_ub(); ++i)
            if (p.ub_matrix.row(i).dot(x) > p.ub_rhs[i] + tol) return;
        for (int i = 0; i < m_eq; ++i)
            if (std::abs(p.eq_matrix.row(i).dot(x) - p.eq_rhs[i]) > tol) return;

        const double obj = p.cost.dot(x);
        if (!best.feasible || obj < best.objective) {
            best.feasible = true;
            best.objective = obj;
            best.argmin = x;
        }
    });
    return best;
}

}  // namespace rsl::test
