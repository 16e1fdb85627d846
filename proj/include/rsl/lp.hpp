#pragma once

#include <Eigen/Core>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "rsl/errors.hpp"

namespace rsl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Role of an inequality row, used to route dual multipliers back to zones.
struct RowTag {
    enum class Kind { Other, Reserve, TransferUpper, TransferLower };
    Kind kind = Kind::Other;
    int zone = -1;

    static RowTag other() { return {}; }
    static RowTag reserve(int z) { return {Kind::Reserve, z}; }
    static RowTag transfer_upper(int z) { return {Kind::TransferUpper, z}; }
    static RowTag transfer_lower(int z) { return {Kind::TransferLower, z}; }
};

/// Dense LP: min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lower <= x <= upper.
struct LpProblem {
    Vector cost;
    Matrix eq_matrix;  // m_eq x n (0 x n allowed)
    Vector eq_rhs;
    Matrix ub_matrix;  // m_ub x n
    Vector ub_rhs;
    Vector lower;      // -inf allowed
    Vector upper;      // +inf allowed
    std::vector<RowTag> tags;  // one per ub row

    int num_vars() const { return static_cast<int>(cost.size()); }
    int num_eq() const { return static_cast<int>(eq_rhs.size()); }
    int num_ub() const { return static_cast<int>(ub_rhs.size()); }

    void validate() const {
        const int n = num_vars();
        if (eq_matrix.size() > 0 && (eq_matrix.cols() != n || eq_matrix.rows() != num_eq()))
            throw Error("LpProblem: eq dimensions inconsistent");
        if (ub_matrix.size() > 0 && (ub_matrix.cols() != n || ub_matrix.rows() != num_ub()))
            throw Error("LpProblem: ub dimensions inconsistent");
        if (num_ub() > 0 && tags.size() != static_cast<size_t>(num_ub()))
            throw Error("LpProblem: tag per ub row required");
        if (lower.size() != n || upper.size() != n) throw Error("LpProblem: bound vectors sized wrong");
        if (!cost.allFinite()) throw Error("LpProblem: non-finite cost");
        if ((eq_matrix.size() > 0 && !eq_matrix.allFinite()) || !eq_rhs.allFinite() ||
            (ub_matrix.size() > 0 && !ub_matrix.allFinite()) || !ub_rhs.allFinite())
            throw Error("LpProblem: non-finite constraint data");
        for (int j = 0; j < n; ++j) {
            if (std::isnan(lower[j]) || std::isnan(upper[j])) throw Error("LpProblem: NaN bound");
            if (lower[j] > upper[j]) throw Error("LpProblem: lower > upper");
        }
    }
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpSolution {
    Vector x;
    double objective = 0.0;
    Vector duals_ub;  // >= 0: marginal cost of tightening each ub row by one unit
    Vector duals_eq;  // marginal cost of raising each eq rhs by one unit
    LpStatus status = LpStatus::Infeasible;
};

/// Lagrangian dual value at the solution's multipliers. Strong duality makes
/// this match the primal objective at a clean optimal basis.
inline double dual_objective(const LpProblem& p, const LpSolution& s) {
    if (s.status != LpStatus::Optimal) throw NotOptimal("dual_objective: solution not Optimal");
    const int n = p.num_vars();
    double g = 0.0;
    for (int i = 0; i < p.num_eq(); ++i) g += s.duals_eq[i] * p.eq_rhs[i];
    for (int i = 0; i < p.num_ub(); ++i) g -= s.duals_ub[i] * p.ub_rhs[i];
    Vector r = p.cost;
    if (p.num_eq() > 0) r -= p.eq_matrix.transpose() * s.duals_eq;
    if (p.num_ub() > 0) r += p.ub_matrix.transpose() * s.duals_ub;
    // Reduced costs of basic variables are zero only up to rounding; snapping
    // |r| below tolerance avoids spuriously selecting an infinite bound.
    constexpr double kTol = 1e-9;
    for (int j = 0; j < n; ++j) {
        if (r[j] > kTol) {
            if (!std::isfinite(p.lower[j])) return -kInf;
            g += r[j] * p.lower[j];
        } else if (r[j] < -kTol) {
            if (!std::isfinite(p.upper[j])) return -kInf;
            g += r[j] * p.upper[j];
        }
    }
    return g;
}

namespace detail {

/// Bounded-variable two-phase revised simplex over the augmented system
/// [A_eq 0; A_ub I][x; s] = [b_eq; b_ub] with one artificial column per row.
/// Dense basis inverse with product-form updates, periodic refactorization.
/// Dantzig pricing, lowest-index ties; Bland's rule after 5(n+m) iterations.
class SimplexSolver {
public:
    explicit SimplexSolver(const LpProblem& p) : p_(p) {
        n_ = p.num_vars();
        m_eq_ = p.num_eq();
        m_ub_ = p.num_ub();
        M_ = m_eq_ + m_ub_;
        nslack_ = m_ub_;
        N_ = n_ + nslack_ + M_;  // structurals, slacks, artificials

        A_ = Matrix::Zero(M_, N_);
        if (m_eq_ > 0) A_.block(0, 0, m_eq_, n_) = p.eq_matrix;
        if (m_ub_ > 0) {
            A_.block(m_eq_, 0, m_ub_, n_) = p.ub_matrix;
            A_.block(m_eq_, n_, m_ub_, m_ub_) = Matrix::Identity(m_ub_, m_ub_);
        }
        b_.resize(M_);
        if (m_eq_ > 0) b_.head(m_eq_) = p.eq_rhs;
        if (m_ub_ > 0) b_.tail(m_ub_) = p.ub_rhs;

        lo_ = Vector::Constant(N_, 0.0);
        hi_ = Vector::Constant(N_, kInf);
        lo_.head(n_) = p.lower;
        hi_.head(n_) = p.upper;
        // Slacks are [0, inf); artificial signs are set once residuals are known.
    }

    LpSolution solve() {
        initialize_basis();

        // Phase 1: minimize the sum of artificials.
        Vector phase1_cost = Vector::Zero(N_);
        phase1_cost.tail(M_).setConstant(1.0);
        RunResult r1 = run(phase1_cost, /*allow_unbounded=*/false);
        if (r1 == RunResult::Stalled) throw SolverStall("simplex: phase 1 iteration limit");
        refactorize();
        const double b_scale = M_ > 0 ? b_.cwiseAbs().maxCoeff() : 0.0;
        if (phase1_objective() > 1e-9 * (1.0 + b_scale)) return make_result(LpStatus::Infeasible);

        pin_artificials();

        // Phase 2: real costs on structurals.
        cost_ = Vector::Zero(N_);
        cost_.head(n_) = p_.cost;
        RunResult r2 = run(cost_, /*allow_unbounded=*/true);
        if (r2 == RunResult::Stalled) throw SolverStall("simplex: phase 2 iteration limit");
        if (r2 == RunResult::Unbounded) return make_result(LpStatus::Unbounded);
        refactorize();
        return make_result(LpStatus::Optimal);
    }

private:
    enum class Status { Basic, AtLower, AtUpper, Free };
    enum class RunResult { Optimal, Unbounded, Stalled };

    void initialize_basis() {
        x_ = Vector::Zero(N_);
        status_.assign(N_, Status::AtLower);
        for (int j = 0; j < n_ + nslack_; ++j) {
            if (std::isfinite(lo_[j])) {
                x_[j] = lo_[j];
                status_[j] = Status::AtLower;
            } else if (std::isfinite(hi_[j])) {
                x_[j] = hi_[j];
                status_[j] = Status::AtUpper;
            } else {
                x_[j] = 0.0;
                status_[j] = Status::Free;
            }
        }
        Vector resid = b_;
        for (int j = 0; j < n_ + nslack_; ++j)
            if (x_[j] != 0.0) resid -= A_.col(j) * x_[j];

        basis_.resize(M_);
        Binv_ = Matrix::Zero(M_, M_);
        for (int i = 0; i < M_; ++i) {
            const int aj = n_ + nslack_ + i;
            const double sign = resid[i] >= 0.0 ? 1.0 : -1.0;
            A_(i, aj) = sign;
            x_[aj] = std::abs(resid[i]);
            status_[aj] = Status::Basic;
            basis_[i] = aj;
            Binv_(i, i) = sign;
        }
    }

    /// Lock artificials at zero for phase 2. Basic artificials stuck at zero are
    /// pivoted out where a usable column exists; a dependent row keeps its
    /// artificial basic at value zero, harmlessly.
    void pin_artificials() {
        for (int i = 0; i < M_; ++i) {
            const int art = basis_[i];
            if (art < n_ + nslack_) continue;
            for (int q = 0; q < n_ + nslack_; ++q) {
                if (status_[q] == Status::Basic) continue;
                Vector d = Binv_ * A_.col(q);
                if (std::abs(d[i]) > 1e-7) {
                    pivot(q, i, d, /*enter_value=*/x_[q]);
                    status_[art] = Status::AtLower;
                    x_[art] = 0.0;
                    break;
                }
            }
        }
        for (int j = n_ + nslack_; j < N_; ++j) {
            lo_[j] = 0.0;
            hi_[j] = 0.0;
        }
    }

    RunResult run(const Vector& c, bool allow_unbounded) {
        cost_ = c;
        const long bland_after = 5L * (N_ + M_);
        const long max_iter = 50L * (N_ + M_) + 10000;
        for (long iter = 0; iter < max_iter; ++iter) {
            if (iters_since_refactor_ > 64) refactorize();
            const bool bland = iter >= bland_after;

            Vector y = Binv_.transpose() * basic_costs();
            int q = -1;
            double q_dir = 0.0, best = -kDualTol;
            for (int j = 0; j < N_; ++j) {
                if (status_[j] == Status::Basic) continue;
                if (lo_[j] == hi_[j]) continue;  // fixed (pinned artificials)
                const double rj = cost_[j] - y.dot(A_.col(j));
                double viol = 0.0, dir = 0.0;
                if (status_[j] == Status::AtLower || status_[j] == Status::Free) {
                    if (rj < -kDualTol) {
                        viol = -rj;
                        dir = 1.0;
                    }
                }
                if (viol == 0.0 && (status_[j] == Status::AtUpper || status_[j] == Status::Free)) {
                    if (rj > kDualTol) {
                        viol = rj;
                        dir = -1.0;
                    }
                }
                if (viol > 0.0) {
                    if (bland) {
                        q = j;
                        q_dir = dir;
                        break;
                    }
                    if (viol > best + 1e-15) {
                        best = viol;
                        q = j;
                        q_dir = dir;
                    }
                }
            }
            if (q < 0) return RunResult::Optimal;

            Vector d = Binv_ * A_.col(q);

            // Ratio test: smallest step that drives a basic variable (or the
            // entering variable itself) to a bound. Ties -> lowest variable index.
            double t_max = kInf;
            if (std::isfinite(lo_[q]) && std::isfinite(hi_[q])) t_max = hi_[q] - lo_[q];
            double t_best = t_max;
            int leave_row = -1;  // -1 with finite t_best means bound flip
            bool leave_to_upper = false;
            for (int i = 0; i < M_; ++i) {
                const double delta = -q_dir * d[i];  // rate of change of x_B[i]
                const int bj = basis_[i];
                double limit = kInf;
                bool to_upper = false;
                if (delta < -kPivotTol && std::isfinite(lo_[bj])) {
                    limit = (x_[bj] - lo_[bj]) / (-delta);
                } else if (delta > kPivotTol && std::isfinite(hi_[bj])) {
                    limit = (hi_[bj] - x_[bj]) / delta;
                    to_upper = true;
                } else {
                    continue;
                }
                if (limit < 0.0) limit = 0.0;
                if (limit < t_best - 1e-12 ||
                    (limit < t_best + 1e-12 && leave_row >= 0 && bj < basis_[leave_row])) {
                    t_best = limit;
                    leave_row = i;
                    leave_to_upper = to_upper;
                }
            }

            if (!std::isfinite(t_best)) {
                if (allow_unbounded) return RunResult::Unbounded;
                throw NumericalError("simplex: unbounded ray in phase 1");
            }

            if (leave_row < 0) {
                // Bound flip: entering variable crosses its full range.
                const double t = t_best;
                for (int i = 0; i < M_; ++i) x_[basis_[i]] += -q_dir * d[i] * t;
                x_[q] += q_dir * t;
                status_[q] = (q_dir > 0.0) ? Status::AtUpper : Status::AtLower;
            } else {
                const double t = t_best;
                const int leaving = basis_[leave_row];
                for (int i = 0; i < M_; ++i) x_[basis_[i]] += -q_dir * d[i] * t;
                x_[q] += q_dir * t;
                x_[leaving] = leave_to_upper ? hi_[leaving] : lo_[leaving];
                status_[leaving] = leave_to_upper ? Status::AtUpper : Status::AtLower;
                pivot(q, leave_row, d, x_[q]);
            }
        }
        return RunResult::Stalled;
    }

    /// Replace basis column `row` by variable q; product-form inverse update,
    /// falling back to a fresh factorization when the pivot element is tiny.
    void pivot(int q, int row, const Vector& d, double enter_value) {
        status_[q] = Status::Basic;
        basis_[row] = q;
        x_[q] = enter_value;
        const double dp = d[row];
        if (std::abs(dp) < 1e-11) {
            rebuild_inverse();
        } else {
            Eigen::RowVectorXd pivot_row = Binv_.row(row) / dp;
            for (int i = 0; i < M_; ++i) {
                if (i == row) continue;
                if (d[i] != 0.0) Binv_.row(i) -= d[i] * pivot_row;
            }
            Binv_.row(row) = pivot_row;
        }
        ++iters_since_refactor_;
    }

    void rebuild_inverse() {
        Matrix B(M_, M_);
        for (int i = 0; i < M_; ++i) B.col(i) = A_.col(basis_[i]);
        Binv_ = Eigen::PartialPivLU<Matrix>(B).inverse();
    }

    void refactorize() {
        rebuild_inverse();
        // Recompute basic values from scratch to shed accumulated drift.
        Vector rhs = b_;
        for (int j = 0; j < N_; ++j)
            if (status_[j] != Status::Basic && x_[j] != 0.0) rhs -= A_.col(j) * x_[j];
        Vector xb = Binv_ * rhs;
        for (int i = 0; i < M_; ++i) x_[basis_[i]] = xb[i];
        iters_since_refactor_ = 0;
    }

    Vector basic_costs() const {
        Vector cb(M_);
        for (int i = 0; i < M_; ++i) cb[i] = cost_[basis_[i]];
        return cb;
    }

    double phase1_objective() const {
        double s = 0.0;
        for (int j = n_ + nslack_; j < N_; ++j) s += x_[j];
        return s;
    }

    LpSolution make_result(LpStatus st) {
        LpSolution sol;
        sol.status = st;
        if (st != LpStatus::Optimal) return sol;
        sol.x = x_.head(n_);
        sol.objective = p_.cost.dot(sol.x);
        Vector y = Binv_.transpose() * basic_costs();
        sol.duals_eq = y.head(m_eq_);
        sol.duals_ub = -y.tail(m_ub_);
        return sol;
    }

    static constexpr double kDualTol = 1e-10;
    static constexpr double kPivotTol = 1e-9;

    const LpProblem& p_;
    int n_ = 0, m_eq_ = 0, m_ub_ = 0, M_ = 0, nslack_ = 0, N_ = 0;
    Matrix A_;
    Vector b_, lo_, hi_, x_, cost_;
    Matrix Binv_;
    std::vector<int> basis_;
    std::vector<Status> status_;
    int iters_since_refactor_ = 0;
};

}  // namespace detail

/// Self-check on an Optimal solution: primal feasibility, dual sign,
/// complementary slackness, and duality gap, at the documented tolerances.
inline void check_lp_invariants(const LpProblem& p, const LpSolution& s) {
    if (s.status != LpStatus::Optimal) return;
    const double rhs_scale =
        1.0 + std::max(p.eq_rhs.size() ? p.eq_rhs.cwiseAbs().maxCoeff() : 0.0,
                       p.ub_rhs.size() ? p.ub_rhs.cwiseAbs().maxCoeff() : 0.0);
    double resid = 0.0;
    if (p.num_eq() > 0) resid = (p.eq_matrix * s.x - p.eq_rhs).cwiseAbs().maxCoeff();
    if (p.num_ub() > 0) {
        Vector slack = p.ub_rhs - p.ub_matrix * s.x;
        resid = std::max(resid, std::max(0.0, -slack.minCoeff()));
        for (int j = 0; j < p.num_ub(); ++j) {
            if (s.duals_ub[j] < -1e-9) throw NumericalError("lp invariant: negative ub dual");
            if (s.duals_ub[j] * std::max(slack[j], 0.0) > 1e-6 * (1.0 + std::abs(s.objective)))
                throw NumericalError("lp invariant: complementary slackness violated");
        }
    }
    for (int j = 0; j < p.num_vars(); ++j) {
        if (std::isfinite(p.lower[j])) resid = std::max(resid, p.lower[j] - s.x[j]);
        if (std::isfinite(p.upper[j])) resid = std::max(resid, s.x[j] - p.upper[j]);
    }
    if (resid > 1e-7 * rhs_scale) throw NumericalError("lp invariant: primal residual too large");
    const double gap = std::abs(s.objective - dual_objective(p, s));
    if (gap > 1e-6 * (1.0 + std::abs(s.objective))) throw NumericalError("lp invariant: duality gap");
}

/// Solve a dense LP. Deterministic: fixed pricing and tie-breaking rules, so the
/// same problem always yields bitwise-identical primal and dual vectors.
inline LpSolution solve_lp(const LpProblem& p) {
    p.validate();
    detail::SimplexSolver solver(p);
    LpSolution s = solver.solve();
    check_lp_invariants(p, s);
    return s;
}

/// Flags solutions whose optimal dual basis is not unique: re-solves with the
/// rhs shifted by +/-1e-7 and reports whether the duals disagree materially.
/// Training logs the flag; any such dual is still a valid Clarke subgradient.
inline bool duals_degenerate(const LpProblem& p, double delta = 1e-7, double disagree_tol = 1e-3) {
    LpProblem plus = p, minus = p;
    plus.eq_rhs.array() += delta;
    plus.ub_rhs.array() += delta;
    minus.eq_rhs.array() -= delta;
    minus.ub_rhs.array() -= delta;
    LpSolution sp = solve_lp(plus), sm = solve_lp(minus);
    if (sp.status != LpStatus::Optimal || sm.status != LpStatus::Optimal) return true;
    double diff = 0.0;
    if (p.num_ub() > 0) diff = (sp.duals_ub - sm.duals_ub).cwiseAbs().maxCoeff();
    if (p.num_eq() > 0) diff = std::max(diff, (sp.duals_eq - sm.duals_eq).cwiseAbs().maxCoeff());
    return diff > disagree_tol;
}

/// Plain-text dump for external cross-checking. Layout: a header line, then
/// `c`, `lower`, `upper` rows (space-separated, %.17g, inf/-inf spelled out),
/// then one `eq`/`ub` line per row as `<rhs> | <n coefficients>`.
inline std::string dump_lp(const LpProblem& p) {
    auto fmt = [](double v) {
        if (v == kInf) return std::string("inf");
        if (v == -kInf) return std::string("-inf");
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    auto row = [&](const char* name, const Vector& v) {
        std::string s(name);
        for (int j = 0; j < v.size(); ++j) {
            s += ' ';
            s += fmt(v[j]);
        }
        return s + '\n';
    };
    std::string out = "rsl-lp v1 n " + std::to_string(p.num_vars()) + " m_eq " +
                      std::to_string(p.num_eq()) + " m_ub " + std::to_string(p.num_ub()) + "\n";
    out += row("c", p.cost);
    out += row("lower", p.lower);
    out += row("upper", p.upper);
    for (int i = 0; i < p.num_eq(); ++i) {
        out += "eq " + fmt(p.eq_rhs[i]) + " |";
        for (int j = 0; j < p.num_vars(); ++j) out += ' ' + fmt(p.eq_matrix(i, j));
        out += '\n';
    }
    for (int i = 0; i < p.num_ub(); ++i) {
        out += "ub " + fmt(p.ub_rhs[i]) + " |";
        for (int j = 0; j < p.num_vars(); ++j) out += ' ' + fmt(p.ub_matrix(i, j));
        out += '\n';
    }
    return out;
}

}  // namespace rsl
