#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "rsl/data.hpp"
#include "rsl/encoder.hpp"
#include "rsl/quantile.hpp"
#include "rsl/sced.hpp"
#include "rsl/threading.hpp"
#include "rsl/train.hpp"

namespace rsl {

/// One benchmark row: cost and reserve at the conformally calibrated radius,
/// coverage on the held-out splits, and the dual/cost breakdown.
struct EvalReport {
    std::string method;
    double cost = 0.0;              // $/hr (contextual: mean over test contexts)
    double total_reserve_mw = 0.0;  // sum of zonal requirements at rho_tau
    double calibration_rate = 0.0;
    double test_coverage = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
    double rho_tau = 0.0;
    double energy_cost = 0.0;   // sum c_g * g
    double reserve_cost = 0.0;  // sum c_r * r
    Vector mu;                  // per zone (contextual: mean over test solves)
    Vector lambda;

    void check_consistency() const {
        if (test_coverage < 0.0 || test_coverage > 1.0 || calibration_rate < 0.0 ||
            calibration_rate > 1.0)
            throw NumericalError("EvalReport: coverage outside [0,1]");
        if (!(ci_lo <= test_coverage + 1e-12 && test_coverage <= ci_hi + 1e-12))
            throw NumericalError("EvalReport: CI does not bracket the point estimate");
        if (std::abs(energy_cost + reserve_cost - cost) > 1e-6)
            throw NumericalError("EvalReport: cost decomposition mismatch");
    }
};

struct BootstrapConfig {
    int block_len = 24;
    int reps = 10000;
    double level = 0.95;
    std::uint64_t seed = 7;
};

/// Circular block bootstrap percentile CI for the mean of a binary series:
/// each replicate concatenates ceil(n/block_len) wrapped blocks, truncates to
/// n, and takes the mean. Determinism comes from per-replicate substreams, so
/// the result is independent of the thread count.
inline std::pair<double, double> block_bootstrap_ci(const std::vector<double>& series,
                                                    int block_len, int reps, double level,
                                                    std::uint64_t seed, int threads = 1) {
    const long n = static_cast<long>(series.size());
    if (n < 2 * block_len) throw TooShort("block_bootstrap_ci: series shorter than two blocks");
    if (!(level > 0.0 && level < 1.0)) throw Error("block_bootstrap_ci: level outside (0,1)");
    const long nblocks = (n + block_len - 1) / block_len;

    std::vector<double> means(reps);
    parallel_for(reps, threads, [&](long rep) {
        StreamRng rng(seed, "bootstrap", static_cast<std::uint64_t>(rep));
        double acc = 0.0;
        long filled = 0;
        for (long b = 0; b < nblocks && filled < n; ++b) {
            const long start = static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(n)));
            for (long k = 0; k < block_len && filled < n; ++k, ++filled)
                acc += series[(start + k) % n];
        }
        means[rep] = acc / static_cast<double>(n);
    });
    std::sort(means.begin(), means.end());
    const double q_lo = (1.0 - level) / 2.0;
    const double q_hi = (1.0 + level) / 2.0;
    auto pick = [&](double q) {
        long k = robust_ceil(q * reps);
        k = std::max<long>(1, std::min<long>(reps, k));
        return means[static_cast<size_t>(k - 1)];
    };
    return {pick(q_lo), pick(q_hi)};
}

namespace detail {

inline double requirement_total(const ZonalSystem& sys, const CholeskyShape& L, double rho) {
    double total = 0.0;
    for (int z = 0; z < sys.num_zones(); ++z) total += reserve_requirement(L, rho, sys, z);
    return total;
}

inline void split_cost(const ZonalSystem& sys, const ScedSolution& sol, double& energy,
                       double& reserve) {
    energy = 0.0;
    reserve = 0.0;
    for (int i = 0; i < sys.num_generators(); ++i) {
        energy += sys.generators[i].energy_cost * sol.dispatch[i];
        reserve += sys.generators[i].reserve_cost * sol.reserve[i];
    }
}

}  // namespace detail

/// Static-shape evaluation: calibrate on the calibration split, solve once at
/// the conformal radius, measure coverage on the test split.
inline EvalReport evaluate_static(const std::string& method, const CholeskyShape& L,
                                  const ZonalSystem& sys, const UncertaintyDataset& ds, double tau,
                                  const TransferLimits* tl = nullptr,
                                  const BootstrapConfig& bs = {}, int threads = 1) {
    EvalReport rep;
    rep.method = method;
    ConformalRadius cr = conformal_radius(scores(L, ds.split_u(Split::Cal)), tau);
    rep.rho_tau = cr.rho_tau;

    ScedSolution sol = solve_sced(sys, L, cr.rho_tau, tl);
    if (sol.status != LpStatus::Optimal)
        throw InfeasibleAtShape("evaluate_static: dispatch not Optimal at the calibrated radius");
    rep.cost = sol.objective;
    rep.total_reserve_mw = detail::requirement_total(sys, L, cr.rho_tau);
    detail::split_cost(sys, sol, rep.energy_cost, rep.reserve_cost);
    rep.mu = sol.reserve_duals;
    rep.lambda = sol.transfer_duals;

    rep.calibration_rate = empirical_coverage(L, cr.rho_tau, ds.split_u(Split::Cal));
    Eigen::Ref<const Matrix> test = ds.split_u(Split::Test);
    std::vector<double> inside(test.rows());
    for (long t = 0; t < test.rows(); ++t)
        inside[t] = gauge(L, test.row(t).transpose()) <= cr.rho_tau ? 1.0 : 0.0;
    rep.test_coverage =
        std::accumulate(inside.begin(), inside.end(), 0.0) / static_cast<double>(inside.size());
    std::tie(rep.ci_lo, rep.ci_hi) =
        block_bootstrap_ci(inside, bs.block_len, bs.reps, bs.level, bs.seed, threads);
    rep.check_consistency();
    return rep;
}

/// Contextual evaluation: one shared conformal radius from contextual
/// calibration scores, then a per-context solve on the test split with cost,
/// requirements, and duals averaged over contexts.
inline EvalReport evaluate_contextual(const std::string& method, const MlpEncoder& enc,
                                      const ZonalSystem& sys, const UncertaintyDataset& ds,
                                      double tau, const TransferLimits* tl = nullptr,
                                      const BootstrapConfig& bs = {}, int threads = 1) {
    EvalReport rep;
    rep.method = method;

    auto [cb, ce] = ds.range(Split::Cal);
    Vector cal_scores(ce - cb);
    for (long i = cb; i < ce; ++i) {
        CholeskyShape li = mlp_forward(enc, ds.contexts[i]);
        cal_scores[i - cb] = gauge(li, ds.u.row(i).transpose());
    }
    ConformalRadius cr = conformal_radius(cal_scores, tau);
    rep.rho_tau = cr.rho_tau;
    long cal_inside = 0;
    for (long i = 0; i < cal_scores.size(); ++i)
        if (cal_scores[i] <= cr.rho_tau) ++cal_inside;
    rep.calibration_rate = static_cast<double>(cal_inside) / static_cast<double>(cal_scores.size());

    auto [tb, te] = ds.range(Split::Test);
    const long n_test = te - tb;
    std::vector<double> cost(n_test), reserve(n_test), energy(n_test), rescost(n_test),
        inside(n_test);
    std::vector<Vector> mus(n_test), lambdas(n_test);
    std::vector<std::string> failures(n_test);
    parallel_for(n_test, threads, [&](long k) {
        try {
            const long i = tb + k;
            CholeskyShape li = mlp_forward(enc, ds.contexts[i]);
            li.validate();
            ScedSolution sol = solve_sced(sys, li, cr.rho_tau, tl);
            if (sol.status != LpStatus::Optimal) {
                failures[k] = "dispatch not Optimal";
                return;
            }
            cost[k] = sol.objective;
            reserve[k] = detail::requirement_total(sys, li, cr.rho_tau);
            detail::split_cost(sys, sol, energy[k], rescost[k]);
            mus[k] = sol.reserve_duals;
            lambdas[k] = sol.transfer_duals;
            inside[k] = gauge(li, ds.u.row(i).transpose()) <= cr.rho_tau ? 1.0 : 0.0;
        } catch (const Error& e) {
            failures[k] = e.what();
        }
    });
    for (long k = 0; k < n_test; ++k)
        if (!failures[k].empty())
            throw InfeasibleAtShape("evaluate_contextual: test context " + std::to_string(k) +
                                    ": " + failures[k]);

    rep.mu = Vector::Zero(sys.num_zones());
    rep.lambda = Vector::Zero(sys.num_zones());
    for (long k = 0; k < n_test; ++k) {
        rep.cost += cost[k];
        rep.total_reserve_mw += reserve[k];
        rep.energy_cost += energy[k];
        rep.reserve_cost += rescost[k];
        rep.mu += mus[k];
        rep.lambda += lambdas[k];
    }
    const double inv = 1.0 / static_cast<double>(n_test);
    rep.cost *= inv;
    rep.total_reserve_mw *= inv;
    rep.energy_cost *= inv;
    rep.reserve_cost *= inv;
    rep.mu *= inv;
    rep.lambda *= inv;

    rep.test_coverage =
        std::accumulate(inside.begin(), inside.end(), 0.0) / static_cast<double>(n_test);
    std::tie(rep.ci_lo, rep.ci_hi) =
        block_bootstrap_ci(inside, bs.block_len, bs.reps, bs.level, bs.seed, threads);
    rep.check_consistency();
    return rep;
}

// ---- target-level sweep -----------------------------------------------------

struct SweepCell {
    double cost = std::nan("");
    double coverage = std::nan("");
    std::string error;
};

struct SweepTable {
    std::vector<double> taus;
    std::vector<std::string> methods;
    std::vector<std::vector<SweepCell>> cells;  // [method][tau]
};

/// Shapes frozen at their training point; only the conformal radius is
/// recalibrated per target level. Per-cell failures are recorded in the cell
/// and the sweep continues.
struct SweepMethod {
    std::string name;
    CholeskyShape shape;          // used when encoder == nullptr
    const MlpEncoder* encoder = nullptr;
};

inline SweepTable tau_sweep(const std::vector<SweepMethod>& methods, const ZonalSystem& sys,
                            const UncertaintyDataset& ds, const std::vector<double>& taus,
                            const TransferLimits* tl = nullptr, int threads = 1) {
    SweepTable table;
    table.taus = taus;
    BootstrapConfig tiny;  // sweep cells report cost/coverage only
    tiny.reps = 200;
    for (const auto& m : methods) {
        table.methods.push_back(m.name);
        std::vector<SweepCell> row;
        for (double tau : taus) {
            SweepCell cell;
            try {
                EvalReport rep = m.encoder
                                     ? evaluate_contextual(m.name, *m.encoder, sys, ds, tau, tl,
                                                           tiny, threads)
                                     : evaluate_static(m.name, m.shape, sys, ds, tau, tl, tiny,
                                                       threads);
                cell.cost = rep.cost;
                cell.coverage = rep.test_coverage;
            } catch (const Error& e) {
                cell.error = e.what();
            }
            row.push_back(std::move(cell));
        }
        table.cells.push_back(std::move(row));
    }
    return table;
}

// ---- gradient-estimator consistency diagnostic ------------------------------

struct ConsistencyRow {
    long n_tune = 0;
    double mean_deviation = 0.0;
    double median_deviation = 0.0;
};

/// Frobenius deviation of the estimated profiled gradient from a large-sample
/// reference, over fresh i.i.d. tuning sets drawn at a frozen midday context
/// (the generator's independent mode). The reference uses 16x the largest grid
/// size. Deviations should shrink roughly like 1/sqrt(n).
inline std::vector<ConsistencyRow> consistency_diagnostic(const CholeskyShape& L,
                                                          const ZonalSystem& sys,
                                                          const GeneratorParams& params,
                                                          double eps, double tau,
                                                          const std::vector<long>& n_grid,
                                                          int trials, int threads = 1) {
    if (n_grid.empty()) throw Error("consistency_diagnostic: empty grid");
    GeneratorParams iid = params;
    iid.ar_coeff = 0.0;
    ContextGenerator ctx_gen(iid);
    Context midday = ctx_gen.at_hour(12);

    TrainConfig cfg;
    cfg.tau = tau;
    cfg.eps = eps;

    const long n_ref = 16 * *std::max_element(n_grid.begin(), n_grid.end());
    Matrix ref_sample = generate_iid(iid, midday, n_ref, /*substream=*/1u << 20);
    const Matrix ref_grad = profiled_gradient(L, sys, ref_sample, cfg).grad.entries;

    std::vector<ConsistencyRow> rows;
    for (size_t gi = 0; gi < n_grid.size(); ++gi) {
        const long n = n_grid[gi];
        std::vector<double> devs(trials);
        parallel_for(trials, threads, [&](long trial) {
            Matrix sample = generate_iid(iid, midday, n,
                                         static_cast<std::uint64_t>(gi) * 10000 + trial + 1);
            devs[trial] = (profiled_gradient(L, sys, sample, cfg).grad.entries - ref_grad).norm();
        });
        ConsistencyRow row;
        row.n_tune = n;
        row.mean_deviation =
            std::accumulate(devs.begin(), devs.end(), 0.0) / static_cast<double>(trials);
        std::vector<double> sorted = devs;
        std::sort(sorted.begin(), sorted.end());
        row.median_deviation = trials % 2 == 1
                                   ? sorted[trials / 2]
                                   : 0.5 * (sorted[trials / 2 - 1] + sorted[trials / 2]);
        rows.push_back(row);
    }
    return rows;
}

// ---- rendering ---------------------------------------------------------------

inline void save_report_csv(const std::vector<EvalReport>& reports, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_report_csv: cannot open " + path);
    out << "method,cost,reserve_mw,calibration_rate,test_coverage,ci_lo,ci_hi,rho_tau,"
           "energy_cost,reserve_cost\n";
    for (const auto& r : reports) {
        out << r.method;
        for (double v : {r.cost, r.total_reserve_mw, r.calibration_rate, r.test_coverage, r.ci_lo,
                         r.ci_hi, r.rho_tau, r.energy_cost, r.reserve_cost})
            out << ',' << detail::format_g17(v);
        out << "\n";
    }
}

inline std::string render_report_text(const std::vector<EvalReport>& reports) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%-22s %12s %12s %18s %24s\n", "Method", "Cost ($/hr)",
                  "Reserve (MW)", "Calibration Rate", "Test Coverage [CI]");
    out += buf;
    out += std::string(92, '-') + "\n";
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof(buf), "%-22s %12.0f %12.0f %18.3f     %.3f [%.3f, %.3f]\n",
                      r.method.c_str(), r.cost, r.total_reserve_mw, r.calibration_rate,
                      r.test_coverage, r.ci_lo, r.ci_hi);
        out += buf;
    }
    return out;
}

inline void save_sweep_csv(const SweepTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_sweep_csv: cannot open " + path);
    out << "method,tau,cost,coverage,error\n";
    for (size_t m = 0; m < table.methods.size(); ++m)
        for (size_t t = 0; t < table.taus.size(); ++t) {
            const SweepCell& c = table.cells[m][t];
            out << table.methods[m] << ',' << detail::format_g17(table.taus[t]) << ','
                << (std::isnan(c.cost) ? "" : detail::format_g17(c.cost)) << ','
                << (std::isnan(c.coverage) ? "" : detail::format_g17(c.coverage)) << ','
                << c.error << "\n";
        }
}

inline std::string render_sweep_text(const SweepTable& table) {
    char buf[256];
    std::string out = "Cost ($/hr)\n";
    auto header = [&]() {
        std::string h;
        std::snprintf(buf, sizeof(buf), "%-22s", "Method");
        h += buf;
        for (double tau : table.taus) {
            std::snprintf(buf, sizeof(buf), " %9.2f", tau);
            h += buf;
        }
        return h + "\n";
    };
    out += header();
    for (size_t m = 0; m < table.methods.size(); ++m) {
        std::snprintf(buf, sizeof(buf), "%-22s", table.methods[m].c_str());
        out += buf;
        for (size_t t = 0; t < table.taus.size(); ++t) {
            const SweepCell& c = table.cells[m][t];
            if (c.error.empty())
                std::snprintf(buf, sizeof(buf), " %9.0f", c.cost);
            else
                std::snprintf(buf, sizeof(buf), " %9s", "err");
            out += buf;
        }
        out += "\n";
    }
    out += "Test Coverage\n";
    out += header();
    for (size_t m = 0; m < table.methods.size(); ++m) {
        std::snprintf(buf, sizeof(buf), "%-22s", table.methods[m].c_str());
        out += buf;
        for (size_t t = 0; t < table.taus.size(); ++t) {
            const SweepCell& c = table.cells[m][t];
            if (c.error.empty())
                std::snprintf(buf, sizeof(buf), " %9.3f", c.coverage);
            else
                std::snprintf(buf, sizeof(buf), " %9s", "err");
            out += buf;
        }
        out += "\n";
    }
    return out;
}

}  // namespace rsl
