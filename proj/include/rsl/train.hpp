#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "rsl/data.hpp"
#include "rsl/quantile.hpp"
#include "rsl/sced.hpp"

namespace rsl {

/// Hyperparameters for static shape training.
struct TrainConfig {
    double tau = 0.95;
    double eps = 0.5;
    int iterations = 200;
    double step_size = 0.01;
    double grad_clip_norm = 10.0;
    std::uint64_t seed = 0;
    Kernel kernel = Kernel::Gaussian;
    bool trace_normalize = true;
    bool coupled = false;
    int log_every = 10;
    double diag_floor = kDefaultDiagFloor;

    void validate() const {
        if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("train: tau outside (0,1)");
        if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
        if (iterations < 0) throw ConfigError("train: iterations must be >= 0");
        if (!(step_size > 0.0)) throw ConfigError("train: step_size must be positive");
        if (!(grad_clip_norm > 0.0)) throw ConfigError("train: grad_clip_norm must be positive");
    }
};

struct TrainRecord {
    int iteration = 0;
    double rho_eps = 0.0;
    double objective = 0.0;
    double grad_norm_pre = 0.0;
    double grad_norm_post = 0.0;
    bool degenerate_duals = false;
};

using TrainTrace = std::vector<TrainRecord>;

inline void save_trace_csv(const TrainTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_trace_csv: cannot open " + path);
    out << "iteration,rho_eps,objective,grad_norm_pre,grad_norm_post,degenerate_duals\n";
    for (const auto& r : trace)
        out << r.iteration << ',' << detail::format_g17(r.rho_eps) << ','
            << detail::format_g17(r.objective) << ',' << detail::format_g17(r.grad_norm_pre) << ','
            << detail::format_g17(r.grad_norm_post) << ',' << (r.degenerate_duals ? 1 : 0) << "\n";
}

/// The assembled profiled gradient at one shape, with the pieces kept for
/// logging: the envelope term, the size sensitivity, and the smoothed
/// quantile/radius used by the robust solve.
struct ProfiledGradient {
    ShapeGradient grad = ShapeGradient(Matrix());
    double rho_eps = 0.0;
    ScedSolution solution;
    ShapeGradient envelope = ShapeGradient(Matrix());
    double size_sensitivity = 0.0;
    SmoothedQuantile sq;
};

/// Envelope shape term plus size-sensitivity times quantile sensitivity,
/// all evaluated at the tuning-set smoothed radius.
inline ProfiledGradient profiled_gradient(const CholeskyShape& L, const ZonalSystem& sys,
                                          const Eigen::Ref<const Matrix>& tune_us,
                                          const TrainConfig& cfg,
                                          const TransferLimits* tl = nullptr) {
    if (tune_us.rows() < 2) throw Error("profiled_gradient: tuning set too small");
    ProfiledGradient out;
    out.sq = smoothed_quantile(scores(L, tune_us), cfg.tau, cfg.eps, cfg.kernel);
    out.rho_eps = out.sq.rho_eps;
    if (!(out.rho_eps > 0.0))
        throw InfeasibleAtShape("profiled_gradient: smoothed radius not positive");

    out.solution = solve_sced(sys, L, out.rho_eps, tl);
    if (out.solution.status != LpStatus::Optimal)
        throw InfeasibleAtShape("profiled_gradient: robust dispatch not Optimal at rho_eps");

    out.envelope = envelope_grad_L(sys, out.solution, L, out.rho_eps);
    out.size_sensitivity = envelope_grad_rho(sys, out.solution, L);
    ShapeGradient qsens = quantile_sensitivity(L, tune_us, out.sq);
    out.grad = ShapeGradient(out.envelope.entries + out.size_sensitivity * qsens.entries);
    return out;
}

/// Projected gradient descent on the shape: initialize from the train-split
/// sample covariance, step against the clipped profiled gradient, project back
/// onto the lower-triangular floor/trace manifold each iteration.
inline std::pair<CholeskyShape, TrainTrace> train_static(const ZonalSystem& sys,
                                                         const UncertaintyDataset& ds,
                                                         const TrainConfig& cfg,
                                                         const TransferLimits* tl = nullptr) {
    cfg.validate();
    ds.validate();
    CholeskyShape shape = project_shape(sample_covariance_shape(ds.split_u(Split::Train)).entries,
                                        cfg.diag_floor, cfg.trace_normalize);
    Eigen::Ref<const Matrix> tune = ds.split_u(Split::Tune);

    TrainTrace trace;
    trace.reserve(cfg.iterations);
    for (int k = 0; k < cfg.iterations; ++k) {
        ProfiledGradient pg;
        try {
            pg = profiled_gradient(shape, sys, tune, cfg, tl);
        } catch (const InfeasibleAtShape& e) {
            throw InfeasibleAtShape("train_static: iteration " + std::to_string(k) + ": " +
                                    e.what());
        }

        const double pre = pg.grad.frobenius_norm();
        Matrix step = pg.grad.entries;
        if (pre > cfg.grad_clip_norm) step *= cfg.grad_clip_norm / pre;
        const double post = step.norm();

        const bool degen = duals_degenerate(
            tl ? build_coupled(sys, shape, pg.rho_eps, *tl) : build_decoupled(sys, shape, pg.rho_eps));
        trace.push_back({k, pg.rho_eps, pg.solution.objective, pre, post, degen});

        shape = project_shape(shape.entries - cfg.step_size * step, cfg.diag_floor,
                              cfg.trace_normalize);
        shape.validate();
    }
    return {std::move(shape), std::move(trace)};
}

/// Deployment radius: split-conformal quantile of calibration-split scores.
inline ConformalRadius calibrate(const CholeskyShape& L, const UncertaintyDataset& ds, double tau) {
    return conformal_radius(scores(L, ds.split_u(Split::Cal)), tau);
}

}  // namespace rsl
