#pragma once

#include <map>
#include <set>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsl/geometry.hpp"
#include "rsl/lp.hpp"

namespace rsl {

struct Zone {
    int id = 0;
    double load_mw = 0.0;
};

struct Generator {
    int zone = 0;  // zone id, not index
    double g_min_mw = 0.0;
    double g_max_mw = 0.0;
    double energy_cost = 0.0;   // $/MWh
    double reserve_cost = 0.0;  // $/MWh
};

/// Zonal dispatch system: zones, generators, and the allocation matrix A
/// mapping the d uncertainty sources to Z zonal net-deviation exposures.
/// Row z of `allocation` is zone z's exposure vector A_z.
struct ZonalSystem {
    std::vector<Zone> zones;
    std::vector<Generator> generators;
    Matrix allocation;  // Z x d

    int num_zones() const { return static_cast<int>(zones.size()); }
    int num_generators() const { return static_cast<int>(generators.size()); }
    int dim() const { return static_cast<int>(allocation.cols()); }

    double total_load() const {
        double s = 0.0;
        for (const auto& z : zones) s += z.load_mw;
        return s;
    }

    int zone_index(int zone_id) const {
        for (int i = 0; i < num_zones(); ++i)
            if (zones[i].id == zone_id) return i;
        throw Error("ZonalSystem: unknown zone id " + std::to_string(zone_id));
    }

    std::vector<std::vector<int>> generators_by_zone() const {
        std::vector<std::vector<int>> g(num_zones());
        for (int i = 0; i < num_generators(); ++i)
            g[zone_index(generators[i].zone)].push_back(i);
        return g;
    }

    Vector exposure(int zone_idx) const { return allocation.row(zone_idx).transpose(); }

    void validate() const {
        if (zones.empty()) throw Error("ZonalSystem: no zones");
        if (allocation.rows() != num_zones()) throw Error("ZonalSystem: allocation row count");
        if (!allocation.allFinite()) throw Error("ZonalSystem: non-finite allocation");
        double cap = 0.0;
        for (const auto& g : generators) {
            zone_index(g.zone);
            if (g.g_min_mw > g.g_max_mw) throw Error("ZonalSystem: g_min > g_max");
            cap += g.g_max_mw;
        }
        if (cap < total_load()) throw Error("ZonalSystem: total capacity below total load");
    }
};

/// Per-zone transfer-capacity caps; rows are emitted only for tight zones.
struct TransferLimits {
    std::map<int, double> limits;  // zone id -> T_z^max
    std::set<int> tight_zones;     // zone ids

    void validate(const ZonalSystem& sys) const {
        for (const auto& z : sys.zones)
            if (!limits.count(z.id)) throw Error("TransferLimits: missing zone " + std::to_string(z.id));
        for (int id : tight_zones) (void)sys.zone_index(id);
    }
};

struct ScedSolution {
    Vector dispatch;        // per generator
    Vector reserve;         // per generator
    double objective = 0.0;
    Vector reserve_duals;   // mu, per zone
    Vector transfer_duals;  // lambda, per zone (upper + lower row duals; 0 if no rows)
    LpStatus status = LpStatus::Infeasible;
};

/// Zonal reserve requirement R_z = rho * ||L^T A_z||_2.
inline double reserve_requirement(const CholeskyShape& L, double rho, const ZonalSystem& sys,
                                  int zone_idx) {
    return rho * (L.entries.transpose() * sys.exposure(zone_idx)).norm();
}

/// Decoupled robust SCED: energy balance, capacity coupling g + r <= g_max,
/// and one zonal reserve row per zone written as -sum(r) <= -R_z so its dual
/// is nonnegative in the same orientation as every other ub row. Zones whose
/// requirement vanishes (||L^T A_z|| below tolerance) get no row at all: the
/// constraint would be implied by r >= 0, and omitting it pins mu_z = 0 instead
/// of leaving it to a degenerate basis choice.
inline LpProblem build_decoupled(const ZonalSystem& sys, const CholeskyShape& L, double rho) {
    sys.validate();
    const int G = sys.num_generators();
    const int Z = sys.num_zones();
    const int n = 2 * G;  // [g; r]
    const auto by_zone = sys.generators_by_zone();

    LpProblem p;
    p.cost = Vector(n);
    p.lower = Vector(n);
    p.upper = Vector::Constant(n, kInf);
    for (int i = 0; i < G; ++i) {
        p.cost[i] = sys.generators[i].energy_cost;
        p.cost[G + i] = sys.generators[i].reserve_cost;
        p.lower[i] = sys.generators[i].g_min_mw;
        p.lower[G + i] = 0.0;
    }

    p.eq_matrix = Matrix::Zero(1, n);
    p.eq_matrix.block(0, 0, 1, G).setOnes();
    p.eq_rhs = Vector::Constant(1, sys.total_load());

    std::vector<double> requirements;
    std::vector<int> reserve_zones;
    for (int z = 0; z < Z; ++z) {
        const double norm = (L.entries.transpose() * sys.exposure(z)).norm();
        if (norm < 1e-12) continue;
        requirements.push_back(rho * norm);
        reserve_zones.push_back(z);
    }

    const int m_ub = G + static_cast<int>(reserve_zones.size());
    p.ub_matrix = Matrix::Zero(m_ub, n);
    p.ub_rhs = Vector(m_ub);
    p.tags.assign(m_ub, RowTag::other());
    for (int i = 0; i < G; ++i) {
        p.ub_matrix(i, i) = 1.0;
        p.ub_matrix(i, G + i) = 1.0;
        p.ub_rhs[i] = sys.generators[i].g_max_mw;
    }
    for (size_t k = 0; k < reserve_zones.size(); ++k) {
        const int row = G + static_cast<int>(k);
        for (int i : by_zone[reserve_zones[k]]) p.ub_matrix(row, G + i) = -1.0;
        p.ub_rhs[row] = -requirements[k];
        p.tags[row] = RowTag::reserve(reserve_zones[k]);
    }
    return p;
}

/// Transfer limits from the base decoupled dispatch (held fixed thereafter):
/// T_z = alpha_z * (|net export of z at the base solve| + rho ||L_base^T A_z||).
inline TransferLimits compute_transfer_limits(const ZonalSystem& sys, const CholeskyShape& L_base,
                                              double rho_base, const std::set<int>& tight,
                                              double alpha_tight, double alpha_loose) {
    LpSolution base = solve_lp(build_decoupled(sys, L_base, rho_base));
    if (base.status != LpStatus::Optimal)
        throw BaseInfeasible("compute_transfer_limits: base decoupled SCED not Optimal");
    const auto by_zone = sys.generators_by_zone();

    TransferLimits tl;
    tl.tight_zones = tight;
    for (int z = 0; z < sys.num_zones(); ++z) {
        double gen = 0.0;
        for (int i : by_zone[z]) gen += base.x[i];
        const double imbalance = std::abs(gen - sys.zones[z].load_mw);
        const double margin = rho_base * (L_base.entries.transpose() * sys.exposure(z)).norm();
        const double alpha = tight.count(sys.zones[z].id) ? alpha_tight : alpha_loose;
        tl.limits[sys.zones[z].id] = alpha * (imbalance + margin);
    }
    tl.validate(sys);
    return tl;
}

/// Coupled robust SCED: the decoupled rows plus, per tight zone, the two
/// linearizations of |net export| + rho ||L^T A_z|| <= T_z.
inline LpProblem build_coupled(const ZonalSystem& sys, const CholeskyShape& L, double rho,
                               const TransferLimits& tl) {
    tl.validate(sys);
    LpProblem p = build_decoupled(sys, L, rho);
    const auto by_zone = sys.generators_by_zone();

    std::vector<int> tight_idx;
    for (int z = 0; z < sys.num_zones(); ++z)
        if (tl.tight_zones.count(sys.zones[z].id)) tight_idx.push_back(z);

    const int base_rows = p.num_ub();
    const int extra = 2 * static_cast<int>(tight_idx.size());
    Matrix ub = Matrix::Zero(base_rows + extra, p.num_vars());
    ub.topRows(base_rows) = p.ub_matrix;
    Vector rhs(base_rows + extra);
    rhs.head(base_rows) = p.ub_rhs;

    int row = base_rows;
    for (int z : tight_idx) {
        const double margin = rho * (L.entries.transpose() * sys.exposure(z)).norm();
        const double tmax = tl.limits.at(sys.zones[z].id);
        const double dz = sys.zones[z].load_mw;
        for (int i : by_zone[z]) ub(row, i) = 1.0;
        rhs[row] = tmax + dz - margin;
        p.tags.push_back(RowTag::transfer_upper(z));
        ++row;
        for (int i : by_zone[z]) ub(row, i) = -1.0;
        rhs[row] = tmax - dz - margin;
        p.tags.push_back(RowTag::transfer_lower(z));
        ++row;
    }
    p.ub_matrix = std::move(ub);
    p.ub_rhs = std::move(rhs);
    return p;
}

/// Solve and split the LP answer back into dispatch/reserve vectors and
/// per-zone dual multipliers routed by row tag.
inline ScedSolution solve_sced(const ZonalSystem& sys, const CholeskyShape& L, double rho,
                               const TransferLimits* tl = nullptr) {
    LpProblem p = tl ? build_coupled(sys, L, rho, *tl) : build_decoupled(sys, L, rho);
    LpSolution s = solve_lp(p);
    const int G = sys.num_generators();
    const int Z = sys.num_zones();

    ScedSolution out;
    out.status = s.status;
    if (s.status != LpStatus::Optimal) return out;
    out.dispatch = s.x.head(G);
    out.reserve = s.x.tail(G);
    out.objective = s.objective;
    out.reserve_duals = Vector::Zero(Z);
    out.transfer_duals = Vector::Zero(Z);
    for (int i = 0; i < p.num_ub(); ++i) {
        switch (p.tags[i].kind) {
            case RowTag::Kind::Reserve:
                out.reserve_duals[p.tags[i].zone] = s.duals_ub[i];
                break;
            case RowTag::Kind::TransferUpper:
            case RowTag::Kind::TransferLower:
                out.transfer_duals[p.tags[i].zone] += s.duals_ub[i];
                break;
            case RowTag::Kind::Other:
                break;
        }
    }
    return out;
}

/// Envelope shape gradient: sum_z (mu_z + lambda_z) * grad_L sigma(A_z).
/// Zones whose exposure is annihilated by L^T contribute nothing; the count of
/// such skips is reported through `skipped` when provided.
inline ShapeGradient envelope_grad_L(const ZonalSystem& sys, const ScedSolution& sol,
                                     const CholeskyShape& L, double rho, int* skipped = nullptr) {
    if (sol.status != LpStatus::Optimal) throw NotOptimal("envelope_grad_L: solution not Optimal");
    ShapeGradient g = ShapeGradient::zero(L.dim);
    int skips = 0;
    for (int z = 0; z < sys.num_zones(); ++z) {
        const double weight = sol.reserve_duals[z] + sol.transfer_duals[z];
        if (weight == 0.0) continue;
        Vector az = sys.exposure(z);
        if ((L.entries.transpose() * az).norm() < 1e-12) {
            ++skips;
            continue;
        }
        g.entries += weight * grad_support_L(L, rho, az).entries;
    }
    if (skipped) *skipped = skips;
    return g;
}

/// Envelope radius gradient: sum_z (mu_z + lambda_z) * ||L^T A_z||.
inline double envelope_grad_rho(const ZonalSystem& sys, const ScedSolution& sol,
                                const CholeskyShape& L) {
    if (sol.status != LpStatus::Optimal) throw NotOptimal("envelope_grad_rho: solution not Optimal");
    double g = 0.0;
    for (int z = 0; z < sys.num_zones(); ++z) {
        const double weight = sol.reserve_duals[z] + sol.transfer_duals[z];
        if (weight == 0.0) continue;
        g += weight * (L.entries.transpose() * sys.exposure(z)).norm();
    }
    return g;
}

inline void to_json(nlohmann::json& j, const Zone& z) {
    j = nlohmann::json{{"id", z.id}, {"load_mw", z.load_mw}};
}
inline void from_json(const nlohmann::json& j, Zone& z) {
    j.at("id").get_to(z.id);
    j.at("load_mw").get_to(z.load_mw);
}

inline void to_json(nlohmann::json& j, const Generator& g) {
    j = nlohmann::json{{"zone", g.zone},
                       {"g_min_mw", g.g_min_mw},
                       {"g_max_mw", g.g_max_mw},
                       {"energy_cost", g.energy_cost},
                       {"reserve_cost", g.reserve_cost}};
}
inline void from_json(const nlohmann::json& j, Generator& g) {
    j.at("zone").get_to(g.zone);
    j.at("g_min_mw").get_to(g.g_min_mw);
    j.at("g_max_mw").get_to(g.g_max_mw);
    j.at("energy_cost").get_to(g.energy_cost);
    j.at("reserve_cost").get_to(g.reserve_cost);
}

inline void to_json(nlohmann::json& j, const ZonalSystem& sys) {
    std::vector<std::vector<double>> alloc(sys.num_zones());
    for (int z = 0; z < sys.num_zones(); ++z) {
        alloc[z].resize(sys.dim());
        for (int k = 0; k < sys.dim(); ++k) alloc[z][k] = sys.allocation(z, k);
    }
    j = nlohmann::json{{"zones", sys.zones}, {"generators", sys.generators}, {"allocation", alloc}};
}
inline void from_json(const nlohmann::json& j, ZonalSystem& sys) {
    j.at("zones").get_to(sys.zones);
    j.at("generators").get_to(sys.generators);
    const auto& alloc = j.at("allocation");
    const int Z = static_cast<int>(alloc.size());
    if (Z == 0) throw ConfigError("system JSON: empty allocation");
    const int d = static_cast<int>(alloc.at(0).size());
    sys.allocation.resize(Z, d);
    for (int z = 0; z < Z; ++z) {
        if (static_cast<int>(alloc.at(z).size()) != d)
            throw ConfigError("system JSON: ragged allocation");
        for (int k = 0; k < d; ++k) sys.allocation(z, k) = alloc.at(z).at(k).get<double>();
    }
    sys.validate();
}

}  // namespace rsl
