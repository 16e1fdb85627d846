#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "rsl/errors.hpp"

namespace rsl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultDiagFloor = 1e-6;

/// Lower-triangular Cholesky factor with positive diagonal; the trainable
/// uncertainty-set shape. The ellipsoid it generates is {u : ||L^{-1}u|| <= rho}.
struct CholeskyShape {
    int dim = 0;
    Matrix entries;                       // dim x dim, upper triangle identically 0
    double diag_floor = kDefaultDiagFloor;

    CholeskyShape() = default;
    CholeskyShape(int d, Matrix m, double floor = kDefaultDiagFloor)
        : dim(d), entries(std::move(m)), diag_floor(floor) {}

    static CholeskyShape identity(int d) { return CholeskyShape(d, Matrix::Identity(d, d)); }

    /// Throws if the triangular structure or the diagonal floor is violated.
    void validate() const {
        if (dim <= 0 || entries.rows() != dim || entries.cols() != dim)
            throw Error("CholeskyShape: inconsistent dimensions");
        if (!entries.allFinite()) throw Error("CholeskyShape: non-finite entries");
        for (int i = 0; i < dim; ++i) {
            for (int j = i + 1; j < dim; ++j)
                if (entries(i, j) != 0.0) throw Error("CholeskyShape: nonzero upper triangle");
            if (entries(i, i) < diag_floor * (1.0 - 1e-12))
                throw DegenerateShape("CholeskyShape: diagonal entry below floor");
        }
    }

    double trace_gram() const { return entries.squaredNorm(); }  // tr(L L^T)
};

/// Frobenius gradient with respect to L; only the lower triangle is free.
struct ShapeGradient {
    Matrix entries;

    explicit ShapeGradient(Matrix m) : entries(std::move(m)) {}
    static ShapeGradient zero(int d) { return ShapeGradient(Matrix::Zero(d, d)); }

    double frobenius_norm() const { return entries.norm(); }
};

/// Zeros the upper triangle in place.
inline void mask_lower(Matrix& m) {
    const auto d = m.rows();
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = i + 1; j < d; ++j) m(i, j) = 0.0;
}

/// Gauge score s_L(u) = ||L^{-1}u||_2, by forward substitution.
inline double gauge(const CholeskyShape& L, const Vector& u) {
    if (u.size() != L.dim) throw Error("gauge: dimension mismatch");
    if (!u.allFinite()) throw Error("gauge: non-finite realization");
    for (int i = 0; i < L.dim; ++i)
        if (std::abs(L.entries(i, i)) < L.diag_floor)
            throw DegenerateShape("gauge: diagonal below floor");
    Vector v = L.entries.triangularView<Eigen::Lower>().solve(u);
    return v.norm();
}

/// Support function of the ellipsoid: sigma_{U_{L,rho}}(w) = rho * ||L^T w||_2.
inline double support(const CholeskyShape& L, double rho, const Vector& w) {
    if (!(rho > 0.0)) throw Error("support: rho must be positive");
    if (w.size() != L.dim) throw Error("support: dimension mismatch");
    return rho * (L.entries.transpose() * w).norm();
}

/// Gradient of the support function in L: rho * w w^T L / ||L^T w||, lower-masked.
inline ShapeGradient grad_support_L(const CholeskyShape& L, double rho, const Vector& w,
                                    double tol = 1e-12) {
    if (!(rho > 0.0)) throw Error("grad_support_L: rho must be positive");
    Vector y = L.entries.transpose() * w;
    const double nrm = y.norm();
    if (nrm <= tol) throw ZeroDirection("grad_support_L: L^T w vanishes");
    Matrix g = (rho / nrm) * (w * y.transpose());
    mask_lower(g);
    return ShapeGradient(std::move(g));
}

/// Gradient of the gauge in L: -L^{-T} v v^T / ||v|| with v = L^{-1}u, lower-masked.
inline ShapeGradient grad_gauge_L(const CholeskyShape& L, const Vector& u) {
    if (u.size() != L.dim) throw Error("grad_gauge_L: dimension mismatch");
    Vector v = L.entries.triangularView<Eigen::Lower>().solve(u);
    const double nv = v.norm();
    if (nv == 0.0) throw ZeroRealization("grad_gauge_L: u = 0");
    Vector z = L.entries.transpose().triangularView<Eigen::Upper>().solve(v);
    Matrix g = (-1.0 / nv) * (z * v.transpose());
    mask_lower(g);
    return ShapeGradient(std::move(g));
}

/// Projection onto the shape manifold: zero the upper triangle, clamp the
/// diagonal to the floor, then (optionally) rescale so tr(L L^T) = d.
/// Clamping precedes scaling so the positive scale factor preserves positivity.
inline CholeskyShape project_shape(const Matrix& M, double diag_floor = kDefaultDiagFloor,
                                   bool normalize_trace = true) {
    if (!M.allFinite()) throw Error("project_shape: non-finite input");
    const int d = static_cast<int>(M.rows());
    if (M.cols() != d) throw Error("project_shape: matrix not square");
    Matrix L = M;
    mask_lower(L);
    for (int i = 0; i < d; ++i) L(i, i) = std::max(L(i, i), diag_floor);
    if (normalize_trace) {
        const double tr = L.squaredNorm();
        L *= std::sqrt(static_cast<double>(d) / tr);
        for (int i = 0; i < d; ++i) L(i, i) = std::max(L(i, i), diag_floor);
    }
    return CholeskyShape(d, std::move(L), diag_floor);
}

/// Cholesky factor of a symmetric PSD matrix, with a diagonal-jitter fallback:
/// on failure, add 1e-8 * trace(Sigma)/d * I and retry, up to three times.
inline CholeskyShape cholesky_factor(const Matrix& Sigma) {
    const int d = static_cast<int>(Sigma.rows());
    if (Sigma.cols() != d || d == 0) throw Error("cholesky_factor: matrix not square");
    if (!Sigma.allFinite()) throw Error("cholesky_factor: non-finite input");
    if ((Sigma - Sigma.transpose()).cwiseAbs().maxCoeff() >
        1e-8 * (1.0 + Sigma.cwiseAbs().maxCoeff()))
        throw Error("cholesky_factor: matrix not symmetric");

    const double jitter = 1e-8 * Sigma.trace() / d;
    Matrix S = Sigma;
    for (int attempt = 0; attempt <= 3; ++attempt) {
        Eigen::LLT<Matrix> llt(S);
        if (llt.info() == Eigen::Success) {
            Matrix L = llt.matrixL();
            return CholeskyShape(d, std::move(L));
        }
        S += jitter * Matrix::Identity(d, d);
    }
    throw NotPSD("cholesky_factor: not PSD after jitter retries");
}

inline void to_json(nlohmann::json& j, const CholeskyShape& L) {
    std::vector<std::vector<double>> rows(L.dim);
    for (int i = 0; i < L.dim; ++i) {
        rows[i].resize(L.dim);
        for (int jj = 0; jj < L.dim; ++jj) rows[i][jj] = L.entries(i, jj);
    }
    j = nlohmann::json{{"dim", L.dim}, {"rows", rows}};
}

inline void from_json(const nlohmann::json& j, CholeskyShape& L) {
    L.dim = j.at("dim").get<int>();
    const auto& rows = j.at("rows");
    if (static_cast<int>(rows.size()) != L.dim) throw ConfigError("shape JSON: bad row count");
    L.entries.resize(L.dim, L.dim);
    for (int i = 0; i < L.dim; ++i) {
        const auto& row = rows.at(i);
        if (static_cast<int>(row.size()) != L.dim) throw ConfigError("shape JSON: bad row length");
        for (int jj = 0; jj < L.dim; ++jj) L.entries(i, jj) = row.at(jj).get<double>();
    }
    L.diag_floor = kDefaultDiagFloor;
}

inline void save_shape(const CholeskyShape& L, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_shape: cannot open " + path);
    nlohmann::json j = L;
    out << j.dump(2) << "\n";
}

inline CholeskyShape load_shape(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_shape: cannot open " + path);
    return nlohmann::json::parse(in).get<CholeskyShape>();
}

}  // namespace rsl
