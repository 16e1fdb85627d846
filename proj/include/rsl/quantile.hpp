#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rsl/geometry.hpp"
#include "rsl/normal.hpp"

namespace rsl {

enum class Kernel { Gaussian, Logistic };

inline Kernel kernel_from_string(const std::string& s) {
    if (s == "gaussian") return Kernel::Gaussian;
    if (s == "logistic") return Kernel::Logistic;
    throw ConfigError("unknown kernel '" + s + "' (expected gaussian or logistic)");
}

inline const char* kernel_name(Kernel k) {
    return k == Kernel::Gaussian ? "gaussian" : "logistic";
}

inline double kernel_cdf(Kernel k, double x) {
    if (k == Kernel::Gaussian) return normal_cdf(x);
    return 1.0 / (1.0 + std::exp(-x));
}

inline double kernel_pdf(Kernel k, double x) {
    if (k == Kernel::Gaussian) return normal_pdf(x);
    const double f = 1.0 / (1.0 + std::exp(-x));
    return f * (1.0 - f);
}

/// ceil(v) robust to the binary representation of decimal inputs, e.g.
/// ceil(20 * 0.95) must be 19 even though 20 * 0.95 > 19 in doubles.
inline long robust_ceil(double v) {
    return static_cast<long>(std::ceil(v - 1e-9 * std::max(1.0, std::abs(v))));
}

/// Smoothed tau-quantile of a score sample: the root of the kernel-smoothed
/// empirical CDF, plus the kernel weights evaluated at that root.
struct SmoothedQuantile {
    double rho_eps = 0.0;
    Vector weights;  // omega_i = pdf((rho_eps - S_i) / eps), sample order
    double eps = 0.0;
    double tau = 0.0;
};

/// Split-conformal radius: the k-th smallest calibration score.
struct ConformalRadius {
    double rho_tau = 0.0;
    long k_index = 0;
    long n_cal = 0;
    double tau = 0.0;
};

/// Gauge scores of a sample set, one per row of `us`.
inline Vector scores(const CholeskyShape& L, const Eigen::Ref<const Matrix>& us) {
    const long n = us.rows();
    Vector s(n);
    for (long i = 0; i < n; ++i) s[i] = gauge(L, us.row(i).transpose());
    return s;
}

/// Empirical smoothed CDF value at r.
inline double smoothed_cdf(const Vector& score_vec, double r, double eps, Kernel kernel) {
    double acc = 0.0;
    for (long i = 0; i < score_vec.size(); ++i)
        acc += kernel_cdf(kernel, (r - score_vec[i]) / eps);
    return acc / static_cast<double>(score_vec.size());
}

/// Bisection on the monotone map r -> F_hat(r) down to floating-point bracket
/// resolution; the returned root keeps F_hat(rho_eps) >= tau by construction.
inline SmoothedQuantile smoothed_quantile(const Vector& score_vec, double tau, double eps,
                                          Kernel kernel = Kernel::Gaussian) {
    if (score_vec.size() < 2) throw Error("smoothed_quantile: need at least two scores");
    if (!(tau > 0.0 && tau < 1.0)) throw Error("smoothed_quantile: tau outside (0,1)");
    if (!(eps > 0.0)) throw Error("smoothed_quantile: eps must be positive");

    double lo = score_vec.minCoeff() - 10.0 * eps;
    double hi = score_vec.maxCoeff() + 10.0 * eps;
    int expand = 0;
    while (smoothed_cdf(score_vec, lo, eps, kernel) >= tau && expand++ < 60) lo -= 10.0 * eps;
    expand = 0;
    while (smoothed_cdf(score_vec, hi, eps, kernel) < tau && expand++ < 60) hi += 10.0 * eps;
    if (smoothed_cdf(score_vec, hi, eps, kernel) < tau ||
        smoothed_cdf(score_vec, lo, eps, kernel) >= tau)
        throw NumericalError("smoothed_quantile: bracket failure");

    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;  // bracket at floating-point resolution
        if (smoothed_cdf(score_vec, mid, eps, kernel) >= tau)
            hi = mid;
        else
            lo = mid;
    }

    SmoothedQuantile sq;
    sq.rho_eps = hi;
    sq.eps = eps;
    sq.tau = tau;
    sq.weights.resize(score_vec.size());
    for (long i = 0; i < score_vec.size(); ++i)
        sq.weights[i] = kernel_pdf(kernel, (hi - score_vec[i]) / eps);
    return sq;
}

/// Empirical quantile sensitivity: the kernel-weighted average of the gauge
/// gradients. Samples at the origin get zero weight (their gradient is
/// undefined); if every weight underflows the bandwidth was far too small.
inline ShapeGradient quantile_sensitivity(const CholeskyShape& L,
                                          const Eigen::Ref<const Matrix>& us,
                                          const SmoothedQuantile& sq) {
    if (us.rows() != sq.weights.size())
        throw Error("quantile_sensitivity: weight/sample count mismatch");
    Matrix acc = Matrix::Zero(L.dim, L.dim);
    double total = 0.0;
    for (long i = 0; i < us.rows(); ++i) {
        Vector u = us.row(i).transpose();
        if (u.norm() == 0.0) continue;
        const double w = sq.weights[i];
        if (w == 0.0) continue;
        acc += w * grad_gauge_L(L, u).entries;
        total += w;
    }
    if (total <= 1e-300)
        throw DegenerateWeights("quantile_sensitivity: all kernel weights underflowed");
    return ShapeGradient(acc / total);
}

/// Split-conformal radius: k = ceil((n+1) tau), ascending-sorted k-th score.
inline ConformalRadius conformal_radius(const Vector& cal_scores, double tau) {
    const long n = cal_scores.size();
    if (n < 1) throw Error("conformal_radius: empty calibration set");
    if (!(tau > 0.0 && tau < 1.0)) throw Error("conformal_radius: tau outside (0,1)");
    const long k = robust_ceil((static_cast<double>(n) + 1.0) * tau);
    if (k > n)
        throw InsufficientCalibration("conformal_radius: need ceil((n+1)tau) <= n, got k = " +
                                      std::to_string(k) + " with n = " + std::to_string(n));
    std::vector<double> sorted(cal_scores.data(), cal_scores.data() + n);
    std::sort(sorted.begin(), sorted.end());
    return {sorted[static_cast<size_t>(k - 1)], k, n, tau};
}

/// Fraction of realizations inside the closed set {gauge <= rho}.
inline double empirical_coverage(const CholeskyShape& L, double rho,
                                 const Eigen::Ref<const Matrix>& us) {
    const long n = us.rows();
    if (n == 0) throw Error("empirical_coverage: empty sample");
    long inside = 0;
    for (long i = 0; i < n; ++i)
        if (gauge(L, us.row(i).transpose()) <= rho) ++inside;
    return static_cast<double>(inside) / static_cast<double>(n);
}

}  // namespace rsl
