#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsl/geometry.hpp"
#include "rsl/rng.hpp"
#include "rsl/sced.hpp"

namespace rsl {

inline constexpr int kNumRegions = 5;
inline constexpr int kNumSourceTypes = 3;  // load, solar, wind
inline constexpr int kUncertaintyDim = kNumRegions * kNumSourceTypes;

/// Operating-condition features for one hour. The uncertainty source order is
/// region-major: index 3*region + type with type 0 = load, 1 = solar, 2 = wind.
struct Context {
    double hour_sin = 0.0, hour_cos = 1.0;
    double month_sin = 0.0, month_cos = 1.0;
    std::array<double, kNumRegions> load_forecast{};
    std::array<double, kNumRegions> solar_forecast{};
    std::array<double, kNumRegions> wind_forecast{};

    void validate() const {
        auto unit = [](double s, double c) { return std::abs(s * s + c * c - 1.0) <= 1e-9; };
        if (!unit(hour_sin, hour_cos) || !unit(month_sin, month_cos))
            throw Error("Context: trig pair off the unit circle");
        for (int r = 0; r < kNumRegions; ++r)
            if (load_forecast[r] < 0 || load_forecast[r] > 1 || solar_forecast[r] < 0 ||
                solar_forecast[r] > 1 || wind_forecast[r] < 0 || wind_forecast[r] > 1)
                throw Error("Context: forecast outside [0,1]");
    }

    /// Feature layout consumed by the contextual encoder (documented order:
    /// trig pairs, then per-region load, solar, wind forecasts).
    Vector feature_vector() const {
        Vector f(4 + 3 * kNumRegions);
        f[0] = hour_sin;
        f[1] = hour_cos;
        f[2] = month_sin;
        f[3] = month_cos;
        for (int r = 0; r < kNumRegions; ++r) {
            f[4 + r] = load_forecast[r];
            f[4 + kNumRegions + r] = solar_forecast[r];
            f[4 + 2 * kNumRegions + r] = wind_forecast[r];
        }
        return f;
    }

    /// Hour of day recovered exactly from the trig pair (hours are integral).
    int hour_of_day() const {
        double a = std::atan2(hour_sin, hour_cos);
        if (a < 0) a += 2.0 * std::numbers::pi;
        return static_cast<int>(std::lround(a * 24.0 / (2.0 * std::numbers::pi))) % 24;
    }
};

/// Solar availability mask: positive between roughly 06:00 and 18:00.
inline double daylight_fraction(int hour) {
    const double hd = hour + 0.5;
    return std::max(0.0, std::sin(std::numbers::pi * (hd - 6.0) / 12.0));
}

/// Parameters of the context-dependent VAR(1) forecast-error generator.
/// The paper's generator is calibrated to proprietary data; these defaults are
/// fixed, documented stand-ins chosen for qualitative realism.
struct GeneratorParams {
    double ar_coeff = 0.6;        // shared scalar persistence, must be in [0,1)
    double base_scale_load = 14;  // MW; sized so requirements fit zonal headroom
    double base_scale_solar = 11;
    double base_scale_wind = 17;
    double corr_regional = 0.4;
    double corr_type = 0.3;
    double solar_night_floor = 1e-3;  // MW, keeps Sigma positive definite at night
    std::uint64_t seed = 42;

    void validate() const {
        if (!(ar_coeff >= 0.0 && ar_coeff < 1.0)) throw BadParams("ar_coeff outside [0,1)");
        if (base_scale_load <= 0 || base_scale_solar <= 0 || base_scale_wind <= 0)
            throw BadParams("base scales must be positive");
        if (corr_regional < 0 || corr_regional >= 1 || corr_type < 0 || corr_type >= 1)
            throw BadParams("correlations must lie in [0,1)");
        if (solar_night_floor <= 0) throw BadParams("solar_night_floor must be positive");
    }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GeneratorParams, ar_coeff, base_scale_load, base_scale_solar,
                                   base_scale_wind, corr_regional, corr_type, solar_night_floor,
                                   seed)

/// Context-dependent covariance Sigma(xi) = D(xi) * (R_reg (x) R_type) * D(xi).
/// Load scale grows with the load forecast, solar scale follows daylight times
/// the solar forecast (floored at night), wind scale grows with the wind
/// forecast. The Kronecker correlation couples regions and source types.
inline Matrix context_covariance(const GeneratorParams& p, const Context& ctx) {
    const double day = daylight_fraction(ctx.hour_of_day());
    Vector scale(kUncertaintyDim);
    for (int r = 0; r < kNumRegions; ++r) {
        scale[3 * r + 0] = p.base_scale_load * (0.5 + ctx.load_forecast[r]);
        scale[3 * r + 1] =
            std::max(p.base_scale_solar * day * ctx.solar_forecast[r], p.solar_night_floor);
        scale[3 * r + 2] = p.base_scale_wind * (0.3 + ctx.wind_forecast[r]);
    }
    Matrix sigma(kUncertaintyDim, kUncertaintyDim);
    for (int i = 0; i < kUncertaintyDim; ++i) {
        const int ri = i / 3, ti = i % 3;
        for (int j = 0; j < kUncertaintyDim; ++j) {
            const int rj = j / 3, tj = j % 3;
            const double reg = ri == rj ? 1.0 : p.corr_regional;
            const double typ = ti == tj ? 1.0 : p.corr_type;
            sigma(i, j) = scale[i] * scale[j] * reg * typ;
        }
    }
    return sigma;
}

/// Ground-truth ellipsoid shape at a context: chol(Sigma(xi)).
inline CholeskyShape true_shape(const GeneratorParams& p, const Context& ctx) {
    return cholesky_factor(context_covariance(p, ctx));
}

namespace detail {

/// Smooth seeded AR(1) noise track used inside the context profiles.
class NoiseTrack {
public:
    NoiseTrack(std::uint64_t seed, const char* stream, std::uint64_t substream)
        : rng_(seed, stream, substream) {}
    double next() {
        state_ = 0.92 * state_ + 0.39 * rng_.normal();
        return state_;
    }

private:
    StreamRng rng_;
    double state_ = 0.0;
};

inline double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace detail

/// Deterministic context profile for hour t: daily/seasonal sinusoids plus
/// slowly-varying seeded noise per region.
class ContextGenerator {
public:
    explicit ContextGenerator(const GeneratorParams& p) {
        for (int r = 0; r < kNumRegions; ++r) {
            load_noise_.emplace_back(p.seed, "ctx-load", r);
            solar_noise_.emplace_back(p.seed, "ctx-solar", r);
            wind_noise_.emplace_back(p.seed, "ctx-wind", r);
        }
    }

    Context at_hour(long t) {
        const int hour = static_cast<int>(t % 24);
        const long doy = (t / 24) % 365;
        const int month = std::min(11, static_cast<int>(doy / 30.4375));
        const double two_pi = 2.0 * std::numbers::pi;

        Context c;
        c.hour_sin = std::sin(two_pi * hour / 24.0);
        c.hour_cos = std::cos(two_pi * hour / 24.0);
        c.month_sin = std::sin(two_pi * (month + 0.5) / 12.0);
        c.month_cos = std::cos(two_pi * (month + 0.5) / 12.0);
        // Mild seasonal amplitudes: every split spans all hours of the day, so
        // the chronological splits stay close to exchangeable.
        const double day = daylight_fraction(hour);
        for (int r = 0; r < kNumRegions; ++r) {
            c.load_forecast[r] = detail::clip01(0.55 + 0.2 * std::sin(two_pi * (hour - 14.5) / 24.0) +
                                                0.04 * std::sin(two_pi * (doy - 10.0) / 365.0) +
                                                0.08 * load_noise_[r].next());
            c.solar_forecast[r] =
                day * detail::clip01(0.68 + 0.08 * std::sin(two_pi * (doy - 172.0) / 365.0) +
                                     0.12 * solar_noise_[r].next());
            c.wind_forecast[r] = detail::clip01(0.45 + 0.07 * std::sin(two_pi * (doy - 60.0) / 365.0) +
                                                0.25 * wind_noise_[r].next());
        }
        return c;
    }

private:
    std::vector<detail::NoiseTrack> load_noise_, solar_noise_, wind_noise_;
};

enum class Split { Train, Tune, Cal, Test };

/// Time-ordered contexts and realizations with a chronological four-way split.
struct UncertaintyDataset {
    std::vector<Context> contexts;
    Matrix u;  // n x d, row t is the realization for hour t
    int train_end = 0, tune_end = 0, cal_end = 0;

    int size() const { return static_cast<int>(u.rows()); }
    int dim() const { return static_cast<int>(u.cols()); }

    std::pair<int, int> range(Split s) const {
        switch (s) {
            case Split::Train: return {0, train_end};
            case Split::Tune: return {train_end, tune_end};
            case Split::Cal: return {tune_end, cal_end};
            case Split::Test: return {cal_end, size()};
        }
        throw Error("UncertaintyDataset: bad split");
    }

    Eigen::Ref<const Matrix> split_u(Split s) const {
        auto [b, e] = range(s);
        return u.middleRows(b, e - b);
    }

    void validate() const {
        if (!(0 < train_end && train_end <= tune_end && tune_end <= cal_end && cal_end < size()))
            throw Error("UncertaintyDataset: split boundaries out of order");
        if (static_cast<int>(contexts.size()) != size())
            throw Error("UncertaintyDataset: context/realization count mismatch");
    }
};

/// PSD probe demanded of the parameters: Cholesky must succeed on 1,000
/// reachable contexts before any data is generated.
inline void probe_params(const GeneratorParams& p) {
    p.validate();
    ContextGenerator gen(p);
    for (long t = 0; t < 1000; ++t) {
        try {
            (void)true_shape(p, gen.at_hour(t * 7 + 3));
        } catch (const NotPSD&) {
            throw BadParams("GeneratorParams: covariance probe failed Cholesky");
        }
    }
}

/// Context-dependent VAR(1) series: u_t = ar * u_{t-1} + chol(Sigma(xi_t)) e_t
/// with i.i.d. standard-normal innovations from the seeded "innov" stream.
inline UncertaintyDataset generate(const GeneratorParams& p, long n_hours,
                                   std::array<double, 4> fractions = {0.6, 0.2, 0.1, 0.1}) {
    if (n_hours < 48) throw BadParams("generate: n_hours must be at least 48");
    const double fsum = fractions[0] + fractions[1] + fractions[2] + fractions[3];
    if (std::abs(fsum - 1.0) > 1e-9) throw BadParams("generate: split fractions must sum to 1");
    probe_params(p);

    UncertaintyDataset ds;
    ds.contexts.reserve(n_hours);
    ds.u.resize(n_hours, kUncertaintyDim);

    ContextGenerator ctx_gen(p);
    StreamRng innov(p.seed, "innov");
    Vector prev = Vector::Zero(kUncertaintyDim);
    Vector e(kUncertaintyDim);
    for (long t = 0; t < n_hours; ++t) {
        Context c = ctx_gen.at_hour(t);
        CholeskyShape lt = true_shape(p, c);
        for (int k = 0; k < kUncertaintyDim; ++k) e[k] = innov.normal();
        Vector ut = p.ar_coeff * prev + lt.entries * e;
        ds.u.row(t) = ut.transpose();
        prev = ut;
        ds.contexts.push_back(std::move(c));
    }
    // Cumulative rounding keeps the boundaries exact when fractions * n are
    // whole numbers despite binary representation of the fractions.
    ds.train_end = static_cast<int>(std::llround(fractions[0] * n_hours));
    ds.tune_end = static_cast<int>(std::llround((fractions[0] + fractions[1]) * n_hours));
    ds.cal_end =
        static_cast<int>(std::llround((fractions[0] + fractions[1] + fractions[2]) * n_hours));
    ds.validate();
    return ds;
}

/// I.i.d. draws at one frozen context (used by Monte-Carlo oracles).
inline Matrix generate_iid(const GeneratorParams& p, const Context& ctx, long n,
                           std::uint64_t substream = 0) {
    p.validate();
    CholeskyShape lt = true_shape(p, ctx);
    StreamRng innov(p.seed, "innov-iid", substream);
    Matrix out(n, kUncertaintyDim);
    Vector e(kUncertaintyDim);
    for (long t = 0; t < n; ++t) {
        for (int k = 0; k < kUncertaintyDim; ++k) e[k] = innov.normal();
        out.row(t) = (lt.entries * e).transpose();
    }
    return out;
}

/// Ten-zone system with the fixed zonal loads/caps, 54 generators split 5-6 per
/// zone with capacities summing to the zone cap, seeded offer prices
/// (energy uniform on [15,45] $/MWh, reserve uniform on [1,8] $/MWh), and the
/// load-share allocation matrix.
inline ZonalSystem default_system(std::uint64_t seed);

/// Region r's three source columns spread over its two footprint zones
/// (ids 2r+1, 2r+2) with weights proportional to zone load; columns sum to 1.
inline Matrix default_allocation(const ZonalSystem& sys) {
    const int Z = sys.num_zones();
    if (Z != 2 * kNumRegions) throw Error("default_allocation: needs exactly 10 zones");
    Matrix a = Matrix::Zero(Z, kUncertaintyDim);
    for (int r = 0; r < kNumRegions; ++r) {
        const int z0 = sys.zone_index(2 * r + 1);
        const int z1 = sys.zone_index(2 * r + 2);
        const double l0 = sys.zones[z0].load_mw, l1 = sys.zones[z1].load_mw;
        for (int type = 0; type < kNumSourceTypes; ++type) {
            a(z0, 3 * r + type) = l0 / (l0 + l1);
            a(z1, 3 * r + type) = l1 / (l0 + l1);
        }
    }
    return a;
}

inline ZonalSystem default_system(std::uint64_t seed) {
    static constexpr double kLoads[10] = {423, 412, 445, 398, 467, 389, 456, 401, 478, 373};
    static constexpr double kCaps[10] = {550, 520, 580, 490, 610, 480, 590, 510, 620, 550};

    ZonalSystem sys;
    for (int z = 0; z < 10; ++z) sys.zones.push_back({z + 1, kLoads[z]});

    // 54 generators: the four highest-cap zones host 6, the rest host 5.
    std::array<int, 10> order{};
    for (int z = 0; z < 10; ++z) order[z] = z;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return kCaps[a] > kCaps[b]; });
    std::array<int, 10> count{};
    count.fill(5);
    for (int k = 0; k < 4; ++k) count[order[k]] = 6;

    StreamRng caps(seed, "caps");
    StreamRng prices(seed, "prices");
    for (int z = 0; z < 10; ++z) {
        std::vector<double> w(count[z]);
        double wsum = 0.0;
        for (double& v : w) {
            v = 0.6 + 0.8 * caps.uniform();
            wsum += v;
        }
        for (int k = 0; k < count[z]; ++k) {
            Generator g;
            g.zone = z + 1;
            g.g_min_mw = 0.0;
            g.g_max_mw = kCaps[z] * w[k] / wsum;
            g.energy_cost = prices.uniform(15.0, 45.0);
            g.reserve_cost = prices.uniform(1.0, 8.0);
            sys.generators.push_back(g);
        }
    }
    sys.allocation = default_allocation(sys);
    sys.validate();
    return sys;
}

/// Sample-covariance shape: chol of the (1/n, mean-centered) covariance.
inline CholeskyShape sample_covariance_shape(const Eigen::Ref<const Matrix>& samples) {
    const long n = samples.rows();
    const long d = samples.cols();
    if (n < d + 1) throw Error("sample_covariance_shape: need at least d+1 samples");
    Eigen::RowVectorXd mean = samples.colwise().mean();
    Matrix centered = samples.rowwise() - mean;
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(n);
    return cholesky_factor(cov);
}

/// Diagonal ablation: marginal standard deviations only.
inline CholeskyShape independent_shape(const Eigen::Ref<const Matrix>& samples) {
    const long n = samples.rows();
    const long d = samples.cols();
    if (n < d + 1) throw Error("independent_shape: need at least d+1 samples");
    Eigen::RowVectorXd mean = samples.colwise().mean();
    Matrix centered = samples.rowwise() - mean;
    Matrix L = Matrix::Zero(d, d);
    for (long j = 0; j < d; ++j)
        L(j, j) = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n));
    return CholeskyShape(static_cast<int>(d), std::move(L));
}

// ---- persistence ----------------------------------------------------------

namespace detail {

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

/// One CSV row per hour: index, context fields, then u_1..u_d; 17 significant
/// digits so the round trip through text is bit-exact.
inline void save_dataset_csv(const UncertaintyDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_dataset_csv: cannot open " + path);
    out << "t,hour_sin,hour_cos,month_sin,month_cos";
    for (int r = 0; r < kNumRegions; ++r) out << ",load_fc_" << r;
    for (int r = 0; r < kNumRegions; ++r) out << ",solar_fc_" << r;
    for (int r = 0; r < kNumRegions; ++r) out << ",wind_fc_" << r;
    for (int k = 0; k < ds.dim(); ++k) out << ",u_" << k;
    out << "\n";
    for (int t = 0; t < ds.size(); ++t) {
        const Context& c = ds.contexts[t];
        out << t;
        for (double v : {c.hour_sin, c.hour_cos, c.month_sin, c.month_cos})
            out << ',' << detail::format_g17(v);
        for (int r = 0; r < kNumRegions; ++r) out << ',' << detail::format_g17(c.load_forecast[r]);
        for (int r = 0; r < kNumRegions; ++r) out << ',' << detail::format_g17(c.solar_forecast[r]);
        for (int r = 0; r < kNumRegions; ++r) out << ',' << detail::format_g17(c.wind_forecast[r]);
        for (int k = 0; k < ds.dim(); ++k) out << ',' << detail::format_g17(ds.u(t, k));
        out << "\n";
    }
}

/// Sidecar with the generator parameters and split boundaries.
inline void save_dataset_meta(const UncertaintyDataset& ds, const GeneratorParams& p,
                              const std::string& path) {
    nlohmann::json j{{"params", p},
                     {"n", ds.size()},
                     {"train_end", ds.train_end},
                     {"tune_end", ds.tune_end},
                     {"cal_end", ds.cal_end}};
    std::ofstream out(path);
    if (!out) throw Error("save_dataset_meta: cannot open " + path);
    out << j.dump(2) << "\n";
}

inline std::pair<UncertaintyDataset, GeneratorParams> load_dataset(const std::string& csv_path,
                                                                   const std::string& meta_path) {
    std::ifstream meta(meta_path);
    if (!meta) throw Error("load_dataset: cannot open " + meta_path);
    nlohmann::json j = nlohmann::json::parse(meta);
    GeneratorParams params = j.at("params").get<GeneratorParams>();
    const int n = j.at("n").get<int>();

    UncertaintyDataset ds;
    ds.train_end = j.at("train_end").get<int>();
    ds.tune_end = j.at("tune_end").get<int>();
    ds.cal_end = j.at("cal_end").get<int>();
    ds.contexts.resize(n);
    ds.u.resize(n, kUncertaintyDim);

    std::ifstream in(csv_path);
    if (!in) throw Error("load_dataset: cannot open " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw Error("load_dataset: empty CSV");
    for (int t = 0; t < n; ++t) {
        if (!std::getline(in, line)) throw Error("load_dataset: truncated CSV");
        const char* s = line.c_str();
        char* end = nullptr;
        auto next = [&]() {
            while (*s == ',') ++s;
            const double v = std::strtod(s, &end);
            if (end == s) throw Error("load_dataset: malformed CSV row");
            s = end;
            return v;
        };
        (void)next();  // index column
        Context& c = ds.contexts[t];
        c.hour_sin = next();
        c.hour_cos = next();
        c.month_sin = next();
        c.month_cos = next();
        for (int r = 0; r < kNumRegions; ++r) c.load_forecast[r] = next();
        for (int r = 0; r < kNumRegions; ++r) c.solar_forecast[r] = next();
        for (int r = 0; r < kNumRegions; ++r) c.wind_forecast[r] = next();
        for (int k = 0; k < kUncertaintyDim; ++k) ds.u(t, k) = next();
    }
    ds.validate();
    return {std::move(ds), params};
}

}  // namespace rsl
