#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsl/data.hpp"
#include "rsl/encoder.hpp"
#include "rsl/eval.hpp"
#include "rsl/train.hpp"
#include "rsl/version.hpp"

namespace rsl {

namespace detail {

inline void require_keys(const nlohmann::json& j, const std::string& where,
                         const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
}

inline std::string config_hash_hex(const nlohmann::json& j) {
    const std::uint64_t h = detail::fnv1a(j.dump());
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace detail

/// Full run configuration; every field carries the published default, and a
/// config file may override any subset. Unknown keys are rejected.
struct RunConfig {
    // data
    GeneratorParams params;
    long n_hours = 35040;
    std::array<double, 4> split_fractions = {0.6, 0.2, 0.1, 0.1};
    // system
    std::uint64_t system_seed = 42;
    std::optional<std::string> system_file;
    // train (static)
    TrainConfig train;
    // contextual
    bool contextual_enabled = true;
    ContextualConfig contextual;
    // eval
    double eval_tau = 0.95;
    std::vector<double> tau_list = {0.90, 0.92, 0.95, 0.97, 0.99};
    bool eval_coupled = false;
    double alpha_tight = 0.9;
    double alpha_loose = 1.5;
    // Empty list = pick the three zones with the highest reserve shadow prices
    // at the sample-covariance tuning-radius solve; explicit ids override.
    std::vector<int> tight_zones;
    BootstrapConfig bootstrap;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["data"] = {{"n_hours", n_hours},
                     {"split_fractions", split_fractions},
                     {"params", params}};
        j["system"] = nlohmann::json{{"seed", system_seed}};
        if (system_file) j["system"]["file"] = *system_file;
        j["train"] = {{"tau", train.tau},
                      {"eps", train.eps},
                      {"iterations", train.iterations},
                      {"step_size", train.step_size},
                      {"grad_clip_norm", train.grad_clip_norm},
                      {"seed", train.seed},
                      {"kernel", kernel_name(train.kernel)},
                      {"trace_normalize", train.trace_normalize},
                      {"coupled", train.coupled},
                      {"log_every", train.log_every}};
        j["contextual"] = {{"enabled", contextual_enabled},
                           {"batch_size", contextual.batch_size},
                           {"learning_rate", contextual.learning_rate},
                           {"clip_norm", contextual.clip_norm},
                           {"max_iterations", contextual.max_iterations},
                           {"patience", contextual.patience},
                           {"trailing_window", contextual.trailing_window},
                           {"hidden", contextual.hidden},
                           {"seed", contextual.seed},
                           {"kernel", kernel_name(contextual.kernel)}};
        j["eval"] = {{"tau", eval_tau},
                     {"tau_list", tau_list},
                     {"coupled", eval_coupled},
                     {"alpha_tight", alpha_tight},
                     {"alpha_loose", alpha_loose},
                     {"tight_zones", tight_zones},
                     {"bootstrap",
                      {{"block_len", bootstrap.block_len},
                       {"reps", bootstrap.reps},
                       {"level", bootstrap.level},
                       {"seed", bootstrap.seed}}}};
        return j;
    }
};

inline RunConfig parse_config(const nlohmann::json& j) {
    RunConfig cfg;
    detail::require_keys(j, "config", {"data", "system", "train", "contextual", "eval"});

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::require_keys(d, "data", {"n_hours", "split_fractions", "params"});
        if (d.contains("n_hours")) d.at("n_hours").get_to(cfg.n_hours);
        if (d.contains("split_fractions")) d.at("split_fractions").get_to(cfg.split_fractions);
        if (d.contains("params")) {
            const auto& p = d.at("params");
            detail::require_keys(p, "data.params",
                                 {"ar_coeff", "base_scale_load", "base_scale_solar",
                                  "base_scale_wind", "corr_regional", "corr_type",
                                  "solar_night_floor", "seed"});
            GeneratorParams defaults;
            nlohmann::json merged = nlohmann::json(defaults);
            merged.update(p);
            cfg.params = merged.get<GeneratorParams>();
        }
    }
    if (j.contains("system")) {
        const auto& s = j.at("system");
        detail::require_keys(s, "system", {"seed", "file"});
        if (s.contains("seed")) s.at("seed").get_to(cfg.system_seed);
        if (s.contains("file")) cfg.system_file = s.at("file").get<std::string>();
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::require_keys(t, "train",
                             {"tau", "eps", "iterations", "step_size", "grad_clip_norm", "seed",
                              "kernel", "trace_normalize", "coupled", "log_every"});
        if (t.contains("tau")) t.at("tau").get_to(cfg.train.tau);
        if (t.contains("eps")) t.at("eps").get_to(cfg.train.eps);
        if (t.contains("iterations")) t.at("iterations").get_to(cfg.train.iterations);
        if (t.contains("step_size")) t.at("step_size").get_to(cfg.train.step_size);
        if (t.contains("grad_clip_norm")) t.at("grad_clip_norm").get_to(cfg.train.grad_clip_norm);
        if (t.contains("seed")) t.at("seed").get_to(cfg.train.seed);
        if (t.contains("kernel")) cfg.train.kernel = kernel_from_string(t.at("kernel"));
        if (t.contains("trace_normalize")) t.at("trace_normalize").get_to(cfg.train.trace_normalize);
        if (t.contains("coupled")) t.at("coupled").get_to(cfg.train.coupled);
        if (t.contains("log_every")) t.at("log_every").get_to(cfg.train.log_every);
    }
    if (j.contains("contextual")) {
        const auto& c = j.at("contextual");
        detail::require_keys(c, "contextual",
                             {"enabled", "batch_size", "learning_rate", "clip_norm",
                              "max_iterations", "patience", "trailing_window", "hidden", "seed",
                              "kernel"});
        if (c.contains("enabled")) c.at("enabled").get_to(cfg.contextual_enabled);
        if (c.contains("batch_size")) c.at("batch_size").get_to(cfg.contextual.batch_size);
        if (c.contains("learning_rate")) c.at("learning_rate").get_to(cfg.contextual.learning_rate);
        if (c.contains("clip_norm")) c.at("clip_norm").get_to(cfg.contextual.clip_norm);
        if (c.contains("max_iterations")) c.at("max_iterations").get_to(cfg.contextual.max_iterations);
        if (c.contains("patience")) c.at("patience").get_to(cfg.contextual.patience);
        if (c.contains("trailing_window"))
            c.at("trailing_window").get_to(cfg.contextual.trailing_window);
        if (c.contains("hidden")) c.at("hidden").get_to(cfg.contextual.hidden);
        if (c.contains("seed")) c.at("seed").get_to(cfg.contextual.seed);
        if (c.contains("kernel")) cfg.contextual.kernel = kernel_from_string(c.at("kernel"));
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::require_keys(e, "eval",
                             {"tau", "tau_list", "coupled", "alpha_tight", "alpha_loose",
                              "tight_zones", "bootstrap"});
        if (e.contains("tau")) e.at("tau").get_to(cfg.eval_tau);
        if (e.contains("tau_list")) e.at("tau_list").get_to(cfg.tau_list);
        if (e.contains("coupled")) e.at("coupled").get_to(cfg.eval_coupled);
        if (e.contains("alpha_tight")) e.at("alpha_tight").get_to(cfg.alpha_tight);
        if (e.contains("alpha_loose")) e.at("alpha_loose").get_to(cfg.alpha_loose);
        if (e.contains("tight_zones")) {
            if (e.at("tight_zones").is_string()) {
                if (e.at("tight_zones").get<std::string>() != "auto")
                    throw ConfigError("config: eval.tight_zones must be a list or \"auto\"");
                cfg.tight_zones.clear();
            } else {
                e.at("tight_zones").get_to(cfg.tight_zones);
            }
        }
        if (e.contains("bootstrap")) {
            const auto& b = e.at("bootstrap");
            detail::require_keys(b, "eval.bootstrap", {"block_len", "reps", "level", "seed"});
            if (b.contains("block_len")) b.at("block_len").get_to(cfg.bootstrap.block_len);
            if (b.contains("reps")) b.at("reps").get_to(cfg.bootstrap.reps);
            if (b.contains("level")) b.at("level").get_to(cfg.bootstrap.level);
            if (b.contains("seed")) b.at("seed").get_to(cfg.bootstrap.seed);
        }
    }
    cfg.train.validate();
    cfg.contextual.validate();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    try {
        return parse_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
}

namespace detail {

inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           const RunConfig& cfg) {
    nlohmann::json j{{"tool", "rsl"},
                     {"version", kToolVersion},
                     {"command", command},
                     {"config_hash", config_hash_hex(cfg.to_json())}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error("cannot write manifest in " + dir.string());
    out << j.dump(2) << "\n";
}

inline ZonalSystem resolve_system(const RunConfig& cfg) {
    if (cfg.system_file) {
        std::ifstream in(*cfg.system_file);
        if (!in) throw ConfigError("cannot open system file " + *cfg.system_file);
        return nlohmann::json::parse(in).get<ZonalSystem>();
    }
    return default_system(cfg.system_seed);
}

struct LoadedData {
    ZonalSystem sys;
    UncertaintyDataset ds;
    GeneratorParams params;
};

inline LoadedData load_data_dir(const std::string& data_dir) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(data_dir) / "data";
    LoadedData out;
    {
        std::ifstream in(dir / "system.json");
        if (!in) throw ConfigError("missing " + (dir / "system.json").string() +
                                   " (run gen-data first)");
        out.sys = nlohmann::json::parse(in).get<ZonalSystem>();
    }
    auto [ds, params] = load_dataset((dir / "dataset.csv").string(),
                                     (dir / "dataset_meta.json").string());
    out.ds = std::move(ds);
    out.params = params;
    return out;
}

/// Transfer limits used by every coupled run: base dispatch from the
/// sample-covariance shape at its tuning-split smoothed radius; tight zones
/// from the config, or (when the list is empty) the three zones with the
/// highest reserve shadow prices at that same solve.
inline TransferLimits make_transfer_limits(const ZonalSystem& sys, const UncertaintyDataset& ds,
                                           const RunConfig& cfg) {
    CholeskyShape base = project_shape(sample_covariance_shape(ds.split_u(Split::Train)).entries,
                                       kDefaultDiagFloor, true);
    SmoothedQuantile sq = smoothed_quantile(scores(base, ds.split_u(Split::Tune)), cfg.train.tau,
                                            cfg.train.eps, cfg.train.kernel);

    std::set<int> tight(cfg.tight_zones.begin(), cfg.tight_zones.end());
    if (tight.empty()) {
        ScedSolution sol = solve_sced(sys, base, sq.rho_eps);
        if (sol.status != LpStatus::Optimal)
            throw BaseInfeasible("make_transfer_limits: tuning-radius solve not Optimal");
        std::vector<int> order(sys.num_zones());
        for (int z = 0; z < sys.num_zones(); ++z) order[z] = z;
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return sol.reserve_duals[a] > sol.reserve_duals[b];
        });
        for (int k = 0; k < std::min(3, sys.num_zones()); ++k)
            tight.insert(sys.zones[order[k]].id);
    }
    return compute_transfer_limits(sys, base, sq.rho_eps, tight, cfg.alpha_tight, cfg.alpha_loose);
}

}  // namespace detail

/// gen-data: synthesize the system and the hourly dataset into <out>/data/.
inline int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(out_dir) / "data";
    fs::create_directories(dir);

    ZonalSystem sys = detail::resolve_system(cfg);
    UncertaintyDataset ds = generate(cfg.params, cfg.n_hours, cfg.split_fractions);

    {
        std::ofstream out(dir / "system.json");
        out << nlohmann::json(sys).dump(2) << "\n";
    }
    save_dataset_csv(ds, (dir / "dataset.csv").string());
    save_dataset_meta(ds, cfg.params, (dir / "dataset_meta.json").string());
    detail::write_manifest(dir, "gen-data", cfg);
    std::cout << "gen-data: wrote " << ds.size() << " hours (train " << ds.train_end << ", tune "
              << ds.tune_end - ds.train_end << ", cal " << ds.cal_end - ds.tune_end << ", test "
              << ds.size() - ds.cal_end << ") to " << dir << "\n";
    return 0;
}

/// train: static shape training, then (optionally) the contextual encoder
/// initialized from the learned static shape. Honors train.coupled.
inline int cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
                     int threads = 1) {
    namespace fs = std::filesystem;
    detail::LoadedData data = detail::load_data_dir(data_dir);
    const fs::path dir = fs::path(out_dir) / "checkpoints";
    fs::create_directories(dir);

    std::optional<TransferLimits> tl;
    if (cfg.train.coupled) tl = detail::make_transfer_limits(data.sys, data.ds, cfg);
    const TransferLimits* tlp = tl ? &*tl : nullptr;

    auto [shape, trace] = train_static(data.sys, data.ds, cfg.train, tlp);
    save_shape(shape, (dir / "shape_static.json").string());
    save_trace_csv(trace, (dir / "trace_static.csv").string());
    if (!trace.empty())
        std::cout << "train: static objective " << trace.front().objective << " -> "
                  << trace.back().objective << " over " << trace.size() << " iterations\n";

    if (cfg.contextual_enabled) {
        ContextualConfig ccfg = cfg.contextual;
        ccfg.tau = cfg.train.tau;
        ccfg.eps = cfg.train.eps;
        ccfg.kernel = cfg.train.kernel;
        ccfg.coupled = cfg.train.coupled;
        const int input_dim = static_cast<int>(data.ds.contexts.front().feature_vector().size());
        MlpEncoder enc =
            MlpEncoder::create(input_dim, ccfg.hidden, data.ds.dim(), ccfg.seed, &shape);
        auto [trained, ctrace] = train_contextual(enc, data.sys, data.ds, ccfg, tlp, threads);
        save_encoder(trained, (dir / "encoder.json").string());
        save_trace_csv(ctrace, (dir / "trace_contextual.csv").string());
        std::cout << "train: contextual ran " << ctrace.size() << " iterations\n";
    }
    detail::write_manifest(dir, "train", cfg);
    return 0;
}

/// eval: the four benchmark methods at the conformally calibrated radius.
inline int cmd_eval(const RunConfig& cfg, const std::string& data_dir,
                    const std::string& checkpoints_dir, const std::string& out_dir,
                    int threads = 1) {
    namespace fs = std::filesystem;
    detail::LoadedData data = detail::load_data_dir(data_dir);
    const fs::path ckpt = fs::path(checkpoints_dir) / "checkpoints";
    const fs::path dir = fs::path(out_dir) / "reports";
    fs::create_directories(dir);

    std::optional<TransferLimits> tl;
    if (cfg.eval_coupled) tl = detail::make_transfer_limits(data.sys, data.ds, cfg);
    const TransferLimits* tlp = tl ? &*tl : nullptr;

    CholeskyShape cov = project_shape(
        sample_covariance_shape(data.ds.split_u(Split::Train)).entries, kDefaultDiagFloor, true);
    CholeskyShape ind = project_shape(independent_shape(data.ds.split_u(Split::Train)).entries,
                                      kDefaultDiagFloor, true);

    std::vector<EvalReport> reports;
    reports.push_back(evaluate_static("sample_covariance", cov, data.sys, data.ds, cfg.eval_tau,
                                      tlp, cfg.bootstrap, threads));
    reports.push_back(evaluate_static("independent", ind, data.sys, data.ds, cfg.eval_tau, tlp,
                                      cfg.bootstrap, threads));

    const fs::path shape_path = ckpt / "shape_static.json";
    if (fs::exists(shape_path)) {
        CholeskyShape learned = load_shape(shape_path.string());
        reports.push_back(evaluate_static("learned_static", learned, data.sys, data.ds,
                                          cfg.eval_tau, tlp, cfg.bootstrap, threads));
    } else {
        std::cout << "eval: no shape_static.json under " << ckpt << ", skipping learned_static\n";
    }
    const fs::path enc_path = ckpt / "encoder.json";
    if (fs::exists(enc_path)) {
        MlpEncoder enc = load_encoder(enc_path.string());
        reports.push_back(evaluate_contextual("learned_contextual", enc, data.sys, data.ds,
                                              cfg.eval_tau, tlp, cfg.bootstrap, threads));
    } else {
        std::cout << "eval: no encoder.json under " << ckpt << ", skipping learned_contextual\n";
    }

    save_report_csv(reports, (dir / "report.csv").string());
    const std::string text = render_report_text(reports);
    {
        std::ofstream out(dir / "report.txt");
        out << text;
    }
    detail::write_manifest(dir, "eval", cfg);
    std::cout << text;
    return 0;
}

/// sweep: recalibrate the frozen shapes across the target-level list.
inline int cmd_sweep(const RunConfig& cfg, const std::string& data_dir,
                     const std::string& checkpoints_dir, const std::string& out_dir,
                     int threads = 1) {
    namespace fs = std::filesystem;
    detail::LoadedData data = detail::load_data_dir(data_dir);
    const fs::path ckpt = fs::path(checkpoints_dir) / "checkpoints";
    const fs::path dir = fs::path(out_dir) / "reports";
    fs::create_directories(dir);

    std::optional<TransferLimits> tl;
    if (cfg.eval_coupled) tl = detail::make_transfer_limits(data.sys, data.ds, cfg);
    const TransferLimits* tlp = tl ? &*tl : nullptr;

    std::vector<SweepMethod> methods;
    methods.push_back({"sample_covariance",
                       project_shape(sample_covariance_shape(data.ds.split_u(Split::Train)).entries,
                                     kDefaultDiagFloor, true),
                       nullptr});
    methods.push_back({"independent",
                       project_shape(independent_shape(data.ds.split_u(Split::Train)).entries,
                                     kDefaultDiagFloor, true),
                       nullptr});
    MlpEncoder enc;  // must outlive tau_sweep
    if (fs::exists(ckpt / "shape_static.json"))
        methods.push_back({"learned_static", load_shape((ckpt / "shape_static.json").string()),
                           nullptr});
    if (fs::exists(ckpt / "encoder.json")) {
        enc = load_encoder((ckpt / "encoder.json").string());
        methods.push_back({"learned_contextual", CholeskyShape(), &enc});
    }

    SweepTable table = tau_sweep(methods, data.sys, data.ds, cfg.tau_list, tlp, threads);
    save_sweep_csv(table, (dir / "sweep.csv").string());
    const std::string text = render_sweep_text(table);
    {
        std::ofstream out(dir / "sweep.txt");
        out << text;
    }
    detail::write_manifest(dir, "sweep", cfg);
    std::cout << text;
    return 0;
}

}  // namespace rsl
