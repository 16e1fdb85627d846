// rsl: reserve-set learning for robust zonal dispatch.
//
// Subcommands: gen-data, train, eval, sweep, selftest. Configuration comes
// from a JSON file (all fields optional, published defaults otherwise); paths
// and parallelism are flags. Every command is reproducible from its config
// plus seed, at any --threads value.

#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "rsl/cli.hpp"
#include "rsl/selftest.hpp"

namespace {

rsl::RunConfig resolve_config(const std::string& config_path, long seed_override, bool coupled,
                              const std::string& tau_list) {
    rsl::RunConfig cfg =
        config_path.empty() ? rsl::RunConfig{} : rsl::load_config(config_path);
    if (seed_override >= 0) {
        cfg.params.seed = static_cast<std::uint64_t>(seed_override);
        cfg.train.seed = static_cast<std::uint64_t>(seed_override);
        cfg.contextual.seed = static_cast<std::uint64_t>(seed_override);
    }
    if (coupled) {
        cfg.train.coupled = true;
        cfg.eval_coupled = true;
    }
    if (!tau_list.empty()) {
        cfg.tau_list.clear();
        std::stringstream ss(tau_list);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            cfg.tau_list.push_back(std::stod(item));
        }
        if (cfg.tau_list.empty()) throw rsl::ConfigError("--tau-list parsed to an empty list");
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reserve-set learning for robust zonal dispatch"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", data_dir = "out", ckpt_dir = "out", tau_list;
    int threads = 1;
    long seed_override = -1;
    bool coupled = false;

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", config_path, "JSON config file (defaults when omitted)");
        if (needs_out) sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--threads", threads, "worker parallelism cap")->capture_default_str();
        sub->add_option("--seed", seed_override, "override data/train seeds");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "synthesize the system and hourly dataset");
    add_common(gen, true);

    CLI::App* train = app.add_subcommand("train", "train the static shape and the encoder");
    add_common(train, true);
    train->add_option("--data", data_dir, "directory holding data/ from gen-data")
        ->capture_default_str();
    train->add_flag("--coupled", coupled, "train against the transfer-coupled dispatch");

    CLI::App* eval = app.add_subcommand("eval", "evaluate the four methods at the conformal radius");
    add_common(eval, true);
    eval->add_option("--data", data_dir, "directory holding data/")->capture_default_str();
    eval->add_option("--checkpoints", ckpt_dir, "directory holding checkpoints/")
        ->capture_default_str();
    eval->add_flag("--coupled", coupled, "evaluate the transfer-coupled dispatch");

    CLI::App* sweep = app.add_subcommand("sweep", "recalibrate frozen shapes across target levels");
    add_common(sweep, true);
    sweep->add_option("--data", data_dir, "directory holding data/")->capture_default_str();
    sweep->add_option("--checkpoints", ckpt_dir, "directory holding checkpoints/")
        ->capture_default_str();
    sweep->add_flag("--coupled", coupled, "sweep the transfer-coupled dispatch");
    sweep->add_option("--tau-list", tau_list, "comma-separated target levels");

    CLI::App* selftest = app.add_subcommand("selftest", "run the built-in oracle suites");
    (void)selftest;

    CLI11_PARSE(app, argc, argv);

    try {
        if (selftest->parsed()) return rsl::cmd_selftest();
        rsl::RunConfig cfg = resolve_config(config_path, seed_override, coupled, tau_list);
        if (gen->parsed()) return rsl::cmd_gen_data(cfg, out_dir);
        if (train->parsed()) return rsl::cmd_train(cfg, data_dir, out_dir, threads);
        if (eval->parsed()) return rsl::cmd_eval(cfg, data_dir, ckpt_dir, out_dir, threads);
        if (sweep->parsed()) return rsl::cmd_sweep(cfg, data_dir, ckpt_dir, out_dir, threads);
    } catch (const rsl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
