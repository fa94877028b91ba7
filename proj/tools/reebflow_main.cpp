// Command-line front end: experiment configuration, the six subcommands, and
// reproducible batch execution. Exit codes: 0 pass, 1 test failure, 2 config
// error, 3 runtime error.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "reebflow/harness.hpp"

using namespace reebflow;

int main(int argc, char** argv) {
    CLI::App app{"Reeb-graph reduction of fast-slow diffusions: construction, "
                 "averaged coefficients, and the three simulation levels"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    long long seed_override = -1;
    int threads_override = -1;
    bool slow = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--seed", seed_override, "override the master seed");
        sub->add_option("--threads", threads_override, "override the worker count");
        sub->add_option("--out", out_override, "override the output directory");
    };

    auto* c_reeb = app.add_subcommand("reeb", "build, validate and export the graph");
    auto* c_coeffs = app.add_subcommand("coeffs", "tabulate averaged coefficients and gluing data");
    auto* c_branch = app.add_subcommand("branch", "SDE exit statistics against the branch ratios");
    auto* c_converge = app.add_subcommand("converge", "solver exit distributions over a delta sweep");
    auto* c_limit = app.add_subcommand("limit", "limit process, distribution and observable");
    auto* c_verify = app.add_subcommand("verify", "run the acceptance suite");
    for (auto* s : {c_reeb, c_coeffs, c_branch, c_converge, c_limit, c_verify}) add_common(s);
    c_verify->add_flag("--slow", slow, "include the heavy SDE bridge criterion");

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
        if (threads_override >= 0) cfg.threads = threads_override;
        if (!out_override.empty()) cfg.out_dir = out_override;

        bool ok = true;
        if (c_reeb->parsed()) ok = harness::run_reeb(cfg);
        else if (c_coeffs->parsed()) ok = harness::run_coeffs(cfg);
        else if (c_branch->parsed()) ok = harness::run_branch(cfg);
        else if (c_converge->parsed()) ok = harness::run_converge(cfg);
        else if (c_limit->parsed()) ok = harness::run_limit(cfg);
        else if (c_verify->parsed()) ok = harness::run_verify(cfg, slow);
        return ok ? 0 : 1;
    } catch (const ConfigInvalid& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
