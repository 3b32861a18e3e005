#include <iostream>

#include "CLI11.hpp"
#include "cisir/cli.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Imbalanced regression with density-based importances, a correlation regularizer and stratified batches"};
    app.require_subcommand(1);
    cisir::CliOptions opts;
    std::string seeds;
    std::string out;

    auto common = [&](CLI::App* cmd, bool config_required) {
        auto* c = cmd->add_option("-c,--config", opts.config, "experiment config (JSON)");
        if (config_required) c->required();
        cmd->add_flag("--paper-scale", opts.paper_scale, "merge the config's paper_scale section");
        cmd->add_option("--out", out, "output directory (overrides the config)");
    };
    auto training = [&](CLI::App* cmd) {
        cmd->add_option("--seed-list", seeds, "seeds, e.g. 0,1,2 or 0-4");
        cmd->add_option("--jobs", opts.jobs, "parallel runs")->check(CLI::PositiveNumber);
        cmd->add_option("--sampler", opts.sampler, "ssb or uniform");
        cmd->add_option("--bandwidth", opts.bandwidth, "fixed KDE bandwidth (skips the solver)");
        cmd->add_option("--lambda", opts.lambda, "weight of the correlation term");
        cmd->add_option("--alpha-e", opts.alpha_e, "importance shape for the error term");
        cmd->add_option("--alpha-c", opts.alpha_c, "importance shape for the correlation term");
        cmd->add_flag("--dry-run", opts.dry_run, "print the resolved plan and exit");
        cmd->add_flag("--no-checkpoints", opts.no_checkpoints, "do not write model checkpoints");
    };

    auto* density = app.add_subcommand("density", "fit the target density and report the bandwidth");
    common(density, true);
    density->add_option("--bandwidth", opts.bandwidth, "fixed KDE bandwidth (skips the solver)");

    auto* train = app.add_subcommand("train", "train every fold x seed and report test metrics");
    common(train, true);
    training(train);

    auto* sweep = app.add_subcommand("sweep", "staged grid search over alpha_e, lambda and alpha_c");
    common(sweep, true);
    training(sweep);
    sweep->add_option("--grid-alpha-e", opts.grid_alpha_e, "alpha_e grid")->delimiter(',');
    sweep->add_option("--grid-lambda", opts.grid_lambda, "lambda grid")->delimiter(',');
    sweep->add_option("--grid-alpha-c", opts.grid_alpha_c, "alpha_c grid (enables the third stage)")->delimiter(',');

    auto* evaluate = app.add_subcommand("evaluate", "evaluate saved checkpoints on the test set");
    common(evaluate, true);
    evaluate->add_option("--checkpoint", opts.checkpoints, "checkpoint files (default: <out>/checkpoints/*.json)");

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset and a matching config");
    common(synth, false);
    synth->add_option("--preset", opts.preset, "tail or bimodal");
    synth->add_option("--n", opts.n, "rows");
    synth->add_option("--noise", opts.noise, "target noise sd");
    synth->add_option("--tail-power", opts.tail_power, "tail exponent");
    synth->add_option("--min-imbalance", opts.min_imbalance, "raise the tail power until this imbalance ratio");
    synth->add_option("--seed", opts.synth_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!seeds.empty()) opts.seed_list = cisir::parse_seed_list(seeds);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    if (!out.empty()) opts.out = out;

    if (*density) return cisir::cmd_density(opts, std::cout);
    if (*train) return cisir::cmd_train(opts, std::cout);
    if (*sweep) return cisir::cmd_sweep(opts, std::cout);
    if (*evaluate) return cisir::cmd_evaluate(opts, std::cout);
    return cisir::cmd_synth(opts, std::cout);
}
