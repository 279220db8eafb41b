// entpick: collect grasp data, train the mass model, inspect selections, run
// episodes and experiment presets, replay manifests.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "entpick/dataset.hpp"

namespace {

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("entpick");
    logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* lvl = std::getenv("ENTPICK_LOG")) spdlog::cfg::helpers::load_levels(lvl);
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    using entpick::cli::Options;

    CLI::App app{"Portioning toolkit for entangled food: simulation, mass model, grasp selection"};
    app.set_version_flag("--version", ENTPICK_VERSION);
    app.require_subcommand(1);

    Options opt;
    std::string manifest;
    std::string replay_out;

    auto seed_opt = [&](CLI::App* c) {
        c->add_option("--seed", opt.seed, "Base seed")->each([&](const std::string&) { opt.seed_given = true; });
    };
    auto out_opt = [&](CLI::App* c, const std::string& what) { c->add_option("--out", opt.out, what); };
    auto depth_opt = [&](CLI::App* c, const std::string& what) {
        c->add_option("--depths", opt.depths_cm, what)->delimiter(',')->check(CLI::PositiveNumber);
    };

    auto* collect = app.add_subcommand("collect", "Random grasps on a fresh heap, written as a JSON-lines dataset");
    collect->add_option("--config", opt.config, "Simulator config JSON");
    collect->add_option("--n", opt.n, "Number of grasps (>= 2)");
    depth_opt(collect, "Insertion depth pool in cm, comma separated (default 2,3,4)");
    seed_opt(collect);
    out_opt(collect, "Dataset path (default dataset.jsonl)");

    auto* train = app.add_subcommand("train", "Train the mixture density network on a dataset");
    train->add_option("--dataset", opt.dataset, "Dataset JSON-lines file")->required();
    train->add_option("--config", opt.config, "Model config JSON");
    seed_opt(train);
    out_opt(train, "Checkpoint path (default model.json)");

    auto* inspect = app.add_subcommand("inspect", "Score every grasp candidate on one heap");
    inspect->add_option("--model", opt.model, "Checkpoint")->required();
    inspect->add_option("--config", opt.config, "Simulator config JSON");
    inspect->add_option("--target", opt.target_g, "Target mass in g")->each([&](const std::string&) {
        opt.target_given = true;
    });
    inspect->add_option("--alpha", opt.alpha, "Uncertainty weight");
    depth_opt(inspect, "Candidate depths in cm, comma separated");
    seed_opt(inspect);
    out_opt(inspect, "Selection report path (default selection.json)");

    auto* run = app.add_subcommand("run", "Run inference episodes at one target");
    run->add_option("--model", opt.model, "Checkpoint")->required();
    run->add_option("--config", opt.config, "Simulator config JSON");
    run->add_option("--target", opt.target_g, "Target mass in g")->each([&](const std::string&) {
        opt.target_given = true;
    });
    run->add_option("--alpha", opt.alpha, "Uncertainty weight");
    run->add_option("--episodes", opt.episodes, "Episode count");
    run->add_option("--workers", opt.workers, "Worker threads");
    depth_opt(run, "Candidate depths in cm, comma separated");
    seed_opt(run);
    out_opt(run, "Summary path (default run.json); traces go to <out>.events.jsonl");

    auto* experiment = app.add_subcommand("experiment", "Run a preset: TABLE1..TABLE4, HISTOGRAM");
    experiment->add_option("preset", opt.preset, "Preset name")->required();
    experiment->add_option("--config", opt.config, "Simulator config JSON");
    experiment->add_option("--model", opt.model, "Checkpoint; trained internally when absent");
    experiment->add_option("--dataset", opt.dataset, "Dataset for percentile targets; collected when absent");
    experiment->add_option("--model-config", opt.model_config, "Model config for internal training");
    experiment->add_option("--episodes", opt.episodes, "Episodes per cell")->each([&](const std::string&) {
        opt.episodes_given = true;
    });
    experiment->add_option("--workers", opt.workers, "Worker threads");
    seed_opt(experiment);
    out_opt(experiment, "Report path (default <preset>.json)");

    auto* replay = app.add_subcommand("replay", "Re-execute a manifest and compare artifact hashes");
    replay->add_option("manifest", manifest, "Manifest JSON")->required();
    replay->add_option("--out", replay_out, "Write the primary artifact here instead");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (replay->parsed()) return entpick::cli::replay_manifest(manifest, replay_out) ? 0 : 1;
        opt.command = app.get_subcommands().front()->get_name();
        entpick::cli::run_command(opt);
        return 0;
    } catch (const entpick::cli::UsageError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const entpick::DatasetError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
}
