#pragma once

// Subcommands of the entpick tool. Each one writes its artifacts plus a
// manifest at <out>.manifest.json that `replay` can re-execute.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace entpick::cli {

/// Bad flags, missing inputs, violated preconditions. Exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string command;
    std::string config;        // simulator config (model config for `train`)
    std::string model;         // checkpoint path
    std::string dataset;       // dataset path
    std::string model_config;  // `experiment` only, when it trains its own model
    std::string preset;
    std::uint64_t seed = 7;
    bool seed_given = false;
    int n = 200;
    std::vector<double> depths_cm;
    double target_g = 0.0;
    bool target_given = false;
    double alpha = 1.0;
    int episodes = 200;
    bool episodes_given = false;
    int workers = 1;
    std::string out;

    // Filled by replay: configs recorded in a manifest, used instead of the paths.
    nlohmann::json inline_sim;
    nlohmann::json inline_model;
};

nlohmann::json to_json(const Options& o);
Options options_from_json(const nlohmann::json& j);

struct Artifact {
    std::string role;
    std::string path;
    std::string sha256;
};

/// Runs one command and returns the artifacts it wrote (manifest excluded).
std::vector<Artifact> run_command(const Options& opt);

/// Re-executes a manifest. `out_override` redirects the primary artifact.
/// Returns true when every artifact hash matches the recorded one.
bool replay_manifest(const std::string& manifest_path, const std::string& out_override);

std::string sha256_file(const std::string& path);
std::string manifest_path_for(const std::string& out);

}  // namespace entpick::cli
