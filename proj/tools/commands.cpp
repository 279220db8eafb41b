#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "entpick/dataset.hpp"
#include "entpick/eval.hpp"
#include "entpick/grasp_select.hpp"
#include "entpick/heap_sim.hpp"
#include "entpick/pipeline.hpp"
#include "entpick/training.hpp"

#ifndef ENTPICK_VERSION
#define ENTPICK_VERSION "dev"
#endif

namespace entpick::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError(what + " path is required");
    if (!fs::is_regular_file(path)) throw UsageError(what + " '" + path + "' does not exist");
}

json read_json_file(const std::string& path, const std::string& what) {
    require_file(path, what);
    std::ifstream in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(what + " '" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

void ensure_parent(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

SimConfig resolve_sim(const Options& o) {
    if (!o.inline_sim.is_null()) return sim_config_from_json(o.inline_sim);
    if (o.config.empty()) return SimConfig{};
    require_file(o.config, "simulator config");
    return load_sim_config(o.config);
}

ModelConfig resolve_model_config(const Options& o, const std::string& path) {
    if (!o.inline_model.is_null()) return model_config_from_json(o.inline_model);
    if (path.empty()) return ModelConfig{};
    return model_config_from_json(read_json_file(path, "model config"));
}

struct Run {
    explicit Run(const Options& o) : opt(o) {}

    const Options& opt;
    json configs = json::object();
    json inputs = json::array();
    json seeds = json::object();
    std::vector<Artifact> artifacts;

    void input(const std::string& role, const std::string& path) {
        inputs.push_back({{"role", role}, {"path", path}, {"sha256", sha256_file(path)}});
    }
    void artifact(const std::string& role, const std::string& path) {
        artifacts.push_back({role, path, sha256_file(path)});
        spdlog::info("wrote {} {}", role, path);
    }
    void finish() const {
        json arts = json::array();
        for (const auto& a : artifacts) arts.push_back({{"role", a.role}, {"path", a.path}, {"sha256", a.sha256}});
        json m{{"manifest_version", kManifestVersion},
               {"command", opt.command},
               {"tool_version", ENTPICK_VERSION},
               {"timestamp", utc_timestamp()},
               {"options", to_json(opt)},
               {"configs", configs},
               {"seeds", seeds},
               {"inputs", inputs},
               {"artifacts", std::move(arts)}};
        const std::string path = manifest_path_for(opt.out);
        write_text(path, m.dump(2) + "\n");
        spdlog::info("wrote manifest {}", path);
    }
};

std::vector<double> default_depths(const std::vector<double>& given) {
    return given.empty() ? deep_class_training_depths_cm() : given;
}

void cmd_collect(const Options& o, Run& run) {
    if (o.n < 2) throw UsageError("--n must be at least 2");
    const SimConfig sim = resolve_sim(o);
    run.configs["sim"] = to_json(sim);
    CollectionConfig cc;
    cc.z_pool_cm = default_depths(o.depths_cm);
    for (double z : cc.z_pool_cm)
        if (!(z > 0.0)) throw UsageError("--depths must be positive");
    Rng heap_rng = make_rng(o.seed, {0});
    const std::uint64_t heap_seed = heap_rng();
    HeapState heap = init_heap(sim, heap_seed);
    Rng rng = make_rng(o.seed, {1});
    run.seeds = {{"seed", o.seed}, {"heap", heap_seed}};
    spdlog::info("collecting {} grasps at depths {} cm", o.n, json(cc.z_pool_cm).dump());
    const CollectionResult res = run_collection(heap, sim, o.n, cc, rng);
    ensure_parent(o.out);
    save_dataset(res.dataset, o.out);
    run.artifact("dataset", o.out);
    std::printf("collected %d grasps: %zu train / %zu eval\n", o.n, res.dataset.count(Split::train),
                res.dataset.count(Split::eval));
}

void cmd_train(const Options& o, Run& run) {
    require_file(o.dataset, "dataset");
    ModelConfig mc = resolve_model_config(o, o.config);
    if (o.seed_given) mc.seed = o.seed;
    run.configs["model"] = to_json(mc);
    run.seeds = {{"model", mc.seed}};
    run.input("dataset", o.dataset);
    const Dataset ds = load_dataset(o.dataset);
    spdlog::info("training on {} rows ({} train / {} eval)", ds.rows.size(), ds.count(Split::train),
                 ds.count(Split::eval));
    const TrainResult tr = train(ds, mc, [](const EpochLog& e) {
        spdlog::debug("epoch {} train_nll {:.4f} eval_nll {:.4f}", e.epoch, e.train_nll, e.eval_nll);
    });
    ensure_parent(o.out);
    save_checkpoint(tr.params, tr.log, o.out);
    run.artifact("model", o.out);
    const EpochLog& last = tr.log.back();
    const EpochLog& best = tr.log[static_cast<std::size_t>(tr.best_epoch)];
    std::printf("final train NLL %.4f  eval NLL %.4f (epoch 0: %.4f)\n", last.train_nll, last.eval_nll,
                tr.log.front().eval_nll);
    std::printf("kept epoch %d with eval NLL %.4f\n", best.epoch, best.eval_nll);
}

void cmd_inspect(const Options& o, Run& run) {
    require_file(o.model, "model");
    if (!o.target_given) throw UsageError("--target is required");
    const SimConfig sim = resolve_sim(o);
    run.configs["sim"] = to_json(sim);
    run.input("model", o.model);
    const ModelParams model = load_checkpoint(o.model);
    Rng heap_rng = make_rng(o.seed, {0});
    const std::uint64_t heap_seed = heap_rng();
    run.seeds = {{"seed", o.seed}, {"heap", heap_seed}};
    const HeapState heap = init_heap(sim, heap_seed);
    SelectionConfig sc;
    sc.target_g = o.target_g;
    sc.alpha = o.alpha;
    if (!o.depths_cm.empty()) sc.z_candidates_cm = o.depths_cm;
    validate(sc);
    const SelectionReport rep = select_grasp(model, heap, sc);
    json j = to_json(rep);
    j["target_g"] = o.target_g;
    j["alpha"] = o.alpha;
    write_text(o.out, j.dump(2) + "\n");
    run.artifact("selection", o.out);
    const auto feasible = std::count_if(rep.candidates.begin(), rep.candidates.end(),
                                        [](const Candidate& c) { return c.feasible; });
    std::printf("%zu candidates, %td feasible\n", rep.candidates.size(), feasible);
    if (const Candidate* w = rep.chosen())
        std::printf("winner x=%d y=%d z=%.2f cm  mu %.1f g  sigma %.1f g\n", w->x, w->y, w->z_cm, w->mu, w->sigma);
    else
        std::printf("no feasible candidate\n");
}

void print_cells(const ExperimentReport& r) {
    for (const auto& c : r.cells) {
        const bool drop = c.drop_g > 0.0;
        std::printf("  %-12s %s %5.1f g  band +-%.0f g  %5.1f%% +- %.1f  (%d/%d)\n", c.variant.c_str(),
                    drop ? "drop  " : "target", drop ? c.drop_g : c.target_g, c.band_g, c.mean_pct, c.std_pct,
                    c.successes, c.episodes);
    }
    for (const auto& g : r.regrasp)
        std::printf("  re-grasp %-12s %5.1f g  %5.1f%%\n", g.variant.c_str(), g.drop_g > 0.0 ? g.drop_g : g.target_g,
                    g.pct);
}

void cmd_run(const Options& o, Run& run) {
    require_file(o.model, "model");
    if (!o.target_given) throw UsageError("--target is required");
    if (o.episodes < 1) throw UsageError("--episodes must be at least 1");
    if (o.workers < 1) throw UsageError("--workers must be at least 1");
    const SimConfig sim = resolve_sim(o);
    run.configs["sim"] = to_json(sim);
    run.input("model", o.model);
    const ModelParams model = load_checkpoint(o.model);

    ExperimentPreset p;
    p.name = "RUN";
    p.kind = PresetKind::full_method;
    p.variants = {{"run", o.alpha, true, true, true, true}};
    p.targets_g = {o.target_g};
    p.bands_g = {2.0, 3.0, 4.0};
    p.episodes = o.episodes;
    p.seed = o.seed;
    p.record_events = true;
    if (!o.depths_cm.empty()) p.inference_depths_cm = o.depths_cm;
    run.seeds = {{"seed", o.seed}, {"episodes_per_heap", p.episodes_per_heap}};

    ExperimentInputs in;
    in.model = &model;
    const ExperimentReport rep = run_experiment(p, sim, in, o.workers);

    const std::string events_path = o.out + ".events.jsonl";
    ensure_parent(o.out);
    {
        std::ofstream ev(events_path, std::ios::binary);
        if (!ev) throw std::runtime_error("cannot write '" + events_path + "'");
        for (const auto& e : rep.episodes) write_events_jsonl(e.events, ev, e.index);
    }

    int placed = 0, failed = 0, infeasible = 0;
    for (const auto& e : rep.episodes) {
        if (e.status == "placed") ++placed;
        if (e.status == "failed_to_grasp") ++failed;
        if (e.status == "infeasible") ++infeasible;
    }
    json j = to_json(rep);
    j["alpha"] = o.alpha;
    j["summary"] = {{"episodes", o.episodes}, {"placed", placed}, {"failed_to_grasp", failed},
                    {"infeasible", infeasible}};
    write_text(o.out, j.dump(2) + "\n");
    run.artifact("summary", o.out);
    run.artifact("events", events_path);

    std::printf("target %.1f g  alpha %.2f  %d episodes: %d placed, %d failed to grasp, %d infeasible\n", o.target_g,
                o.alpha, o.episodes, placed, failed, infeasible);
    print_cells(rep);
}

void cmd_experiment(const Options& o, Run& run) {
    if (o.preset.empty()) throw UsageError("experiment needs a preset name");
    ExperimentPreset p;
    try {
        p = preset_by_name(o.preset);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (o.seed_given) p.seed = o.seed;
    if (o.episodes_given) {
        if (p.kind != PresetKind::histogram && o.episodes < 30)
            throw UsageError("--episodes must be at least 30 for a preset");
        p.episodes = o.episodes;
    }
    if (o.workers < 1) throw UsageError("--workers must be at least 1");
    const SimConfig sim = resolve_sim(o);
    run.configs["sim"] = to_json(sim);

    const bool needs_model = p.kind == PresetKind::grasp_selection || p.kind == PresetKind::full_method;
    const bool needs_targets = needs_model;
    std::optional<ModelParams> model;
    std::optional<Dataset> dataset;
    if (!o.model.empty()) {
        require_file(o.model, "model");
        run.input("model", o.model);
        model = load_checkpoint(o.model);
    }
    if (!o.dataset.empty()) {
        require_file(o.dataset, "dataset");
        run.input("dataset", o.dataset);
        dataset = load_dataset(o.dataset);
    }
    json training = nullptr;
    if ((needs_model && !model) || (needs_targets && !dataset)) {
        const ModelConfig mc = resolve_model_config(o, o.model_config);
        run.configs["model"] = to_json(mc);
        spdlog::info("collecting {} grasps and training a model for {}", p.collection_n, p.name);
        PreparedInputs prep = prepare_inputs(p, sim, mc);
        if (!dataset) dataset = std::move(prep.dataset);
        if (!model) model = std::move(prep.training.params);
        const auto& best = prep.training.log[static_cast<std::size_t>(prep.training.best_epoch)];
        training = {{"best_epoch", best.epoch},
                    {"eval_nll", best.eval_nll},
                    {"epoch0_eval_nll", prep.training.log.front().eval_nll}};
    }
    ExperimentInputs in;
    in.model = model ? &*model : nullptr;
    in.dataset = dataset ? &*dataset : nullptr;
    run.seeds = {{"preset", p.seed}, {"episodes_per_heap", p.episodes_per_heap}};

    spdlog::info("running {} with {} episodes per cell", p.name, p.episodes);
    const ExperimentReport rep = run_experiment(p, sim, in, o.workers);
    json j = to_json(rep);
    if (!training.is_null()) j["training"] = training;
    ensure_parent(o.out);
    write_text(o.out, j.dump(2) + "\n");
    run.artifact("report", o.out);

    std::printf("%s\n", p.name.c_str());
    if (!rep.targets_g.empty()) {
        std::printf("  targets:");
        for (double t : rep.targets_g) std::printf(" %.1f g", t);
        std::printf("\n");
    }
    print_cells(rep);
    for (const auto& h : rep.histograms) {
        std::printf("  %-12s %d grasps, %zu mode(s) at", h.label.c_str(), h.histogram.total(), h.modes.size());
        for (auto m : h.modes) std::printf(" %.1f g", h.histogram.lo(m));
        std::printf("\n");
    }
}

std::string default_out(const Options& o) {
    if (o.command == "collect") return "dataset.jsonl";
    if (o.command == "train") return "model.json";
    if (o.command == "inspect") return "selection.json";
    if (o.command == "run") return "run.json";
    std::string name = o.preset;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    return name + ".json";
}

}  // namespace

json to_json(const Options& o) {
    json j{{"command", o.command}, {"config", o.config},   {"model", o.model},           {"dataset", o.dataset},
           {"model_config", o.model_config}, {"preset", o.preset}, {"seed", o.seed},     {"seed_given", o.seed_given},
           {"n", o.n},             {"depths_cm", o.depths_cm}, {"target_g", o.target_g}, {"target_given", o.target_given},
           {"alpha", o.alpha},     {"episodes", o.episodes}, {"episodes_given", o.episodes_given},
           {"workers", o.workers}, {"out", o.out}};
    return j;
}

Options options_from_json(const json& j) {
    Options o;
    o.command = j.at("command").get<std::string>();
    o.config = j.value("config", "");
    o.model = j.value("model", "");
    o.dataset = j.value("dataset", "");
    o.model_config = j.value("model_config", "");
    o.preset = j.value("preset", "");
    o.seed = j.value("seed", std::uint64_t{7});
    o.seed_given = j.value("seed_given", false);
    o.n = j.value("n", 200);
    o.depths_cm = j.value("depths_cm", std::vector<double>{});
    o.target_g = j.value("target_g", 0.0);
    o.target_given = j.value("target_given", false);
    o.alpha = j.value("alpha", 1.0);
    o.episodes = j.value("episodes", 200);
    o.episodes_given = j.value("episodes_given", false);
    o.workers = j.value("workers", 1);
    o.out = j.value("out", "");
    return o;
}

std::string manifest_path_for(const std::string& out) { return out + ".manifest.json"; }

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path + "' for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256 unavailable");
    }
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

std::vector<Artifact> run_command(const Options& opt_in) {
    Options opt = opt_in;
    if (opt.out.empty()) opt.out = default_out(opt);
    Run run{opt};
    if (opt.command == "collect")
        cmd_collect(opt, run);
    else if (opt.command == "train")
        cmd_train(opt, run);
    else if (opt.command == "inspect")
        cmd_inspect(opt, run);
    else if (opt.command == "run")
        cmd_run(opt, run);
    else if (opt.command == "experiment")
        cmd_experiment(opt, run);
    else
        throw UsageError("unknown command '" + opt.command + "'");
    run.finish();
    return run.artifacts;
}

bool replay_manifest(const std::string& manifest_path, const std::string& out_override) {
    const json m = read_json_file(manifest_path, "manifest");
    if (!m.contains("options") || !m.contains("artifacts")) throw UsageError("'" + manifest_path + "' is not a manifest");
    Options o = options_from_json(m.at("options"));
    const json& configs = m.value("configs", json::object());
    if (configs.contains("sim")) o.inline_sim = configs.at("sim");
    if (configs.contains("model")) o.inline_model = configs.at("model");

    for (const auto& in : m.value("inputs", json::array())) {
        const std::string path = in.at("path").get<std::string>();
        require_file(path, in.value("role", "input"));
        if (sha256_file(path) != in.at("sha256").get<std::string>())
            throw std::runtime_error("input '" + path + "' changed since the manifest was written");
    }

    if (!out_override.empty()) o.out = out_override;
    spdlog::info("replaying {} from {}", o.command, manifest_path);
    const std::vector<Artifact> fresh = run_command(o);

    const json& recorded = m.at("artifacts");
    bool all_match = fresh.size() == recorded.size();
    for (std::size_t i = 0; i < fresh.size() && i < recorded.size(); ++i) {
        const std::string want = recorded[i].at("sha256").get<std::string>();
        const bool same = fresh[i].sha256 == want;
        all_match = all_match && same;
        std::printf("%-9s %-10s %s\n", same ? "match" : "MISMATCH", fresh[i].role.c_str(), fresh[i].path.c_str());
    }
    return all_match;
}

}  // namespace entpick::cli
