#include "entpick/eval.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace entpick {

namespace {

using nlohmann::json;

constexpr std::uint64_t kHeapStream = 1;
constexpr std::uint64_t kEpisodeStream = 2;
constexpr std::uint64_t kHistogramStream = 3;
constexpr std::uint64_t kBootstrapStream = 4;
constexpr std::uint64_t kCollectionStream = 5;

std::vector<double> moving_average(const std::vector<int>& c, int window) {
    const int half = window / 2;
    const int n = static_cast<int>(c.size());
    std::vector<double> s(c.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int k = i - half; k <= i + half; ++k)
            if (k >= 0 && k < n) sum += c[k];
        s[i] = sum / window;
    }
    return s;
}

std::string fmt_band(double band_g) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%gg", band_g);
    return buf;
}

bool uses_model(PresetKind k) { return k == PresetKind::grasp_selection || k == PresetKind::full_method; }
bool is_drop(PresetKind k) { return k == PresetKind::drop_pregrasp || k == PresetKind::drop_spines; }

void check_model_fits(const ModelParams& m, std::span<const double> depths) {
    const auto [lo, hi] = m.config.z_range_cm;
    for (double z : depths)
        if (z < lo - 1e-9 || z > hi + 1e-9)
            throw std::invalid_argument("preset depth " + std::to_string(z) + " cm lies outside the model's trained range [" +
                                        std::to_string(lo) + ", " + std::to_string(hi) + "] cm");
}

// One heap block of one (variant, key) cell.
struct Unit {
    std::size_t variant = 0;
    std::size_t key = 0;
    int block = 0;
};

}  // namespace

double nearest_rank_percentile(std::span<const double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty set");
    if (!(p > 0.0 && p <= 100.0)) throw std::invalid_argument("percentile must lie in (0, 100]");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const auto n = static_cast<double>(v.size());
    // Small slack so p/100*n that lands on an integer is not bumped up by rounding.
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, v.size());
    return v[rank - 1];
}

std::vector<double> percentile_targets(const Dataset& ds, std::span<const double> percentiles) {
    const auto masses = ds.masses(Split::train);
    if (masses.empty()) throw std::invalid_argument("percentile targets need a non-empty training split");
    std::vector<double> out;
    for (double p : percentiles) out.push_back(nearest_rank_percentile(masses, p));
    return out;
}

double success_rate(std::span<const double> finals, double target_g, double band_g) {
    if (finals.empty()) throw std::invalid_argument("success rate of no results");
    const auto hits = std::count_if(finals.begin(), finals.end(), [&](double f) {
        return std::abs(f - target_g) <= band_g + kMassCompareEps;
    });
    return static_cast<double>(hits) / static_cast<double>(finals.size());
}

BootstrapStat bootstrap(std::span<const std::uint8_t> successes, int resamples, std::uint64_t seed) {
    if (successes.empty()) throw std::invalid_argument("bootstrap of no outcomes");
    if (resamples < 1000) throw std::invalid_argument("bootstrap needs at least 1000 resamples");
    Rng rng = make_rng(seed, {kBootstrapStream});
    std::uniform_int_distribution<std::size_t> pick(0, successes.size() - 1);
    const double n = static_cast<double>(successes.size());
    std::vector<double> rates(static_cast<std::size_t>(resamples));
    for (auto& r : rates) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < successes.size(); ++i) hits += successes[pick(rng)] ? 1 : 0;
        r = 100.0 * static_cast<double>(hits) / n;
    }
    const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / resamples;
    double ss = 0.0;
    for (double r : rates) ss += (r - mean) * (r - mean);
    return {mean, std::sqrt(ss / (resamples - 1))};
}

int Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

Histogram mass_histogram(std::span<const double> masses, double bin_width_g) {
    if (!(bin_width_g > 0.0)) throw std::invalid_argument("bin width must be positive");
    if (masses.empty()) throw std::invalid_argument("histogram of no masses");
    const auto [mn, mx] = std::minmax_element(masses.begin(), masses.end());
    Histogram h;
    h.bin_width_g = bin_width_g;
    const double first = std::floor(*mn / bin_width_g);
    h.origin_g = first * bin_width_g;
    const auto nbins = static_cast<std::size_t>(std::floor(*mx / bin_width_g) - first) + 1;
    h.counts.assign(nbins, 0);
    for (double m : masses) {
        auto i = static_cast<std::size_t>(std::floor(m / bin_width_g) - first);
        h.counts[std::min(i, nbins - 1)] += 1;
    }
    return h;
}

Histogram mass_histogram(const Dataset& ds, double bin_width_g) {
    std::vector<double> m;
    m.reserve(ds.rows.size());
    for (const auto& r : ds.rows) m.push_back(r.mass_g);
    return mass_histogram(m, bin_width_g);
}

std::vector<std::size_t> histogram_modes(const Histogram& h, int window, double min_prominence_frac) {
    if (window < 1 || window % 2 == 0) throw std::invalid_argument("smoothing window must be odd and positive");
    const auto s = moving_average(h.counts, window);
    const std::size_t n = s.size();
    std::vector<std::size_t> peaks;
    for (std::size_t i = 0; i < n; ++i) {
        const double left = i > 0 ? s[i - 1] : 0.0;
        // Plateaus count once, at their left end.
        std::size_t j = i;
        while (j + 1 < n && s[j + 1] == s[i]) ++j;
        const double right = j + 1 < n ? s[j + 1] : 0.0;
        if (s[i] > left && s[i] > right) peaks.push_back(i);
        i = j;
    }
    if (peaks.empty()) return peaks;
    const double top = *std::max_element(s.begin(), s.end());
    const double need = min_prominence_frac * top;
    std::vector<std::size_t> kept;
    for (std::size_t p : peaks) {
        // Walk each way until a higher point; the key col is the higher of the two minima.
        double lmin = s[p];
        bool lhigher = false;
        for (std::size_t k = p; k-- > 0;) {
            if (s[k] > s[p]) {
                lhigher = true;
                break;
            }
            lmin = std::min(lmin, s[k]);
        }
        double rmin = s[p];
        bool rhigher = false;
        for (std::size_t k = p + 1; k < n; ++k) {
            if (s[k] > s[p]) {
                rhigher = true;
                break;
            }
            rmin = std::min(rmin, s[k]);
        }
        if (!lhigher) lmin = 0.0;
        if (!rhigher) rmin = 0.0;
        const double col = std::max(lmin, rmin);
        if (s[p] - col >= need) kept.push_back(p);
    }
    return kept;
}

json to_json(const Histogram& h) {
    json bins = json::array();
    for (std::size_t i = 0; i < h.counts.size(); ++i) bins.push_back({{"lo", h.lo(i)}, {"count", h.counts[i]}});
    return {{"bin_width_g", h.bin_width_g}, {"bins", std::move(bins)}};
}

void validate(const ExperimentPreset& p) {
    if (p.episodes < 1) throw std::invalid_argument("preset needs at least one episode");
    if (p.targets_g.empty() && p.episodes < 30)
        throw std::invalid_argument("percentile studies need at least 30 episodes per cell");
    if (p.episodes_per_heap < 1) throw std::invalid_argument("episodes_per_heap must be >= 1");
    for (double q : p.percentiles)
        if (!(q > 0.0 && q < 100.0)) throw std::invalid_argument("percentiles must lie in (0, 100)");
    if (p.kind != PresetKind::histogram && p.variants.empty()) throw std::invalid_argument("preset has no variants");
    if (p.kind != PresetKind::histogram && p.bands_g.empty()) throw std::invalid_argument("preset has no bands");
    if (is_drop(p.kind) && p.drops_g.empty()) throw std::invalid_argument("drop preset has no drops");
    for (double t : p.targets_g)
        if (!(t > 0.0)) throw std::invalid_argument("targets must be positive");
    if (p.bootstrap_resamples < 1000) throw std::invalid_argument("bootstrap_resamples must be >= 1000");
}

std::vector<std::string> preset_names() { return {"TABLE1", "TABLE2", "TABLE3", "TABLE4", "HISTOGRAM"}; }

ExperimentPreset preset_by_name(const std::string& name) {
    ExperimentPreset p;
    p.name = name;
    if (name == "TABLE1") {
        p.kind = PresetKind::grasp_selection;
        p.variants = {{"alpha0", 0.0, true, false, true, false}, {"alpha1", 1.0, true, false, true, false}};
        p.bands_g = {2.0};
        p.reference = {{"food", "imitation cabbage"},
                       {"targets_g", {22, 46, 56}},
                       {"alpha0_pct", {52, 80, 88}},
                       {"alpha1_pct", {85, 98, 99}}};
    } else if (name == "TABLE2") {
        p.kind = PresetKind::drop_pregrasp;
        p.variants = {{"no_pregrasp", 0.0, false, true, true, true}, {"pregrasp", 0.0, true, true, true, true}};
        p.drops_g = {3.0, 4.0, 5.0, 10.0, 15.0};
        p.bands_g = {2.0};
        p.reference = {{"food", "imitation cabbage"},
                       {"drops_g", {3, 4, 5, 10, 15}},
                       {"no_pregrasp_pct", {44, 49, 40, 47, 46}},
                       {"pregrasp_pct", {87, 91, 92, 86, 88}}};
    } else if (name == "TABLE3") {
        p.kind = PresetKind::drop_spines;
        p.variants = {{"no_spines", 0.0, true, true, false, true}, {"spines", 0.0, true, true, true, true}};
        p.drops_g = {10.0};
        p.bands_g = {2.0, 3.0, 4.0, 5.0};
        p.reference = {{"food", "imitation cabbage"},
                       {"bands_g", {2, 3, 4, 5}},
                       {"no_spines_pct", {25, 29, 32, 33}},
                       {"spines_pct", {86, 91, 95, 95}}};
    } else if (name == "TABLE4") {
        p.kind = PresetKind::full_method;
        p.variants = {{"baseline", 0.0, true, false, true, true}, {"full", 1.0, true, true, true, true}};
        p.bands_g = {2.0, 3.0, 4.0};
        p.reference = {{"food", "imitation cabbage"},
                       {"targets_g", {22, 46, 56}},
                       {"baseline_pct", {{27, 36, 45}, {15, 23, 33}, {13, 18, 22}}},
                       {"full_pct", {{88, 93, 97}, {89, 95, 97}, {88, 92, 97}}},
                       {"full_regrasp_pct", {13, 0, 1}}};
    } else if (name == "HISTOGRAM") {
        p.kind = PresetKind::histogram;
        p.mode_prominence_frac = 0.1;
        p.reference = {{"note", "multi-depth collections show one mode per depth for some foods"}};
    } else {
        std::string list;
        for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
        throw std::invalid_argument("unknown preset '" + name + "'; available: " + list);
    }
    return p;
}

const ReportCell* ExperimentReport::find(const std::string& variant, double key_g, double band_g) const {
    for (const auto& c : cells) {
        const double key = c.drop_g > 0.0 ? c.drop_g : c.target_g;
        if (c.variant == variant && std::abs(key - key_g) < 1e-9 && std::abs(c.band_g - band_g) < 1e-9) return &c;
    }
    return nullptr;
}

namespace {

HistogramReport histogram_of(const std::string& label, const Dataset& ds, std::vector<double> depths,
                             const ExperimentPreset& p) {
    HistogramReport hr;
    hr.label = label;
    hr.depths_cm = std::move(depths);
    hr.histogram = mass_histogram(ds, p.histogram_bin_g);
    hr.modes = histogram_modes(hr.histogram, 3, p.mode_prominence_frac);
    return hr;
}

ExperimentReport run_histogram(const ExperimentPreset& p, const SimConfig& sim, const ExperimentInputs& in) {
    ExperimentReport rep;
    rep.preset = p.name;
    rep.reference = p.reference;
    rep.seeds = {{"preset", p.seed}};
    auto collect = [&](std::vector<double> pool, std::uint64_t stream) {
        Rng heap_rng = make_rng(p.seed, {kHistogramStream, stream, 0});
        HeapState heap = init_heap(sim, heap_rng());
        Rng rng = make_rng(p.seed, {kHistogramStream, stream, 1});
        CollectionConfig cc;
        cc.z_pool_cm = std::move(pool);
        return run_collection(heap, sim, p.collection_n, cc, rng).dataset;
    };
    if (in.dataset) {
        std::vector<double> depths;
        for (const auto& r : in.dataset->rows) depths.push_back(r.obs.insertion_depth_cm);
        std::sort(depths.begin(), depths.end());
        depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
        rep.histograms.push_back(histogram_of("dataset", *in.dataset, depths, p));
    } else {
        rep.histograms.push_back(
            histogram_of("multi_depth", collect(p.collection_depths_cm, 0), p.collection_depths_cm, p));
        const std::vector<double> single{p.histogram_single_depth_cm};
        rep.histograms.push_back(histogram_of("single_depth", collect(single, 1), single, p));
    }
    return rep;
}

}  // namespace

PreparedInputs prepare_inputs(const ExperimentPreset& preset, const SimConfig& sim, const ModelConfig& model_cfg) {
    validate(sim);
    Rng heap_rng = make_rng(preset.seed, {kCollectionStream, 0});
    HeapState heap = init_heap(sim, heap_rng());
    Rng rng = make_rng(preset.seed, {kCollectionStream, 1});
    CollectionConfig cc;
    cc.z_pool_cm = preset.collection_depths_cm;
    PreparedInputs out;
    out.dataset = run_collection(heap, sim, preset.collection_n, cc, rng).dataset;
    out.training = train(out.dataset, model_cfg);
    return out;
}

ExperimentReport run_experiment(const ExperimentPreset& preset, const SimConfig& sim, const ExperimentInputs& in,
                                int workers) {
    validate(preset);
    validate(sim);
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    if (preset.kind == PresetKind::histogram) return run_histogram(preset, sim, in);

    const PresetKind kind = preset.kind;
    if (uses_model(kind)) {
        if (!in.model) throw std::invalid_argument("preset " + preset.name + " needs a trained model");
        check_model_fits(*in.model, preset.inference_depths_cm);
    }

    ExperimentReport rep;
    rep.preset = preset.name;
    rep.reference = preset.reference;
    std::vector<double> keys;
    if (is_drop(kind)) {
        keys = preset.drops_g;
    } else if (!preset.targets_g.empty()) {
        keys = preset.targets_g;
        rep.targets_g = keys;
    } else {
        if (!in.dataset) throw std::invalid_argument("preset " + preset.name + " needs a dataset for its targets");
        keys = percentile_targets(*in.dataset, preset.percentiles);
        rep.targets_g = keys;
    }

    const std::size_t nv = preset.variants.size();
    const std::size_t nk = keys.size();
    const int per = preset.episodes_per_heap;
    const int blocks = (preset.episodes + per - 1) / per;
    std::vector<Unit> units;
    for (std::size_t v = 0; v < nv; ++v)
        for (std::size_t k = 0; k < nk; ++k)
            for (int b = 0; b < blocks; ++b) units.push_back({v, k, b});

    // Slot per episode so threads never share output.
    std::vector<EpisodeRecord> records(nv * nk * static_cast<std::size_t>(preset.episodes));
    auto slot = [&](std::size_t v, std::size_t k, int e) {
        return (v * nk + k) * static_cast<std::size_t>(preset.episodes) + static_cast<std::size_t>(e);
    };

    auto run_unit = [&](const Unit& u) {
        const Variant& var = preset.variants[u.variant];
        Rng heap_rng = make_rng(preset.seed, {kHeapStream, u.key, static_cast<std::uint64_t>(u.block)});
        HeapState heap = init_heap(sim, heap_rng());
        const int e0 = u.block * per;
        const int e1 = std::min(preset.episodes, e0 + per);
        for (int e = e0; e < e1; ++e) {
            Rng rng = make_rng(preset.seed, {kEpisodeStream, u.key, static_cast<std::uint64_t>(e)});
            EpisodeRecord rec;
            rec.variant = var.label;
            rec.index = e;
            if (is_drop(kind)) {
                DropTrialConfig dc;
                dc.drop_g = keys[u.key];
                dc.pregrasp = var.pregrasp;
                dc.spines = var.spines;
                dc.z_pool_cm = preset.collection_depths_cm;
                dc.controller.speed = sim.postgrasp.speed;
                const DropTrialResult r = run_drop_trial(heap, sim, dc, rng);
                rec.drop_g = dc.drop_g;
                rec.target_g = r.target_g;
                rec.status = r.completed ? "placed" : "failed_to_grasp";
                rec.grasped_g = r.grasped_measured_g;
                rec.final_g = r.final_mass_g;
                rec.retries = r.retries;
                rec.discarded_g = r.discarded_g;
                rec.heap_loss_g = r.heap_loss_g;
            } else {
                EpisodeConfig ec;
                ec.selection.target_g = keys[u.key];
                ec.selection.alpha = var.alpha;
                ec.selection.z_candidates_cm = preset.inference_depths_cm;
                ec.controller.speed = sim.postgrasp.speed;
                ec.pregrasp = var.pregrasp;
                ec.postgrasp = var.postgrasp;
                ec.spines = var.spines;
                ec.retry = var.retry;
                ec.record_events = preset.record_events;
                EpisodeResult r = run_inference_episode(*in.model, heap, sim, ec, rng);
                rec.target_g = keys[u.key];
                rec.status = to_string(r.status);
                rec.grasped_g = r.grasped_measured_g;
                rec.final_g = r.final_mass_g;
                rec.retries = r.retries;
                rec.success_first_grasp = r.status != EpisodeStatus::infeasible &&
                                          r.grasped_measured_g > rec.target_g - 2.0 + kMassCompareEps;
                rec.chosen = r.chosen;
                rec.predicted = r.predicted;
                rec.discarded_g = r.discarded_g;
                rec.heap_loss_g = r.heap_loss_g;
                rec.wall_steps = r.wall_steps;
                rec.postgrasp_trace = std::move(r.postgrasp_trace);
                rec.events = std::move(r.events);
            }
            records[slot(u.variant, u.key, e)] = std::move(rec);
        }
    };

    if (workers == 1) {
        for (const auto& u : units) run_unit(u);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mu;
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < units.size();) {
                    try {
                        run_unit(units[i]);
                    } catch (...) {
                        std::lock_guard lock(failure_mu);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    std::uint64_t cell_id = 0;
    for (std::size_t v = 0; v < nv; ++v) {
        for (std::size_t k = 0; k < nk; ++k) {
            const auto first = records.begin() + static_cast<std::ptrdiff_t>(slot(v, k, 0));
            const auto last = first + preset.episodes;
            int regrasped = 0;
            for (auto it = first; it != last; ++it) regrasped += it->retries > 0 ? 1 : 0;
            RegraspRate rr{preset.variants[v].label, is_drop(kind) ? 0.0 : keys[k], is_drop(kind) ? keys[k] : 0.0,
                           100.0 * regrasped / preset.episodes};
            rep.regrasp.push_back(rr);
            for (double band : preset.bands_g) {
                std::vector<std::uint8_t> ok;
                ok.reserve(static_cast<std::size_t>(preset.episodes));
                for (auto it = first; it != last; ++it) {
                    bool s = false;
                    if (kind == PresetKind::grasp_selection)
                        s = it->success_first_grasp;
                    else
                        s = it->status == "placed" && std::abs(it->final_g - it->target_g) <= band + kMassCompareEps;
                    ok.push_back(s ? 1 : 0);
                }
                ReportCell c;
                c.variant = preset.variants[v].label;
                c.target_g = rr.target_g;
                c.drop_g = rr.drop_g;
                c.band_g = band;
                c.episodes = preset.episodes;
                c.successes = static_cast<int>(std::count(ok.begin(), ok.end(), 1));
                const BootstrapStat bs = bootstrap(ok, preset.bootstrap_resamples, preset.seed + 7919 * ++cell_id);
                c.mean_pct = bs.mean_pct;
                c.std_pct = bs.std_pct;
                rep.cells.push_back(c);
            }
        }
    }
    rep.episodes = std::move(records);
    rep.bands_g = preset.bands_g;
    rep.seeds = {{"preset", preset.seed},
                 {"episodes_per_heap", preset.episodes_per_heap},
                 {"bootstrap_resamples", preset.bootstrap_resamples}};
    return rep;
}

json to_json(const ExperimentReport& r) {
    json cells = json::array();
    for (const auto& c : r.cells) {
        json j{{"variant", c.variant}, {"band_g", c.band_g},       {"mean_pct", c.mean_pct}, {"std_pct", c.std_pct},
               {"successes", c.successes}, {"episodes", c.episodes}};
        if (c.drop_g > 0.0)
            j["drop_g"] = c.drop_g;
        else
            j["target_g"] = c.target_g;
        cells.push_back(std::move(j));
    }
    json regrasp = json::array();
    for (const auto& g : r.regrasp) {
        json j{{"variant", g.variant}, {"pct", g.pct}};
        if (g.drop_g > 0.0)
            j["drop_g"] = g.drop_g;
        else
            j["target_g"] = g.target_g;
        regrasp.push_back(std::move(j));
    }
    json episodes = json::array();
    for (const auto& e : r.episodes) {
        json j{{"variant", e.variant}, {"index", e.index},         {"target_g", e.target_g},
               {"drop_g", e.drop_g},   {"status", e.status},       {"grasped_g", e.grasped_g},
               {"final_g", e.final_g}, {"retries", e.retries},     {"discarded_g", e.discarded_g},
               {"heap_loss_g", e.heap_loss_g}};
        if (e.drop_g == 0.0) {
            j["chosen"] = {{"x", e.chosen.x}, {"y", e.chosen.y}, {"z_cm", e.chosen.z_cm}};
            j["predicted"] = {{"mu_g", e.predicted.mu},
                              {"sigma_g", std::isfinite(e.predicted.sigma) ? json(e.predicted.sigma) : json()}};
            j["wall_steps"] = e.wall_steps;
            json trace = json::array();
            for (const auto& s : e.postgrasp_trace) trace.push_back({s.t_s, s.speed, s.dropped_g});
            j["postgrasp_trace"] = std::move(trace);
            json flags;
            for (double band : r.bands_g)
                flags[fmt_band(band)] = e.status == "placed" && std::abs(e.final_g - e.target_g) <= band + kMassCompareEps;
            j["success_band"] = std::move(flags);
        }
        episodes.push_back(std::move(j));
    }
    json hists = json::array();
    for (const auto& h : r.histograms) {
        json j = to_json(h.histogram);
        j["label"] = h.label;
        j["depths_cm"] = h.depths_cm;
        j["modes"] = h.modes.size();
        json lo = json::array();
        for (auto m : h.modes) lo.push_back(h.histogram.lo(m));
        j["mode_lo_g"] = std::move(lo);
        hists.push_back(std::move(j));
    }
    json out{{"preset", r.preset}, {"seeds", r.seeds}, {"reference", r.reference}};
    if (!r.targets_g.empty()) out["targets_g"] = r.targets_g;
    if (!r.cells.empty()) {
        out["cells"] = std::move(cells);
        out["regrasp_rate_pct"] = std::move(regrasp);
        out["episodes"] = std::move(episodes);
    }
    if (!r.histograms.empty()) out["histograms"] = std::move(hists);
    return out;
}

}  // namespace entpick
