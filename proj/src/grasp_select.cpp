#include "entpick/grasp_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace entpick {

namespace {

std::vector<double> depth_range(double lo, double hi, double step) {
    std::vector<double> z;
    const int n = static_cast<int>(std::lround((hi - lo) / step));
    for (int i = 0; i <= n; ++i) z.push_back(lo + step * i);
    return z;
}

// Lattice coordinates along one axis of length `extent` cells.
std::vector<int> axis_points(int extent, int margin, int stride) {
    const int span = extent - 2 * margin;
    if (span < 0) return {};
    const int n = span / stride + 1;
    const int offset = (span - (n - 1) * stride) / 2;
    std::vector<int> pts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pts[i] = margin + offset + i * stride;
    return pts;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::vector<double> deep_class_depths_cm() { return depth_range(2.0, 4.0, 0.25); }
std::vector<double> shallow_class_depths_cm() { return depth_range(1.0, 2.0, 0.25); }

void validate(const SelectionConfig& cfg) {
    if (cfg.stride_px < 1) throw std::invalid_argument("stride_px must be >= 1");
    if (cfg.z_candidates_cm.empty()) throw std::invalid_argument("z_candidates_cm must be non-empty");
    if (!std::is_sorted(cfg.z_candidates_cm.begin(), cfg.z_candidates_cm.end()))
        throw std::invalid_argument("z_candidates_cm must be sorted");
    if (cfg.z_candidates_cm.front() <= 0.0) throw std::invalid_argument("z candidates must be positive");
    if (cfg.alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
    if (cfg.margin_px < kPatchSide / 2) throw std::invalid_argument("margin_px must be >= 80 so patches fit");
    if (cfg.clearance_mm < 0.0) throw std::invalid_argument("clearance_mm must be >= 0");
}

std::vector<GridPoint> enumerate_candidates(int nx, int ny, const SelectionConfig& cfg) {
    validate(cfg);
    const auto xs = axis_points(nx, cfg.margin_px, cfg.stride_px);
    const auto ys = axis_points(ny, cfg.margin_px, cfg.stride_px);
    std::vector<GridPoint> out;
    out.reserve(xs.size() * ys.size() * cfg.z_candidates_cm.size());
    for (int y : ys)
        for (int x : xs)
            for (double z : cfg.z_candidates_cm) out.push_back({x, y, z});
    return out;
}

bool is_feasible(double mu, double sigma, double target_g, double alpha) {
    if (!std::isfinite(sigma) || !std::isfinite(mu)) return false;
    return target_g + alpha * sigma < mu;
}

double selection_score(double mu, double sigma, double target_g) {
    if (!std::isfinite(sigma)) return kInf;
    return std::abs(target_g - mu) + sigma;
}

void judge(Candidate& c, double target_g, double alpha) {
    c.feasible = is_feasible(c.mu, c.sigma, target_g, alpha);
    c.score = selection_score(c.mu, c.sigma, target_g);
}

std::optional<std::size_t> select_best(std::span<const Candidate> cands) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const Candidate& c = cands[i];
        if (!c.feasible) continue;
        if (!best) {
            best = i;
            continue;
        }
        const Candidate& b = cands[*best];
        if (c.score < b.score || (c.score == b.score && c.index < b.index)) best = i;
    }
    return best;
}

MassEstimate score_candidate(const ModelParams& model, const HeapState& heap, int x, int y, double z_cm,
                             double clearance_mm) {
    PatchObservation obs = observe_patch(heap, x, y);
    if (obs.surface_mm - z_cm * 10.0 < clearance_mm) return {0.0, kInf};
    obs.insertion_depth_cm = z_cm;
    return reduce(mdn_forward(model, obs), model.config.reduction);
}

SelectionReport select_grasp(const ModelParams& model, const HeapState& heap, const SelectionConfig& cfg) {
    const auto points = enumerate_candidates(heap.nx(), heap.ny(), cfg);
    SelectionReport report;
    report.candidates.reserve(points.size());
    const std::size_t nz = cfg.z_candidates_cm.size();
    std::vector<double> safe_depths;
    for (std::size_t base = 0; base < points.size(); base += nz) {
        const GridPoint& p = points[base];
        PatchObservation obs = observe_patch(heap, p.x, p.y);
        // Depths that keep the gripper clear of the tray floor.
        safe_depths.clear();
        for (double z : cfg.z_candidates_cm)
            if (obs.surface_mm - z * 10.0 >= cfg.clearance_mm) safe_depths.push_back(z);
        std::vector<MixtureParams> mixes;
        if (!safe_depths.empty()) mixes = mdn_forward_depths(model, obs, safe_depths);
        std::size_t next = 0;
        for (std::size_t k = 0; k < nz; ++k) {
            Candidate c;
            c.index = base + k;
            c.x = p.x;
            c.y = p.y;
            c.z_cm = points[base + k].z_cm;
            if (next < safe_depths.size() && safe_depths[next] == c.z_cm) {
                const MassEstimate e = reduce(mixes[next++], model.config.reduction);
                c.mu = e.mu;
                c.sigma = e.sigma;
            } else {
                c.mu = 0.0;
                c.sigma = kInf;
            }
            judge(c, cfg.target_g, cfg.alpha);
            report.candidates.push_back(c);
        }
    }
    report.winner = select_best(report.candidates);
    return report;
}

nlohmann::json to_json(const SelectionReport& report) {
    auto finite_or_null = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : report.candidates) {
        cands.push_back({{"index", c.index},
                         {"x", c.x},
                         {"y", c.y},
                         {"z_cm", c.z_cm},
                         {"mu_g", c.mu},
                         {"sigma_g", finite_or_null(c.sigma)},
                         {"feasible", c.feasible},
                         {"score_g", finite_or_null(c.score)}});
    }
    nlohmann::json out{{"candidates", std::move(cands)}};
    if (const Candidate* w = report.chosen())
        out["winner"] = {{"index", w->index}, {"x", w->x}, {"y", w->y}, {"z_cm", w->z_cm},
                         {"mu_g", w->mu},     {"sigma_g", w->sigma}, {"score_g", w->score}};
    else
        out["winner"] = nullptr;
    return out;
}

}  // namespace entpick
