#include "entpick/heap_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/gamma.hpp>

namespace entpick {

namespace {

// Neumaier summation; heap totals are ~1e4 g over ~1e5 cells and conservation
// is checked at 1e-9 g.
class StableSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double cell_mass_g(double height_mm, double rho) { return rho * height_mm / 1000.0; }

struct Rect {
    double x0, x1, y0, y1;

    Rect grown(double d) const { return {x0 - d, x1 + d, y0 - d, y1 + d}; }
};

double overlap(double a0, double a1, int i) {
    return std::max(0.0, std::min(a1, i + 1.0) - std::max(a0, static_cast<double>(i)));
}

// Calls f(i, j, w) for each cell with coverage w > 0, clipped to the grid.
template <typename F>
void for_each_covered(const Rect& r, int nx, int ny, F&& f) {
    const int i0 = std::max(0, static_cast<int>(std::floor(r.x0)));
    const int i1 = std::min(nx - 1, static_cast<int>(std::ceil(r.x1)) - 1);
    const int j0 = std::max(0, static_cast<int>(std::floor(r.y0)));
    const int j1 = std::min(ny - 1, static_cast<int>(std::ceil(r.y1)) - 1);
    for (int j = j0; j <= j1; ++j) {
        const double wy = overlap(r.y0, r.y1, j);
        if (wy <= 0.0) continue;
        for (int i = i0; i <= i1; ++i) {
            const double w = overlap(r.x0, r.x1, i) * wy;
            if (w > 0.0) f(i, j, w);
        }
    }
}

double rect_coverage(const Rect& r, int i, int j) { return overlap(r.x0, r.x1, i) * overlap(r.y0, r.y1, j); }

Rect footprint_rect(const SimConfig& cfg, int x, int y) {
    const double cx = x + 0.5;
    const double cy = y + 0.5;
    const double hx = cfg.footprint_mm[0] / 2.0;
    const double hy = cfg.footprint_mm[1] / 2.0;
    return {cx - hx, cx + hx, cy - hy, cy + hy};
}

Rect check_reach(const HeapState& heap, const SimConfig& cfg, int x, int y, double z_cm, double* bottom_mm) {
    const Rect fp = footprint_rect(cfg, x, y);
    if (fp.x0 < 0.0 || fp.y0 < 0.0 || fp.x1 > heap.nx() || fp.y1 > heap.ny())
        throw std::out_of_range("gripper footprint leaves the tray at (" + std::to_string(x) + ", " +
                                std::to_string(y) + ")");
    if (!(z_cm > 0.0)) throw std::invalid_argument("insertion depth must be positive");
    const double bottom = surface_median_mm(heap, x, y) - z_cm * 10.0;
    if (bottom < 0.0) throw std::invalid_argument("end-effector would collide with the bottom of the tray");
    if (bottom_mm) *bottom_mm = bottom;
    return fp;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise in [0, 1] with lattice spacing `spacing` cells.
Grid<double> value_noise(int nx, int ny, double spacing, Rng& rng) {
    const int lx = static_cast<int>(std::ceil(nx / spacing)) + 2;
    const int ly = static_cast<int>(std::ceil(ny / spacing)) + 2;
    Grid<double> lattice(lx, ly);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : lattice.data()) v = u(rng);

    Grid<double> out(nx, ny);
    for (int y = 0; y < ny; ++y) {
        const double fy = (y + 0.5) / spacing;
        const int iy = static_cast<int>(fy);
        const double ty = smoothstep(fy - iy);
        for (int x = 0; x < nx; ++x) {
            const double fx = (x + 0.5) / spacing;
            const int ix = static_cast<int>(fx);
            const double tx = smoothstep(fx - ix);
            const double a = lattice(ix, iy) + (lattice(ix + 1, iy) - lattice(ix, iy)) * tx;
            const double b = lattice(ix, iy + 1) + (lattice(ix + 1, iy + 1) - lattice(ix, iy + 1)) * tx;
            out(x, y) = a + (b - a) * ty;
        }
    }
    return out;
}

// Median of values held as integer multiples of the height quantum; returned
// doubled so even-count medians stay integral.
long long doubled_median(std::vector<long long>& q) {
    const std::size_t n = q.size();
    const auto [lo_it, hi_it] = std::minmax_element(q.begin(), q.end());
    const long long lo = *lo_it;
    const auto range = static_cast<std::size_t>(*hi_it - lo);
    if (range < 4 * n) {
        // Counting select; heights span few quanta compared with the patch size.
        std::vector<std::uint32_t> count(range + 1, 0);
        for (long long v : q) ++count[static_cast<std::size_t>(v - lo)];
        auto kth = [&](std::size_t k) {
            std::size_t seen = 0;
            for (std::size_t b = 0;; ++b) {
                seen += count[b];
                if (seen > k) return lo + static_cast<long long>(b);
            }
        };
        const long long upper = kth(n / 2);
        return n % 2 == 1 ? 2 * upper : kth(n / 2 - 1) + upper;
    }
    const auto mid = q.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(q.begin(), mid, q.end());
    const long long upper = *mid;
    if (n % 2 == 1) return 2 * upper;
    const long long lower = *std::max_element(q.begin(), mid);
    return lower + upper;
}

long long to_quanta(double mm) {
    const double q = mm / kHeightQuantumMm;
    return q >= 0.0 ? static_cast<long long>(q + 0.5) : std::llround(q);
}

// Integer cell box, half-open.
struct Box {
    int i0 = 0, i1 = 0, j0 = 0, j1 = 0;

    int w() const { return i1 - i0; }
    int h() const { return j1 - j0; }
};

Box cells_of(const Rect& r, int nx, int ny) {
    Box b;
    b.i0 = std::clamp(static_cast<int>(std::floor(r.x0)), 0, nx);
    b.i1 = std::clamp(static_cast<int>(std::ceil(r.x1)), 0, nx);
    b.j0 = std::clamp(static_cast<int>(std::floor(r.y0)), 0, ny);
    b.j1 = std::clamp(static_cast<int>(std::ceil(r.y1)), 0, ny);
    return b;
}

std::vector<double> snapshot(const Grid<double>& g, const Box& b) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(b.w()) * b.h());
    for (int j = b.j0; j < b.j1; ++j)
        for (int i = b.i0; i < b.i1; ++i) out.push_back(g(i, j));
    return out;
}

// Spreads the mass change inside `b` since `before`: the local share with a
// truncated Gaussian (scatter form, renormalized at the tray walls), the
// global share by scaling every column. Totals are kept.
void slump(HeapState& heap, const RelaxConfig& cfg, const Box& b, const std::vector<double>& before) {
    if (b.w() <= 0 || b.h() <= 0) return;
    const int nx = heap.nx();
    const int ny = heap.ny();
    auto& h = heap.height_mm;
    const auto& rho = heap.density;
    const double g = cfg.global_share;
    const int r = cfg.sigma_mm > 0.0 ? static_cast<int>(std::ceil(3.0 * cfg.sigma_mm)) : 0;
    std::vector<double> kern(static_cast<std::size_t>(2 * r + 1), 1.0);
    for (int k = -r; k <= r; ++k) kern[k + r] = std::exp(-0.5 * k * k / (cfg.sigma_mm * cfg.sigma_mm));

    const Box out{std::max(0, b.i0 - r), std::min(nx, b.i1 + r), std::max(0, b.j0 - r), std::min(ny, b.j1 + r)};
    const auto ow = static_cast<std::size_t>(out.w());
    auto idx = [&](int i, int j) {
        return static_cast<std::size_t>(j - out.j0) * ow + static_cast<std::size_t>(i - out.i0);
    };

    std::vector<double> dm(ow * out.h(), 0.0);
    StableSum change;
    for (int j = b.j0; j < b.j1; ++j)
        for (int i = b.i0; i < b.i1; ++i) {
            const double h0 = before[static_cast<std::size_t>(j - b.j0) * b.w() + (i - b.i0)];
            dm[idx(i, j)] = cell_mass_g(h(i, j) - h0, rho(i, j));
            change.add(dm[idx(i, j)]);
        }

    auto scatter = [&](const std::vector<double>& src, bool along_x, int lo_a, int hi_a, int lo_b, int hi_b) {
        std::vector<double> dst(src.size(), 0.0);
        const int lim = along_x ? nx : ny;
        for (int q = lo_b; q < hi_b; ++q) {
            for (int p = lo_a; p < hi_a; ++p) {
                const double m = along_x ? src[idx(p, q)] : src[idx(q, p)];
                if (m == 0.0) continue;
                const int k0 = std::max(-r, -p);
                const int k1 = std::min(r, lim - 1 - p);
                double norm = 0.0;
                for (int k = k0; k <= k1; ++k) norm += kern[k + r];
                for (int k = k0; k <= k1; ++k) dst[along_x ? idx(p + k, q) : idx(q, p + k)] += m * kern[k + r] / norm;
            }
        }
        return dst;
    };
    const auto spread = scatter(scatter(dm, true, b.i0, b.i1, b.j0, b.j1), false, b.j0, b.j1, out.i0, out.i1);

    // Undo the raw change, then lay down the local share.
    std::vector<double> next(ow * out.h());
    for (int j = out.j0; j < out.j1; ++j)
        for (int i = out.i0; i < out.i1; ++i) {
            const double move = (1.0 - g) * spread[idx(i, j)] - dm[idx(i, j)];
            const double v = h(i, j) + move * 1000.0 / rho(i, j);
            if (v < 0.0) return;  // heap too thin here; leave the change where it is
            next[idx(i, j)] = v;
        }
    for (int j = out.j0; j < out.j1; ++j)
        for (int i = out.i0; i < out.i1; ++i) h(i, j) = next[idx(i, j)];

    const double global = g * change.value();
    if (global == 0.0) return;
    const double m_total = total_mass(heap);
    if (!(m_total > 0.0)) return;
    const double k = 1.0 + global / m_total;
    if (k < 0.0) return;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) h(i, j) *= k;
}

// Loosened cells around (x, y) settle back toward their resting values with
// the mass of every cell unchanged.
void recover(HeapState& heap, const SimConfig& cfg, int x, int y) {
    const double a = cfg.relax.recovery;
    if (a <= 0.0) return;
    const int r = static_cast<int>(std::ceil(cfg.pregrasp.radius_mm)) + 1;
    for (int j = std::max(0, y - r); j <= std::min(heap.ny() - 1, y + r); ++j)
        for (int i = std::max(0, x - r); i <= std::min(heap.nx() - 1, x + r); ++i) {
            double& lam = heap.entanglement(i, j);
            lam += a * (heap.rest_entanglement(i, j) - lam);
            double& rho = heap.density(i, j);
            const double settled = rho + a * (heap.rest_density(i, j) - rho);
            heap.height_mm(i, j) *= rho / settled;
            rho = settled;
        }
}

}  // namespace

HeapState init_heap(const SimConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    const int nx = static_cast<int>(std::lround(cfg.tray.width_mm));
    const int ny = static_cast<int>(std::lround(cfg.tray.depth_mm));

    Rng rng = make_rng(seed, {0x48454150ull});
    const Grid<double> undulation = value_noise(nx, ny, cfg.noise.feature_mm, rng);
    const Grid<double> texture = value_noise(nx, ny, cfg.noise.roughness_feature_mm, rng);
    const Grid<double> tangle = value_noise(nx, ny, cfg.noise.field_feature_mm, rng);
    const Grid<double> packing = value_noise(nx, ny, cfg.noise.field_feature_mm, rng);

    HeapState heap;
    heap.tray = cfg.tray;
    heap.seed = seed;
    heap.height_mm = Grid<double>(nx, ny);
    heap.entanglement = Grid<double>(nx, ny);
    heap.density = Grid<double>(nx, ny);

    const auto [lam_lo, lam_hi] = cfg.lambda_range;
    const auto [rho_lo, rho_hi] = cfg.rho_range;
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            const double h = cfg.fill_mm + cfg.noise.amplitude_mm * (2.0 * undulation(x, y) - 1.0) +
                             cfg.noise.roughness_mm * (2.0 * texture(x, y) - 1.0);
            heap.height_mm(x, y) = std::clamp(h, 0.0, cfg.tray.height_mm);
            const double c = cfg.lambda_surface_coupling;
            heap.entanglement(x, y) = lam_lo + (lam_hi - lam_lo) * (c * undulation(x, y) + (1.0 - c) * tangle(x, y));
            heap.density(x, y) = rho_lo + (rho_hi - rho_lo) * packing(x, y);
        }
    }
    heap.rest_entanglement = heap.entanglement;
    heap.rest_density = heap.density;
    return heap;
}

double total_mass(const HeapState& heap) {
    StableSum sum;
    const auto& h = heap.height_mm.data();
    const auto& rho = heap.density.data();
    for (std::size_t k = 0; k < h.size(); ++k) sum.add(cell_mass_g(h[k], rho[k]));
    return sum.value();
}

std::vector<double> median_normalize(std::span<const double> heights_mm, double* median_mm) {
    if (heights_mm.empty()) throw std::invalid_argument("median_normalize: empty input");
    std::vector<long long> q(heights_mm.size());
    std::transform(heights_mm.begin(), heights_mm.end(), q.begin(), to_quanta);
    thread_local std::vector<long long> scratch;
    scratch.assign(q.begin(), q.end());
    const long long med2 = doubled_median(scratch);
    std::vector<double> out(q.size());
    // (2q - med2) / 2 quanta, kept exact in binary as multiples of 0.05 mm.
    std::transform(q.begin(), q.end(), out.begin(),
                   [med2](long long v) { return static_cast<double>(2 * v - med2) / 20.0; });
    if (median_mm) *median_mm = static_cast<double>(med2) / 20.0;
    return out;
}

PatchObservation observe_patch(const HeapState& heap, int x, int y, int side) {
    if (side <= 0) throw std::invalid_argument("patch side must be positive");
    const int half = side / 2;
    const int x0 = x - half;
    const int y0 = y - half;
    if (x0 < 0 || y0 < 0 || x0 + side > heap.nx() || y0 + side > heap.ny())
        throw std::out_of_range("patch centred at (" + std::to_string(x) + ", " + std::to_string(y) +
                                ") does not fit in the tray");
    std::vector<double> raw(static_cast<std::size_t>(side) * side);
    for (int j = 0; j < side; ++j)
        for (int i = 0; i < side; ++i) raw[static_cast<std::size_t>(j) * side + i] = heap.height_mm(x0 + i, y0 + j);

    PatchObservation obs;
    obs.side = side;
    obs.heights = median_normalize(raw, &obs.surface_mm);
    return obs;
}

double surface_median_mm(const HeapState& heap, int x, int y, int side) {
    const int half = side / 2;
    const int i0 = std::max(0, x - half);
    const int i1 = std::min(heap.nx(), x - half + side);
    const int j0 = std::max(0, y - half);
    const int j1 = std::min(heap.ny(), y - half + side);
    if (i0 >= i1 || j0 >= j1) throw std::out_of_range("surface patch is outside the tray");
    thread_local std::vector<long long> q;
    q.clear();
    for (int j = j0; j < j1; ++j)
        for (int i = i0; i < i1; ++i) q.push_back(to_quanta(heap.height_mm(i, j)));
    return static_cast<double>(doubled_median(q)) / 20.0;
}

GraspOutcome execute_grasp(HeapState& heap, const SimConfig& cfg, int x, int y, double z_cm, Rng& rng) {
    double bottom = 0.0;
    const Rect fp = check_reach(heap, cfg, x, y, z_cm, &bottom);
    const Rect reach = fp.grown(cfg.clump_reach_mm);
    const Box touched = cells_of(reach, heap.nx(), heap.ny());
    const std::vector<double> before = snapshot(heap.height_mm, touched);
    auto& h = heap.height_mm;
    const auto& rho = heap.density;

    GraspOutcome out;

    StableSum base;
    for_each_covered(fp, heap.nx(), heap.ny(), [&](int i, int j, double w) {
        const double column = std::clamp(h(i, j) - bottom, 0.0, z_cm * 10.0);
        const double before = h(i, j);
        h(i, j) = before - w * cfg.eta_fill * column;
        base.add(cell_mass_g(before - h(i, j), rho(i, j)));
    });
    out.base_mass = base.value();

    double lam_weighted = 0.0;
    double weight = 0.0;
    for_each_covered(reach, heap.nx(), heap.ny(), [&](int i, int j, double w) {
        lam_weighted += w * heap.entanglement(i, j);
        weight += w;
    });
    const double lam_mean = weight > 0.0 ? lam_weighted / weight : 0.0;
    const double rate = cfg.kappa * lam_mean;
    int clumps = 0;
    if (rate > 0.0) clumps = std::poisson_distribution<int>(rate)(rng);

    std::lognormal_distribution<double> clump_size(cfg.clump_lognormal.mu, cfg.clump_lognormal.sigma);
    for (int c = 0; c < clumps; ++c) {
        const double wanted = clump_size(rng);
        // Material within reach of the fingers but outside the footprint.
        double ring_mass = 0.0;
        for_each_covered(reach, heap.nx(), heap.ny(), [&](int i, int j, double w) {
            const double ring_w = w - rect_coverage(fp, i, j);
            if (ring_w > 0.0) ring_mass += ring_w * cell_mass_g(h(i, j), rho(i, j));
        });
        if (ring_mass <= 0.0) break;
        const double frac = std::min(1.0, wanted / ring_mass);
        StableSum taken;
        for_each_covered(reach, heap.nx(), heap.ny(), [&](int i, int j, double w) {
            const double ring_w = w - rect_coverage(fp, i, j);
            if (ring_w <= 0.0) return;
            const double before = h(i, j);
            h(i, j) = before - frac * ring_w * before;
            taken.add(cell_mass_g(before - h(i, j), rho(i, j)));
        });
        if (taken.value() > 0.0) out.clump_masses.push_back(taken.value());
    }

    out.entangled_extra = std::accumulate(out.clump_masses.begin(), out.clump_masses.end(), 0.0);
    out.grasped_mass = out.base_mass + out.entangled_extra;
    slump(heap, cfg.relax, touched, before);
    recover(heap, cfg, x, y);
    return out;
}

void apply_pregrasp(HeapState& heap, const SimConfig& cfg, int x, int y, double z_cm) {
    check_reach(heap, cfg, x, y, z_cm, nullptr);
    const double r = cfg.pregrasp.radius_mm;
    const double cx = x + 0.5;
    const double cy = y + 0.5;
    const int i0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int i1 = std::min(heap.nx() - 1, static_cast<int>(std::ceil(cx + r)));
    const int j0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int j1 = std::min(heap.ny() - 1, static_cast<int>(std::ceil(cy + r)));
    const double cap = heap.tray.height_mm;
    const double rho_floor = cfg.rho_range[0] / cfg.pregrasp.fluff;
    for (int j = j0; j <= j1; ++j) {
        for (int i = i0; i <= i1; ++i) {
            const double dx = i + 0.5 - cx;
            const double dy = j + 0.5 - cy;
            if (dx * dx + dy * dy > r * r) continue;
            heap.entanglement(i, j) *= cfg.pregrasp.beta;
            const double hij = heap.height_mm(i, j);
            if (hij <= 0.0) continue;
            // One fluff's worth at most: density never drops below rho_lo / f.
            const double f = std::min({cfg.pregrasp.fluff, cap / hij, heap.density(i, j) / rho_floor});
            if (f <= 1.0) continue;
            heap.height_mm(i, j) = hij * f;
            heap.density(i, j) /= f;
        }
    }
}

void release_to_heap(HeapState& heap, const SimConfig& cfg, int x, int y, double mass_g) {
    if (mass_g < 0.0) throw std::invalid_argument("cannot release negative mass");
    const double cap = heap.tray.height_mm;
    Rect region = footprint_rect(cfg, x, y);
    const Box drop_box = cells_of(region, heap.nx(), heap.ny());
    const std::vector<double> before = snapshot(heap.height_mm, drop_box);
    double left = mass_g;
    int rounds = 0;
    // Widen the drop zone only if the footprint column is full to the rim.
    for (int round = 0; left > 0.0 && round < 64; ++round) {
        double capacity = 0.0;
        double area = 0.0;
        for_each_covered(region, heap.nx(), heap.ny(), [&](int i, int j, double w) {
            capacity += cell_mass_g(cap - heap.height_mm(i, j), heap.density(i, j));
            area += w;
        });
        if (capacity <= 0.0 || area <= 0.0) {
            region = region.grown(10.0);
            continue;
        }
        const double placed = std::min(left, capacity);
        // Uniform mass per unit area, capped cell-wise at the rim.
        double spilled = 0.0;
        for_each_covered(region, heap.nx(), heap.ny(), [&](int i, int j, double w) {
            const double want = placed * w / area;
            const double room = cell_mass_g(cap - heap.height_mm(i, j), heap.density(i, j));
            const double put = std::min(want, room);
            heap.height_mm(i, j) += put * 1000.0 / heap.density(i, j);
            spilled += want - put;
        });
        left = left - placed + spilled;
        region = region.grown(10.0);
        ++rounds;
    }
    if (left > 1e-12) throw std::runtime_error("tray is full; released mass does not fit");
    if (rounds == 1) slump(heap, cfg.relax, drop_box, before);
}

double GripperLoad::remaining_mass() const {
    return std::accumulate(clump_masses.begin(), clump_masses.end(), 0.0);
}

GripperLoad make_load(const GraspOutcome& outcome, bool spines_enabled) {
    GripperLoad load;
    load.spines_enabled = spines_enabled;
    load.clump_masses.reserve(outcome.clump_masses.size() + 1);
    load.clump_masses.push_back(outcome.base_mass);
    load.clump_masses.insert(load.clump_masses.end(), outcome.clump_masses.begin(), outcome.clump_masses.end());
    return load;
}

namespace {

// Shaves up to `amount` off the load, core first. Returns what came off.
double take_from(GripperLoad& load, double amount) {
    double got = 0.0;
    auto& c = load.clump_masses;
    for (std::size_t k = 0; k < c.size() && amount > 0.0; ++k) {
        const double t = std::min(c[k], amount);
        c[k] -= t;
        amount -= t;
        got += t;
    }
    // Drop emptied hanging clumps; slot 0 stays as the core.
    c.erase(std::remove_if(c.begin() + (c.empty() ? 0 : 1), c.end(), [](double m) { return m <= 0.0; }), c.end());
    return got;
}

double gamma_draw(double shape, double scale, Rng& rng) {
    if (scale <= 0.0) return 0.0;
    return std::gamma_distribution<double>(shape, scale)(rng);
}

}  // namespace

double postgrasp_step(GripperLoad& load, double v, const PostgraspConfig& cfg, Rng& rng) {
    if (v < cfg.speed.v_min || v > cfg.speed.v_max)
        throw std::invalid_argument("post-grasp speed " + std::to_string(v) + " outside [" +
                                    std::to_string(cfg.speed.v_min) + ", " + std::to_string(cfg.speed.v_max) + "]");
    if (load.clump_masses.empty() || load.remaining_mass() <= 0.0) return 0.0;

    double dropped = 0.0;
    auto& c = load.clump_masses;
    if (cfg.hang_drop_prob > 0.0) {
        std::bernoulli_distribution detach(cfg.hang_drop_prob);
        for (std::size_t k = 1; k < c.size();) {
            if (detach(rng)) {
                dropped += c[k];
                c.erase(c.begin() + static_cast<std::ptrdiff_t>(k));
            } else {
                ++k;
            }
        }
    }

    if (load.spines_enabled) {
        dropped += take_from(load, gamma_draw(cfg.gamma_shape, cfg.gamma_scale * v, rng));
        return dropped;
    }

    if (std::bernoulli_distribution(cfg.p_clump)(rng)) {
        std::vector<std::size_t> held;
        for (std::size_t k = 0; k < c.size(); ++k)
            if (c[k] > 0.0) held.push_back(k);
        if (!held.empty()) {
            const std::size_t pick = held[std::uniform_int_distribution<std::size_t>(0, held.size() - 1)(rng)];
            dropped += c[pick];
            if (pick == 0)
                c[0] = 0.0;
            else
                c.erase(c.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        return dropped;
    }
    // take_from drops everything when the draw exceeds what is left.
    dropped += take_from(load, gamma_draw(cfg.gamma_shape, 3.0 * cfg.gamma_scale * v, rng));
    return dropped;
}

double spine_drop_quantile(const PostgraspConfig& cfg, double v, double q) {
    const double scale = cfg.gamma_scale * v;
    if (scale <= 0.0) return 0.0;
    return boost::math::quantile(boost::math::gamma_distribution<double>(cfg.gamma_shape, scale), q);
}

double quantize_mass(double mass_g, double resolution_g) {
    if (!(resolution_g > 0.0)) throw std::invalid_argument("scale resolution must be positive");
    const double ticks = std::round(mass_g / resolution_g);
    const double per_gram = 1.0 / resolution_g;
    const double per_gram_int = std::round(per_gram);
    // Divide by an exact integer where possible so 200 ticks of 0.1 g is exactly 20.0.
    if (std::abs(per_gram - per_gram_int) < 1e-9) return ticks / per_gram_int;
    return ticks * resolution_g;
}

ScaleSensor::ScaleSensor(const ScaleConfig& cfg) : cfg_(cfg) {
    if (!(cfg.resolution_g > 0.0) || !(cfg.rate_hz > 0.0) || cfg.lag < 0 || cfg.transient_gain < 0.0)
        throw std::invalid_argument("invalid scale configuration");
}

void ScaleSensor::deposit(double mass_g, double t_s) {
    if (mass_g < 0.0) throw std::invalid_argument("negative deposit");
    if (!deposit_times_.empty() && t_s < deposit_times_.back())
        throw std::invalid_argument("scale deposits must be time-ordered");
    if (mass_g == 0.0) return;
    total_ += mass_g;
    deposit_times_.push_back(t_s);
    deposit_cumulative_.push_back(total_);
}

double ScaleSensor::landed_by_sample(long n) const {
    if (n < 0 || deposit_times_.empty()) return 0.0;
    const double t = static_cast<double>(n) / cfg_.rate_hz + 1e-9;
    const auto it = std::upper_bound(deposit_times_.begin(), deposit_times_.end(), t);
    if (it == deposit_times_.begin()) return 0.0;
    return deposit_cumulative_[static_cast<std::size_t>(it - deposit_times_.begin()) - 1];
}

double ScaleSensor::sample_value(long n) const {
    const long k = n - cfg_.lag;
    const double now = landed_by_sample(k);
    const double landed = now - landed_by_sample(k - 1);
    return std::max(0.0, quantize_mass(now + cfg_.transient_gain * landed, cfg_.resolution_g));
}

double ScaleSensor::read(double t_s) {
    if (t_s < 0.0) throw std::invalid_argument("scale read at negative time");
    const long n = static_cast<long>(std::floor(t_s * cfg_.rate_hz + 1e-9));
    for (long k = last_emitted_ + 1; k <= n; ++k)
        readings_.push_back({static_cast<double>(k) / cfg_.rate_hz, sample_value(k)});
    last_emitted_ = std::max(last_emitted_, n);
    return sample_value(n);
}

}  // namespace entpick
