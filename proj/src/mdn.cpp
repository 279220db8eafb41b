#include "entpick/mdn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace entpick {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct DenseLayer {
    std::size_t w = 0;  // offset of the out x in weight matrix (row-major)
    std::size_t b = 0;
    int in = 0;
    int out = 0;
};

struct Layout {
    int grid = 0;          // pooled input side
    int conv_out = 0;      // side after the valid convolution
    int conv_pooled = 0;   // side after pooling the convolution
    int features = 0;      // trunk outputs fed to the first dense layer (depth excluded)
    std::size_t conv_w = 0;
    std::size_t conv_b = 0;
    std::vector<DenseLayer> dense;  // hidden layers, head last
    std::size_t total = 0;
};

Layout make_layout(const ModelConfig& cfg) {
    Layout l;
    l.grid = cfg.input_side / cfg.feature_downsample;
    std::size_t off = 0;
    if (cfg.conv_channels > 0) {
        l.conv_out = l.grid - cfg.conv_kernel + 1;
        l.conv_pooled = l.conv_out / cfg.conv_pool;
        l.features = cfg.conv_channels * l.conv_pooled * l.conv_pooled;
        l.conv_w = off;
        off += static_cast<std::size_t>(cfg.conv_channels) * cfg.conv_kernel * cfg.conv_kernel;
        l.conv_b = off;
        off += static_cast<std::size_t>(cfg.conv_channels);
    } else {
        l.features = l.grid * l.grid;
    }
    int in = l.features + 1;
    auto add = [&](int out) {
        DenseLayer d;
        d.in = in;
        d.out = out;
        d.w = off;
        off += static_cast<std::size_t>(in) * out;
        d.b = off;
        off += static_cast<std::size_t>(out);
        l.dense.push_back(d);
        in = out;
    };
    for (int h : cfg.hidden_sizes) add(h);
    add(3 * cfg.components);
    l.total = off;
    return l;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// Activations kept for the backward pass.
struct Trace {
    std::vector<double> conv_act;               // channels x conv_out^2, tanh outputs
    std::vector<double> features;               // trunk output
    std::vector<std::vector<double>> acts;      // acts[0] = [features; depth], acts[i] = output of dense i-1
    std::vector<double> raw;                    // head output
};

void run_trunk(const ModelParams& p, const Layout& l, std::span<const double> pooled, Trace& t) {
    const auto& cfg = p.config;
    if (cfg.conv_channels == 0) {
        t.features.assign(pooled.begin(), pooled.end());
        return;
    }
    const int g = l.grid;
    const int o = l.conv_out;
    const int k = cfg.conv_kernel;
    const int cp = cfg.conv_pool;
    const int ps = l.conv_pooled;
    const double* w = p.theta.data() + l.conv_w;
    const double* b = p.theta.data() + l.conv_b;
    t.conv_act.assign(static_cast<std::size_t>(cfg.conv_channels) * o * o, 0.0);
    t.features.assign(static_cast<std::size_t>(l.features), 0.0);
    const double inv_pool = 1.0 / (cp * cp);
    for (int c = 0; c < cfg.conv_channels; ++c) {
        const double* wc = w + static_cast<std::size_t>(c) * k * k;
        double* act = t.conv_act.data() + static_cast<std::size_t>(c) * o * o;
        for (int oy = 0; oy < o; ++oy) {
            for (int ox = 0; ox < o; ++ox) {
                double s = b[c];
                for (int ky = 0; ky < k; ++ky) {
                    const double* row = pooled.data() + static_cast<std::size_t>(oy + ky) * g + ox;
                    const double* wr = wc + static_cast<std::size_t>(ky) * k;
                    for (int kx = 0; kx < k; ++kx) s += wr[kx] * row[kx];
                }
                act[oy * o + ox] = std::tanh(s);
            }
        }
        double* feat = t.features.data() + static_cast<std::size_t>(c) * ps * ps;
        for (int py = 0; py < ps; ++py) {
            for (int px = 0; px < ps; ++px) {
                double s = 0.0;
                for (int dy = 0; dy < cp; ++dy)
                    for (int dx = 0; dx < cp; ++dx) s += act[(py * cp + dy) * o + px * cp + dx];
                feat[py * ps + px] = s * inv_pool;
            }
        }
    }
}

// Dense stack from layer `first`, starting with pre-activation `pre` of that layer.
void run_dense_from(const ModelParams& p, const Layout& l, std::vector<double> pre, Trace& t) {
    const std::size_t n = l.dense.size();
    for (std::size_t i = 0;; ++i) {
        if (i + 1 == n) {
            t.raw = std::move(pre);
            return;
        }
        for (double& v : pre) v = std::tanh(v);
        t.acts.push_back(pre);
        const DenseLayer& d = l.dense[i + 1];
        const double* w = p.theta.data() + d.w;
        const double* b = p.theta.data() + d.b;
        std::vector<double> next(static_cast<std::size_t>(d.out));
        for (int r = 0; r < d.out; ++r) {
            double s = b[r];
            const double* wr = w + static_cast<std::size_t>(r) * d.in;
            for (int c = 0; c < d.in; ++c) s += wr[c] * pre[c];
            next[r] = s;
        }
        pre = std::move(next);
    }
}

// First dense layer split into a depth-independent part and the depth column.
std::vector<double> first_layer_partial(const ModelParams& p, const Layout& l, std::span<const double> features) {
    const DenseLayer& d = l.dense.front();
    const double* w = p.theta.data() + d.w;
    const double* b = p.theta.data() + d.b;
    std::vector<double> pre(static_cast<std::size_t>(d.out));
    for (int r = 0; r < d.out; ++r) {
        double s = b[r];
        const double* wr = w + static_cast<std::size_t>(r) * d.in;
        for (int c = 0; c < l.features; ++c) s += wr[c] * features[c];
        pre[r] = s;
    }
    return pre;
}

void forward_from_features(const ModelParams& p, const Layout& l, const std::vector<double>& partial, double depth,
                           Trace& t) {
    const DenseLayer& d = l.dense.front();
    const double* w = p.theta.data() + d.w;
    std::vector<double> pre = partial;
    for (int r = 0; r < d.out; ++r) pre[r] += w[static_cast<std::size_t>(r) * d.in + l.features] * depth;
    t.acts.clear();
    std::vector<double> input = t.features;
    input.push_back(depth);
    t.acts.push_back(std::move(input));
    run_dense_from(p, l, std::move(pre), t);
}

MixtureParams head_to_mixture(const ModelConfig& cfg, std::span<const double> raw) {
    const int k = cfg.components;
    MixtureParams m;
    m.pi.resize(k);
    m.mu.resize(k);
    m.sigma.resize(k);
    const double lse = log_sum_exp(raw.subspan(0, k));
    for (int i = 0; i < k; ++i) {
        m.pi[i] = std::exp(raw[i] - lse);
        m.mu[i] = cfg.mass_offset + cfg.mass_scale * raw[k + i];
        m.sigma[i] = cfg.fixed_sigma > 0.0 ? cfg.fixed_sigma
                                           : cfg.sigma_floor + cfg.mass_scale * softplus(raw[2 * k + i]);
    }
    return m;
}

void check_params(const ModelParams& p, const Layout& l) {
    if (p.theta.size() != l.total)
        throw std::invalid_argument("parameter vector has " + std::to_string(p.theta.size()) +
                                    " entries, architecture needs " + std::to_string(l.total));
}

void check_depth(double depth_cm) {
    if (!(depth_cm > 0.0)) throw std::invalid_argument("insertion depth must be positive");
}

// d(-log p)/d(raw head) for a single observed mass; returns the loss.
double head_loss_grad(const ModelConfig& cfg, std::span<const double> raw, double mass, std::vector<double>* draw) {
    const int k = cfg.components;
    const MixtureParams m = head_to_mixture(cfg, raw);
    const double lse_logits = log_sum_exp(raw.subspan(0, k));
    std::vector<double> lp(k);
    for (int i = 0; i < k; ++i) {
        const double zs = (mass - m.mu[i]) / m.sigma[i];
        lp[i] = (raw[i] - lse_logits) - 0.5 * zs * zs - std::log(m.sigma[i]) - kHalfLog2Pi;
    }
    const double ll = log_sum_exp(lp);
    if (draw) {
        draw->assign(static_cast<std::size_t>(3 * k), 0.0);
        for (int i = 0; i < k; ++i) {
            const double gamma = std::exp(lp[i] - ll);
            const double diff = mass - m.mu[i];
            const double s = m.sigma[i];
            (*draw)[i] = m.pi[i] - gamma;
            (*draw)[k + i] = -gamma * diff / (s * s) * cfg.mass_scale;
            if (cfg.fixed_sigma <= 0.0) {
                const double dsigma = gamma * (1.0 / s - diff * diff / (s * s * s));
                (*draw)[2 * k + i] = dsigma * cfg.mass_scale * sigmoid(raw[2 * k + i]);
            }
        }
    }
    return -ll;
}

void backward(const ModelParams& p, const Layout& l, std::span<const double> pooled, const Trace& t,
              std::vector<double> delta, std::span<double> grad) {
    const auto& cfg = p.config;
    std::vector<double> delta_features;
    for (std::size_t li = l.dense.size(); li-- > 0;) {
        const DenseLayer& d = l.dense[li];
        const std::vector<double>& in = t.acts[li];
        const double* w = p.theta.data() + d.w;
        double* gw = grad.data() + d.w;
        double* gb = grad.data() + d.b;
        for (int r = 0; r < d.out; ++r) {
            const double dr = delta[r];
            if (dr == 0.0) continue;
            gb[r] += dr;
            double* gwr = gw + static_cast<std::size_t>(r) * d.in;
            for (int c = 0; c < d.in; ++c) gwr[c] += dr * in[c];
        }
        if (li == 0 && cfg.conv_channels == 0) break;
        std::vector<double> prev(static_cast<std::size_t>(d.in), 0.0);
        for (int r = 0; r < d.out; ++r) {
            const double dr = delta[r];
            if (dr == 0.0) continue;
            const double* wr = w + static_cast<std::size_t>(r) * d.in;
            for (int c = 0; c < d.in; ++c) prev[c] += wr[c] * dr;
        }
        if (li == 0) {
            delta_features.assign(prev.begin(), prev.begin() + l.features);
            break;
        }
        for (int c = 0; c < d.in; ++c) prev[c] *= 1.0 - in[c] * in[c];
        delta = std::move(prev);
    }
    if (cfg.conv_channels == 0) return;

    const int g = l.grid;
    const int o = l.conv_out;
    const int k = cfg.conv_kernel;
    const int cp = cfg.conv_pool;
    const int ps = l.conv_pooled;
    const double inv_pool = 1.0 / (cp * cp);
    double* gw = grad.data() + l.conv_w;
    double* gb = grad.data() + l.conv_b;
    for (int c = 0; c < cfg.conv_channels; ++c) {
        const double* act = t.conv_act.data() + static_cast<std::size_t>(c) * o * o;
        const double* df = delta_features.data() + static_cast<std::size_t>(c) * ps * ps;
        double* gwc = gw + static_cast<std::size_t>(c) * k * k;
        for (int py = 0; py < ps; ++py) {
            for (int px = 0; px < ps; ++px) {
                const double share = df[py * ps + px] * inv_pool;
                if (share == 0.0) continue;
                for (int dy = 0; dy < cp; ++dy) {
                    for (int dx = 0; dx < cp; ++dx) {
                        const int oy = py * cp + dy;
                        const int ox = px * cp + dx;
                        const double a = act[oy * o + ox];
                        const double dpre = share * (1.0 - a * a);
                        gb[c] += dpre;
                        for (int ky = 0; ky < k; ++ky) {
                            const double* row = pooled.data() + static_cast<std::size_t>(oy + ky) * g + ox;
                            for (int kx = 0; kx < k; ++kx) gwc[ky * k + kx] += dpre * row[kx];
                        }
                    }
                }
            }
        }
    }
}

std::vector<detail::Prepared> prepare(const ModelParams& p, std::span<const Sample> batch) {
    std::vector<detail::Prepared> rows;
    rows.reserve(batch.size());
    for (const auto& s : batch) {
        check_depth(s.obs.insertion_depth_cm);
        rows.push_back({detail::pooled_input(p.config, s.obs), s.obs.insertion_depth_cm, s.mass_g});
    }
    return rows;
}

}  // namespace

void validate(const ModelConfig& c) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("invalid model config: ") + what);
    };
    require(c.components >= 1, "K (components) must be >= 1");
    require(c.sigma_floor > 0.0, "sigma_floor must be positive");
    require(c.fixed_sigma >= 0.0, "fixed_sigma must be >= 0");
    require(c.input_side > 0 && c.input_side <= kPatchSide, "input_side must lie in (0, 160]");
    require(c.feature_downsample >= 1 && c.input_side % c.feature_downsample == 0,
            "feature_downsample must divide input_side");
    require(c.conv_channels >= 0, "conv_channels must be >= 0");
    if (c.conv_channels > 0) {
        const int grid = c.input_side / c.feature_downsample;
        require(c.conv_kernel >= 1 && c.conv_kernel <= grid, "conv_kernel must fit the pooled input");
        require(c.conv_pool >= 1 && (grid - c.conv_kernel + 1) / c.conv_pool >= 1, "conv_pool too large");
    }
    for (int h : c.hidden_sizes) require(h >= 1, "hidden sizes must be >= 1");
    require(c.learning_rate > 0.0, "learning_rate must be positive");
    require(c.lr_final_fraction > 0.0 && c.lr_final_fraction <= 1.0, "lr_final_fraction must lie in (0, 1]");
    require(c.weight_decay >= 0.0, "weight_decay must be >= 0");
    require(c.epochs >= 0, "epochs must be >= 0");
    require(c.batch_size >= 1, "batch_size must be >= 1");
    require(c.height_scale > 0.0 && c.mass_scale > 0.0, "scales must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {
        {"K", c.components},
        {"input_side", c.input_side},
        {"feature_downsample", c.feature_downsample},
        {"conv_channels", c.conv_channels},
        {"conv_kernel", c.conv_kernel},
        {"conv_pool", c.conv_pool},
        {"hidden_sizes", c.hidden_sizes},
        {"sigma_floor", c.sigma_floor},
        {"fixed_sigma", c.fixed_sigma},
        {"learning_rate", c.learning_rate},
        {"lr_final_fraction", c.lr_final_fraction},
        {"weight_decay", c.weight_decay},
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"seed", c.seed},
        {"augment", c.augment},
        {"reduction", c.reduction == MomentReduction::mixture ? "mixture" : "dominant"},
        {"height_scale", c.height_scale},
        {"mass_offset", c.mass_offset},
        {"mass_scale", c.mass_scale},
        {"z_range_cm", c.z_range_cm},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
    static const std::vector<std::string> known{
        "K", "input_side", "feature_downsample", "conv_channels", "conv_kernel", "conv_pool", "hidden_sizes",
        "sigma_floor", "fixed_sigma", "learning_rate", "lr_final_fraction", "weight_decay", "epochs", "batch_size",
        "seed", "augment", "reduction", "height_scale", "mass_offset", "mass_scale", "z_range_cm"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::invalid_argument("unknown key '" + key + "' in model config");
    ModelConfig c;
    auto opt = [&j](const char* key, auto& out) {
        if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
    };
    opt("K", c.components);
    opt("input_side", c.input_side);
    opt("feature_downsample", c.feature_downsample);
    opt("conv_channels", c.conv_channels);
    opt("conv_kernel", c.conv_kernel);
    opt("conv_pool", c.conv_pool);
    opt("hidden_sizes", c.hidden_sizes);
    opt("sigma_floor", c.sigma_floor);
    opt("fixed_sigma", c.fixed_sigma);
    opt("learning_rate", c.learning_rate);
    opt("lr_final_fraction", c.lr_final_fraction);
    opt("weight_decay", c.weight_decay);
    opt("epochs", c.epochs);
    opt("batch_size", c.batch_size);
    opt("seed", c.seed);
    opt("augment", c.augment);
    if (j.contains("reduction")) {
        const auto r = j.at("reduction").get<std::string>();
        if (r == "mixture")
            c.reduction = MomentReduction::mixture;
        else if (r == "dominant")
            c.reduction = MomentReduction::dominant;
        else
            throw std::invalid_argument("reduction must be 'mixture' or 'dominant'");
    }
    opt("height_scale", c.height_scale);
    opt("mass_offset", c.mass_offset);
    opt("mass_scale", c.mass_scale);
    opt("z_range_cm", c.z_range_cm);
    validate(c);
    return c;
}

std::size_t parameter_count(const ModelConfig& cfg) {
    validate(cfg);
    return make_layout(cfg).total;
}

ModelParams zero_params(const ModelConfig& cfg) {
    return {cfg, std::vector<double>(parameter_count(cfg), 0.0)};
}

ModelParams init_params(const ModelConfig& cfg) {
    ModelParams p = zero_params(cfg);
    const Layout l = make_layout(cfg);
    Rng rng = make_rng(cfg.seed, {0x494e4954ull});
    auto fill_uniform = [&](std::size_t off, std::size_t n, double a) {
        std::uniform_real_distribution<double> u(-a, a);
        for (std::size_t i = 0; i < n; ++i) p.theta[off + i] = u(rng);
    };
    if (cfg.conv_channels > 0) {
        const int fan = cfg.conv_kernel * cfg.conv_kernel;
        fill_uniform(l.conv_w, static_cast<std::size_t>(cfg.conv_channels) * fan, std::sqrt(6.0 / (fan + fan)));
    }
    for (std::size_t i = 0; i < l.dense.size(); ++i) {
        const auto& d = l.dense[i];
        double a = std::sqrt(6.0 / (d.in + d.out));
        if (i + 1 == l.dense.size()) a *= 0.1;
        fill_uniform(d.w, static_cast<std::size_t>(d.in) * d.out, a);
    }
    // Spread the initial component means over +-1 normalized unit and start
    // the scales near half the mass spread.
    const auto& head = l.dense.back();
    const int k = cfg.components;
    for (int i = 0; i < k; ++i) {
        p.theta[head.b + k + i] = k > 1 ? -1.0 + 2.0 * i / (k - 1) : 0.0;
        p.theta[head.b + 2 * k + i] = std::log(std::expm1(0.5));
    }
    return p;
}

std::vector<double> detail::pooled_input(const ModelConfig& cfg, const PatchObservation& obs) {
    if (obs.side < cfg.input_side || obs.heights.size() != static_cast<std::size_t>(obs.side) * obs.side)
        throw std::invalid_argument("patch of side " + std::to_string(obs.side) + " does not match model input side " +
                                    std::to_string(cfg.input_side));
    const int off = (obs.side - cfg.input_side) / 2;
    const int p = cfg.feature_downsample;
    const int g = cfg.input_side / p;
    std::vector<double> out(static_cast<std::size_t>(g) * g, 0.0);
    for (int y = 0; y < cfg.input_side; ++y) {
        const double* row = obs.heights.data() + static_cast<std::size_t>(y + off) * obs.side + off;
        double* dst = out.data() + static_cast<std::size_t>(y / p) * g;
        for (int x = 0; x < cfg.input_side; ++x) dst[x / p] += row[x];
    }
    const double norm = cfg.height_scale / (p * p);
    for (double& v : out) v *= norm;
    return out;
}

double detail::row_loss_grad(const ModelParams& p, const Prepared& row, std::span<double> grad) {
    const Layout l = make_layout(p.config);
    Trace t;
    run_trunk(p, l, row.pooled, t);
    forward_from_features(p, l, first_layer_partial(p, l, t.features), row.depth_cm, t);
    if (grad.empty()) return head_loss_grad(p.config, t.raw, row.mass_g, nullptr);
    std::vector<double> draw;
    const double loss = head_loss_grad(p.config, t.raw, row.mass_g, &draw);
    backward(p, l, row.pooled, t, std::move(draw), grad);
    return loss;
}

MixtureParams mdn_forward(const ModelParams& params, const PatchObservation& obs) {
    const double depth = obs.insertion_depth_cm;
    return mdn_forward_depths(params, obs, std::span<const double>(&depth, 1)).front();
}

std::vector<MixtureParams> mdn_forward_depths(const ModelParams& params, const PatchObservation& obs,
                                              std::span<const double> depths_cm) {
    const Layout l = make_layout(params.config);
    check_params(params, l);
    for (double d : depths_cm) check_depth(d);
    const std::vector<double> pooled = detail::pooled_input(params.config, obs);
    Trace t;
    run_trunk(params, l, pooled, t);
    const std::vector<double> partial = first_layer_partial(params, l, t.features);
    std::vector<MixtureParams> out;
    out.reserve(depths_cm.size());
    for (double d : depths_cm) {
        forward_from_features(params, l, partial, d, t);
        out.push_back(head_to_mixture(params.config, t.raw));
    }
    return out;
}

double mdn_log_pdf(const MixtureParams& mix, double mass_g) {
    std::vector<double> lp(mix.size());
    for (std::size_t i = 0; i < mix.size(); ++i) {
        const double zs = (mass_g - mix.mu[i]) / mix.sigma[i];
        lp[i] = std::log(mix.pi[i]) - 0.5 * zs * zs - std::log(mix.sigma[i]) - kHalfLog2Pi;
    }
    return log_sum_exp(lp);
}

double mdn_pdf(const MixtureParams& mix, double mass_g) {
    double p = 0.0;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        const double zs = (mass_g - mix.mu[i]) / mix.sigma[i];
        p += mix.pi[i] * std::exp(-0.5 * zs * zs) / (mix.sigma[i] * std::sqrt(2.0 * std::numbers::pi));
    }
    return p;
}

double nll_loss(const ModelParams& params, std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("nll_loss: empty batch");
    check_params(params, make_layout(params.config));
    double sum = 0.0;
    for (const auto& row : prepare(params, batch)) sum += detail::row_loss_grad(params, row, {});
    return sum / static_cast<double>(batch.size());
}

std::vector<double> nll_grad(const ModelParams& params, std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("nll_grad: empty batch");
    check_params(params, make_layout(params.config));
    std::vector<double> grad(params.theta.size(), 0.0);
    for (const auto& row : prepare(params, batch)) detail::row_loss_grad(params, row, grad);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : grad) g *= inv;
    return grad;
}

MassEstimate mixture_moments(const MixtureParams& mix) {
    double mean = 0.0;
    for (std::size_t i = 0; i < mix.size(); ++i) mean += mix.pi[i] * mix.mu[i];
    double var = 0.0;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        const double d = mix.mu[i] - mean;
        var += mix.pi[i] * (mix.sigma[i] * mix.sigma[i] + d * d);
    }
    return {mean, std::sqrt(var)};
}

MassEstimate dominant_moments(const MixtureParams& mix) {
    const auto it = std::max_element(mix.pi.begin(), mix.pi.end());
    const auto k = static_cast<std::size_t>(it - mix.pi.begin());
    return {mix.mu[k], mix.sigma[k]};
}

MassEstimate reduce(const MixtureParams& mix, MomentReduction how) {
    return how == MomentReduction::mixture ? mixture_moments(mix) : dominant_moments(mix);
}

PatchObservation flip_patch(const PatchObservation& obs, bool horizontal, bool vertical) {
    PatchObservation out = obs;
    const int s = obs.side;
    for (int y = 0; y < s; ++y) {
        const int sy = vertical ? s - 1 - y : y;
        for (int x = 0; x < s; ++x) {
            const int sx = horizontal ? s - 1 - x : x;
            out.heights[static_cast<std::size_t>(y) * s + x] = obs.heights[static_cast<std::size_t>(sy) * s + sx];
        }
    }
    return out;
}

PatchObservation crop_patch(const PatchObservation& obs, int x0, int y0, int side) {
    if (x0 < 0 || y0 < 0 || side <= 0 || x0 + side > obs.side || y0 + side > obs.side)
        throw std::out_of_range("crop window outside the patch");
    PatchObservation out;
    out.side = side;
    out.insertion_depth_cm = obs.insertion_depth_cm;
    out.surface_mm = obs.surface_mm;
    out.heights.resize(static_cast<std::size_t>(side) * side);
    for (int y = 0; y < side; ++y)
        std::copy_n(obs.heights.begin() + static_cast<std::ptrdiff_t>((y + y0) * obs.side + x0), side,
                    out.heights.begin() + static_cast<std::ptrdiff_t>(y * side));
    return out;
}

PatchObservation augment(const PatchObservation& obs, Rng& rng, int crop_side) {
    if (obs.side != kPatchSide || obs.heights.size() != static_cast<std::size_t>(kPatchSide) * kPatchSide)
        throw std::invalid_argument("augment expects a 160x160 patch");
    if (crop_side <= 0 || crop_side > obs.side) throw std::invalid_argument("invalid crop side");
    std::bernoulli_distribution coin(0.5);
    const bool h = coin(rng);
    const bool v = coin(rng);
    std::uniform_int_distribution<int> offset(0, obs.side - crop_side);
    const int x0 = offset(rng);
    const int y0 = offset(rng);
    return crop_patch(flip_patch(obs, h, v), x0, y0, crop_side);
}

}  // namespace entpick
