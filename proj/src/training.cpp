#include "entpick/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace entpick {

namespace {

struct Adam {
    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& theta, const std::vector<double>& grad, double lr, double decay) {
        ++t;
        const double c1 = 1.0 - std::pow(beta1, t);
        const double c2 = 1.0 - std::pow(beta2, t);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            theta[i] -= lr * ((m[i] / c1) / (std::sqrt(v[i] / c2) + eps) + decay * theta[i]);
        }
    }

    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int t = 0;
    std::vector<double> m;
    std::vector<double> v;
};

double mean_loss(const ModelParams& p, const std::vector<detail::Prepared>& rows) {
    double s = 0.0;
    for (const auto& r : rows) s += detail::row_loss_grad(p, r, {});
    return s / static_cast<double>(rows.size());
}

std::vector<detail::Prepared> prepare_all(const ModelConfig& cfg, const std::vector<Sample>& rows) {
    std::vector<detail::Prepared> out;
    out.reserve(rows.size());
    for (const auto& s : rows) out.push_back({detail::pooled_input(cfg, s.obs), s.obs.insertion_depth_cm, s.mass_g});
    return out;
}

}  // namespace

TrainResult train(const Dataset& dataset, ModelConfig config, const EpochCallback& on_epoch) {
    validate(config);
    const std::vector<Sample> train_rows = dataset.split(Split::train);
    const std::vector<Sample> eval_rows = dataset.split(Split::eval);
    if (train_rows.empty() || eval_rows.empty()) throw std::invalid_argument("train: both splits must be non-empty");

    // Mass normalization and trained depth range come from the train split only.
    const std::vector<double> masses = dataset.masses(Split::train);
    const double mean = std::accumulate(masses.begin(), masses.end(), 0.0) / masses.size();
    double var = 0.0;
    for (double m : masses) var += (m - mean) * (m - mean);
    const double sd = std::sqrt(var / masses.size());
    config.mass_offset = mean;
    config.mass_scale = sd > 1e-6 ? sd : 1.0;
    auto [zmin, zmax] = std::minmax_element(train_rows.begin(), train_rows.end(), [](const Sample& a, const Sample& b) {
        return a.obs.insertion_depth_cm < b.obs.insertion_depth_cm;
    });
    config.z_range_cm = {zmin->obs.insertion_depth_cm, zmax->obs.insertion_depth_cm};

    ModelParams params = init_params(config);
    const auto train_prepared = prepare_all(config, train_rows);
    const auto eval_prepared = prepare_all(config, eval_rows);

    TrainResult result;
    result.params = params;
    EpochLog first{0, mean_loss(params, train_prepared), mean_loss(params, eval_prepared)};
    result.log.push_back(first);
    if (on_epoch) on_epoch(first);
    double best_eval = first.eval_nll;

    Rng rng = make_rng(config.seed, {0x545241494eull});
    Adam adam(params.theta.size());
    std::vector<std::size_t> order(train_rows.size());
    std::vector<double> grad(params.theta.size());
    const std::size_t batch = static_cast<std::size_t>(config.batch_size);
    const std::size_t steps_per_epoch = (order.size() + batch - 1) / batch;
    const double total_steps = static_cast<double>(steps_per_epoch) * std::max(1, config.epochs);
    std::size_t step = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                if (config.augment && train_rows[idx].obs.side == kPatchSide) {
                    const PatchObservation aug = augment(train_rows[idx].obs, rng, config.input_side);
                    detail::Prepared row{detail::pooled_input(config, aug), aug.insertion_depth_cm,
                                         train_rows[idx].mass_g};
                    detail::row_loss_grad(params, row, grad);
                } else {
                    detail::row_loss_grad(params, train_prepared[idx], grad);
                }
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (double& g : grad) g *= inv;
            const double progress = static_cast<double>(step++) / total_steps;
            const double lr = config.learning_rate * (1.0 - (1.0 - config.lr_final_fraction) * progress);
            adam.step(params.theta, grad, lr, config.weight_decay);
        }
        EpochLog entry{epoch, mean_loss(params, train_prepared), mean_loss(params, eval_prepared)};
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
        if (entry.eval_nll < best_eval) {
            best_eval = entry.eval_nll;
            result.params = params;
            result.best_epoch = epoch;
        }
    }
    return result;
}

nlohmann::json checkpoint_json(const ModelParams& params, const std::vector<EpochLog>& log) {
    nlohmann::json jlog = nlohmann::json::array();
    for (const auto& e : log) jlog.push_back({{"epoch", e.epoch}, {"train_nll", e.train_nll}, {"eval_nll", e.eval_nll}});
    return {{"config", to_json(params.config)}, {"theta", params.theta}, {"training_log", std::move(jlog)}};
}

void save_checkpoint(const ModelParams& params, const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out << checkpoint_json(params, log).dump() << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

ModelParams params_from_checkpoint(const nlohmann::json& j, std::vector<EpochLog>* log) {
    ModelParams p;
    p.config = model_config_from_json(j.at("config"));
    p.theta = j.at("theta").get<std::vector<double>>();
    if (p.theta.size() != parameter_count(p.config))
        throw std::invalid_argument("checkpoint theta length does not match its architecture");
    if (log) {
        log->clear();
        if (j.contains("training_log"))
            for (const auto& e : j.at("training_log"))
                log->push_back({e.at("epoch").get<int>(), e.at("train_nll").get<double>(), e.at("eval_nll").get<double>()});
    }
    return p;
}

ModelParams load_checkpoint(const std::string& path, std::vector<EpochLog>* log) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("checkpoint '" + path + "' is not valid JSON: " + std::string(e.what()));
    }
    return params_from_checkpoint(j, log);
}

}  // namespace entpick
