#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "entpick/dataset.hpp"
#include "entpick/mdn.hpp"

namespace entpick {

struct EpochLog {
    int epoch = 0;
    double train_nll = 0.0;
    double eval_nll = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochLog> log;
    int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam on minibatches of the train split, with flip/crop augmentation when
/// enabled. Returns the parameters with the lowest eval-split NLL seen
/// (epoch 0 included), so the result never scores worse than the
/// initialization on the eval split.
TrainResult train(const Dataset& dataset, ModelConfig config, const EpochCallback& on_epoch = {});

/// Checkpoint document: {"config": {...}, "theta": [...], "training_log": [...]}.
nlohmann::json checkpoint_json(const ModelParams& params, const std::vector<EpochLog>& log);
void save_checkpoint(const ModelParams& params, const std::vector<EpochLog>& log, const std::string& path);
ModelParams load_checkpoint(const std::string& path, std::vector<EpochLog>* log = nullptr);
ModelParams params_from_checkpoint(const nlohmann::json& j, std::vector<EpochLog>* log = nullptr);

}  // namespace entpick
