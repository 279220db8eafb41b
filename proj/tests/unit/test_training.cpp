#include <filesystem>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "entpick/dataset.hpp"
#include "entpick/training.hpp"
#include "fixtures.hpp"

using namespace entpick;
using entpick::testing::random_patch;
using entpick::testing::small_config;

namespace {

Dataset depth_dataset(std::uint64_t seed, std::size_t n) {
    Rng rng = make_rng(seed, {0});
    std::uniform_real_distribution<double> z(1.0, 4.0);
    std::normal_distribution<double> noise(0.0, 0.5);
    Dataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = z(rng);
        ds.rows.push_back({random_patch(rng, d, kPatchSide, 5.0), 8.0 + 5.0 * d + noise(rng),
                           i % 5 == 4 ? Split::eval : Split::train});
    }
    return ds;
}

ModelConfig quick_config(int epochs) {
    ModelConfig c = small_config(5);
    c.epochs = epochs;
    c.learning_rate = 1e-2;
    c.batch_size = 8;
    return c;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("entpick_test_" + name)).string();
}

}  // namespace

TEST(Train, SameSeedSameWeights) {
    const Dataset ds = depth_dataset(1, 40);
    const TrainResult a = train(ds, quick_config(5));
    const TrainResult b = train(ds, quick_config(5));
    EXPECT_EQ(a.params.theta, b.params.theta);
    EXPECT_EQ(a.best_epoch, b.best_epoch);
    ModelConfig other = quick_config(5);
    other.seed = 6;
    EXPECT_NE(train(ds, other).params.theta, a.params.theta);
}

TEST(Train, NeverWorseThanInitOnEval) {
    const Dataset ds = depth_dataset(2, 40);
    std::vector<EpochLog> seen;
    const TrainResult r = train(ds, quick_config(8), [&](const EpochLog& e) { seen.push_back(e); });
    ASSERT_EQ(r.log.size(), 9u);
    EXPECT_EQ(seen.size(), r.log.size());
    EXPECT_EQ(r.log.front().epoch, 0);
    EXPECT_LE(r.log[r.best_epoch].eval_nll, r.log.front().eval_nll);
    const double final_eval = nll_loss(r.params, ds.split(Split::eval));
    EXPECT_NEAR(final_eval, r.log[r.best_epoch].eval_nll, 1e-9);
}

TEST(Train, NormalizationFromTrainSplit) {
    const Dataset ds = depth_dataset(3, 30);
    const std::vector<double> m = ds.masses(Split::train);
    const double mean = std::accumulate(m.begin(), m.end(), 0.0) / m.size();
    const TrainResult r = train(ds, quick_config(0));
    EXPECT_NEAR(r.params.config.mass_offset, mean, 1e-9);
    EXPECT_GT(r.params.config.mass_scale, 0.0);
    EXPECT_GE(r.params.config.z_range_cm[0], 1.0);
    EXPECT_LE(r.params.config.z_range_cm[1], 4.0);
    EXPECT_EQ(r.best_epoch, 0);
}

TEST(Train, RecoversDepthTrend) {
    const Dataset ds = depth_dataset(4, 120);
    const TrainResult r = train(ds, quick_config(120));
    double se = 0.0;
    const auto ev = ds.split(Split::eval);
    for (const Sample& s : ev) {
        const double mu = mixture_moments(mdn_forward(r.params, s.obs)).mu;
        se += (mu - s.mass_g) * (mu - s.mass_g);
    }
    EXPECT_LT(std::sqrt(se / ev.size()), 1.5);
}

TEST(Train, SeparatesTwoModes) {
    Rng rng = make_rng(5, {0});
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> noise(0.0, 0.5);
    Dataset ds;
    for (int i = 0; i < 160; ++i)
        ds.rows.push_back({random_patch(rng, 2.0, kPatchSide, 5.0), (coin(rng) ? 10.0 : 30.0) + noise(rng),
                           i % 5 == 4 ? Split::eval : Split::train});
    ModelConfig cfg = quick_config(150);
    cfg.components = 2;
    const TrainResult r = train(ds, cfg);
    const MixtureParams m = mdn_forward(r.params, ds.rows.front().obs);
    const std::size_t lo = m.mu[0] < m.mu[1] ? 0 : 1, hi = 1 - lo;
    EXPECT_NEAR(m.mu[lo], 10.0, 1.5);
    EXPECT_NEAR(m.mu[hi], 30.0, 1.5);
    EXPECT_NEAR(m.pi[lo], 0.5, 0.15);
    EXPECT_LT(m.sigma[lo], 3.0);
}

TEST(Train, RejectsMissingSplit) {
    Dataset ds = depth_dataset(6, 10);
    for (auto& s : ds.rows) s.split = Split::train;
    EXPECT_THROW(train(ds, quick_config(1)), std::invalid_argument);
}

TEST(Checkpoint, RoundTrip) {
    const Dataset ds = depth_dataset(7, 20);
    const TrainResult r = train(ds, quick_config(2));
    const std::string path = temp_path("ckpt.json");
    save_checkpoint(r.params, r.log, path);
    std::vector<EpochLog> log;
    const ModelParams back = load_checkpoint(path, &log);
    EXPECT_EQ(back.theta, r.params.theta);
    EXPECT_EQ(to_json(back.config), to_json(r.params.config));
    ASSERT_EQ(log.size(), r.log.size());
    EXPECT_EQ(log.back().eval_nll, r.log.back().eval_nll);
    const MixtureParams a = mdn_forward(r.params, ds.rows[0].obs), b = mdn_forward(back, ds.rows[0].obs);
    EXPECT_EQ(a.mu, b.mu);
    std::filesystem::remove(path);
}

TEST(Checkpoint, Rejections) {
    ModelParams p = init_params(small_config());
    nlohmann::json j = checkpoint_json(p, {});
    j["theta"].erase(j["theta"].size() - 1);
    EXPECT_THROW(params_from_checkpoint(j), std::invalid_argument);
    EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.json")), std::runtime_error);
}

TEST(DatasetJsonl, RoundTrip) {
    Dataset ds = depth_dataset(8, 6);
    for (auto& s : ds.rows)
        for (double& h : s.obs.heights) h = std::round(h * 10.0) / 10.0;
    std::stringstream io;
    write_dataset_jsonl(ds, io);
    const Dataset back = read_dataset_jsonl(io);
    ASSERT_EQ(back.rows.size(), ds.rows.size());
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        EXPECT_EQ(back.rows[i].obs.heights, ds.rows[i].obs.heights);
        EXPECT_EQ(back.rows[i].mass_g, ds.rows[i].mass_g);
        EXPECT_EQ(back.rows[i].split, ds.rows[i].split);
    }
    EXPECT_EQ(back.count(Split::eval), 1u);
}

TEST(DatasetJsonl, ErrorsCarryLineNumbers) {
    const std::string good = R"({"patch": [[1, 2], [3, 4]], "z_cm": 2, "mass_g": 10, "split": "train"})";
    auto line_of = [](const std::string& text) -> std::size_t {
        std::istringstream in(text);
        try {
            read_dataset_jsonl(in);
        } catch (const DatasetError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of(good + "\n{not json\n"), 2u);
    EXPECT_EQ(line_of(good + "\n\n" + R"({"patch": [[1, 2], [3]], "z_cm": 2, "mass_g": 1, "split": "train"})"), 3u);
    EXPECT_EQ(line_of(R"({"patch": [[1]], "z_cm": 0, "mass_g": 1, "split": "train"})"), 1u);
    EXPECT_EQ(line_of(R"({"patch": [[1]], "z_cm": 1, "mass_g": -1, "split": "train"})"), 1u);
    EXPECT_EQ(line_of(R"({"patch": [[1]], "z_cm": 1, "mass_g": 1, "split": "test"})"), 1u);
    EXPECT_EQ(line_of(good + "\n" + R"({"patch": [[1]], "mass_g": 1, "split": "train"})"), 2u);
    EXPECT_EQ(line_of(good + "\n   \n" + good), 0u);
}
