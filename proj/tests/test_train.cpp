#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ossar/train.hpp"

using namespace ossar;

namespace {

OpenSetSplit benchmark_split(std::uint64_t seed, bool hard = false, std::size_t per_class = 200) {
    SyntheticConfig cfg;
    cfg.samples_per_class = per_class;
    cfg.seed = seed;
    cfg.hard = hard;
    return apply_split(gen_synthetic(cfg), {{0, 1, 2, 3}, {4, 5}}, 0.3, seed);
}

TrainConfig quick_config(std::size_t epochs = 5) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.hidden_dims = {16};
    cfg.embedding_dim = 8;
    cfg.learning_rate = 1e-3;
    return cfg;
}

}  // namespace

TEST(OptimizerStep, ZeroGradientsLeaveParametersUnchanged) {
    for (OptimizerKind kind : {OptimizerKind::Adam, OptimizerKind::SGD}) {
        std::vector<double> p{0.5, -1.0, 2.0};
        const std::vector<double> before = p;
        const std::vector<double> g(3, 0.0);
        OptimizerState state;
        OptimizerConfig cfg;
        cfg.kind = kind;
        const std::vector<std::span<double>> params{std::span<double>(p)};
        const std::vector<std::span<const double>> grads{std::span<const double>(g)};
        for (int i = 0; i < 3; ++i) optimizer_step(state, params, grads, cfg);
        EXPECT_EQ(p, before) << to_string(kind);
    }
}

TEST(OptimizerStep, SgdDefinition) {
    std::vector<double> p{0.0};
    const std::vector<double> g{1.0};
    OptimizerState state;
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::SGD;
    cfg.learning_rate = 0.1;
    const std::vector<std::span<double>> params{std::span<double>(p)};
    const std::vector<std::span<const double>> grads{std::span<const double>(g)};
    optimizer_step(state, params, grads, cfg);
    EXPECT_DOUBLE_EQ(p[0], -0.1);
}

TEST(OptimizerStep, AdamFirstStepMovesByLearningRate) {
    // m_hat = g and v_hat = g^2 on step one, so the update is lr * g / (|g| + eps).
    for (double g0 : {1e-3, 0.5, 1.0, 42.0, -7.0}) {
        std::vector<double> p{1.0};
        const std::vector<double> g{g0};
        OptimizerState state;
        OptimizerConfig cfg;
        cfg.learning_rate = 0.01;
        const std::vector<std::span<double>> params{std::span<double>(p)};
        const std::vector<std::span<const double>> grads{std::span<const double>(g)};
        optimizer_step(state, params, grads, cfg);
        EXPECT_NEAR(std::abs(p[0] - 1.0), 0.01, 1e-6) << g0;
        EXPECT_EQ(std::signbit(p[0] - 1.0), !std::signbit(g0));
    }
}

TEST(OptimizerStep, ShapeMismatchIsUsageError) {
    std::vector<double> p{0.0, 1.0};
    const std::vector<double> g{1.0};
    OptimizerState state;
    const std::vector<std::span<double>> params{std::span<double>(p)};
    const std::vector<std::span<const double>> grads{std::span<const double>(g)};
    EXPECT_THROW(optimizer_step(state, params, grads, OptimizerConfig{}), UsageError);
}

TEST(OptimizerStep, MarginsProjectedToNonNegative) {
    ModelConfig mc;
    mc.layer_dims = {3, 2};
    Model m = init_model(mc, 3);
    ModelGrads g;
    for (const auto& w : m.embedder.weights) g.embedder.weights.emplace_back(w.rows(), w.cols());
    for (const auto& b : m.embedder.biases) g.embedder.biases.emplace_back(b.size(), 0.0);
    g.points = Matrix(3, 2);
    g.margins = {5.0, -5.0, 0.0};
    OptimizerState state;
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::SGD;
    cfg.learning_rate = 1.0;
    optimizer_step(state, m, g, cfg);
    EXPECT_EQ(m.bank.margins, (std::vector<double>{0.0, 5.0, 0.0}));
}

TEST(Train, ZeroEpochsReturnsInitialModel) {
    const OpenSetSplit s = benchmark_split(0, false, 30);
    TrainConfig cfg = quick_config(0);
    const TrainResult r = train(s, cfg);
    EXPECT_EQ(r.model, init_model(cfg.model_config(8), 4));
    EXPECT_TRUE(r.history.epochs.empty());
}

TEST(Train, SameConfigIsBitIdentical) {
    const OpenSetSplit s = benchmark_split(1, false, 40);
    const TrainResult a = train(s, quick_config());
    const TrainResult b = train(s, quick_config());
    EXPECT_EQ(a.model, b.model);
    std::ostringstream ha, hb;
    write_history_csv(ha, a.history);
    write_history_csv(hb, b.history);
    EXPECT_EQ(ha.str(), hb.str());
}

TEST(Train, MarginsStayNonNegativeAndHistoryIsConsistent) {
    const OpenSetSplit s = benchmark_split(2, false, 40);
    TrainConfig cfg = quick_config(10);
    cfg.loss.alpha = 0.5;
    cfg.loss.beta = 0.3;
    cfg.loss.theta_coc = 0.1;
    cfg.eval_every = 3;
    const TrainResult r = train(s, cfg);
    for (double m : r.model.bank.margins) EXPECT_GE(m, 0.0);
    ASSERT_EQ(r.history.epochs.size(), 10u);
    for (const auto& e : r.history.epochs) {
        const double combined = e.classification + 0.5 * e.amc + 0.3 * e.coc;
        EXPECT_NEAR(e.total, combined, 1e-12 * std::max(1.0, std::abs(e.total))) << "epoch " << e.epoch;
        const bool evaluated = e.epoch % 3 == 0 || e.epoch == 10;
        EXPECT_EQ(std::isnan(e.val_accuracy), !evaluated) << "epoch " << e.epoch;
    }
}

TEST(Train, LastPartialBatchIsTrained) {
    const OpenSetSplit s = benchmark_split(3, false, 10);
    TrainConfig cfg = quick_config(1);
    cfg.batch_size = s.train.size() + 5;  // one partial batch
    cfg.optimizer = OptimizerKind::SGD;
    const TrainResult r = train(s, cfg);
    EXPECT_NE(r.model, init_model(cfg.model_config(8), 4));
}

TEST(Train, ClassificationLossDecreasesOnStandardBenchmark) {
    const OpenSetSplit s = benchmark_split(0);
    TrainConfig cfg;
    apply_preset(cfg, "ossar");
    const TrainResult r = train(s, cfg);
    ASSERT_FALSE(r.history.epochs.empty());
    EXPECT_LT(r.history.epochs.back().classification, r.history.epochs.front().classification);
}

TEST(Train, TrainedModelScoresKnownsAboveUnknowns) {
    const OpenSetSplit s = benchmark_split(0, true);
    TrainConfig cfg;
    apply_preset(cfg, "ossar");
    const TrainResult r = train(s, cfg);
    const auto mean_score = [&](const LabeledDataset& d) {
        const auto sc = openset_score(compute_logits(r.model, d.inputs, cfg.loss.classification_metric, cfg.loss.tau));
        return std::accumulate(sc.begin(), sc.end(), 0.0) / static_cast<double>(sc.size());
    };
    EXPECT_GT(mean_score(s.test_known), mean_score(s.test_unknown));
    const EvalReport rep = evaluate(r.model, s, cfg.loss.classification_metric, cfg.loss.tau);
    EXPECT_LE(rep.oscr, rep.closed_accuracy);
}

TEST(Train, InvalidConfigRejected) {
    const OpenSetSplit s = benchmark_split(0, false, 20);
    TrainConfig cfg = quick_config();
    cfg.batch_size = 0;
    EXPECT_THROW(train(s, cfg), ConfigError);
    cfg = quick_config();
    cfg.learning_rate = -1.0;
    EXPECT_THROW(train(s, cfg), ConfigError);
}

TEST(Presets, AblationArmsExpressibleThroughSettingsAlone) {
    TrainConfig via_preset, via_settings;
    apply_preset(via_preset, "no-hc");
    apply_setting(via_settings, "classification_metric", "euclidean");
    apply_setting(via_settings, "amc_metric", "euclidean");
    apply_setting(via_settings, "alpha", "0.1");
    apply_setting(via_settings, "beta", "0.1");
    EXPECT_EQ(via_preset.loss.classification_metric, via_settings.loss.classification_metric);
    EXPECT_EQ(via_preset.loss.beta, via_settings.loss.beta);

    TrainConfig no_coc;
    apply_setting(no_coc, "preset", "no-coc");
    EXPECT_EQ(no_coc.loss.classification_metric, DistanceMetric::Angular);
    EXPECT_EQ(no_coc.loss.beta, 0.0);

    TrainConfig paper;
    apply_preset(paper, "paper");
    EXPECT_EQ(paper.epochs, 90u);
    EXPECT_EQ(paper.batch_size, 64u);
    EXPECT_EQ(paper.learning_rate, 1e-5);
    EXPECT_EQ(paper.optimizer, OptimizerKind::Adam);
}

TEST(Settings, KeysPrefixesAndErrors) {
    TrainConfig cfg;
    apply_setting(cfg, "loss.tau", "2.5");
    apply_setting(cfg, "train.lr", "0.01");
    apply_setting(cfg, "model.hidden_dims", "32,16");
    apply_setting(cfg, "optimizer", "sgd");
    EXPECT_EQ(cfg.loss.tau, 2.5);
    EXPECT_EQ(cfg.learning_rate, 0.01);
    EXPECT_EQ(cfg.hidden_dims, (std::vector<std::size_t>{32, 16}));
    EXPECT_EQ(cfg.optimizer, OptimizerKind::SGD);
    EXPECT_THROW(apply_setting(cfg, "nonsense", "1"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "tau", "abc"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "amc_metric", "cosine-ish"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "preset", "unknown"), ConfigError);
}

TEST(Sweep, NamedGridsHaveExpectedRowCounts) {
    EXPECT_EQ(named_grid("theta").cells.size(), 5u);
    EXPECT_EQ(named_grid("weights").cells.size(), 7u);
    EXPECT_EQ(named_grid("amc-metric").cells.size(), 4u);
    EXPECT_THROW(named_grid("nope"), ConfigError);
}

TEST(Sweep, ParseGridCartesianOrder) {
    const SweepGrid g = parse_grid("alpha=0.1,0.2;tau=1,2,3");
    EXPECT_EQ(g.keys, (std::vector<std::string>{"alpha", "tau"}));
    ASSERT_EQ(g.cells.size(), 6u);
    EXPECT_EQ(g.cells[0], (GridCell{{"alpha", "0.1"}, {"tau", "1"}}));
    EXPECT_EQ(g.cells[1], (GridCell{{"alpha", "0.1"}, {"tau", "2"}}));
    EXPECT_EQ(g.cells[5], (GridCell{{"alpha", "0.2"}, {"tau", "3"}}));
    EXPECT_EQ(parse_grid("theta").cells.size(), 5u);
    EXPECT_THROW(parse_grid("alpha"), ConfigError);
    EXPECT_THROW(parse_grid("alpha=;beta=1"), ConfigError);
}

TEST(Sweep, CsvIsDeterministicAndParallelMatchesSerial) {
    const OpenSetSplit s = benchmark_split(4, false, 30);
    const SweepGrid g = named_grid("amc-metric");
    const auto serial = sweep(quick_config(3), g, s, 1);
    const auto again = sweep(quick_config(3), g, s, 1);
    const auto parallel = sweep(quick_config(3), g, s, 3);
    std::ostringstream a, b, c;
    write_sweep_csv(a, g, serial);
    write_sweep_csv(b, g, again);
    write_sweep_csv(c, g, parallel);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(a.str(), c.str());
    const std::string text = a.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
    EXPECT_EQ(text.substr(0, text.find('\n')), "amc_metric,acc,auroc,oscr");
}

TEST(Sweep, FailedCellRecordsErrorMarker) {
    const OpenSetSplit s = benchmark_split(4, false, 20);
    const SweepGrid g = parse_grid("tau=1,-1");
    const auto rows = sweep(quick_config(2), g, s);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_TRUE(rows[0].ok);
    EXPECT_FALSE(rows[1].ok);
    EXPECT_FALSE(rows[1].error.empty());
    std::ostringstream os;
    write_sweep_csv(os, g, rows);
    EXPECT_NE(os.str().find("-1,error,error,error\n"), std::string::npos);
}

TEST(History, CsvHeaderAndNan) {
    TrainHistory h;
    h.epochs.push_back({1, 1.5, 1.0, 2.0, 3.0, std::numeric_limits<double>::quiet_NaN()});
    h.epochs.push_back({2, 1.25, 1.0, 0.5, 2.0, 0.75});
    std::ostringstream os;
    write_history_csv(os, h);
    EXPECT_EQ(os.str(), "epoch,total,cls,amc,coc,val_acc\n1,1.5,1,2,3,nan\n2,1.25,1,0.5,2,0.75\n");
}
