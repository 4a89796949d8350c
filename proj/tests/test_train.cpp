#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cxr/errors.hpp"
#include "cxr/fit.hpp"
#include "cxr/loss.hpp"
#include "cxr/optim.hpp"
#include "cxr/schedule.hpp"
#include "cxr/synthetic.hpp"
#include "oracles.hpp"

using namespace cxr;

namespace {

Tensor<double> probs_row(std::vector<double> p) {
  const std::size_t k = p.size();
  return Tensor<double>(Shape{1, k}, std::move(p));
}

// Random strictly positive rows that sum to 1.
Tensor<double> random_probs(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0);
  Tensor<double> p(Shape{n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += p.at(i, j) = g(rng) + 1e-3;
    for (std::size_t j = 0; j < k; ++j) p.at(i, j) /= s;
  }
  return p;
}

std::vector<LayerSpec> tiny_net() {
  LayerSpec conv{"conv", LayerKind::Conv, {}, 4};
  LayerSpec relu{"relu", LayerKind::Relu, {}};
  LayerSpec pool{"pool", LayerKind::MaxPool, {}};
  LayerSpec gap{"gap", LayerKind::GlobalAvgPool, {"pool"}};
  LayerSpec flat{"flat", LayerKind::Flatten, {"pool"}};
  LayerSpec cat{"cat", LayerKind::Concat, {"flat", "gap"}};
  LayerSpec logits{"logits", LayerKind::Dense, {}};
  logits.units = 3;
  LayerSpec probs{"probs", LayerKind::Softmax, {}};
  return {conv, relu, pool, gap, flat, cat, logits, probs};
}

ImageSet tiny_data(std::size_t per_class, std::uint64_t seed) {
  SyntheticOptions o;
  o.image_size = 16;
  o.seed = seed;
  const std::vector<std::size_t> counts(3, per_class);
  return make_synthetic(counts, o);
}

ModelGraph<float> tiny_model(std::uint64_t seed) {
  auto m = build_model<float>(tiny_net(), Shape{3, 16, 16}, 3, seed);
  m.set_class_names(kSyntheticClasses);
  return m;
}

}  // namespace

TEST(CrossEntropy, HandEvaluatedExamples) {
  const auto t = one_hot<double>({0}, 2);
  EXPECT_DOUBLE_EQ(cross_entropy(probs_row({1.0, 0.0}), t), 0.0);
  EXPECT_NEAR(cross_entropy(probs_row({0.5, 0.5}), t), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, ClampsZeroProbability) {
  const double loss = cross_entropy(probs_row({0.0, 1.0}), one_hot<double>({0}, 2));
  EXPECT_NEAR(loss, -std::log(kProbabilityFloor), 1e-9);
}

TEST(CrossEntropy, UnitWeightsAreBitIdenticalToUnweighted) {
  std::mt19937_64 rng(1);
  const auto p = random_probs(8, 4, rng);
  const auto t = one_hot<double>({0, 1, 2, 3, 3, 2, 1, 0}, 4);
  EXPECT_EQ(cross_entropy(p, t, Tensor<double>(Shape{4}, 1.0)), cross_entropy(p, t));
}

TEST(CrossEntropy, WeightsEnterLinearly) {
  std::mt19937_64 rng(2);
  const auto p = random_probs(6, 3, rng);
  const auto t = label_smooth(one_hot<double>({0, 1, 2, 0, 1, 2}, 3), 0.1);
  const Tensor<double> w(Shape{3}, {0.5, 2.0, 1.5});
  Tensor<double> w4(Shape{3}, {2.0, 8.0, 6.0});
  EXPECT_EQ(cross_entropy(p, t, w4), 4.0 * cross_entropy(p, t, w));
}

TEST(CrossEntropy, WeightIndexedByTrueClass) {
  // Mean of w[c(i)] * per-sample loss, evaluated by hand.
  const Tensor<double> p(Shape{2, 3}, {0.7, 0.2, 0.1, 0.1, 0.3, 0.6});
  const auto t = one_hot<double>({0, 2}, 3);
  const Tensor<double> w(Shape{3}, {2.0, 1.0, 0.5});
  const double expected = (2.0 * -std::log(0.7) + 0.5 * -std::log(0.6)) / 2;
  EXPECT_NEAR(cross_entropy(p, t, w), expected, 1e-15);
}

TEST(CrossEntropy, ShapeDisagreementsRejected) {
  const auto p = probs_row({0.5, 0.5});
  EXPECT_THROW(cross_entropy(p, one_hot<double>({0}, 3)), std::invalid_argument);
  EXPECT_THROW(cross_entropy(p, one_hot<double>({0}, 2), Tensor<double>(Shape{3}, 1.0)), std::invalid_argument);
  EXPECT_THROW(cross_entropy(probs_row({0.5, 0.2}), one_hot<double>({0}, 2)), std::invalid_argument);
}

TEST(LabelSmooth, Examples) {
  const auto t = one_hot<double>({0, 2}, 3);
  EXPECT_EQ(label_smooth(t, 0.0), t);
  const auto s = label_smooth(one_hot<double>({0}, 3), 0.1);
  EXPECT_DOUBLE_EQ(s[0], 0.9);
  EXPECT_DOUBLE_EQ(s[1], 0.05);
  EXPECT_DOUBLE_EQ(s[2], 0.05);
  EXPECT_THROW(label_smooth(t, 1.0), std::invalid_argument);
  EXPECT_THROW(label_smooth(t, -0.1), std::invalid_argument);
  EXPECT_THROW(label_smooth(one_hot<double>({0}, 1), 0.1), std::invalid_argument);
}

TEST(LabelSmooth, RowsSumToOne) {
  for (std::size_t k = 2; k <= 12; ++k)
    for (double eps : {0.01, 0.1, 0.3, 0.5, 0.9, 0.999}) {
      const auto s = label_smooth(one_hot<double>({k - 1, 0}, k), eps);
      for (std::size_t i = 0; i < 2; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < k; ++j) sum += s.at(i, j);
        EXPECT_NEAR(sum, 1.0, 1e-15 * static_cast<double>(k)) << "k=" << k << " eps=" << eps;
      }
    }
}

TEST(SmoothedCrossEntropy, HandEvaluatedExample) {
  const double expected = -(0.9 * std::log(0.8) + 0.05 * std::log(0.1) + 0.05 * std::log(0.1));
  const double loss = smoothed_cross_entropy(probs_row({0.8, 0.1, 0.1}), one_hot<double>({0}, 3), 0.1);
  EXPECT_NEAR(loss, expected, 1e-12);
  EXPECT_NEAR(loss, 0.431087, 1e-6);
}

TEST(SmoothedCrossEntropy, ZeroEpsilonIsBitIdentical) {
  std::mt19937_64 rng(3);
  const auto p = random_probs(10, 3, rng);
  const auto t = one_hot<double>({0, 1, 2, 0, 1, 2, 0, 1, 2, 0}, 3);
  const Tensor<double> w(Shape{3}, {1.3, 0.7, 2.0});
  EXPECT_EQ(smoothed_cross_entropy(p, t, 0.0, w), cross_entropy(p, t, w));
}

TEST(SmoothedCrossEntropy, NotBelowUnsmoothedForConfidentCorrectPredictions) {
  std::mt19937_64 rng(4);
  std::size_t checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 2 + trial % 5;
    const auto p = random_probs(1, k, rng);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (p[j] > p[arg]) arg = j;
    if (p[arg] < 1.0 / static_cast<double>(k)) continue;
    const auto t = one_hot<double>({arg}, k);
    const double eps = std::uniform_real_distribution<double>(0.01, 0.5)(rng);
    EXPECT_GE(smoothed_cross_entropy(p, t, eps), cross_entropy(p, t) - 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 1000u);
  // Strict increase once the prediction is concentrated on the true class.
  const auto conc = probs_row({0.98, 0.01, 0.01});
  EXPECT_GT(smoothed_cross_entropy(conc, one_hot<double>({0}, 3), 0.1), cross_entropy(conc, one_hot<double>({0}, 3)));
}

TEST(Adam, HandComputedFirstStep) {
  std::vector<Tensor<double>> p = {Tensor<double>(Shape{1}, 1.0)};
  const std::vector<Tensor<double>> g = {Tensor<double>(Shape{1}, 0.5)};
  OptimizerState<double> state;
  adam_step<double>(std::span<Tensor<double>>(p), g, state, 1e-3, AdamConfig{});
  EXPECT_NEAR(p[0][0], 1.0 - 1e-3 * (0.5 / (0.5 + 1e-8)), 1e-15);
  EXPECT_NEAR(p[0][0], 0.999, 1e-7);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, ZeroGradientLeavesEverythingUnchanged) {
  std::vector<Tensor<double>> p = {oracle::random_tensor<double>(Shape{3, 2}, 5)};
  const auto before = p[0];
  const std::vector<Tensor<double>> g = {Tensor<double>(Shape{3, 2})};
  OptimizerState<double> state;
  adam_step<double>(std::span<Tensor<double>>(p), g, state, 1e-3, AdamConfig{});
  EXPECT_EQ(p[0], before);
  EXPECT_EQ(state.first[0], Tensor<double>(Shape{3, 2}));
  EXPECT_EQ(state.second[0], Tensor<double>(Shape{3, 2}));
}

TEST(Adam, FreshStepFollowsGradientSign) {
  auto g0 = oracle::random_tensor<double>(Shape{50}, 6, -2.0, 2.0);
  std::vector<Tensor<double>> p = {Tensor<double>(Shape{50})};
  OptimizerState<double> state;
  adam_step<double>(std::span<Tensor<double>>(p), std::vector<Tensor<double>>{g0}, state, 1e-3, AdamConfig{});
  for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(p[0][i], -1e-3 * (g0[i] > 0 ? 1.0 : -1.0), 1e-9);
}

TEST(Adam, EqualGradientsGiveEqualUpdates) {
  std::vector<Tensor<float>> p = {Tensor<float>(Shape{2}, 0.3f), Tensor<float>(Shape{2}, 0.3f)};
  const std::vector<Tensor<float>> g = {Tensor<float>(Shape{2}, {0.1f, -2.0f}), Tensor<float>(Shape{2}, {0.1f, -2.0f})};
  OptimizerState<float> state;
  for (int i = 0; i < 3; ++i) adam_step<float>(std::span<Tensor<float>>(p), g, state, 1e-2, AdamConfig{});
  EXPECT_EQ(p[0], p[1]);
}

TEST(Adam, ShapeMismatchRejected) {
  std::vector<Tensor<float>> p = {Tensor<float>(Shape{2})};
  const std::vector<Tensor<float>> g = {Tensor<float>(Shape{3})};
  OptimizerState<float> state;
  EXPECT_THROW(adam_step<float>(std::span<Tensor<float>>(p), g, state, 1e-3, AdamConfig{}), std::invalid_argument);
}

TEST(Sgd, TwoStepMomentumExample) {
  std::vector<Tensor<double>> p = {Tensor<double>(Shape{1}, 1.0)};
  const std::vector<Tensor<double>> g = {Tensor<double>(Shape{1}, 2.0)};
  OptimizerState<double> state;
  sgd_step<double>(std::span<Tensor<double>>(p), g, state, 0.1, 0.9);
  EXPECT_NEAR(p[0][0], 0.8, 1e-15);
  sgd_step<double>(std::span<Tensor<double>>(p), g, state, 0.1, 0.9);
  EXPECT_NEAR(p[0][0], 0.42, 1e-15);
}

TEST(Sgd, PlainAndZeroCases) {
  std::vector<Tensor<double>> p = {Tensor<double>(Shape{2}, {1.0, -1.0})};
  OptimizerState<double> state;
  sgd_step<double>(std::span<Tensor<double>>(p), std::vector<Tensor<double>>{Tensor<double>(Shape{2}, {0.5, 1.0})},
                   state, 0.1, 0.0);
  EXPECT_EQ(p[0].values(), (std::vector<double>{1.0 - 0.1 * 0.5, -1.0 - 0.1 * 1.0}));
  OptimizerState<double> fresh;
  const auto before = p[0];
  sgd_step<double>(std::span<Tensor<double>>(p), std::vector<Tensor<double>>{Tensor<double>(Shape{2})}, fresh, 0.1, 0.9);
  EXPECT_EQ(p[0], before);
  EXPECT_THROW(sgd_step<double>(std::span<Tensor<double>>(p), std::vector<Tensor<double>>{Tensor<double>(Shape{3})},
                                fresh, 0.1, 0.9),
               std::invalid_argument);
}

TEST(Schedule, FormulaExamples) {
  ScheduleSpec s{1e-3, 10, 100, 0.1};
  EXPECT_DOUBLE_EQ(lr_at(4, s), 5e-4);
  EXPECT_EQ(lr_at(10, s), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(100, s), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(5000, s), 1e-4);
}

TEST(Schedule, StageShape) {
  const ScheduleSpec s{2e-3, 37, 400, 0.25};
  for (std::uint64_t step = 1; step < 1000; ++step) {
    const double prev = lr_at(step - 1, s), cur = lr_at(step, s);
    if (step < 37) EXPECT_GE(cur, prev);
    else if (step < 400) EXPECT_EQ(cur, 2e-3);
    else EXPECT_EQ(cur, 2e-3 * 0.25);
    EXPECT_GT(cur, 0.0);
  }
}

TEST(Schedule, InvalidSpecsRejected) {
  EXPECT_THROW((ScheduleSpec{1e-3, 20, 10, 0.1}.validate()), std::invalid_argument);
  EXPECT_THROW((ScheduleSpec{1e-3, 0, 10, 0.0}.validate()), std::invalid_argument);
  EXPECT_THROW((ScheduleSpec{0.0, 0, 10, 0.5}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((ScheduleSpec{1e-3, 0, 0, 1.0}.validate()));
}

TEST(Schedule, DefaultBoundaries) {
  const auto s = default_schedule(1e-3, 10, 19);
  EXPECT_EQ(s.warmup_steps, 19u);
  EXPECT_EQ(s.decay_start_step, 152u);  // floor(0.8 * 190)
  EXPECT_EQ(s.decay_factor, 0.1);
}

TEST(Plan, ValidationCatchesBadValues) {
  TrainPlan plan;
  plan.label_smoothing = 1.0;
  EXPECT_THROW(plan.validate(3), std::invalid_argument);
  plan = TrainPlan{};
  plan.class_weights = {1.0, 0.0, 1.0};
  EXPECT_THROW(plan.validate(3), std::invalid_argument);
  plan.class_weights = {1.0, 1.0};
  EXPECT_THROW(plan.validate(3), std::invalid_argument);
  plan = TrainPlan{};
  plan.adam.beta1 = 1.0;
  EXPECT_THROW(plan.validate(3), std::invalid_argument);
}

TEST(Fit, ZeroEpochsLeavesModelUnchanged) {
  auto model = tiny_model(1);
  const auto before = model;
  TrainPlan plan;
  plan.epochs = 0;
  const auto history = fit(model, tiny_data(4, 1), plan);
  EXPECT_TRUE(history.records.empty());
  EXPECT_TRUE(model == before);
}

TEST(Fit, EmptyDatasetRejected) {
  auto model = tiny_model(1);
  ImageSet empty;
  empty.classes = kSyntheticClasses;
  TrainPlan plan;
  plan.epochs = 1;
  EXPECT_THROW(fit(model, empty, plan), DataError);
}

TEST(Fit, SameSeedGivesBitIdenticalParameters) {
  const auto data = tiny_data(6, 2);
  TrainPlan plan;
  plan.epochs = 2;
  plan.batch_size = 5;
  plan.augment = AugmentPolicy{};  // everything enabled
  plan.schedule = default_schedule(1e-3, 2, steps_per_epoch(data.size(), 5));
  auto a = tiny_model(3), b = tiny_model(3);
  const auto ha = fit(a, data, plan, {}, &data);
  const auto hb = fit(b, data, plan, {}, &data);
  EXPECT_TRUE(a == b);
  ASSERT_EQ(ha.records.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ha.records[i].loss, hb.records[i].loss);
  EXPECT_EQ(ha.records[0].split, "train");
  EXPECT_EQ(ha.records[1].split, "validation");
}

TEST(Fit, SgdStepOnFrozenBatchLowersItsLoss) {
  const auto data = tiny_data(4, 5);
  auto model = tiny_model(7);
  TrainPlan plan;
  plan.epochs = 1;
  plan.batch_size = data.size();  // one step over the whole frozen batch
  plan.optimizer = OptimizerKind::Sgd;
  plan.sgd = SgdConfig{1e-4, 0.0};
  plan.schedule = ScheduleSpec{1e-4, 0, 1, 1.0};
  const double before = dataset_loss(model, data, plan);
  fit(model, data, plan);
  EXPECT_LT(dataset_loss(model, data, plan), before);
}

TEST(Fit, HistoryCsvRows) {
  const auto path = std::filesystem::temp_directory_path() / "cxr_history_test.csv";
  std::filesystem::remove(path);
  {
    HistoryCsv sink(path);
    sink(EpochRecord{1, "train", 0.5, 0.75, std::nullopt, 0.5, 1e-3});
  }
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "epoch,split,loss,accuracy,precision,recall,lr");
  EXPECT_EQ(row.substr(0, 8), "1,train,");
  EXPECT_NE(row.find("undefined"), std::string::npos);
}
