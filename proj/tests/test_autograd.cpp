#include <gtest/gtest.h>

#include "cxr/autograd.hpp"
#include "cxr/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace cxr;

TEST(Backward, SumOfRelu) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>(Shape{2}, {-1, 2}));
  auto g = tape.backward(sum(relu(x)), std::span<const Var<double>>(&x, 1));
  EXPECT_EQ(g.values[0].values(), (std::vector<double>{0, 1}));
  EXPECT_TRUE(g.diagnostics.empty());
}

TEST(Backward, SumOfProductGivesOtherFactor) {
  Tape<double> tape;
  const auto xv = oracle::random_tensor<double>(Shape{5}, 3);
  auto x = tape.constant(xv);
  auto w = tape.variable(oracle::random_tensor<double>(Shape{5}, 4));
  auto g = tape.backward(sum(mul(x, w)), std::span<const Var<double>>(&w, 1));
  EXPECT_EQ(g.values[0], xv);
}

TEST(Backward, NonScalarLossRejected) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>(Shape{2}, 1.0));
  EXPECT_THROW(tape.backward(relu(x), std::span<const Var<double>>(&x, 1)), std::invalid_argument);
}

TEST(Backward, UnreachableParameterGetsZeroAndDiagnostic) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>(Shape{2}, 1.0));
  auto unused = tape.variable(Tensor<double>(Shape{3}, 5.0));
  const std::vector<Var<double>> wrt = {x, unused};
  auto g = tape.backward(sum(x), std::span<const Var<double>>(wrt));
  EXPECT_EQ(g.values[1], Tensor<double>(Shape{3}));
  ASSERT_EQ(g.diagnostics.size(), 1u);
}

TEST(Backward, VisitsOpsInReverseExecutionOrder) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>(Shape{1, 3}, {0.1, -0.2, 0.3}));
  auto a = relu(x);
  auto b = softmax(a);
  auto c = sum(b);
  tape.backward(c, std::span<const Var<double>>(&x, 1));
  const std::vector<std::size_t> expected = {c.id, b.id, a.id};
  EXPECT_EQ(tape.last_visit_order(), expected);
}

TEST(Backward, SharedInputAccumulatesBothPaths) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>(Shape{3}, {1, 2, 3}));
  auto g = tape.backward(sum(mul(x, x)), std::span<const Var<double>>(&x, 1));
  EXPECT_EQ(g.values[0].values(), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, VarsFromAnotherTapeRejected) {
  Tape<double> a, b;
  auto x = a.variable(Tensor<double>(Shape{1}, 1.0));
  auto y = b.variable(Tensor<double>(Shape{1}, 1.0));
  EXPECT_THROW(a.backward(sum(x), std::span<const Var<double>>(&y, 1)), std::invalid_argument);
}

TEST(Backward, MaxPoolTieRoutesToFirstElement) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>(Shape{1, 1, 2, 2}, 3.0));
  auto g = tape.backward(sum(maxpool2d(x, 2, 2)), std::span<const Var<double>>(&x, 1));
  EXPECT_EQ(g.values[0].values(), (std::vector<double>{1, 0, 0, 0}));
}

// A step of 1e-4 keeps central-difference truncation error well below the
// tolerance; pattern changes across relu/pool kinks are handled by the oracle.
TEST(Backward, SmallNetworkMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto outcome = gradcheck::check(seed, 1e-4);
    EXPECT_LT(outcome.worst_relative_error, 1e-5) << "seed " << seed << " at " << outcome.worst_location;
    EXPECT_LT(outcome.forward_difference, 1e-12) << "seed " << seed;
  }
}

TEST(Backward, IndividualOpsMatchFiniteDifferences) {
  // Smooth compositions: no kinks, so a plain central difference is a valid oracle.
  auto x = oracle::random_tensor<double>(Shape{2, 2, 5, 5}, 91);
  const auto k = oracle::random_tensor<double>(Shape{3, 2, 3, 3}, 92);
  const auto b = oracle::random_tensor<double>(Shape{3}, 93);
  const auto w = oracle::random_tensor<double>(Shape{3, 4}, 94);
  const auto wb = oracle::random_tensor<double>(Shape{4}, 95);
  const auto targets = label_smooth(one_hot<double>({1, 3}, 4), 0.2);
  auto loss_of = [&](const Tensor<double>& in) {
    const auto feat = global_avg_pool2d(conv2d(in, k, b, {2, Padding::Same}));
    return cross_entropy(softmax(dense(feat, w, wb)), targets);
  };
  Tape<double> tape;
  auto xv = tape.variable(x);
  auto feat = global_avg_pool2d(conv2d(xv, tape.constant(k), tape.constant(b), {2, Padding::Same}));
  auto loss = cross_entropy(softmax(dense(feat, tape.constant(w), tape.constant(wb))), targets);
  const auto analytic = tape.backward(loss, std::span<const Var<double>>(&xv, 1)).values[0];
  const auto numeric = oracle::central_differences(x, [&] { return loss_of(x); }, 1e-4);
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_LT(oracle::relative_error(analytic[i], numeric[i]), 1e-5) << "element " << i;
}
