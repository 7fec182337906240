#include <gtest/gtest.h>

#include "testutil.hpp"
#include "vsi/adam.hpp"
#include "vsi/mlp.hpp"

using testutil::FdBuild;
using testutil::fd_check;
using vsi::Mat;
using vsi::Mlp;
using vsi::Rng;
using vsi::Vec;

TEST(Mlp, ShapesAndInit) {
  Rng rng(1);
  const Mlp net = vsi::make_mlp({5, 8, 3}, rng);
  ASSERT_EQ(net.n_layers(), 2);
  EXPECT_EQ(net.weights[0].rows(), 5);
  EXPECT_EQ(net.weights[0].cols(), 8);
  EXPECT_EQ(net.weights[1].rows(), 8);
  EXPECT_EQ(net.weights[1].cols(), 3);
  EXPECT_TRUE(net.biases[0].isZero());
  EXPECT_TRUE(net.biases[1].isZero());
  EXPECT_EQ(net.param_count(), 5 * 8 + 8 + 8 * 3 + 3);

  // He fan-in scale: weight sd near sqrt(2/fan_in) at large fan_in
  Rng rng2(2);
  const Mlp wide = vsi::make_mlp({400, 400}, rng2);
  const double sd = std::sqrt(wide.weights[0].array().square().mean());
  EXPECT_NEAR(sd, std::sqrt(2.0 / 400.0), 0.005);
}

TEST(Mlp, ForwardMatchesManual) {
  Rng rng(3);
  Mlp net = vsi::make_mlp({2, 3, 2}, rng, 0.2);
  const Mat x = rng.normal_mat(4, 2);

  Mat h = (x * net.weights[0]).rowwise() + net.biases[0].row(0);
  h = (h.array() > 0.0).select(h, 0.2 * h);
  const Mat expect = (h * net.weights[1]).rowwise() + net.biases[1].row(0);
  EXPECT_TRUE(vsi::mlp_forward(net, x).isApprox(expect, 1e-14));

  // the final layer is linear: no activation applied on output
  Rng rng4(4);
  Mlp lin = vsi::make_mlp({1, 1}, rng4);
  Mat in(1, 1);
  in << -3.0;
  EXPECT_NEAR(vsi::mlp_forward(lin, in)(0, 0), -3.0 * lin.weights[0](0, 0), 1e-14);
}

TEST(Mlp, ForwardRejectsWidthMismatch) {
  Rng rng(5);
  const Mlp net = vsi::make_mlp({3, 2}, rng);
  EXPECT_THROW(vsi::mlp_forward(net, Mat::Zero(1, 4)), vsi::data_error);
  EXPECT_THROW(vsi::make_mlp({7}, rng), vsi::config_error);
}

TEST(Mlp, TapeForwardMatchesPlain) {
  Rng rng(6);
  const Mlp net = vsi::make_mlp({4, 6, 5, 2}, rng);
  const Mat x = rng.normal_mat(7, 4);
  vsi::ad::Tape t;
  const auto vars = vsi::mlp_leaves(t, net);
  const auto out = vsi::mlp_forward_tape(t, net, vars, t.leaf(x));
  EXPECT_TRUE(t.value(out).isApprox(vsi::mlp_forward(net, x), 1e-13));
}

TEST(Mlp, TapeGradientMatchesFiniteDifferences) {
  Rng rng(7);
  Mlp net = vsi::make_mlp({3, 5, 4, 2}, rng);
  const Mat x = rng.normal_mat(6, 3);
  std::vector<vsi::ParamRef> refs;
  vsi::collect_params("net", net, refs);
  const auto rep = fd_check(refs, [&](vsi::ad::Tape& t) {
    const auto vars = vsi::mlp_leaves(t, net);
    const auto out = vsi::mlp_forward_tape(t, net, vars, t.leaf(x));
    FdBuild b;
    b.loss = t.sum(t.square(out));
    for (int l = 0; l < net.n_layers(); ++l) {
      b.leaves.push_back(vars.weights[static_cast<std::size_t>(l)]);
      b.leaves.push_back(vars.biases[static_cast<std::size_t>(l)]);
    }
    return b;
  });
  EXPECT_LE(rep.max_err, 1e-4) << rep.where;
}

TEST(Mlp, CollectParamsNamesAndOrder) {
  Rng rng(8);
  Mlp net = vsi::make_mlp({2, 3, 1}, rng);
  std::vector<vsi::ParamRef> refs;
  vsi::collect_params("enc", net, refs);
  ASSERT_EQ(refs.size(), 4u);
  EXPECT_EQ(refs[0].name, "enc.W0");
  EXPECT_EQ(refs[1].name, "enc.b0");
  EXPECT_EQ(refs[2].name, "enc.W1");
  EXPECT_EQ(refs[3].name, "enc.b1");
  EXPECT_EQ(refs[0].mat, &net.weights[0]);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  // with constant gradient g, bias-corrected m_hat = g and v_hat = g^2,
  // so the first update is lr * g / (|g| + eps) = lr * sign(g) (+O(eps))
  Mat theta(1, 2);
  theta << 1.0, -1.0;
  vsi::Adam adam({{"theta", &theta}}, vsi::AdamConfig{0.1, 0.9, 0.999, 1e-8});
  Mat g(1, 2);
  g << 2.0, -0.5;
  adam.step({g});
  EXPECT_NEAR(theta(0, 0), 0.9, 1e-7);
  EXPECT_NEAR(theta(0, 1), -0.9, 1e-7);
  EXPECT_EQ(adam.step_count(), 1);
}

TEST(Adam, MinimizesQuadratic) {
  Mat theta(1, 3);
  theta << 4.0, -2.0, 7.0;
  Mat target(1, 3);
  target << 1.0, 0.5, -2.0;
  vsi::Adam adam({{"theta", &theta}}, vsi::AdamConfig{0.05, 0.9, 0.999, 1e-8});
  for (int it = 0; it < 2000; ++it) {
    const Mat g = 2.0 * (theta - target);
    adam.step({g});
  }
  EXPECT_LT((theta - target).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Adam, RejectsNonFiniteGradAndNamesParameter) {
  Mat a = Mat::Zero(1, 1), b = Mat::Zero(1, 1);
  vsi::Adam adam({{"prior.W0", &a}, {"encoder.W0", &b}});
  Mat bad(1, 1);
  bad << std::numeric_limits<double>::quiet_NaN();
  try {
    adam.step({Mat::Zero(1, 1), bad});
    FAIL() << "expected numeric_error";
  } catch (const vsi::numeric_error& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.W0"), std::string::npos);
  }
  EXPECT_THROW(adam.step({Mat::Zero(1, 1)}), vsi::numeric_error);  // count mismatch
}

TEST(Adam, DeterministicTrajectory) {
  auto run = [] {
    Mat theta(2, 2);
    theta << 1, 2, 3, 4;
    vsi::Adam adam({{"t", &theta}});
    for (int i = 0; i < 25; ++i) adam.step({theta});  // grad = theta itself
    return theta;
  };
  EXPECT_TRUE(run() == run());
}
