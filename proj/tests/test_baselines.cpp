#include <gtest/gtest.h>

#include "testutil.hpp"
#include "vsi/baselines.hpp"

using testutil::FdBuild;
using testutil::fd_check;
using vsi::IVec;
using vsi::Mat;
using vsi::Rng;
using vsi::TrainConfig;
using vsi::Vec;

namespace {

vsi::TimeGrid small_grid(int nb) {
  std::vector<double> ev;
  for (int i = 0; i < 12; ++i) ev.push_back(0.5 + i);
  return vsi::build_grid(ev, nb - 1);
}

vsi::NoQParams tiny_noq(int p, int nb, int m, std::uint64_t seed) {
  Rng rng(seed);
  vsi::NoQParams params;
  params.latent_dim = m;
  params.prior_net = vsi::make_mlp({p, 5, 2 * m}, rng, 0.2);
  params.decoder_net = vsi::make_mlp({m, 5, nb}, rng, 0.2);
  params.grid = small_grid(nb);
  return params;
}

}  // namespace

TEST(NoQ, BatchLossGradientMatchesFiniteDifferences) {
  auto params = tiny_noq(2, 4, 2, 7);
  const int n = 3, K = 3;
  Rng rng(13);
  const Mat X = rng.normal_mat(n, 2);
  const Mat eps = rng.normal_mat(n * K, 2);
  std::vector<int> bins = {1, 0, 2};
  Vec event_mask(n);
  event_mask << 1, 0, 1;
  Mat tail_mask = Mat::Zero(n, 4);
  tail_mask.row(0).setOnes();
  tail_mask.row(2).setOnes();
  for (int b = 1; b < 4; ++b) tail_mask(1, b) = 1.0;

  auto refs = vsi::collect_params(params);
  const auto rep = fd_check(refs, [&](vsi::ad::Tape& t) {
    const auto prior_lv = vsi::mlp_leaves(t, params.prior_net);
    const auto dec_lv = vsi::mlp_leaves(t, params.decoder_net);
    FdBuild b;
    b.loss = vsi::noq_batch_loss(t, params, prior_lv, dec_lv, X, bins, tail_mask,
                                 event_mask, eps);
    for (std::size_t l = 0; l < prior_lv.weights.size(); ++l) {
      b.leaves.push_back(prior_lv.weights[l]);
      b.leaves.push_back(prior_lv.biases[l]);
    }
    for (std::size_t l = 0; l < dec_lv.weights.size(); ++l) {
      b.leaves.push_back(dec_lv.weights[l]);
      b.leaves.push_back(dec_lv.biases[l]);
    }
    return b;
  });
  EXPECT_LE(rep.max_err, 1e-4) << rep.where;
}

TEST(NoQ, CollapsesToVsiReconstructionWhenLatentIsStandard) {
  // zero prior and encoder make q = p = N(0, I): the variational loss loses
  // its KL term and a single shared draw reduces both objectives to the same
  // reconstruction value
  const int p = 2, nb = 4, m = 2, n = 5;
  vsi::VsiParams v;
  v.latent_dim = m;
  Rng rng(31);
  v.prior_net = vsi::make_mlp({p, 5, 2 * m}, rng, 0.2);
  v.encoder_net = vsi::make_mlp({p + nb, 5, 2 * m}, rng, 0.2);
  v.decoder_net = vsi::make_mlp({m, 6, nb}, rng, 0.2);
  for (auto& W : v.prior_net.weights) W.setZero();
  for (auto& W : v.encoder_net.weights) W.setZero();

  vsi::NoQParams q;
  q.latent_dim = m;
  q.prior_net = v.prior_net;
  q.decoder_net = v.decoder_net;

  Rng data(37);
  const Mat X = data.normal_mat(n, p);
  const Mat enc_in = data.normal_mat(n, p + nb);
  const Mat eps = data.normal_mat(n, m);  // S = K = 1
  std::vector<int> bins = {0, 1, 2, 3, 1};
  Vec event_mask(n);
  event_mask << 1, 1, 0, 0, 1;
  Mat tail_mask = Mat::Zero(n, nb);
  tail_mask.row(0).setOnes();
  tail_mask.row(1).setOnes();
  tail_mask.row(4).setOnes();
  tail_mask(2, 3) = 1.0;
  tail_mask(3, 3) = 1.0;

  vsi::ad::Tape t1;
  const auto leaves = vsi::make_vsi_leaves(t1, v);
  const auto lv = vsi::vsi_batch_loss(t1, v, leaves, X, enc_in, bins, tail_mask,
                                      event_mask, eps);

  vsi::ad::Tape t2;
  const auto prior_lv = vsi::mlp_leaves(t2, q.prior_net);
  const auto dec_lv = vsi::mlp_leaves(t2, q.decoder_net);
  const auto ln =
      vsi::noq_batch_loss(t2, q, prior_lv, dec_lv, X, bins, tail_mask, event_mask, eps);

  EXPECT_NEAR(t1.value(lv)(0, 0), t2.value(ln)(0, 0), 1e-11);
}

TEST(NoQ, MarginalRowsFiniteAndTrainSmoke) {
  auto params = tiny_noq(2, 4, 2, 41);
  Rng rng(43);
  const Mat X = rng.normal_mat(4, 2);
  Vec t(4);
  t << 1.0, 3.0, 30.0, 30.0;
  IVec d(4);
  d << 1, 0, 0, 1;
  Rng draws(3);
  const Vec ll = vsi::noq_marginal_rows(params, X, t, d, 16, draws);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(std::isfinite(ll(i)));

  const auto ds = testutil::toy_dataset(60, 2, 47);
  const auto parts = vsi::split(ds, {0.7, 0.3, 0.0}, 2);
  TrainConfig cfg;
  cfg.latent_dim = 3;
  cfg.M = 3;
  cfg.max_epochs = 4;
  cfg.patience = 2;
  cfg.batch_size = 20;
  cfg.noq_train_draws = 4;
  const auto r1 = vsi::train_noq(parts[0], parts[1], cfg);
  const auto r2 = vsi::train_noq(parts[0], parts[1], cfg);
  EXPECT_FALSE(r1.log.empty());
  EXPECT_TRUE(r1.params.prior_net.weights[0] == r2.params.prior_net.weights[0]);
  EXPECT_EQ(r1.params.grid.n_bins(), 4);
}

TEST(DirectMlp, WidthMatchingMinimizesGap) {
  // the closed-form count must equal the realized network's count
  for (long target : {500L, 2000L, 16261L}) {
    const int p = 2, nb = 6;
    const int h = vsi::match_direct_width(p, nb, target);
    Rng rng(1);
    const vsi::Mlp net = vsi::make_mlp({p, h, h, h, nb}, rng);
    const long count = net.param_count();
    // no neighboring width does strictly better
    for (int dh : {-2, -1, 1, 2}) {
      if (h + dh < 1) continue;
      Rng r2(1);
      const vsi::Mlp alt = vsi::make_mlp({p, h + dh, h + dh, h + dh, nb}, r2);
      EXPECT_GE(std::abs(alt.param_count() - target), std::abs(count - target))
          << "target " << target << " h " << h << " dh " << dh;
    }
  }
}

TEST(DirectMlp, LossGradientAndDropout) {
  Rng rng(53);
  vsi::DirectMlpParams params;
  params.net = vsi::make_mlp({3, 4, 4, 5}, rng, 0.2);
  params.grid = small_grid(5);
  const int n = 4;
  const Mat X = rng.normal_mat(n, 3);
  std::vector<int> bins = {0, 2, 4, 1};
  Vec event_mask(n);
  event_mask << 1, 0, 1, 0;
  Mat tail_mask = Mat::Zero(n, 5);
  tail_mask.row(0).setOnes();
  tail_mask.row(2).setOnes();
  for (int b = 3; b < 5; ++b) tail_mask(1, b) = 1.0;
  for (int b = 2; b < 5; ++b) tail_mask(3, b) = 1.0;

  // inverted-dropout style masks: zeros and scaled keeps
  std::vector<Mat> masks;
  for (int l = 0; l < 2; ++l) {
    Mat mk = Mat::Constant(n, 4, 1.25);
    mk(0, 1) = 0.0;
    mk(2, 3) = 0.0;
    masks.push_back(mk);
  }

  for (const bool with_dropout : {false, true}) {
    auto refs = vsi::collect_params(params);
    const auto rep = fd_check(refs, [&](vsi::ad::Tape& t) {
      const auto lv = vsi::mlp_leaves(t, params.net);
      FdBuild b;
      b.loss = vsi::direct_batch_loss(t, params, lv, X, bins, tail_mask, event_mask,
                                      with_dropout ? masks : std::vector<Mat>{});
      for (std::size_t l = 0; l < lv.weights.size(); ++l) {
        b.leaves.push_back(lv.weights[l]);
        b.leaves.push_back(lv.biases[l]);
      }
      return b;
    });
    EXPECT_LE(rep.max_err, 1e-4) << "dropout=" << with_dropout << " " << rep.where;
  }
}

TEST(DirectMlp, LoglikMatchesPmfReplicaAndTrainSmoke) {
  Rng rng(59);
  vsi::DirectMlpParams params;
  params.net = vsi::make_mlp({2, 4, 3}, rng, 0.2);
  params.grid = small_grid(3);
  const Mat X = rng.normal_mat(3, 2);
  Vec t(3);
  t << 0.7, 2.0, 40.0;
  IVec d(3);
  d << 1, 0, 0;
  const Vec ll = vsi::direct_loglik_rows(params, X, t, d);
  const Mat lp = vsi::direct_log_pmf_rows(params, X);
  EXPECT_NEAR(ll(0), lp(0, params.grid.bin_index(0.7)), 1e-12);
  const int b1 = params.grid.bin_index(2.0);
  double tail = 0.0;
  for (int b = b1 + 1; b < 3; ++b) tail += std::exp(lp(1, b));
  EXPECT_NEAR(ll(1), std::log(tail), 1e-12);
  // censored past the last edge: survives to the overflow bin, not -inf
  EXPECT_NEAR(ll(2), lp(2, 2), 1e-12);

  const auto ds = testutil::toy_dataset(60, 2, 61);
  const auto parts = vsi::split(ds, {0.7, 0.3, 0.0}, 4);
  TrainConfig cfg;
  cfg.M = 3;
  cfg.max_epochs = 4;
  cfg.patience = 2;
  cfg.batch_size = 20;
  const auto r = vsi::train_direct_mlp(parts[0], parts[1], cfg, 800);
  EXPECT_FALSE(r.log.empty());
  EXPECT_NEAR(static_cast<double>(r.params.net.param_count()), 800.0, 120.0);
  const auto r2 = vsi::train_direct_mlp(parts[0], parts[1], cfg, 800);
  EXPECT_TRUE(r.params.net.weights[0] == r2.params.net.weights[0]);
}

TEST(Aft, LoglikKnownValuesAndCdf) {
  vsi::AftWeibullParams w;
  w.mu = 0.0;
  w.log_sigma = std::log(0.5);  // shape nu = 2
  w.theta = Vec::Zero(1);
  EXPECT_NEAR(w.shape_nu(), 2.0, 1e-15);

  Mat X = Mat::Zero(2, 1);
  Vec t(2);
  t << 2.0, 2.0;
  IVec d(2);
  d << 1, 0;
  const Vec ll = vsi::aft_loglik_rows(w, X, t, d);
  // z = 2 log t; event: log 2 + log t - t^2, censored: -t^2
  EXPECT_NEAR(ll(0), std::log(2.0) + std::log(2.0) - 4.0, 1e-12);
  EXPECT_NEAR(ll(1), -4.0, 1e-12);

  // CDF: 1 - exp(-t^2) for this parameterization
  EXPECT_NEAR(vsi::aft_cdf(w, Vec::Zero(1), 1.5), 1.0 - std::exp(-2.25), 1e-12);
  EXPECT_EQ(vsi::aft_cdf(w, Vec::Zero(1), 0.0), 0.0);
  EXPECT_EQ(vsi::aft_cdf(w, Vec::Zero(1), -1.0), 0.0);

  // discretized pmf sums to one and matches CDF increments
  const auto grid = small_grid(4);
  const Vec pmf = vsi::aft_predict_pmf(w, Vec::Zero(1), grid);
  EXPECT_NEAR(pmf.sum(), 1.0, 1e-12);
  EXPECT_NEAR(pmf(0), vsi::aft_cdf(w, Vec::Zero(1), grid.edges(0)), 1e-12);
}

TEST(Aft, BatchLossGradientMatchesFiniteDifferences) {
  Rng rng(67);
  Mat mu = 0.3 * rng.normal_mat(1, 1);
  Mat log_sigma = 0.3 * rng.normal_mat(1, 1);
  Mat theta = 0.5 * rng.normal_mat(3, 1);
  const int n = 6;
  const Mat X = rng.normal_mat(n, 3);
  Vec logt = rng.normal_mat(n, 1);
  Vec delta(n);
  delta << 1, 0, 1, 1, 0, 1;

  std::vector<vsi::ParamRef> refs = {
      {"mu", &mu}, {"log_sigma", &log_sigma}, {"theta", &theta}};
  const auto rep = fd_check(refs, [&](vsi::ad::Tape& t) {
    const auto lm = t.leaf(mu), ls = t.leaf(log_sigma), lt = t.leaf(theta);
    return FdBuild{vsi::aft_batch_loss(t, lm, ls, lt, X, logt, delta), {lm, ls, lt}};
  });
  EXPECT_LE(rep.max_err, 1e-4) << rep.where;
}

TEST(Aft, ShiftZeroTimes) {
  Vec t(4);
  t << 0.0, 2.0, 0.5, 0.0;
  std::vector<std::string> warnings;
  const Vec s = vsi::shift_zero_times(t, &warnings);
  EXPECT_EQ(s(1), 2.0);
  EXPECT_EQ(s(2), 0.5);
  EXPECT_NEAR(s(0), 0.5e-3, 1e-15);
  EXPECT_NEAR(s(3), 0.5e-3, 1e-15);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Aft, RecoversWeibullShapeAndEffects) {
  // data generated from the model itself: T = exp(mu + theta.x) E^{1/nu}
  const double mu_true = 0.4, nu_true = 2.0;
  Vec theta_true(2);
  theta_true << 0.3, -0.2;
  const int n = 10000;
  Rng rng(71);
  vsi::SurvivalDataset ds;
  ds.X = rng.normal_mat(n, 2);
  ds.time = Vec(n);
  ds.event = IVec(n);
  for (int i = 0; i < n; ++i) {
    const double lam = std::exp(mu_true + theta_true.dot(ds.X.row(i).transpose()));
    const double e = -std::log(1.0 - rng.uniform01());
    const double T = lam * std::pow(e, 1.0 / nu_true);
    const double C = 3.0;  // administrative censoring keeps both strata
    ds.time(i) = std::min(T, C);
    ds.event(i) = T <= C ? 1 : 0;
  }
  const auto idx = vsi::split_indices(n, {0.8, 0.2, 0.0}, 5);
  const auto train = vsi::subset(ds, idx[0]);
  const auto valid = vsi::subset(ds, idx[1]);

  TrainConfig cfg;
  cfg.M = 10;
  cfg.max_epochs = 60;
  cfg.patience = 5;
  const auto fit = vsi::fit_aft_weibull(train, valid, cfg);
  EXPECT_NEAR(fit.model.w.shape_nu(), nu_true, 0.05 * nu_true);
  EXPECT_NEAR(fit.model.w.mu, mu_true, 0.05);
  EXPECT_NEAR(fit.model.w.theta(0), theta_true(0), 0.05);
  EXPECT_NEAR(fit.model.w.theta(1), theta_true(1), 0.05);
  EXPECT_FALSE(fit.log.empty());
  EXPECT_GE(fit.best_epoch, 0);
}
