#pragma once

// Ablations and the classical baseline, sharing the data/grid stack:
//  - VSI-NoQ: prior + decoder only, trained on a Monte-Carlo marginal
//    likelihood with K latent draws per datum;
//  - direct MLP: x -> M+1 logits, censoring-aware cross-entropy, parameter
//    count matched to the full variational model;
//  - AFT-Weibull: log t = mu + theta'x + sigma*eps with Gumbel error,
//    fitted by the same Adam/early-stopping protocol on the exact
//    log-likelihood, predictions discretized onto the grid.

#include "vsi/vsi_model.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace vsi {

//================================= VSI-NoQ =================================

struct NoQParams {
  Mlp prior_net;
  Mlp decoder_net;
  int latent_dim = 32;
  TimeGrid grid;
  CovariateSchema schema;
  NelsonAalenCurve na_curve;  // kept for artifact parity; not used by the loss
  TrainConfig cfg;

  long param_count() const { return prior_net.param_count() + decoder_net.param_count(); }
};

inline std::vector<ParamRef> collect_params(NoQParams& params) {
  std::vector<ParamRef> refs;
  collect_params("prior", params.prior_net, refs);
  collect_params("decoder", params.decoder_net, refs);
  return refs;
}

/**
 * Monte-Carlo marginal log-likelihood rows, log(1/K sum_k p(t|z_k)) with
 * z_k drawn from the prior; events take the pmf at their bin, censored
 * subjects the tail mass. Computed in the log domain throughout; exact
 * zeros cannot occur but the -inf guard flags a degenerate decoder.
 */
inline Vec noq_marginal_rows(const NoQParams& params, const Mat& X, const Vec& times,
                             const IVec& events, int K, Rng& rng) {
  const int n = static_cast<int>(X.rows());
  std::vector<int> bins(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    bins[static_cast<std::size_t>(i)] = params.grid.bin_index(times(i));
  bins = nn::tail_eval_bins(std::move(bins), events, params.grid.overflow_bin());

  const GaussianBatch pz = split_gaussian(mlp_forward(params.prior_net, X));
  Mat per_draw(n, K);
  for (int k = 0; k < K; ++k) {
    const Mat eps = rng.normal_mat(n, params.latent_dim);
    const Mat z = sample_reparam_rows(pz, eps);
    const Mat lp = nn::log_softmax_rows(mlp_forward(params.decoder_net, z));
    const Vec tail = nn::log_tail_rows(lp, bins);
    for (int i = 0; i < n; ++i)
      per_draw(i, k) = events(i) == 1 ? lp(i, bins[static_cast<std::size_t>(i)]) : tail(i);
  }
  Vec out(n);
  for (int i = 0; i < n; ++i) {
    const double v = logsumexp(per_draw.row(i).transpose()) - std::log(static_cast<double>(K));
    out(i) = std::isfinite(v) ? v : std::log(1e-300);  // degenerate-marginal floor
  }
  return out;
}

inline double noq_loss(const NoQParams& params, const Vec& x, double t, int event,
                       int K, Rng& rng) {
  Mat X = x.transpose();
  Vec times(1);
  times << t;
  IVec events(1);
  events << event;
  return -noq_marginal_rows(params, X, times, events, K, rng)(0);
}

/** Tape objective: mean negative marginal log-likelihood with K draws. */
inline ad::Var noq_batch_loss(ad::Tape& t, const NoQParams& params, const MlpVars& prior_lv,
                              const MlpVars& dec_lv, const Mat& Xb,
                              const std::vector<int>& bins, const Mat& tail_mask,
                              const Vec& event_mask, const Mat& eps) {
  const int n = static_cast<int>(Xb.rows());
  const int m = params.latent_dim;
  const int K = static_cast<int>(eps.rows()) / n;

  const ad::Var hp = mlp_forward_tape(t, params.prior_net, prior_lv, t.leaf(Xb));
  const ad::Var mu = t.repeat_rows(t.slice_cols(hp, 0, m), K);
  const ad::Var lv = t.repeat_rows(
      t.clamp(t.slice_cols(hp, m, m), kLogVarLo, kLogVarHi), K);
  const ad::Var z = t.add(mu, t.cmul(t.exp_(t.scale(lv, 0.5)), t.leaf(eps)));
  const ad::Var ls = t.log_softmax_rows(mlp_forward_tape(t, params.decoder_net, dec_lv, z));

  std::vector<int> bins_rep(static_cast<std::size_t>(n) * static_cast<std::size_t>(K));
  Mat tail_rep(n * K, tail_mask.cols());
  Mat ev_rep(n * K, 1), cs_rep(n * K, 1);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) {
      bins_rep[static_cast<std::size_t>(i * K + k)] = bins[static_cast<std::size_t>(i)];
      tail_rep.row(i * K + k) = tail_mask.row(i);
      ev_rep(i * K + k, 0) = event_mask(i);
      cs_rep(i * K + k, 0) = 1.0 - event_mask(i);
    }
  const ad::Var ev = t.gather_cols(ls, std::move(bins_rep));
  const ad::Var cs = t.masked_logsumexp_rows(ls, tail_rep);
  const ad::Var per_draw = t.add(t.cmul(ev, t.leaf(ev_rep)), t.cmul(cs, t.leaf(cs_rep)));
  const ad::Var marg =
      t.add_const(t.group_logsumexp(per_draw, K), -std::log(static_cast<double>(K)));
  return t.scale(t.sum(marg), -1.0 / n);
}

//=============================== direct MLP ================================

struct DirectMlpParams {
  Mlp net;  // x -> M+1 logits
  TimeGrid grid;
  CovariateSchema schema;
  TrainConfig cfg;

  long param_count() const { return net.param_count(); }
};

inline std::vector<ParamRef> collect_params(DirectMlpParams& params) {
  std::vector<ParamRef> refs;
  collect_params("net", params.net, refs);
  return refs;
}

/**
 * Hidden width for the x -> [h, h, h] -> M+1 architecture whose parameter
 * count comes closest to `target_params` (ties prefer the smaller width).
 */
inline int match_direct_width(int p, int n_bins, long target_params) {
  long best_gap = -1;
  int best_h = 8;
  for (int h = 1; h <= 2048; ++h) {
    const long count = static_cast<long>(p + 1) * h + 2L * (h + 1) * h +
                       static_cast<long>(h + 1) * n_bins;
    const long gap = std::abs(count - target_params);
    if (best_gap < 0 || gap < best_gap) {
      best_gap = gap;
      best_h = h;
    }
  }
  return best_h;
}

/** Deterministic log pmf rows (dropout disabled outside training). */
inline Mat direct_log_pmf_rows(const DirectMlpParams& params, const Mat& X) {
  return nn::log_softmax_rows(mlp_forward(params.net, X));
}

inline Vec direct_loglik_rows(const DirectMlpParams& params, const Mat& X, const Vec& times,
                              const IVec& events) {
  const int n = static_cast<int>(X.rows());
  std::vector<int> bins(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    bins[static_cast<std::size_t>(i)] = params.grid.bin_index(times(i));
  bins = nn::tail_eval_bins(std::move(bins), events, params.grid.overflow_bin());
  const Mat lp = direct_log_pmf_rows(params, X);
  const Vec tail = nn::log_tail_rows(lp, bins);
  Vec out(n);
  for (int i = 0; i < n; ++i)
    out(i) = events(i) == 1 ? lp(i, bins[static_cast<std::size_t>(i)]) : tail(i);
  return out;
}

inline double direct_mlp_loss(const DirectMlpParams& params, const Vec& x, double t,
                              int event) {
  Mat X = x.transpose();
  Vec times(1);
  times << t;
  IVec events(1);
  events << event;
  return -direct_loglik_rows(params, X, times, events)(0);
}

/**
 * Tape objective; `dropout_masks`, when nonempty, holds one inverted-dropout
 * mask per hidden layer (entries 0 or 1/(1-rate)).
 */
inline ad::Var direct_batch_loss(ad::Tape& t, const DirectMlpParams& params,
                                 const MlpVars& lv, const Mat& Xb,
                                 const std::vector<int>& bins, const Mat& tail_mask,
                                 const Vec& event_mask,
                                 const std::vector<Mat>& dropout_masks) {
  ad::Var h = t.leaf(Xb);
  const Mlp& net = params.net;
  for (int l = 0; l < net.n_layers(); ++l) {
    h = t.affine(h, lv.weights[static_cast<std::size_t>(l)],
                 lv.biases[static_cast<std::size_t>(l)]);
    if (l + 1 < net.n_layers()) {
      h = t.leaky_relu(h, net.leaky_slope);
      if (!dropout_masks.empty())
        h = t.cmul(h, t.leaf(dropout_masks[static_cast<std::size_t>(l)]));
    }
  }
  const ad::Var ls = t.log_softmax_rows(h);
  const ad::Var ev = t.gather_cols(ls, bins);
  const ad::Var cs = t.masked_logsumexp_rows(ls, tail_mask);
  const Mat ev_col = event_mask;
  const Mat cs_col = Vec::Ones(event_mask.size()) - event_mask;
  const ad::Var ll = t.add(t.cmul(ev, t.leaf(ev_col)), t.cmul(cs, t.leaf(cs_col)));
  return t.scale(t.sum(ll), -1.0 / static_cast<double>(Xb.rows()));
}

//============================== AFT-Weibull ================================

struct AftWeibullParams {
  double mu = 0.0;
  double log_sigma = 0.0;  // sigma > 0 via exp
  Vec theta;

  double sigma() const { return std::exp(log_sigma); }
  double shape_nu() const { return std::exp(-log_sigma); }  // nu = 1/sigma
};

struct AftModel {
  AftWeibullParams w;
  TimeGrid grid;
  CovariateSchema schema;
  TrainConfig cfg;

  long param_count() const { return 2 + static_cast<long>(w.theta.size()); }
};

/** Zero observed times are nudged to min positive time * 1e-3 (log demands t > 0). */
inline Vec shift_zero_times(const Vec& times, std::vector<std::string>* warnings = nullptr) {
  double min_pos = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < times.size(); ++i)
    if (times(i) > 0.0 && times(i) < min_pos) min_pos = times(i);
  Vec out = times;
  long shifted = 0;
  for (Eigen::Index i = 0; i < times.size(); ++i)
    if (out(i) <= 0.0) {
      if (!std::isfinite(min_pos)) throw data_error("all observed times are zero");
      out(i) = min_pos * 1e-3;
      ++shifted;
    }
  if (shifted > 0 && warnings)
    warnings->push_back(std::to_string(shifted) + " zero time(s) shifted to " +
                        std::to_string(min_pos * 1e-3));
  return out;
}

/**
 * Exact per-row log-likelihood,
 *   z = (log t - mu - theta'x)/sigma,
 *   ll = delta * (log nu - log t + z) - exp(z).
 */
inline Vec aft_loglik_rows(const AftWeibullParams& w, const Mat& X, const Vec& times,
                           const IVec& events) {
  const Vec ts = shift_zero_times(times);
  const Vec logt = ts.array().log();
  const Vec z = (logt.array() - w.mu - (X * w.theta).array()) / w.sigma();
  Vec out(times.size());
  for (Eigen::Index i = 0; i < times.size(); ++i) {
    out(i) = -std::exp(z(i));
    if (events(i) == 1) out(i) += -w.log_sigma - logt(i) + z(i);
  }
  return out;
}

/** Weibull conditional CDF at time t given transformed covariates. */
inline double aft_cdf(const AftWeibullParams& w, const Vec& x, double t) {
  if (t <= 0.0) return 0.0;
  const double z = (std::log(t) - w.mu - w.theta.dot(x)) / w.sigma();
  return 1.0 - std::exp(-std::exp(std::min(z, 500.0)));
}

/** Grid-discretized pmf: CDF increments across edges, overflow = tail mass. */
inline Vec aft_predict_pmf(const AftWeibullParams& w, const Vec& x, const TimeGrid& grid) {
  Vec pmf(grid.n_bins());
  double prev = 0.0;
  for (int b = 0; b < grid.n_edges(); ++b) {
    const double F = aft_cdf(w, x, grid.edges(b));
    pmf(b) = F - prev;
    prev = F;
  }
  pmf(grid.overflow_bin()) = 1.0 - prev;
  return pmf;
}

/** Discretized log-likelihood rows (same bins and tail rule as the other models). */
inline Vec aft_discrete_loglik_rows(const AftModel& model, const Mat& X, const Vec& times,
                                    const IVec& events) {
  const int n = static_cast<int>(X.rows());
  Vec out(n);
  for (int i = 0; i < n; ++i) {
    const Vec pmf = aft_predict_pmf(model.w, X.row(i).transpose(), model.grid);
    const int b = model.grid.bin_index(times(i));
    double v;
    if (events(i) == 1) {
      v = pmf(b);
    } else {
      const int from = std::min(b + 1, model.grid.overflow_bin());
      v = 0.0;
      for (int b2 = from; b2 < model.grid.n_bins(); ++b2) v += pmf(b2);
    }
    out(i) = std::log(std::max(v, 1e-300));
  }
  return out;
}

/** Tape objective on (mu, log_sigma, theta); z is clamped at |500| as an overflow guard. */
inline ad::Var aft_batch_loss(ad::Tape& t, ad::Var mu, ad::Var log_sigma, ad::Var theta,
                              const Mat& Xb, const Vec& logt, const Vec& delta) {
  const Mat logt_col = logt;
  const Mat delta_col = delta;
  const ad::Var xtheta = t.matmul(t.leaf(Xb), theta);                  // n x 1
  const ad::Var pre = t.sub(t.leaf(logt_col), t.add_rowvec(xtheta, mu));
  const ad::Var inv_sigma = t.exp_(t.scale(log_sigma, -1.0));          // 1 x 1
  const ad::Var z = t.clamp(t.mul_rowvec(pre, inv_sigma), -500.0, 500.0);
  // delta * (-log_sigma - log t + z) - exp(z)
  const ad::Var term = t.add_rowvec(t.sub(z, t.leaf(logt_col)), t.scale(log_sigma, -1.0));
  const ad::Var ll = t.sub(t.cmul(term, t.leaf(delta_col)), t.exp_(z));
  return t.scale(t.sum(ll), -1.0 / static_cast<double>(Xb.rows()));
}

struct AftTrainResult {
  AftModel model;
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

/**
 * Gradient ascent on the exact log-likelihood with the shared protocol:
 * Adam, minibatches, early stopping on validation mean log-likelihood.
 * The grid is fitted here so the model can emit discretized predictions.
 */
inline AftTrainResult fit_aft_weibull(const SurvivalDataset& train,
                                      const SurvivalDataset& valid,
                                      const TrainConfig& cfg) {
  cfg.validate();
  std::vector<double> event_times;
  for (int i = 0; i < train.n(); ++i)
    if (train.event(i) == 1) event_times.push_back(train.time(i));

  AftTrainResult result;
  AftModel& model = result.model;
  model.grid = build_grid(event_times, cfg.M);
  model.schema = train.schema;
  model.cfg = cfg;

  const int n = train.n();
  const int p = train.p();
  const Vec train_t = shift_zero_times(train.time);
  const Vec logt_all = train_t.array().log();
  model.w.mu = logt_all.mean();
  model.w.log_sigma = 0.0;
  model.w.theta = Vec::Zero(p);

  Mat mu_m(1, 1), ls_m(1, 1);
  mu_m(0, 0) = model.w.mu;
  ls_m(0, 0) = model.w.log_sigma;
  Mat theta_m = model.w.theta;
  std::vector<ParamRef> refs = {{"mu", &mu_m}, {"log_sigma", &ls_m}, {"theta", &theta_m}};
  Adam adam(refs, AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  EarlyStopper stopper{cfg.patience};
  std::vector<Mat> best = {mu_m, ls_m, theta_m};

  Rng root(cfg.seed);
  ad::Tape tape;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = root.derive("shuffle", static_cast<std::uint64_t>(epoch));
    const std::vector<int> perm = shuffle_rng.permutation(n);
    double obj_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      Mat Xb(count, p);
      Vec lt(count), dl(count);
      for (int i = 0; i < count; ++i) {
        const int r = perm[static_cast<std::size_t>(start + i)];
        Xb.row(i) = train.X.row(r);
        lt(i) = logt_all(r);
        dl(i) = train.event(r) == 1 ? 1.0 : 0.0;
      }
      tape.clear();
      const ad::Var mu = tape.leaf(mu_m);
      const ad::Var ls = tape.leaf(ls_m);
      const ad::Var th = tape.leaf(theta_m);
      const ad::Var loss = aft_batch_loss(tape, mu, ls, th, Xb, lt, dl);
      const double loss_val = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_val))
        throw numeric_error("fit_aft_weibull: non-finite loss at epoch " +
                            std::to_string(epoch));
      tape.backward(loss);
      adam.step({tape.grad(mu), tape.grad(ls), tape.grad(th)});
      obj_sum += loss_val * count;
    }

    AftWeibullParams cur{mu_m(0, 0), ls_m(0, 0), theta_m};
    const double valid_ll = aft_loglik_rows(cur, valid.X, valid.time, valid.event).mean();
    result.log.push_back({epoch, obj_sum / n, valid_ll});
    if (stopper.observe(valid_ll, epoch)) best = {mu_m, ls_m, theta_m};
    if (stopper.should_stop()) break;
  }

  model.w.mu = best[0](0, 0);
  model.w.log_sigma = best[1](0, 0);
  model.w.theta = best[2];
  result.best_epoch = stopper.best_epoch;
  return result;
}

//====================== shared training loop (NoQ, MLP) ====================

struct NoQTrainResult {
  NoQParams params;
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

inline NoQTrainResult train_noq(const SurvivalDataset& train, const SurvivalDataset& valid,
                                const TrainConfig& cfg) {
  cfg.validate();
  std::vector<double> event_times;
  for (int i = 0; i < train.n(); ++i)
    if (train.event(i) == 1) event_times.push_back(train.time(i));

  NoQTrainResult result;
  NoQParams& params = result.params;
  params.latent_dim = cfg.latent_dim;
  params.cfg = cfg;
  params.grid = build_grid(event_times, cfg.M);
  params.schema = train.schema;

  Rng root(cfg.seed);
  Rng r_prior = root.derive("init.prior");
  Rng r_dec = root.derive("init.decoder");
  params.prior_net = make_mlp({train.p(), 32, 32, 2 * cfg.latent_dim}, r_prior, cfg.leaky_slope);
  params.decoder_net =
      make_mlp({cfg.latent_dim, 32, 32, 32, params.grid.n_bins()}, r_dec, cfg.leaky_slope);
  params.na_curve = nelson_aalen(train, params.grid);

  // Bins and masks mirror the variational model's encoding of the same grid.
  const int n = train.n();
  const int nb = params.grid.n_bins();
  std::vector<int> bins(static_cast<std::size_t>(n));
  Mat tail_mask = Mat::Zero(n, nb);
  Vec event_mask(n);
  for (int i = 0; i < n; ++i) {
    const int b = params.grid.bin_index(train.time(i));
    bins[static_cast<std::size_t>(i)] = b;
    event_mask(i) = train.event(i) == 1 ? 1.0 : 0.0;
    if (train.event(i) == 1)
      tail_mask.row(i).setOnes();
    else if (b >= params.grid.overflow_bin())
      tail_mask(i, params.grid.overflow_bin()) = 1.0;
    else
      for (int b2 = b + 1; b2 < nb; ++b2) tail_mask(i, b2) = 1.0;
  }

  auto refs = collect_params(params);
  Adam adam(refs, AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  EarlyStopper stopper{cfg.patience};
  std::vector<Mat> best;
  auto snapshot = [&]() {
    best.clear();
    for (const auto& r : refs) best.push_back(*r.mat);
  };
  snapshot();

  const int K = cfg.noq_train_draws;
  ad::Tape tape;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = root.derive("shuffle", static_cast<std::uint64_t>(epoch));
    Rng eps_rng = root.derive("eps", static_cast<std::uint64_t>(epoch));
    const std::vector<int> perm = shuffle_rng.permutation(n);
    double obj_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      const Mat Xb = detail::gather_mat(train.X, perm, start, count);
      const Mat tails = detail::gather_mat(tail_mask, perm, start, count);
      const Vec ev = detail::gather_vec(event_mask, perm, start, count);
      std::vector<int> bb(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i)
        bb[static_cast<std::size_t>(i)] =
            bins[static_cast<std::size_t>(perm[static_cast<std::size_t>(start + i)])];
      const Mat eps = eps_rng.normal_mat(static_cast<Eigen::Index>(count) * K, cfg.latent_dim);

      tape.clear();
      const MlpVars prior_lv = mlp_leaves(tape, params.prior_net);
      const MlpVars dec_lv = mlp_leaves(tape, params.decoder_net);
      const ad::Var loss =
          noq_batch_loss(tape, params, prior_lv, dec_lv, Xb, bb, tails, ev, eps);
      const double loss_val = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_val))
        throw numeric_error("train_noq: non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(loss);
      std::vector<Mat> grads;
      for (std::size_t l = 0; l < prior_lv.weights.size(); ++l) {
        grads.push_back(tape.grad(prior_lv.weights[l]));
        grads.push_back(tape.grad(prior_lv.biases[l]));
      }
      for (std::size_t l = 0; l < dec_lv.weights.size(); ++l) {
        grads.push_back(tape.grad(dec_lv.weights[l]));
        grads.push_back(tape.grad(dec_lv.biases[l]));
      }
      adam.step(grads);
      obj_sum += loss_val * count;
    }

    Rng valid_rng = root.derive("valid");
    const double valid_ll =
        noq_marginal_rows(params, valid.X, valid.time, valid.event, K, valid_rng).mean();
    result.log.push_back({epoch, obj_sum / n, valid_ll});
    if (stopper.observe(valid_ll, epoch)) snapshot();
    if (stopper.should_stop()) break;
  }
  for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].mat = best[i];
  result.best_epoch = stopper.best_epoch;
  return result;
}

struct DirectTrainResult {
  DirectMlpParams params;
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

inline DirectTrainResult train_direct_mlp(const SurvivalDataset& train,
                                          const SurvivalDataset& valid,
                                          const TrainConfig& cfg, long match_params = 0) {
  cfg.validate();
  std::vector<double> event_times;
  for (int i = 0; i < train.n(); ++i)
    if (train.event(i) == 1) event_times.push_back(train.time(i));

  DirectTrainResult result;
  DirectMlpParams& params = result.params;
  params.cfg = cfg;
  params.grid = build_grid(event_times, cfg.M);
  params.schema = train.schema;

  Rng root(cfg.seed);
  Rng r_net = root.derive("init.net");
  const int nb = params.grid.n_bins();
  const int h = match_params > 0 ? match_direct_width(train.p(), nb, match_params) : 32;
  params.net = make_mlp({train.p(), h, h, h, nb}, r_net, cfg.leaky_slope);

  const int n = train.n();
  std::vector<int> bins(static_cast<std::size_t>(n));
  Mat tail_mask = Mat::Zero(n, nb);
  Vec event_mask(n);
  for (int i = 0; i < n; ++i) {
    const int b = params.grid.bin_index(train.time(i));
    bins[static_cast<std::size_t>(i)] = b;
    event_mask(i) = train.event(i) == 1 ? 1.0 : 0.0;
    if (train.event(i) == 1)
      tail_mask.row(i).setOnes();
    else if (b >= params.grid.overflow_bin())
      tail_mask(i, params.grid.overflow_bin()) = 1.0;
    else
      for (int b2 = b + 1; b2 < nb; ++b2) tail_mask(i, b2) = 1.0;
  }

  auto refs = collect_params(params);
  Adam adam(refs, AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  EarlyStopper stopper{cfg.patience};
  std::vector<Mat> best;
  auto snapshot = [&]() {
    best.clear();
    for (const auto& r : refs) best.push_back(*r.mat);
  };
  snapshot();

  ad::Tape tape;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = root.derive("shuffle", static_cast<std::uint64_t>(epoch));
    Rng drop_rng = root.derive("dropout", static_cast<std::uint64_t>(epoch));
    const std::vector<int> perm = shuffle_rng.permutation(n);
    double obj_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      const Mat Xb = detail::gather_mat(train.X, perm, start, count);
      const Mat tails = detail::gather_mat(tail_mask, perm, start, count);
      const Vec ev = detail::gather_vec(event_mask, perm, start, count);
      std::vector<int> bb(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i)
        bb[static_cast<std::size_t>(i)] =
            bins[static_cast<std::size_t>(perm[static_cast<std::size_t>(start + i)])];

      std::vector<Mat> masks;
      if (cfg.mlp_dropout > 0.0) {
        const double keep = 1.0 - cfg.mlp_dropout;
        for (int l = 0; l + 1 < params.net.n_layers(); ++l) {
          Mat mk(count, params.net.widths[static_cast<std::size_t>(l + 1)]);
          for (Eigen::Index a = 0; a < mk.rows(); ++a)
            for (Eigen::Index b2 = 0; b2 < mk.cols(); ++b2)
              mk(a, b2) = drop_rng.uniform01() < keep ? 1.0 / keep : 0.0;
          masks.push_back(std::move(mk));
        }
      }

      tape.clear();
      const MlpVars lv = mlp_leaves(tape, params.net);
      const ad::Var loss = direct_batch_loss(tape, params, lv, Xb, bb, tails, ev, masks);
      const double loss_val = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_val))
        throw numeric_error("train_direct_mlp: non-finite loss at epoch " +
                            std::to_string(epoch));
      tape.backward(loss);
      std::vector<Mat> grads;
      for (std::size_t l = 0; l < lv.weights.size(); ++l) {
        grads.push_back(tape.grad(lv.weights[l]));
        grads.push_back(tape.grad(lv.biases[l]));
      }
      adam.step(grads);
      obj_sum += loss_val * count;
    }

    const double valid_ll =
        direct_loglik_rows(params, valid.X, valid.time, valid.event).mean();
    result.log.push_back({epoch, obj_sum / n, valid_ll});
    if (stopper.observe(valid_ll, epoch)) snapshot();
    if (stopper.should_stop()) break;
  }
  for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].mat = best[i];
  result.best_epoch = stopper.best_epoch;
  return result;
}

}  // namespace vsi
