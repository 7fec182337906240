#pragma once

// The variational survival model: a covariate-conditioned diagonal-Gaussian
// prior p(z|x), an observation-conditioned encoder q(z|x,t), and a softmax
// decoder over the M+1 time bins. Events contribute
//     ELBO(t|x)   = E_q[log p(bin(t)|z)] - KL(q || p)
// and censored subjects the tail-mass analogue
//     ELBO_c(t|x) = E_q[log sum_{b > bin(t)} p(b|z)] - KL(q || p),
// with the encoder conditioned on the one-hot or Nelson-Aalen-softened
// target. Training maximizes the mean ELBO with Adam and early stopping on
// validation ELBO, restoring the best epoch.

#include "vsi/adam.hpp"
#include "vsi/autodiff.hpp"
#include "vsi/common.hpp"
#include "vsi/mlp.hpp"
#include "vsi/survival_data.hpp"
#include "vsi/time_grid.hpp"

#include <string>
#include <vector>

namespace vsi {

//============================ diagonal Gaussians ===========================

inline constexpr double kLogVarLo = -10.0;
inline constexpr double kLogVarHi = 10.0;
inline constexpr double kLog2Pi = 1.8378770664093454836;

struct GaussianDiag {
  Vec mean;
  Vec log_var;
};

/** Row-parallel batch of diagonal Gaussians. */
struct GaussianBatch {
  Mat mean;
  Mat log_var;
  Eigen::Index rows() const { return mean.rows(); }
  Eigen::Index dim() const { return mean.cols(); }

  GaussianDiag row(Eigen::Index i) const {
    return {mean.row(i).transpose(), log_var.row(i).transpose()};
  }
};

/** Splits a network head (n x 2m) into means and clamped log-variances. */
inline GaussianBatch split_gaussian(const Mat& head) {
  const Eigen::Index m = head.cols() / 2;
  GaussianBatch g;
  g.mean = head.leftCols(m);
  g.log_var = head.rightCols(m).array().max(kLogVarLo).min(kLogVarHi);
  return g;
}

/**
 * Closed-form KL between diagonal Gaussians,
 *   KL(q||p) = 1/2 sum_j [ e^{lq-lp} + (mu_p-mu_q)^2 e^{-lp} - 1 + lp - lq ].
 */
inline double kl_diag_gaussian(const GaussianDiag& q, const GaussianDiag& p) {
  if (q.mean.size() != p.mean.size()) throw numeric_error("kl: dimension mismatch");
  const auto lq = q.log_var.array(), lp = p.log_var.array();
  const auto dmu = (p.mean - q.mean).array();
  return 0.5 * ((lq - lp).exp() + dmu.square() * (-lp).exp() - 1.0 + lp - lq).sum();
}

inline Vec kl_rows(const GaussianBatch& q, const GaussianBatch& p) {
  const auto lq = q.log_var.array(), lp = p.log_var.array();
  const auto dmu = (p.mean - q.mean).array();
  return 0.5 * ((lq - lp).exp() + dmu.square() * (-lp).exp() - 1.0 + lp - lq)
                   .rowwise()
                   .sum();
}

/** log N(z; mu, diag(exp(log_var))) for each row. */
inline Vec gauss_log_density_rows(const Mat& z, const GaussianBatch& g) {
  const auto lv = g.log_var.array();
  const auto d = (z - g.mean).array();
  return -0.5 * (lv + d.square() * (-lv).exp() + kLog2Pi).rowwise().sum();
}

inline double gauss_log_density(const Vec& z, const GaussianDiag& g) {
  const auto lv = g.log_var.array();
  const auto d = (z - g.mean).array();
  return -0.5 * (lv + d.square() * (-lv).exp() + kLog2Pi).sum();
}

/** Reparameterized draw z = mean + exp(log_var/2) .* eps. */
inline Vec sample_reparam(const GaussianDiag& g, Rng& rng) {
  Vec z(g.mean.size());
  for (Eigen::Index j = 0; j < z.size(); ++j)
    z(j) = g.mean(j) + std::exp(0.5 * g.log_var(j)) * rng.normal();
  return z;
}

inline Mat sample_reparam_rows(const GaussianBatch& g, const Mat& eps) {
  return g.mean.array() + (0.5 * g.log_var).array().exp() * eps.array();
}

//========================== plain softmax helpers ==========================

namespace nn {

inline Mat log_softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

/** Per-row log tail mass log sum_{b > bins[i]} exp(log_pmf(i, b)). */
inline Vec log_tail_rows(const Mat& log_pmf, const std::vector<int>& bins) {
  Vec out(log_pmf.rows());
  for (Eigen::Index i = 0; i < log_pmf.rows(); ++i) {
    const int k = bins[static_cast<std::size_t>(i)];
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index b = k + 1; b < log_pmf.cols(); ++b) m = std::max(m, log_pmf(i, b));
    if (!std::isfinite(m)) {
      out(i) = -std::numeric_limits<double>::infinity();
      continue;
    }
    double s = 0.0;
    for (Eigen::Index b = k + 1; b < log_pmf.cols(); ++b) s += std::exp(log_pmf(i, b) - m);
    out(i) = m + std::log(s);
  }
  return out;
}

/**
 * Bin indices adjusted for tail evaluation. A censored time in the overflow
 * bin has nothing strictly later, so its tail collapses to the overflow bin
 * itself; the mass not yet ruled out. Event rows are unchanged, so the result
 * can also be used for their pmf lookups.
 */
inline std::vector<int> tail_eval_bins(std::vector<int> bins, const IVec& events,
                                       int overflow_bin) {
  for (std::size_t i = 0; i < bins.size(); ++i)
    if (events(static_cast<int>(i)) == 0 && bins[i] >= overflow_bin)
      bins[i] = overflow_bin - 1;
  return bins;
}

}  // namespace nn

//=============================== model types ===============================

struct TrainConfig {
  double learning_rate = 5e-4;
  int batch_size = 100;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 1;
  int latent_dim = 32;
  int M = 50;                      // requested bin count; grids may dedup below it
  int mc_samples_train = 1;        // reparameterized draws per datum per step
  double leaky_slope = 0.2;
  bool encoder_raw_t_delta = false;  // alternative encoder input (x, t, delta)
  int noq_train_draws = 10;          // latent draws per datum for the marginal loss
  double mlp_dropout = 0.0;          // direct baseline only; 0 disables

  void validate() const {
    if (learning_rate <= 0 || batch_size <= 0 || max_epochs <= 0 || patience < 0 ||
        latent_dim <= 0 || M < 2 || mc_samples_train <= 0 || noq_train_draws <= 0 ||
        mlp_dropout < 0 || mlp_dropout >= 1)
      throw config_error("invalid training configuration");
  }
};

struct VsiParams {
  Mlp prior_net;    // x -> (mean, log_var), hidden [32, 32]
  Mlp encoder_net;  // (x || target) -> (mean, log_var), hidden [32, 32]
  Mlp decoder_net;  // z -> M+1 logits, hidden [32, 32, 32]
  int latent_dim = 32;
  TimeGrid grid;
  CovariateSchema schema;
  NelsonAalenCurve na_curve;
  TrainConfig cfg;

  long param_count() const {
    return prior_net.param_count() + encoder_net.param_count() + decoder_net.param_count();
  }
};

inline VsiParams init_vsi(int p, int n_bins, const TrainConfig& cfg, Rng& rng) {
  VsiParams params;
  params.latent_dim = cfg.latent_dim;
  params.cfg = cfg;
  const int m = cfg.latent_dim;
  const int enc_in = cfg.encoder_raw_t_delta ? p + 2 : p + n_bins;
  Rng r_prior = rng.derive("init.prior");
  Rng r_enc = rng.derive("init.encoder");
  Rng r_dec = rng.derive("init.decoder");
  params.prior_net = make_mlp({p, 32, 32, 2 * m}, r_prior, cfg.leaky_slope);
  params.encoder_net = make_mlp({enc_in, 32, 32, 2 * m}, r_enc, cfg.leaky_slope);
  params.decoder_net = make_mlp({m, 32, 32, 32, n_bins}, r_dec, cfg.leaky_slope);
  return params;
}

//============================ network application ==========================

inline GaussianBatch prior(const VsiParams& params, const Mat& X) {
  return split_gaussian(mlp_forward(params.prior_net, X));
}

inline GaussianDiag prior(const VsiParams& params, const Vec& x) {
  return prior(params, Mat(x.transpose())).row(0);
}

/**
 * Encoder input rows: covariates concatenated with the M+1 target weights
 * (or with raw (t, delta) under the alternative input scheme).
 */
inline Mat encoder_input(const VsiParams& params, const Mat& X, const Vec& times,
                         const IVec& events) {
  if (params.cfg.encoder_raw_t_delta) {
    Mat in(X.rows(), X.cols() + 2);
    in << X, times, events.cast<double>();
    return in;
  }
  Mat in(X.rows(), X.cols() + params.grid.n_bins());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const TargetEncoding enc =
        events(i) == 1 ? encode_event(times(i), params.grid)
                       : encode_censored(times(i), params.grid, params.na_curve);
    in.row(i) << X.row(i), enc.weights.transpose();
  }
  return in;
}

inline GaussianBatch encoder(const VsiParams& params, const Mat& enc_in) {
  return split_gaussian(mlp_forward(params.encoder_net, enc_in));
}

inline GaussianDiag encoder(const VsiParams& params, const Vec& x,
                            const TargetEncoding& target) {
  Mat in(1, x.size() + target.weights.size());
  in << x.transpose(), target.weights.transpose();
  return encoder(params, in).row(0);
}

inline Vec decoder_pmf(const VsiParams& params, const Vec& z) {
  const Mat logits = mlp_forward(params.decoder_net, Mat(z.transpose()));
  return nn::log_softmax_rows(logits).array().exp().row(0).transpose();
}

inline Mat decoder_log_pmf_rows(const VsiParams& params, const Mat& Z) {
  return nn::log_softmax_rows(mlp_forward(params.decoder_net, Z));
}

//=============================== plain ELBO ================================

/**
 * Per-subject ELBO with `draws` reparameterized samples; events use the
 * log-pmf at their bin, censored subjects the log tail mass past theirs.
 * The KL term is closed form. Optionally reports the Monte-Carlo standard
 * error of the reconstruction average.
 */
inline Vec elbo_rows(const VsiParams& params, const Mat& X, const Vec& times,
                     const IVec& events, int draws, Rng& rng, Vec* mc_se = nullptr) {
  const int n = static_cast<int>(X.rows());
  std::vector<int> bins(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    bins[static_cast<std::size_t>(i)] = params.grid.bin_index(times(i));
  bins = nn::tail_eval_bins(std::move(bins), events, params.grid.overflow_bin());

  const Mat enc_in = encoder_input(params, X, times, events);
  const GaussianBatch q = encoder(params, enc_in);
  const GaussianBatch pz = prior(params, X);
  const Vec kl = kl_rows(q, pz);

  Mat recon_draws(n, draws);
  for (int s = 0; s < draws; ++s) {
    const Mat eps = rng.normal_mat(n, params.latent_dim);
    const Mat z = sample_reparam_rows(q, eps);
    const Mat lp = decoder_log_pmf_rows(params, z);
    const Vec tail = nn::log_tail_rows(lp, bins);
    for (int i = 0; i < n; ++i)
      recon_draws(i, s) =
          events(i) == 1 ? lp(i, bins[static_cast<std::size_t>(i)]) : tail(i);
  }
  const Vec recon = recon_draws.rowwise().mean();
  if (mc_se) {
    mc_se->resize(n);
    for (int i = 0; i < n; ++i) {
      if (draws < 2) {
        (*mc_se)(i) = 0.0;
        continue;
      }
      const double mu = recon(i);
      double ss = 0.0;
      for (int s = 0; s < draws; ++s)
        ss += (recon_draws(i, s) - mu) * (recon_draws(i, s) - mu);
      (*mc_se)(i) = std::sqrt(ss / (draws - 1) / draws);
    }
  }
  return recon - kl;
}

inline double elbo_event(const VsiParams& params, const Vec& x, double t, int draws,
                         Rng& rng) {
  Mat X = x.transpose();
  Vec times(1);
  times << t;
  IVec events(1);
  events << 1;
  return elbo_rows(params, X, times, events, draws, rng)(0);
}

inline double elbo_censored(const VsiParams& params, const Vec& x, double t, int draws,
                            Rng& rng) {
  Mat X = x.transpose();
  Vec times(1);
  times << t;
  IVec events(1);
  events << 0;
  return elbo_rows(params, X, times, events, draws, rng)(0);
}

//============================ tape graph builder ===========================

struct VsiLeaves {
  MlpVars prior, encoder, decoder;
  std::vector<ad::Var> ordered;  // aligned with collect_params(VsiParams) order
};

inline std::vector<ParamRef> collect_params(VsiParams& params) {
  std::vector<ParamRef> refs;
  collect_params("prior", params.prior_net, refs);
  collect_params("encoder", params.encoder_net, refs);
  collect_params("decoder", params.decoder_net, refs);
  return refs;
}

inline VsiLeaves make_vsi_leaves(ad::Tape& tape, const VsiParams& params) {
  VsiLeaves lv;
  lv.prior = mlp_leaves(tape, params.prior_net);
  lv.encoder = mlp_leaves(tape, params.encoder_net);
  lv.decoder = mlp_leaves(tape, params.decoder_net);
  for (const auto* net : {&lv.prior, &lv.encoder, &lv.decoder})
    for (std::size_t l = 0; l < net->weights.size(); ++l) {
      lv.ordered.push_back(net->weights[l]);
      lv.ordered.push_back(net->biases[l]);
    }
  return lv;
}

/** KL rows on the tape, mirroring kl_rows(). */
inline ad::Var kl_rows_tape(ad::Tape& t, ad::Var mu_q, ad::Var lv_q, ad::Var mu_p,
                            ad::Var lv_p) {
  const ad::Var d = t.sub(lv_q, lv_p);
  const ad::Var term1 = t.exp_(d);
  const ad::Var term2 = t.cmul(t.square(t.sub(mu_p, mu_q)), t.exp_(t.scale(lv_p, -1.0)));
  const ad::Var inner = t.sub(t.add_const(t.add(term1, term2), -1.0), d);
  return t.scale(t.rowwise_sum(inner), 0.5);
}

/**
 * Minibatch objective: mean negative ELBO. `targets` holds the encoder's
 * M+1 target block per row; `tail_mask(i, b) = 1` iff b > bin(t_i); `eps`
 * stacks mc_samples_train draws of batch-shaped noise vertically.
 */
inline ad::Var vsi_batch_loss(ad::Tape& t, const VsiParams& params, const VsiLeaves& lv,
                              const Mat& Xb, const Mat& enc_in,
                              const std::vector<int>& bins, const Mat& tail_mask,
                              const Vec& event_mask, const Mat& eps) {
  const int n = static_cast<int>(Xb.rows());
  const int m = params.latent_dim;
  const int S = static_cast<int>(eps.rows()) / n;

  const ad::Var hq = mlp_forward_tape(t, params.encoder_net, lv.encoder, t.leaf(enc_in));
  const ad::Var mu_q = t.slice_cols(hq, 0, m);
  const ad::Var lv_q = t.clamp(t.slice_cols(hq, m, m), kLogVarLo, kLogVarHi);

  const ad::Var hp = mlp_forward_tape(t, params.prior_net, lv.prior, t.leaf(Xb));
  const ad::Var mu_p = t.slice_cols(hp, 0, m);
  const ad::Var lv_p = t.clamp(t.slice_cols(hp, m, m), kLogVarLo, kLogVarHi);

  const ad::Var kl = kl_rows_tape(t, mu_q, lv_q, mu_p, lv_p);
  const ad::Var sd_q = t.exp_(t.scale(lv_q, 0.5));

  const Mat ev_col = event_mask;
  const Mat cs_col = Vec::Ones(n) - event_mask;
  ad::Var recon_sum = -1;
  for (int s = 0; s < S; ++s) {
    const ad::Var z =
        t.add(mu_q, t.cmul(sd_q, t.leaf(eps.middleRows(s * n, n))));
    const ad::Var ls =
        t.log_softmax_rows(mlp_forward_tape(t, params.decoder_net, lv.decoder, z));
    const ad::Var ev_recon = t.gather_cols(ls, bins);
    const ad::Var cs_recon = t.masked_logsumexp_rows(ls, tail_mask);
    const ad::Var recon =
        t.add(t.cmul(ev_recon, t.leaf(ev_col)), t.cmul(cs_recon, t.leaf(cs_col)));
    recon_sum = (s == 0) ? recon : t.add(recon_sum, recon);
  }
  const ad::Var recon_mean = (S == 1) ? recon_sum : t.scale(recon_sum, 1.0 / S);
  const ad::Var elbo = t.sub(recon_mean, kl);
  return t.scale(t.sum(elbo), -1.0 / n);
}

//=============================== training ==================================

struct EpochLog {
  int epoch = 0;
  double train_objective = 0.0;  // mean minibatch negative ELBO
  double valid_metric = 0.0;     // mean validation ELBO (higher is better)
};

struct EarlyStopper {
  int patience;
  double best = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int since = 0;

  // Returns true when `metric` improves on the best seen so far.
  bool observe(double metric, int epoch) {
    if (metric > best) {
      best = metric;
      best_epoch = epoch;
      since = 0;
      return true;
    }
    ++since;
    return false;
  }
  bool should_stop() const { return since > patience; }
};

struct VsiTrainResult {
  VsiParams params;
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

namespace detail {

// Precomputed per-row training tensors for one dataset.
struct EncodedSet {
  Mat enc_in;
  std::vector<int> bins;
  Mat tail_mask;
  Vec event_mask;
};

inline EncodedSet encode_set(const VsiParams& params, const SurvivalDataset& ds) {
  EncodedSet e;
  const int n = ds.n();
  const int nb = params.grid.n_bins();
  e.enc_in = encoder_input(params, ds.X, ds.time, ds.event);
  e.bins.resize(static_cast<std::size_t>(n));
  e.tail_mask = Mat::Zero(n, nb);
  e.event_mask = Vec(n);
  for (int i = 0; i < n; ++i) {
    const int b = params.grid.bin_index(ds.time(i));
    e.bins[static_cast<std::size_t>(i)] = b;
    e.event_mask(i) = ds.event(i) == 1 ? 1.0 : 0.0;
    if (ds.event(i) == 1) {
      e.tail_mask.row(i).setOnes();  // unused for event rows; keeps masks nonempty
    } else if (b >= params.grid.overflow_bin()) {
      e.tail_mask(i, params.grid.overflow_bin()) = 1.0;  // tail collapses to overflow
    } else {
      for (int b2 = b + 1; b2 < nb; ++b2) e.tail_mask(i, b2) = 1.0;
    }
  }
  return e;
}

inline Mat gather_mat(const Mat& src, const std::vector<int>& perm, int begin, int count) {
  Mat out(count, src.cols());
  for (int i = 0; i < count; ++i) out.row(i) = src.row(perm[static_cast<std::size_t>(begin + i)]);
  return out;
}

inline Vec gather_vec(const Vec& src, const std::vector<int>& perm, int begin, int count) {
  Vec out(count);
  for (int i = 0; i < count; ++i) out(i) = src(perm[static_cast<std::size_t>(begin + i)]);
  return out;
}

}  // namespace detail

/**
 * Full training run. The grid and Nelson-Aalen curve are fitted on the
 * training split; early stopping watches mean validation ELBO and the
 * returned parameters are the best-epoch snapshot.
 */
inline VsiTrainResult train_vsi(const SurvivalDataset& train, const SurvivalDataset& valid,
                                const TrainConfig& cfg) {
  cfg.validate();
  std::vector<double> event_times;
  for (int i = 0; i < train.n(); ++i)
    if (train.event(i) == 1) event_times.push_back(train.time(i));
  TimeGrid grid = build_grid(event_times, cfg.M);

  Rng root(cfg.seed);
  VsiParams params = init_vsi(train.p(), grid.n_bins(), cfg, root);
  params.grid = std::move(grid);
  params.schema = train.schema;
  params.na_curve = nelson_aalen(train, params.grid);

  const detail::EncodedSet enc_train = detail::encode_set(params, train);
  const int n = train.n();
  const int m = cfg.latent_dim;

  Adam adam(collect_params(params), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  EarlyStopper stopper{cfg.patience};
  VsiTrainResult result;

  // Best-epoch snapshots of the raw tensors.
  std::vector<Mat> best_store;
  const auto refs = collect_params(params);
  auto snapshot = [&]() {
    best_store.clear();
    for (const auto& r : refs) best_store.push_back(*r.mat);
  };
  snapshot();

  ad::Tape tape;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = root.derive("shuffle", static_cast<std::uint64_t>(epoch));
    Rng eps_rng = root.derive("eps", static_cast<std::uint64_t>(epoch));
    const std::vector<int> perm = shuffle_rng.permutation(n);

    double obj_sum = 0.0;
    long obj_rows = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      const Mat Xb = detail::gather_mat(train.X, perm, start, count);
      const Mat enc_in = detail::gather_mat(enc_train.enc_in, perm, start, count);
      const Mat tails = detail::gather_mat(enc_train.tail_mask, perm, start, count);
      const Vec ev_mask = detail::gather_vec(enc_train.event_mask, perm, start, count);
      std::vector<int> bins(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i)
        bins[static_cast<std::size_t>(i)] =
            enc_train.bins[static_cast<std::size_t>(perm[static_cast<std::size_t>(start + i)])];
      const Mat eps = eps_rng.normal_mat(static_cast<Eigen::Index>(cfg.mc_samples_train) * count, m);

      tape.clear();
      const VsiLeaves leaves = make_vsi_leaves(tape, params);
      const ad::Var loss =
          vsi_batch_loss(tape, params, leaves, Xb, enc_in, bins, tails, ev_mask, eps);
      const double loss_val = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_val))
        throw numeric_error("train_vsi: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(start / cfg.batch_size));
      tape.backward(loss);

      std::vector<Mat> grads;
      grads.reserve(leaves.ordered.size());
      for (ad::Var v : leaves.ordered) grads.push_back(tape.grad(v));
      adam.step(grads);
      obj_sum += loss_val * count;
      obj_rows += count;
    }

    Rng valid_rng = root.derive("valid");  // reseeded: identical draws every epoch
    const double valid_elbo =
        elbo_rows(params, valid.X, valid.time, valid.event, cfg.mc_samples_train, valid_rng)
            .mean();
    result.log.push_back({epoch, obj_sum / static_cast<double>(obj_rows), valid_elbo});

    if (stopper.observe(valid_elbo, epoch)) snapshot();
    if (stopper.should_stop()) break;
  }

  for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].mat = best_store[i];
  result.best_epoch = stopper.best_epoch;
  result.params = std::move(params);
  return result;
}

}  // namespace vsi
