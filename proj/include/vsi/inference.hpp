#pragma once

// Everything computed from a frozen model: per-subject predictive pmfs over
// the grid, importance-weighted log-likelihood estimates (events and
// censored), survival tail sums, per-distribution quantiles, and the two
// point estimates of time-to-event (pmf expectation and the
// proposal-weighted average).
//
// All estimators are deterministic given (model, seed, L); batched variants
// iterate draw-major so each pass is one dense matrix product.

#include "vsi/model.hpp"

#include <string>
#include <vector>

namespace vsi {

struct PredictedDistribution {
  Vec pmf;                        // length n_bins
  const TimeGrid* grid = nullptr; // non-owning
};

struct IwEstimate {
  enum class Kind { event, censored };
  double log_value = 0.0;
  int L = 0;
  Kind kind = Kind::event;
};

/** Tail mass past bin b: sum_{b' > b} pmf(b'). b = -1 yields the full mass. */
inline double survival_from_pmf(const Vec& pmf, int b) {
  double s = 0.0;
  for (int j = b + 1; j < static_cast<int>(pmf.size()); ++j) s += pmf(j);
  return s;
}

/** Representative time of the smallest bin whose cumulative mass reaches p. */
inline double quantile_time(const Vec& pmf, const TimeGrid& grid, double p) {
  double c = 0.0;
  for (int b = 0; b < static_cast<int>(pmf.size()); ++b) {
    c += pmf(b);
    if (c >= p) return grid.representative_times(b);
  }
  return grid.representative_times(grid.overflow_bin());
}

inline double point_estimate_median(const PredictedDistribution& dist) {
  return quantile_time(dist.pmf, *dist.grid, 0.5);
}

//========================== predictive distribution ========================

/**
 * Batched predictive pmfs. Latent models average the decoder pmf over L_mc
 * prior draws; the direct and parametric models are deterministic and
 * ignore (L_mc, rng).
 */
inline Mat predict_pmf_rows(const AnyModel& model, const Mat& X, int L_mc, Rng& rng) {
  if (const auto* m = std::get_if<DirectMlpParams>(&model))
    return direct_log_pmf_rows(*m, X).array().exp();
  if (const auto* m = std::get_if<AftModel>(&model)) {
    Mat out(X.rows(), m->grid.n_bins());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      out.row(i) = aft_predict_pmf(m->w, X.row(i).transpose(), m->grid).transpose();
    return out;
  }

  const Mlp* prior_net;
  const Mlp* decoder_net;
  int latent_dim;
  if (const auto* m = std::get_if<VsiParams>(&model)) {
    prior_net = &m->prior_net;
    decoder_net = &m->decoder_net;
    latent_dim = m->latent_dim;
  } else {
    const auto& m2 = std::get<NoQParams>(model);
    prior_net = &m2.prior_net;
    decoder_net = &m2.decoder_net;
    latent_dim = m2.latent_dim;
  }
  const GaussianBatch pz = split_gaussian(mlp_forward(*prior_net, X));
  Mat acc = Mat::Zero(X.rows(), decoder_net->out_width());
  for (int l = 0; l < L_mc; ++l) {
    const Mat eps = rng.normal_mat(X.rows(), latent_dim);
    const Mat z = sample_reparam_rows(pz, eps);
    acc += Mat(nn::log_softmax_rows(mlp_forward(*decoder_net, z)).array().exp());
  }
  return acc / static_cast<double>(L_mc);
}

inline PredictedDistribution predict_distribution(const AnyModel& model, const Vec& x,
                                                  int L_mc, Rng& rng) {
  Mat pmf = predict_pmf_rows(model, Mat(x.transpose()), L_mc, rng);
  return {pmf.row(0).transpose(), &model_grid(model)};
}

//======================= importance-weighted likelihood ====================

namespace detail {

/**
 * Draw-major IW sweep for the variational model: per subject,
 *   log w_l = value(z_l) + log p(z_l|x) - log q(z_l | x, target),
 * value = log pmf at the subject's bin (events) or log tail mass (censored);
 * returns log(1/L sum_l w_l) per row.
 */
inline Vec vsi_iw_rows(const VsiParams& params, const Mat& X, const Vec& times,
                       const IVec& events, int L, Rng& rng, long* degenerate = nullptr) {
  const int n = static_cast<int>(X.rows());
  std::vector<int> bins(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    bins[static_cast<std::size_t>(i)] = params.grid.bin_index(times(i));
  bins = nn::tail_eval_bins(std::move(bins), events, params.grid.overflow_bin());

  const Mat enc_in = encoder_input(params, X, times, events);
  const GaussianBatch q = encoder(params, enc_in);
  const GaussianBatch pz = prior(params, X);

  Mat logw(n, L);
  for (int l = 0; l < L; ++l) {
    const Mat eps = rng.normal_mat(n, params.latent_dim);
    const Mat z = sample_reparam_rows(q, eps);
    const Mat lp = decoder_log_pmf_rows(params, z);
    const Vec tail = nn::log_tail_rows(lp, bins);
    const Vec lpz = gauss_log_density_rows(z, pz);
    const Vec lqz = gauss_log_density_rows(z, q);
    for (int i = 0; i < n; ++i) {
      const double value =
          events(i) == 1 ? lp(i, bins[static_cast<std::size_t>(i)]) : tail(i);
      logw(i, l) = value + lpz(i) - lqz(i);
    }
  }
  Vec out(n);
  for (int i = 0; i < n; ++i) {
    const double v = logsumexp(logw.row(i).transpose()) - std::log(static_cast<double>(L));
    if (!std::isfinite(v)) {
      out(i) = std::log(1e-300);
      if (degenerate) ++(*degenerate);
    } else {
      out(i) = v;
    }
  }
  return out;
}

}  // namespace detail

inline IwEstimate iw_loglik_event(const VsiParams& params, const Vec& x, double t, int L,
                                  Rng& rng) {
  Mat X = x.transpose();
  Vec times(1);
  times << t;
  IVec events(1);
  events << 1;
  return {detail::vsi_iw_rows(params, X, times, events, L, rng)(0), L,
          IwEstimate::Kind::event};
}

inline IwEstimate iw_loglik_censored(const VsiParams& params, const Vec& x, double t, int L,
                                     Rng& rng) {
  Mat X = x.transpose();
  Vec times(1);
  times << t;
  IVec events(1);
  events << 0;
  return {detail::vsi_iw_rows(params, X, times, events, L, rng)(0), L,
          IwEstimate::Kind::censored};
}

/**
 * Unified per-subject log-likelihood rows for evaluation: IW for the
 * variational model, prior Monte-Carlo marginal for the ablation, exact
 * values for the deterministic models.
 */
inline Vec loglik_rows(const AnyModel& model, const Mat& X, const Vec& times,
                       const IVec& events, int L, Rng& rng) {
  if (const auto* m = std::get_if<VsiParams>(&model))
    return detail::vsi_iw_rows(*m, X, times, events, L, rng);
  if (const auto* m = std::get_if<NoQParams>(&model))
    return noq_marginal_rows(*m, X, times, events, L, rng);
  if (const auto* m = std::get_if<DirectMlpParams>(&model))
    return direct_loglik_rows(*m, X, times, events);
  return aft_discrete_loglik_rows(std::get<AftModel>(model), X, times, events);
}

//============================== point estimates ============================

/**
 * Proposal-weighted average time-to-event for the variational model:
 * sample t_l from the predictive pmf, re-encode each sampled time, and
 * weight its representative time by p(z_l|x)/q(z_l|t_l,x). Degenerate
 * weight sets fall back to the unweighted mean (counted, not fatal).
 * Models without an encoder use the pmf expectation instead.
 */
inline Vec point_estimate_rows(const AnyModel& model, const Mat& X, const Mat& pmf_rows,
                               int L, Rng& rng, long* degenerate = nullptr) {
  const TimeGrid& grid = model_grid(model);
  const auto* m = std::get_if<VsiParams>(&model);
  if (!m) {
    // Expectation of the representative time under the predictive pmf.
    return pmf_rows * grid.representative_times;
  }

  const int n = static_cast<int>(X.rows());
  const int nb = grid.n_bins();
  const bool raw = m->cfg.encoder_raw_t_delta;
  const GaussianBatch pz = prior(*m, X);
  Mat logw(n, L), tsamp(n, L);
  for (int l = 0; l < L; ++l) {
    // Inverse-CDF draw of one bin per subject.
    Mat enc_in(n, X.cols() + (raw ? 2 : nb));
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform01();
      double c = 0.0;
      int b = nb - 1;
      for (int j = 0; j < nb; ++j) {
        c += pmf_rows(i, j);
        if (u < c) {
          b = j;
          break;
        }
      }
      tsamp(i, l) = grid.representative_times(b);
      enc_in.row(i).head(X.cols()) = X.row(i);
      if (raw) {
        enc_in(i, X.cols()) = tsamp(i, l);
        enc_in(i, X.cols() + 1) = 1.0;  // sampled times are event times
      } else {
        enc_in.row(i).tail(nb).setZero();
        enc_in(i, X.cols() + b) = 1.0;
      }
    }
    const GaussianBatch q = encoder(*m, enc_in);
    const Mat eps = rng.normal_mat(n, m->latent_dim);
    const Mat z = sample_reparam_rows(q, eps);
    logw.col(l) = gauss_log_density_rows(z, pz) - gauss_log_density_rows(z, q);
  }

  Vec out(n);
  for (int i = 0; i < n; ++i) {
    const double mx = logw.row(i).maxCoeff();
    double wsum = 0.0, twsum = 0.0;
    if (std::isfinite(mx)) {
      for (int l = 0; l < L; ++l) {
        const double w = std::exp(logw(i, l) - mx);  // normalized by the max weight
        wsum += w;
        twsum += w * tsamp(i, l);
      }
    }
    if (wsum > 0.0 && std::isfinite(twsum)) {
      out(i) = twsum / wsum;
    } else {
      out(i) = tsamp.row(i).mean();
      if (degenerate) ++(*degenerate);
    }
  }
  return out;
}

inline double point_estimate_weighted(const AnyModel& model, const Vec& x, int L, Rng& rng) {
  Mat X = x.transpose();
  Rng pmf_rng = rng.derive("pmf");
  const Mat pmf = predict_pmf_rows(model, X, 200, pmf_rng);
  Rng w_rng = rng.derive("weights");
  return point_estimate_rows(model, X, pmf, L, w_rng)(0);
}

}  // namespace vsi
