#pragma once

// Evaluation instruments. Concordance metrics run in O(N log N) with a
// Fenwick tree over score ranks, accumulating pair credit in integer half
// units (2 = concordant, 1 = score tie) so results match brute-force pair
// enumeration bit for bit; the comparable-pair set is
// E = {(i,j) : t_i < t_j, delta_i = 1}.

#include "vsi/common.hpp"
#include "vsi/inference.hpp"
#include "vsi/time_grid.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vsi {

namespace detail {

class Fenwick {
 public:
  explicit Fenwick(int n) : tree_(static_cast<std::size_t>(n) + 1, 0) {}
  void add(int i, long long v) {
    for (int k = i + 1; k < static_cast<int>(tree_.size()); k += k & -k)
      tree_[static_cast<std::size_t>(k)] += v;
  }
  // sum of entries with index < i
  long long prefix(int i) const {
    long long s = 0;
    for (int k = i; k > 0; k -= k & -k) s += tree_[static_cast<std::size_t>(k)];
    return s;
  }
  long long total() const { return prefix(static_cast<int>(tree_.size()) - 1); }

 private:
  std::vector<long long> tree_;
};

/**
 * Weighted concordance kernel shared by c_index and c_td. Subjects are
 * swept by descending time; each event subject is scored against the
 * already-inserted strictly-later subjects. Integer weights support the
 * bootstrap (weight 0 removes a subject).
 */
inline double weighted_concordance(const Vec& scores, const Vec& times, const IVec& deltas,
                                   const std::vector<long long>* weights, bool strict_ties) {
  const int n = static_cast<int>(scores.size());
  std::vector<double> uniq(scores.data(), scores.data() + n);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  auto rank = [&](double s) {
    return static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), s) - uniq.begin());
  };

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return times(a) > times(b); });

  const long long tie_units = strict_ties ? 0 : 1;
  Fenwick bit(static_cast<int>(uniq.size()));
  long long credit = 0, pairs = 0;
  int pos = 0;
  while (pos < n) {
    int end = pos;
    while (end < n && times(order[static_cast<std::size_t>(end)]) ==
                          times(order[static_cast<std::size_t>(pos)]))
      ++end;
    // Queries first: everything inserted so far has strictly larger time.
    const long long later_total = bit.total();
    for (int k = pos; k < end; ++k) {
      const int i = order[static_cast<std::size_t>(k)];
      if (deltas(i) != 1) continue;
      const long long w_i = weights ? (*weights)[static_cast<std::size_t>(i)] : 1;
      if (w_i == 0 || later_total == 0) continue;
      const int r = rank(scores(i));
      const long long below = bit.prefix(r);
      const long long equal = bit.prefix(r + 1) - below;
      credit += w_i * (2 * below + tie_units * equal);
      pairs += w_i * later_total;
    }
    for (int k = pos; k < end; ++k) {
      const int i = order[static_cast<std::size_t>(k)];
      const long long w_i = weights ? (*weights)[static_cast<std::size_t>(i)] : 1;
      if (w_i > 0) bit.add(rank(scores(i)), w_i);
    }
    pos = end;
  }
  if (pairs == 0) throw data_error("concordance: no comparable pairs");
  return static_cast<double>(credit) / (2.0 * static_cast<double>(pairs));
}

}  // namespace detail

/**
 * Harrell concordance. Scores are risk scores: the subject with the earlier
 * event should carry the larger score (pass negated predicted times).
 * Score ties earn half credit unless strict_ties is set.
 */
inline double c_index(const Vec& scores, const Vec& times, const IVec& deltas,
                      bool strict_ties = false) {
  return detail::weighted_concordance(scores, times, deltas, nullptr, strict_ties);
}

/** Percentile bootstrap interval (2.5% / 97.5%) over subject resamples. */
inline std::pair<double, double> c_index_ci(const Vec& scores, const Vec& times,
                                            const IVec& deltas, int n_boot,
                                            std::uint64_t seed, bool strict_ties = false) {
  const int n = static_cast<int>(scores.size());
  Rng rng = Rng(seed).derive("bootstrap");
  std::vector<double> boots;
  boots.reserve(static_cast<std::size_t>(n_boot));
  std::vector<long long> w(static_cast<std::size_t>(n));
  for (int b = 0; b < n_boot; ++b) {
    std::fill(w.begin(), w.end(), 0);
    for (int i = 0; i < n; ++i)
      ++w[static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(n)))];
    try {
      boots.push_back(detail::weighted_concordance(scores, times, deltas, &w, strict_ties));
    } catch (const data_error&) {
      // resample with no comparable pairs contributes nothing
    }
  }
  if (boots.empty()) throw data_error("c_index_ci: no usable bootstrap resamples");
  std::sort(boots.begin(), boots.end());
  return {quantile_nearest_rank(boots, 0.025), quantile_nearest_rank(boots, 0.975)};
}

/**
 * Time-dependent concordance on own-time CDF values: each subject's
 * predicted CDF evaluated at that subject's observed time, compared across
 * comparable pairs exactly like a risk score.
 */
inline double c_td(const Vec& cdf_at_own_time, const Vec& times, const IVec& deltas,
                   bool strict_ties = false) {
  return detail::weighted_concordance(cdf_at_own_time, times, deltas, nullptr, strict_ties);
}

/**
 * Pairwise time-dependent concordance: for each comparable pair (i, j) with
 * t_i < t_j, both CDFs are evaluated at the earlier subject's bin,
 * crediting F_i(t_i) > F_j(t_i). `cdf_rows` holds per-subject cumulative
 * pmfs; `bins` the bin index of each subject's observed time.
 */
inline double c_td_paired(const Mat& cdf_rows, const std::vector<int>& bins,
                          const Vec& times, const IVec& deltas) {
  const int n = static_cast<int>(times.size());
  long long credit = 0, pairs = 0;
  for (int i = 0; i < n; ++i) {
    if (deltas(i) != 1) continue;
    const int b = bins[static_cast<std::size_t>(i)];
    const double Fi = cdf_rows(i, b);
    for (int j = 0; j < n; ++j) {
      if (times(i) >= times(j)) continue;
      const double Fj = cdf_rows(j, b);
      credit += Fi > Fj ? 2 : (Fi == Fj ? 1 : 0);
      ++pairs;
    }
  }
  if (pairs == 0) throw data_error("concordance: no comparable pairs");
  return static_cast<double>(credit) / (2.0 * static_cast<double>(pairs));
}

/**
 * Kolmogorov-Smirnov distance between a predicted pmf and a reference CDF,
 * evaluated where the model's step CDF changes: at the grid edges.
 */
inline double ks_distance(const Vec& pmf, const TimeGrid& grid, const Vec& truth_at_edges) {
  double worst = 0.0, c = 0.0;
  for (int b = 0; b < grid.n_edges(); ++b) {
    c += pmf(b);
    worst = std::max(worst, std::abs(c - truth_at_edges(b)));
  }
  return worst;
}

inline double ks_distance(const PredictedDistribution& pred,
                          const std::function<double(double)>& truth_cdf) {
  const TimeGrid& grid = *pred.grid;
  Vec truth(grid.n_edges());
  for (int b = 0; b < grid.n_edges(); ++b) truth(b) = truth_cdf(grid.edges(b));
  return ks_distance(pred.pmf, grid, truth);
}

//========================== log-likelihood summary =========================

struct LoglikSummary {
  double mean = 0.0;
  std::optional<double> range_event;     // q90 - q10 over the event stratum
  std::optional<double> range_censored;  // same over the censored stratum
};

inline LoglikSummary mean_loglik(const std::vector<IwEstimate>& est, const IVec& deltas);

inline LoglikSummary mean_loglik(const Vec& loglik, const IVec& deltas) {
  LoglikSummary s;
  s.mean = loglik.mean();
  std::vector<double> ev, cs;
  for (Eigen::Index i = 0; i < loglik.size(); ++i)
    (deltas(i) == 1 ? ev : cs).push_back(loglik(i));
  auto range = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    return quantile_nearest_rank(v, 0.9) - quantile_nearest_rank(v, 0.1);
  };
  if (!ev.empty()) s.range_event = range(ev);
  if (!cs.empty()) s.range_censored = range(cs);
  return s;
}

inline LoglikSummary mean_loglik(const std::vector<IwEstimate>& est, const IVec& deltas) {
  Vec v(static_cast<Eigen::Index>(est.size()));
  for (std::size_t i = 0; i < est.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = est[i].log_value;
  return mean_loglik(v, deltas);
}

//================================ coverage =================================

// Event ranges [l, 1-l] for l in {0.05, ..., 0.45}; censored thresholds
// l in {0.1, ..., 0.9}.
struct Coverage {
  std::array<double, 9> event_rate{};
  std::array<double, 9> censored_rate{};
  bool has_events = false;
  bool has_censored = false;

  static double event_lower_percentile(int k) { return 0.05 * (k + 1); }
  static double censored_percentile(int k) { return 0.1 * (k + 1); }
};

/**
 * Event coverage counts strict containment l < t < u between the
 * per-subject predicted quantile times; censored coverage counts t <= l.
 */
inline Coverage coverage(const Mat& pmf_rows, const TimeGrid& grid, const Vec& times,
                         const IVec& deltas) {
  Coverage cov;
  long n_event = 0, n_cens = 0;
  std::array<long, 9> hit_event{};
  std::array<long, 9> hit_cens{};
  for (Eigen::Index i = 0; i < times.size(); ++i) {
    const Vec pmf = pmf_rows.row(i).transpose();
    if (deltas(i) == 1) {
      ++n_event;
      for (int k = 0; k < 9; ++k) {
        const double p = Coverage::event_lower_percentile(k);
        const double lo = quantile_time(pmf, grid, p);
        const double hi = quantile_time(pmf, grid, 1.0 - p);
        if (lo < times(i) && times(i) < hi) ++hit_event[static_cast<std::size_t>(k)];
      }
    } else {
      ++n_cens;
      for (int k = 0; k < 9; ++k) {
        const double lo = quantile_time(pmf, grid, Coverage::censored_percentile(k));
        if (times(i) <= lo) ++hit_cens[static_cast<std::size_t>(k)];
      }
    }
  }
  cov.has_events = n_event > 0;
  cov.has_censored = n_cens > 0;
  for (int k = 0; k < 9; ++k) {
    if (n_event > 0)
      cov.event_rate[static_cast<std::size_t>(k)] =
          static_cast<double>(hit_event[static_cast<std::size_t>(k)]) / n_event;
    if (n_cens > 0)
      cov.censored_rate[static_cast<std::size_t>(k)] =
          static_cast<double>(hit_cens[static_cast<std::size_t>(k)]) / n_cens;
  }
  return cov;
}

//=============================== EvalReport ================================

struct EvalReport {
  std::string model_kind;
  std::string dataset_tag;
  std::uint64_t seed = 0;
  long n_test = 0;
  long param_count = 0;
  double c_index = 0.0;
  double c_index_lo = 0.0, c_index_hi = 0.0;
  double c_td = 0.0;           // pairwise (both CDFs at the earlier time)
  double c_td_own_time = 0.0;  // own-time estimator
  std::optional<double> ks;    // synthetic runs only
  double mean_loglik = 0.0;
  std::optional<double> loglik_range_event;
  std::optional<double> loglik_range_censored;
  Coverage cov;
  long degenerate_weights = 0;

  std::string to_kv() const {
    char buf[160];
    std::string out;
    auto kv = [&](const char* key, double v) {
      std::snprintf(buf, sizeof(buf), "%s = %.6f\n", key, v);
      out += buf;
    };
    out += "model = " + model_kind + "\n";
    out += "dataset = " + dataset_tag + "\n";
    out += "seed = " + std::to_string(seed) + "\n";
    out += "n_test = " + std::to_string(n_test) + "\n";
    out += "param_count = " + std::to_string(param_count) + "\n";
    kv("c_index", c_index);
    kv("c_index_ci_lo", c_index_lo);
    kv("c_index_ci_hi", c_index_hi);
    kv("c_td", c_td);
    kv("c_td_own_time", c_td_own_time);
    if (ks) kv("ks", *ks);
    kv("mean_loglik", mean_loglik);
    if (loglik_range_event) kv("loglik_q10_q90_event", *loglik_range_event);
    if (loglik_range_censored) kv("loglik_q10_q90_censored", *loglik_range_censored);
    for (int k = 0; k < 9; ++k) {
      if (cov.has_events) {
        const double p = Coverage::event_lower_percentile(k);
        std::snprintf(buf, sizeof(buf), "coverage_event_%.2f_%.2f = %.6f\n", p, 1.0 - p,
                      cov.event_rate[static_cast<std::size_t>(k)]);
        out += buf;
      }
    }
    for (int k = 0; k < 9; ++k) {
      if (cov.has_censored) {
        std::snprintf(buf, sizeof(buf), "coverage_censored_%.1f = %.6f\n",
                      Coverage::censored_percentile(k),
                      cov.censored_rate[static_cast<std::size_t>(k)]);
        out += buf;
      }
    }
    out += "degenerate_weights = " + std::to_string(degenerate_weights) + "\n";
    return out;
  }
};

}  // namespace vsi
