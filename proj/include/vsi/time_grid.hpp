#pragma once

// Discrete time axis over the follow-up horizon. Bin edges sit at the
// percentiles of the training event times; bins are left-open/right-closed,
// an exact-edge time belongs to the lower bin, and one overflow bin past the
// last edge absorbs everything beyond the training horizon.
//
// Indexing convention: with M edges there are M+1 bins numbered 0..M.
// Bin 0 covers [0, edges[0]], bin j covers (edges[j-1], edges[j]], and the
// overflow bin M covers (edges[M-1], inf).

#include "vsi/common.hpp"
#include "vsi/survival_data.hpp"

#include <algorithm>
#include <vector>

namespace vsi {

struct TimeGrid {
  Vec edges;                 // strictly increasing, size M
  Vec representative_times;  // size M+1; midpoints, overflow = max training event time

  int n_edges() const { return static_cast<int>(edges.size()); }
  int n_bins() const { return n_edges() + 1; }  // includes overflow
  int overflow_bin() const { return n_edges(); }

  /** Total over [0, inf): index of the bin containing t. */
  int bin_index(double t) const {
    if (t < 0.0) throw data_error("bin_index: negative time");
    // smallest j with t <= edges[j]; none -> overflow
    const double* begin = edges.data();
    const double* end = begin + edges.size();
    const double* it = std::lower_bound(begin, end, t);
    return static_cast<int>(it - begin);
  }
};

/**
 * Edges at the k/M nearest-rank quantiles (k = 1..M) of the training event
 * times, deduplicated; the effective bin count shrinks when quantiles
 * collide. Requires at least two distinct event times.
 */
inline TimeGrid build_grid(std::vector<double> train_events, int M) {
  if (M < 2) throw config_error("build_grid: M must be at least 2");
  if (train_events.size() < 2) throw data_error("build_grid: need at least 2 event times");
  std::sort(train_events.begin(), train_events.end());
  std::vector<double> edges;
  for (int k = 1; k <= M; ++k) {
    const double q = quantile_nearest_rank(train_events, static_cast<double>(k) / M);
    if (edges.empty() || q > edges.back()) edges.push_back(q);
  }
  if (edges.size() < 2)
    throw data_error("build_grid: event times too degenerate for a grid (all equal?)");

  TimeGrid grid;
  grid.edges = Eigen::Map<Vec>(edges.data(), static_cast<Eigen::Index>(edges.size()));
  const int m = grid.n_edges();
  grid.representative_times = Vec(m + 1);
  grid.representative_times(0) = 0.5 * grid.edges(0);  // bin 0 starts at 0
  for (int j = 1; j < m; ++j)
    grid.representative_times(j) = 0.5 * (grid.edges(j - 1) + grid.edges(j));
  grid.representative_times(m) = train_events.back();  // overflow: max training event time
  return grid;
}

//============================ target encodings =============================

struct TargetEncoding {
  enum class Kind { event_onehot, censored_soft };
  Vec weights;  // length n_bins(), nonnegative, sums to 1
  Kind kind = Kind::event_onehot;
};

struct NelsonAalenCurve {
  Vec cumulative_hazard;  // per real bin, size M, nondecreasing
  Vec survival;           // exp(-H), size M
  Vec pmf;                // size M+1 including overflow mass, sums to 1
};

/**
 * Discrete Nelson-Aalen estimator on the grid. d_b counts events in bin b;
 * the at-risk count n_b is the number of subjects whose observed time falls
 * in bin b or later. Survival is exp(-H); the pmf telescopes survival
 * differences with the overflow bin taking the residual tail mass.
 */
inline NelsonAalenCurve nelson_aalen(const Vec& times, const IVec& events,
                                     const TimeGrid& grid) {
  const int m = grid.n_edges();
  const int n = static_cast<int>(times.size());
  if (n == 0) throw data_error("nelson_aalen: empty dataset");

  std::vector<long> d(static_cast<std::size_t>(m), 0);
  std::vector<long> bin_count(static_cast<std::size_t>(m + 1), 0);
  for (int i = 0; i < n; ++i) {
    const int b = grid.bin_index(times(i));
    ++bin_count[static_cast<std::size_t>(b)];
    if (events(i) == 1 && b < m) ++d[static_cast<std::size_t>(b)];
  }
  // at_risk[b] = # subjects with bin >= b
  std::vector<long> at_risk(static_cast<std::size_t>(m + 1), 0);
  at_risk[static_cast<std::size_t>(m)] = bin_count[static_cast<std::size_t>(m)];
  for (int b = m - 1; b >= 0; --b)
    at_risk[static_cast<std::size_t>(b)] =
        at_risk[static_cast<std::size_t>(b + 1)] + bin_count[static_cast<std::size_t>(b)];

  NelsonAalenCurve na;
  na.cumulative_hazard = Vec(m);
  na.survival = Vec(m);
  na.pmf = Vec(m + 1);
  double H = 0.0;
  for (int b = 0; b < m; ++b) {
    const long risk = at_risk[static_cast<std::size_t>(b)];
    if (risk > 0) H += static_cast<double>(d[static_cast<std::size_t>(b)]) / risk;
    na.cumulative_hazard(b) = H;
    na.survival(b) = std::exp(-H);
  }
  na.pmf(0) = 1.0 - na.survival(0);
  for (int b = 1; b < m; ++b) na.pmf(b) = na.survival(b - 1) - na.survival(b);
  na.pmf(m) = na.survival(m - 1);  // residual tail mass
  return na;
}

inline NelsonAalenCurve nelson_aalen(const SurvivalDataset& ds, const TimeGrid& grid) {
  return nelson_aalen(ds.time, ds.event, grid);
}

/** One-hot target at bin(t); events past the last edge map to the overflow bin. */
inline TargetEncoding encode_event(double t, const TimeGrid& grid) {
  if (t < 0.0) throw data_error("encode_event: negative time");
  TargetEncoding enc;
  enc.kind = TargetEncoding::Kind::event_onehot;
  enc.weights = Vec::Zero(grid.n_bins());
  enc.weights(grid.bin_index(t)) = 1.0;
  return enc;
}

/**
 * Censored target: zero mass at bins up to and including the censoring bin,
 * renormalized Nelson-Aalen tail mass after it. A subject censored beyond
 * the last edge keeps all mass on the overflow bin.
 */
inline TargetEncoding encode_censored(double t, const TimeGrid& grid,
                                      const NelsonAalenCurve& na) {
  if (t < 0.0) throw data_error("encode_censored: negative time");
  const int k = grid.bin_index(t);
  TargetEncoding enc;
  enc.kind = TargetEncoding::Kind::censored_soft;
  enc.weights = Vec::Zero(grid.n_bins());
  if (k >= grid.overflow_bin()) {
    enc.weights(grid.overflow_bin()) = 1.0;
    return enc;
  }
  double tail = 0.0;
  for (int b = k + 1; b < grid.n_bins(); ++b) tail += na.pmf(b);
  // The overflow bin always carries exp(-H) > 0, so the tail never vanishes.
  for (int b = k + 1; b < grid.n_bins(); ++b) enc.weights(b) = na.pmf(b) / tail;
  return enc;
}

}  // namespace vsi
