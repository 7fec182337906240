#pragma once

// Dataset model and ingestion: CSV parsing with explicit missingness,
// training-split schema fitting (median/mode imputation, one-hot levels,
// z-transform statistics), transformation, and the reproducible
// train/validation/test split.
//
// Leakage rule: every statistic in a CovariateSchema comes from the rows it
// was fitted on (the training split); transform() never updates it.

#include "vsi/common.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace vsi {

enum class ColumnKind { continuous, categorical };

/** Column-role configuration for CSV ingestion. */
struct ColumnRoles {
  std::string time_col = "time";
  std::string event_col = "event";
  std::vector<std::string> categorical;  // covariates not listed here are continuous
  char delimiter = ',';
  std::string missing_token;  // cell content meaning "missing"; default empty string
};

/** Parsed rows prior to schema fitting; covariate cells stay textual. */
struct RawRows {
  std::vector<std::string> covariate_names;
  std::vector<ColumnKind> kinds;
  std::vector<std::vector<std::optional<std::string>>> cells;  // [row][covariate]
  std::vector<double> time;
  std::vector<int> event;

  int n() const { return static_cast<int>(time.size()); }
  int n_covariates() const { return static_cast<int>(covariate_names.size()); }
};

struct SurvivalRecord {
  Vec covariates;
  double time = 0.0;
  int event_indicator = 0;
};

struct CovariateSchema {
  struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    bool dropped = false;              // constant continuous column
    std::vector<std::string> levels;   // categorical only, sorted
    std::string impute_mode;           // categorical only
    double impute_median = 0.0;        // continuous only
    double mean = 0.0;                 // continuous only, post-imputation
    double sd = 1.0;                   // continuous only, post-imputation
  };
  std::vector<Column> columns;
  std::vector<std::string> warnings;

  int width() const {
    int w = 0;
    for (const auto& c : columns) {
      if (c.dropped) continue;
      w += (c.kind == ColumnKind::continuous) ? 1 : static_cast<int>(c.levels.size());
    }
    return w;
  }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> names;
    for (const auto& c : columns) {
      if (c.dropped) continue;
      if (c.kind == ColumnKind::continuous) {
        names.push_back(c.name);
      } else {
        for (const auto& lv : c.levels) names.push_back(c.name + "=" + lv);
      }
    }
    return names;
  }
};

/** Covariate matrix plus outcome columns; the universal data carrier. */
struct SurvivalDataset {
  Mat X;       // n x p, schema-transformed
  Vec time;    // n
  IVec event;  // n, values in {0,1}
  CovariateSchema schema;

  int n() const { return static_cast<int>(time.size()); }
  int p() const { return static_cast<int>(X.cols()); }

  SurvivalRecord record(int i) const {
    return SurvivalRecord{X.row(i).transpose(), time(i), event(i)};
  }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

/**
 * Reads a delimited text file with a header row. Leading lines starting
 * with '#' (provenance comments) are skipped. The time and event columns
 * are parsed immediately (they can never be missing); covariate cells stay
 * raw strings with an explicit missing marker.
 */
inline RawRows load_csv(const std::string& path, const ColumnRoles& roles) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);

  std::string line;
  do {
    if (!std::getline(in, line)) throw data_error("empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
  } while (!line.empty() && line.front() == '#');
  const auto header = detail::split_line(line, roles.delimiter);

  int time_idx = -1, event_idx = -1;
  std::vector<int> cov_idx;
  RawRows rows;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (header[static_cast<std::size_t>(c)] == roles.time_col) {
      time_idx = c;
    } else if (header[static_cast<std::size_t>(c)] == roles.event_col) {
      event_idx = c;
    } else {
      cov_idx.push_back(c);
      rows.covariate_names.push_back(header[static_cast<std::size_t>(c)]);
    }
  }
  if (time_idx < 0) throw config_error("time column '" + roles.time_col + "' not in header");
  if (event_idx < 0) throw config_error("event column '" + roles.event_col + "' not in header");
  for (const auto& name : roles.categorical) {
    if (std::find(rows.covariate_names.begin(), rows.covariate_names.end(), name) ==
        rows.covariate_names.end())
      throw config_error("categorical column '" + name + "' not in header");
  }
  for (const auto& name : rows.covariate_names) {
    const bool cat = std::find(roles.categorical.begin(), roles.categorical.end(), name) !=
                     roles.categorical.end();
    rows.kinds.push_back(cat ? ColumnKind::categorical : ColumnKind::continuous);
  }

  int row_index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row_index;
    const auto fields = detail::split_line(line, roles.delimiter);
    if (fields.size() != header.size())
      throw data_error("malformed row " + std::to_string(row_index) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));

    double t;
    if (!detail::parse_double(fields[static_cast<std::size_t>(time_idx)], t) || t < 0.0)
      throw data_error("malformed row " + std::to_string(row_index) +
                       ": time must be a nonnegative number");
    const std::string& ev = fields[static_cast<std::size_t>(event_idx)];
    if (ev != "0" && ev != "1")
      throw data_error("malformed row " + std::to_string(row_index) +
                       ": event indicator must be 0 or 1, got '" + ev + "'");

    std::vector<std::optional<std::string>> cov;
    cov.reserve(cov_idx.size());
    for (int c : cov_idx) {
      const std::string& cell = fields[static_cast<std::size_t>(c)];
      if (cell == roles.missing_token)
        cov.emplace_back(std::nullopt);
      else
        cov.emplace_back(cell);
    }
    rows.cells.push_back(std::move(cov));
    rows.time.push_back(t);
    rows.event.push_back(ev == "1" ? 1 : 0);
  }
  return rows;
}

inline RawRows subset_rows(const RawRows& rows, const std::vector<int>& idx) {
  RawRows out;
  out.covariate_names = rows.covariate_names;
  out.kinds = rows.kinds;
  for (int i : idx) {
    out.cells.push_back(rows.cells[static_cast<std::size_t>(i)]);
    out.time.push_back(rows.time[static_cast<std::size_t>(i)]);
    out.event.push_back(rows.event[static_cast<std::size_t>(i)]);
  }
  return out;
}

/**
 * Learns imputation values, categorical levels and z-transform statistics
 * from training rows only. Medians/modes ignore missing entries; means and
 * standard deviations are computed after imputation. Constant continuous
 * columns are dropped with a warning.
 */
inline CovariateSchema fit_schema(const RawRows& train) {
  if (train.n() == 0) throw data_error("fit_schema: empty training rows");
  CovariateSchema schema;
  for (int c = 0; c < train.n_covariates(); ++c) {
    CovariateSchema::Column col;
    col.name = train.covariate_names[static_cast<std::size_t>(c)];
    col.kind = train.kinds[static_cast<std::size_t>(c)];

    if (col.kind == ColumnKind::continuous) {
      std::vector<double> vals;
      for (int r = 0; r < train.n(); ++r) {
        const auto& cell = train.cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        if (!cell) continue;
        double v;
        if (!detail::parse_double(*cell, v))
          throw data_error("column '" + col.name + "' row " + std::to_string(r + 1) +
                           ": not a number: '" + *cell + "'");
        vals.push_back(v);
      }
      if (vals.empty()) throw data_error("column '" + col.name + "' has no observed values");
      std::sort(vals.begin(), vals.end());
      const std::size_t nv = vals.size();
      col.impute_median = (nv % 2 == 1) ? vals[nv / 2]
                                        : 0.5 * (vals[nv / 2 - 1] + vals[nv / 2]);
      // Post-imputation moments over all training rows.
      const auto n = static_cast<double>(train.n());
      const auto n_missing = n - static_cast<double>(nv);
      double sum = n_missing * col.impute_median;
      for (double v : vals) sum += v;
      col.mean = sum / n;
      double ss = n_missing * (col.impute_median - col.mean) * (col.impute_median - col.mean);
      for (double v : vals) ss += (v - col.mean) * (v - col.mean);
      col.sd = (n > 1.0) ? std::sqrt(ss / (n - 1.0)) : 0.0;
      if (col.sd < 1e-12) {
        col.dropped = true;
        col.sd = 1.0;
        schema.warnings.push_back("column '" + col.name + "' is constant; dropped");
      }
    } else {
      std::map<std::string, long> counts;  // sorted keys: deterministic levels
      for (int r = 0; r < train.n(); ++r) {
        const auto& cell = train.cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        if (cell) ++counts[*cell];
      }
      if (counts.empty()) throw data_error("column '" + col.name + "' has no observed values");
      long best = -1;
      for (const auto& [level, cnt] : counts) {
        col.levels.push_back(level);
        if (cnt > best) {  // ties resolve to the lexicographically smallest level
          best = cnt;
          col.impute_mode = level;
        }
      }
    }
    schema.columns.push_back(std::move(col));
  }
  return schema;
}

/**
 * Applies a fitted schema: impute, one-hot encode (unseen levels become the
 * all-zero block), z-transform. Times and event indicators pass through.
 */
inline SurvivalDataset transform(const RawRows& rows, const CovariateSchema& schema) {
  if (static_cast<int>(schema.columns.size()) != rows.n_covariates())
    throw data_error("transform: schema does not match row layout");
  SurvivalDataset ds;
  ds.schema = schema;
  ds.X = Mat::Zero(rows.n(), schema.width());
  ds.time = Vec(rows.n());
  ds.event = IVec(rows.n());

  for (int r = 0; r < rows.n(); ++r) {
    ds.time(r) = rows.time[static_cast<std::size_t>(r)];
    ds.event(r) = rows.event[static_cast<std::size_t>(r)];
    int out_c = 0;
    for (int c = 0; c < rows.n_covariates(); ++c) {
      const auto& col = schema.columns[static_cast<std::size_t>(c)];
      const auto& cell = rows.cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (col.dropped) continue;
      if (col.kind == ColumnKind::continuous) {
        double v = col.impute_median;
        if (cell && !detail::parse_double(*cell, v))
          throw data_error("column '" + col.name + "' row " + std::to_string(r + 1) +
                           ": not a number: '" + *cell + "'");
        ds.X(r, out_c) = (v - col.mean) / col.sd;
        ++out_c;
      } else {
        const std::string v = cell ? *cell : col.impute_mode;
        for (int l = 0; l < static_cast<int>(col.levels.size()); ++l) {
          if (col.levels[static_cast<std::size_t>(l)] == v) ds.X(r, out_c + l) = 1.0;
        }
        out_c += static_cast<int>(col.levels.size());
      }
    }
  }
  return ds;
}

//================================ splitting ================================

/** Reproducible uniform-shuffle index partition; sizes floor/floor/rest. */
inline std::array<std::vector<int>, 3> split_indices(int n,
                                                     const std::array<double, 3>& fractions,
                                                     std::uint64_t seed) {
  const double s = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(s - 1.0) > 1e-9) throw config_error("split fractions must sum to 1");
  if (n < 3) throw data_error("split: need at least 3 records");
  Rng rng = Rng(seed).derive("split");
  const std::vector<int> perm = rng.permutation(n);
  const int n_train = static_cast<int>(std::floor(fractions[0] * n));
  const int n_valid = static_cast<int>(std::floor(fractions[1] * n));
  std::array<std::vector<int>, 3> out;
  out[0].assign(perm.begin(), perm.begin() + n_train);
  out[1].assign(perm.begin() + n_train, perm.begin() + n_train + n_valid);
  out[2].assign(perm.begin() + n_train + n_valid, perm.end());
  return out;
}

inline SurvivalDataset subset(const SurvivalDataset& ds, const std::vector<int>& idx) {
  SurvivalDataset out;
  out.schema = ds.schema;
  out.X = Mat(idx.size(), ds.X.cols());
  out.time = Vec(idx.size());
  out.event = IVec(idx.size());
  for (int i = 0; i < static_cast<int>(idx.size()); ++i) {
    out.X.row(i) = ds.X.row(idx[static_cast<std::size_t>(i)]);
    out.time(i) = ds.time(idx[static_cast<std::size_t>(i)]);
    out.event(i) = ds.event(idx[static_cast<std::size_t>(i)]);
  }
  return out;
}

inline std::array<SurvivalDataset, 3> split(const SurvivalDataset& ds,
                                            const std::array<double, 3>& fractions,
                                            std::uint64_t seed) {
  const auto idx = split_indices(ds.n(), fractions, seed);
  return {subset(ds, idx[0]), subset(ds, idx[1]), subset(ds, idx[2])};
}

}  // namespace vsi
