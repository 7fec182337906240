#pragma once

// Synthetic benchmark: Cox proportional hazards with a Gompertz baseline,
// two normal covariates (age, radon), and uniform right censoring on a
// fixed horizon. The inverse-CDF sampler and the analytic conditional CDF
// are exact inverses of each other, which the tests exploit.
//
//   hazard:  h(t|x) = lambda * exp(beta'x) * exp(alpha t)
//   sampler: T = (1/alpha) log[1 - alpha log(U) / (lambda exp(beta'x))]
//   CDF:     F(t|x) = 1 - exp(-(lambda/alpha) exp(beta'x) (exp(alpha t) - 1))

#include "vsi/common.hpp"
#include "vsi/survival_data.hpp"

#include <fstream>
#include <limits>
#include <string>

namespace vsi {

struct GompertzConfig {
  double alpha = 0.2138;
  double lambda = 7e-8;
  double beta_age = 0.15;
  double beta_radon = 0.001;
  double age_mean = 24.3, age_sd = 8.4;
  double radon_mean = 266.8, radon_sd = 507.8;
  // Censoring times are Unif(0, censor_horizon); infinity disables censoring.
  double censor_horizon = std::numeric_limits<double>::infinity();
  long N = 50000;
  std::uint64_t seed = 1;

  void validate() const {
    if (alpha <= 0 || lambda <= 0 || N < 1 || age_sd <= 0 || radon_sd <= 0 ||
        censor_horizon <= 0)
      throw config_error("invalid simulation configuration");
  }
};

/** Raw simulated cohort; covariates are pre-transform (natural units). */
struct SimulatedCohort {
  Vec age, radon, time;
  IVec event;
  long n() const { return time.size(); }
};

/** Event time for a fixed uniform draw u in (0,1); the CDF's exact inverse. */
inline double gompertz_time(const GompertzConfig& cfg, double age, double radon, double u) {
  const double rate = cfg.lambda * std::exp(cfg.beta_age * age + cfg.beta_radon * radon);
  return std::log(1.0 - cfg.alpha * std::log(u) / rate) / cfg.alpha;
}

/** Exact conditional CDF F(t | age, radon). */
inline double truth_cdf(const GompertzConfig& cfg, double age, double radon, double t) {
  if (t <= 0.0) return 0.0;
  const double rate = cfg.lambda * std::exp(cfg.beta_age * age + cfg.beta_radon * radon);
  return 1.0 - std::exp(-(rate / cfg.alpha) * std::expm1(cfg.alpha * t));
}

inline SimulatedCohort simulate(const GompertzConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).derive("simulate");
  SimulatedCohort out;
  out.age = Vec(cfg.N);
  out.radon = Vec(cfg.N);
  out.time = Vec(cfg.N);
  out.event = IVec(cfg.N);
  const bool censored = std::isfinite(cfg.censor_horizon);
  for (long i = 0; i < cfg.N; ++i) {
    const double age = cfg.age_mean + cfg.age_sd * rng.normal();
    const double radon = cfg.radon_mean + cfg.radon_sd * rng.normal();
    const double T = gompertz_time(cfg, age, radon, rng.uniform_pos());
    out.age(i) = age;
    out.radon(i) = radon;
    if (censored) {
      const double C = rng.uniform01() * cfg.censor_horizon;
      out.event(i) = T < C ? 1 : 0;
      out.time(i) = std::min(T, C);
    } else {
      out.event(i) = 1;
      out.time(i) = T;
    }
  }
  return out;
}

inline double event_rate(const SimulatedCohort& cohort) {
  return cohort.event.cast<double>().mean();
}

/**
 * CSV emission in the library's standard dialect: age, radon, time, event.
 * Optional comment lines ('#'-prefixed, e.g. a config hash) precede the
 * header; the loader skips them.
 */
inline void write_csv(const SimulatedCohort& cohort, const std::string& path,
                      const std::string& comment_block = "") {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  out << comment_block;
  out << "age,radon,time,event\n";
  out.precision(17);
  for (long i = 0; i < cohort.n(); ++i)
    out << cohort.age(i) << ',' << cohort.radon(i) << ',' << cohort.time(i) << ','
        << cohort.event(i) << '\n';
  if (!out) throw data_error("write failed for " + path);
}

}  // namespace vsi
