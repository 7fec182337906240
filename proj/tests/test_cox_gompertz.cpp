#include <gtest/gtest.h>

#include "testutil.hpp"
#include "vsi/cox_gompertz.hpp"
#include "vsi/survival_data.hpp"

using testutil::TempDir;
using vsi::GompertzConfig;

TEST(Gompertz, TimeAndCdfAreExactInverses) {
  // F(T(u)) == 1 - u across a lattice of draws and covariate values
  const GompertzConfig cfg;
  double worst = 0.0;
  for (int iu = 1; iu <= 100; ++iu) {
    const double u = iu / 101.0;
    for (int ia = 0; ia < 10; ++ia) {
      for (int ir = 0; ir < 10; ++ir) {
        const double age = 5.0 + 5.0 * ia;
        const double radon = 1.0 + 150.0 * ir;
        const double t = vsi::gompertz_time(cfg, age, radon, u);
        ASSERT_GT(t, 0.0);
        const double F = vsi::truth_cdf(cfg, age, radon, t);
        worst = std::max(worst, std::abs(F - (1.0 - u)));
      }
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Gompertz, CdfShape) {
  const GompertzConfig cfg;
  EXPECT_EQ(vsi::truth_cdf(cfg, 30, 100, 0.0), 0.0);
  EXPECT_EQ(vsi::truth_cdf(cfg, 30, 100, -5.0), 0.0);
  double prev = 0.0;
  for (double t = 5.0; t <= 120.0; t += 5.0) {
    const double F = vsi::truth_cdf(cfg, 30.0, 100.0, t);
    EXPECT_GE(F, prev);
    EXPECT_LE(F, 1.0);
    prev = F;
  }
  // higher age means stochastically earlier events
  EXPECT_GT(vsi::truth_cdf(cfg, 50.0, 100.0, 40.0), vsi::truth_cdf(cfg, 20.0, 100.0, 40.0));
}

TEST(Gompertz, SimulateDeterministicAndUncensoredPreset) {
  GompertzConfig cfg;
  cfg.N = 500;
  cfg.seed = 11;
  const auto a = vsi::simulate(cfg);
  const auto b = vsi::simulate(cfg);
  EXPECT_TRUE(a.time == b.time);
  EXPECT_TRUE(a.age == b.age);
  cfg.seed = 12;
  EXPECT_FALSE(vsi::simulate(cfg).time == a.time);

  // no horizon: everyone is an event
  EXPECT_EQ(vsi::event_rate(a), 1.0);
  EXPECT_EQ(a.event.minCoeff(), 1);

  // covariate moments near their nominal values
  cfg.N = 20000;
  const auto big = vsi::simulate(cfg);
  EXPECT_NEAR(big.age.mean(), 24.3, 0.25);
  EXPECT_NEAR(big.radon.mean(), 266.8, 12.0);
  const double age_sd =
      std::sqrt((big.age.array() - big.age.mean()).square().sum() / (big.n() - 1));
  EXPECT_NEAR(age_sd, 8.4, 0.2);
}

TEST(Gompertz, CensoringHorizonsHitTargetRates) {
  GompertzConfig cfg;
  cfg.N = 20000;
  cfg.seed = 3;
  cfg.censor_horizon = 100.0;
  EXPECT_NEAR(vsi::event_rate(vsi::simulate(cfg)), 0.5, 0.02);
  cfg.censor_horizon = 70.0;
  EXPECT_NEAR(vsi::event_rate(vsi::simulate(cfg)), 0.3, 0.02);

  // censored records carry the censoring time, events the event time
  cfg.N = 200;
  const auto c = vsi::simulate(cfg);
  for (long i = 0; i < c.n(); ++i) {
    EXPECT_GE(c.time(i), 0.0);
    if (c.event(i) == 0) EXPECT_LE(c.time(i), 70.0);
  }
}

TEST(Gompertz, ValidateRejectsBadConfigs) {
  GompertzConfig cfg;
  cfg.censor_horizon = 0.0;
  EXPECT_THROW(cfg.validate(), vsi::config_error);
  cfg = GompertzConfig{};
  cfg.N = 0;
  EXPECT_THROW(vsi::simulate(cfg), vsi::config_error);
  cfg = GompertzConfig{};
  cfg.alpha = -1.0;
  EXPECT_THROW(cfg.validate(), vsi::config_error);
}

TEST(Gompertz, EmpiricalCdfMatchesTruth) {
  // at fixed covariates, the empirical CDF of simulated event times tracks
  // the analytic one within DKW-style tolerance
  const GompertzConfig cfg;
  const double age = 24.3, radon = 266.8;
  const int n = 1000000;
  vsi::Rng rng(2718);
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    t[static_cast<std::size_t>(i)] =
        vsi::gompertz_time(cfg, age, radon, rng.uniform_pos());
  std::sort(t.begin(), t.end());
  double sup = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double tq = t[static_cast<std::size_t>(static_cast<long long>(k) * (n - 1) / 199)];
    const double emp =
        static_cast<double>(std::upper_bound(t.begin(), t.end(), tq) - t.begin()) / n;
    sup = std::max(sup, std::abs(emp - vsi::truth_cdf(cfg, age, radon, tq)));
  }
  EXPECT_LT(sup, 0.005);
}

TEST(Gompertz, CsvRoundTripExact) {
  GompertzConfig cfg;
  cfg.N = 50;
  cfg.seed = 77;
  cfg.censor_horizon = 90.0;
  const auto cohort = vsi::simulate(cfg);
  TempDir dir("gz");
  const auto path = dir.file("cohort.csv");
  vsi::write_csv(cohort, path, "# config_hash = abc\n");

  vsi::ColumnRoles roles;
  const auto rows = vsi::load_csv(path, roles);
  ASSERT_EQ(rows.n(), 50);
  ASSERT_EQ(rows.covariate_names, (std::vector<std::string>{"age", "radon"}));
  for (int i = 0; i < 50; ++i) {
    // %.17g emission reparses bit-exactly
    EXPECT_EQ(std::stod(*rows.cells[static_cast<std::size_t>(i)][0]), cohort.age(i));
    EXPECT_EQ(std::stod(*rows.cells[static_cast<std::size_t>(i)][1]), cohort.radon(i));
    EXPECT_EQ(rows.time[static_cast<std::size_t>(i)], cohort.time(i));
    EXPECT_EQ(rows.event[static_cast<std::size_t>(i)], cohort.event(i));
  }
}
