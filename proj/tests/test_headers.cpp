// Every public header must compile together in one translation unit.

#include "vsi/adam.hpp"
#include "vsi/autodiff.hpp"
#include "vsi/baselines.hpp"
#include "vsi/common.hpp"
#include "vsi/cox_gompertz.hpp"
#include "vsi/experiment.hpp"
#include "vsi/inference.hpp"
#include "vsi/metrics.hpp"
#include "vsi/mlp.hpp"
#include "vsi/model.hpp"
#include "vsi/survival_data.hpp"
#include "vsi/time_grid.hpp"
#include "vsi/vsi_model.hpp"

#include <gtest/gtest.h>

TEST(Headers, CompileAndLink) {
  vsi::Rng rng(7);
  EXPECT_NE(rng.next_u64(), 0u);
}
