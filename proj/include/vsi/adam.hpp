#pragma once

// Adam optimizer with bias correction, operating on a fixed registry of
// named parameter tensors. Deterministic: the update is a pure function of
// (state, gradients).

#include "vsi/common.hpp"
#include "vsi/mlp.hpp"

#include <vector>

namespace vsi {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<ParamRef> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.push_back(Mat::Zero(p.mat->rows(), p.mat->cols()));
      v_.push_back(Mat::Zero(p.mat->rows(), p.mat->cols()));
    }
  }

  const std::vector<ParamRef>& params() const { return params_; }
  long step_count() const { return step_; }

  /** One update; grads[i] must be shaped like params()[i]. */
  void step(const std::vector<Mat>& grads) {
    if (grads.size() != params_.size())
      throw numeric_error("adam: gradient count mismatch");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Mat& gI = grads[i];
      if (!gI.allFinite())
        throw numeric_error("adam: non-finite gradient for parameter " + params_[i].name);
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * gI;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * gI.cwiseProduct(gI);
      const Mat m_hat = m_[i] / bc1;
      const Mat v_hat = v_[i] / bc2;
      params_[i].mat->array() -=
          cfg_.learning_rate * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
    }
  }

 private:
  std::vector<ParamRef> params_;
  AdamConfig cfg_;
  std::vector<Mat> m_, v_;
  long step_ = 0;
};

}  // namespace vsi
