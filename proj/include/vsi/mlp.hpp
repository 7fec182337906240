#pragma once

// Dense multilayer perceptron: leaky-ReLU hidden layers, identity output,
// He fan-in initialization. Provides both a plain batched forward pass and
// a tape-building forward for gradient computation.

#include "vsi/autodiff.hpp"
#include "vsi/common.hpp"

#include <string>
#include <vector>

namespace vsi {

struct Mlp {
  // widths = [in, h1, ..., out]; weights[l] is widths[l] x widths[l+1],
  // biases[l] is 1 x widths[l+1].
  std::vector<int> widths;
  std::vector<Mat> weights;
  std::vector<Mat> biases;
  double leaky_slope = 0.2;

  int n_layers() const { return static_cast<int>(weights.size()); }
  int in_width() const { return widths.front(); }
  int out_width() const { return widths.back(); }

  long param_count() const {
    long n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += weights[l].size() + biases[l].size();
    return n;
  }
};

inline Mlp make_mlp(const std::vector<int>& widths, Rng& rng, double leaky_slope = 0.2) {
  if (widths.size() < 2) throw config_error("make_mlp: need at least input and output widths");
  Mlp net;
  net.widths = widths;
  net.leaky_slope = leaky_slope;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    net.weights.push_back(rng.normal_mat(fan_in, fan_out) * sd);
    net.biases.push_back(Mat::Zero(1, fan_out));
  }
  return net;
}

/** Batched forward pass; rows of x are independent inputs. */
inline Mat mlp_forward(const Mlp& net, const Mat& x) {
  if (x.cols() != net.in_width())
    throw data_error("mlp_forward: input width " + std::to_string(x.cols()) +
                     " does not match net input " + std::to_string(net.in_width()));
  Mat h = x;
  for (int l = 0; l < net.n_layers(); ++l) {
    h = (h * net.weights[static_cast<std::size_t>(l)]).rowwise() +
        net.biases[static_cast<std::size_t>(l)].row(0);
    if (l + 1 < net.n_layers())
      h = (h.array() > 0.0).select(h, net.leaky_slope * h);
  }
  return h;
}

/** Tape leaves for one network's parameters, in layer order (W0,b0,W1,b1,...). */
struct MlpVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

inline MlpVars mlp_leaves(ad::Tape& tape, const Mlp& net) {
  MlpVars v;
  for (int l = 0; l < net.n_layers(); ++l) {
    v.weights.push_back(tape.leaf(net.weights[static_cast<std::size_t>(l)]));
    v.biases.push_back(tape.leaf(net.biases[static_cast<std::size_t>(l)]));
  }
  return v;
}

inline ad::Var mlp_forward_tape(ad::Tape& tape, const Mlp& net, const MlpVars& vars,
                                ad::Var x) {
  ad::Var h = x;
  for (int l = 0; l < net.n_layers(); ++l) {
    h = tape.affine(h, vars.weights[static_cast<std::size_t>(l)],
                    vars.biases[static_cast<std::size_t>(l)]);
    if (l + 1 < net.n_layers()) h = tape.leaky_relu(h, net.leaky_slope);
  }
  return h;
}

/** Named reference to one trainable tensor; the unit Adam operates on. */
struct ParamRef {
  std::string name;
  Mat* mat;
};

inline void collect_params(const std::string& prefix, Mlp& net, std::vector<ParamRef>& out) {
  for (int l = 0; l < net.n_layers(); ++l) {
    out.push_back({prefix + ".W" + std::to_string(l), &net.weights[static_cast<std::size_t>(l)]});
    out.push_back({prefix + ".b" + std::to_string(l), &net.biases[static_cast<std::size_t>(l)]});
  }
}

}  // namespace vsi
