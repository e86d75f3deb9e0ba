#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lanerl/core.hpp"
#include "lanerl/rng.hpp"

namespace lanerl::net {

/// Dense row-major matrix. Small on purpose: the fixed MLP below is the only
/// consumer, and double precision keeps gradient checks tight.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
};

struct Layer {
  Mat w;                  // [out x in]
  std::vector<double> b;  // [out]
};

/// Feed-forward network with ReLU hidden layers and a linear output head.
/// dims = [input, hidden..., output].
struct Mlp {
  std::vector<int> dims;
  std::vector<Layer> layers;
};

/// Default hidden widths for the driving networks.
inline const std::vector<int> kDefaultHidden = {256, 128, 128, 64};

/// Seeded fan-in init: weights and biases uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Mlp make_mlp(const std::vector<int>& dims, Rng& rng);

int param_count(const Mlp& p);

/// Activations recorded by a forward pass; backward_batch needs them.
struct ForwardCache {
  Mat input;              // [B x dims.front()]
  std::vector<Mat> post;  // per layer: post-ReLU for hidden, raw for the last
};

/// Runs the batch through the network; returns raw outputs [B x dims.back()].
/// Pass a cache to enable a subsequent backward pass.
Mat forward_batch(const Mlp& p, const Mat& inputs, ForwardCache* cache = nullptr);

struct Grads {
  std::vector<Layer> layers;  // same shapes as the Mlp
};

Grads zero_grads(const Mlp& p);

/// Exact reverse-mode gradients of a scalar loss given d(loss)/d(output).
/// Accumulates into `out`. Throws StateError if the cache does not match a
/// forward pass of this network, ShapeError on dimension mismatch.
void backward_batch(const Mlp& p, const ForwardCache& cache, const Mat& d_output, Grads* out);

/// Numerically stable softmax / log-softmax over one logit vector.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

/// Policy head: softmax over the output logits.
PolicyDistribution forward_actor(const Mlp& p, std::span<const double> obs);

/// Q head: one value per action, linear.
std::vector<double> forward_critic(const Mlp& p, std::span<const double> obs);

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<Layer> m;  // first moments, same shapes as params
  std::vector<Layer> v;  // second moments
  long step = 0;
};

AdamState make_adam(const Mlp& p, const AdamConfig& cfg = {});

/// One bias-corrected Adam update in place.
void adam_step(Mlp& p, const Grads& g, AdamState& st);

/// Central-difference check of `analytic` against loss_fn on a random subset
/// of at least `min_coords` parameter coordinates (all of them if the network
/// is smaller). Returns the max relative error with denominator
/// max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const std::function<double(const Mlp&)>& loss_fn, const Mlp& p,
                         const Grads& analytic, double h, int min_coords, Rng& rng);

/// Versioned little-endian binary checkpoint with a shape header.
/// Round trips are bit-exact.
void save_params(const Mlp& p, const std::string& path);
Mlp load_params(const std::string& path);

}  // namespace lanerl::net
