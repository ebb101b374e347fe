#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "plume/common.hpp"

namespace plume {

enum class Activation { Elu, Identity };  // Identity is a test hook

/// Residual one-step surrogate in reduced coordinates:
///   next = c + dt * out_scale .* net([c; z; w] ./ in_scale)
/// with a dense feedforward core (hidden layers of equal width, linear
/// output). The diagonal input/output scalings are fixed at setup from data
/// statistics and are not trained.
struct FlowNet {
  int state_dim = 0;  // r
  int wind_dim = 0;   // r_w
  double dt = 0.0;
  Activation activation = Activation::Elu;
  std::vector<Mat> weights;  // hidden layers then output layer
  std::vector<Vec> biases;
  Vec input_scale;   // length r + 1 + r_w
  Vec output_scale;  // length r

  int input_dim() const { return state_dim + 1 + wind_dim; }
  int hidden_depth() const { return static_cast<int>(weights.size()) - 1; }
  Eigen::Index parameter_count() const;
  Vec flatten() const;
  void unflatten(const Vec& params);
};

/// Uniform Glorot draw on +-sqrt(6/(fan_in+fan_out)) for a (rows x cols)
/// weight acting on column vectors (fan_in = cols).
Mat glorot_init(int rows, int cols, std::uint64_t seed);

/// Fresh network with Glorot weights, zero biases, unit scales.
FlowNet make_flownet(int state_dim, int wind_dim, double dt, int width,
                     int depth, std::uint64_t seed);

Vec net_forward(const FlowNet& net, const Vec& c, double z, const Vec& w);

struct NetJacobians {
  Mat dc;  // r x r, includes the identity residual term
  Vec dz;  // r
  Mat dw;  // r x r_w
};
NetJacobians net_jacobians(const FlowNet& net, const Vec& c, double z,
                           const Vec& w);

/// Left-fold of net_forward over p = z_seq.size() steps.
Vec compose(const FlowNet& net, const Vec& c0, const Vec& z_seq,
            const Mat& w_seq);

/// Reduced trajectories with per-step source and wind inputs. The two
/// optional norm channels carry ||u_n||^2 and the squared full-order PCA
/// truncation residual per snapshot, which make full-state validation errors
/// computable without the full-order snapshots.
struct ReducedDataset {
  double dt = 0.0;          // step size of the trajectories
  std::vector<Mat> coords;  // each r x (N+1)
  std::vector<Vec> source;  // each N
  std::vector<Mat> wind;    // each r_w x N

  std::vector<Vec> state_sqnorm;     // each N+1, optional
  std::vector<Vec> pca_residual_sq;  // each N+1, optional

  int num_trajectories() const { return static_cast<int>(coords.size()); }
  int n_steps() const {
    return coords.empty() ? 0 : static_cast<int>(coords.front().cols()) - 1;
  }
};

/// Composition training loss: sum over trajectories i, anchors n and
/// horizons p = 1..min(P, N-n) of the squared l2 error of the p-fold
/// composed prediction started at c_n. No averaging.
double loss(const ReducedDataset& data, const FlowNet& net, int horizon);

/// Exact gradient of `loss` with respect to the flattened parameters.
Vec loss_gradient(const ReducedDataset& data, const FlowNet& net, int horizon);

std::pair<double, Vec> loss_and_gradient(const ReducedDataset& data,
                                         const FlowNet& net, int horizon);

struct TrainConfig {
  int composition_horizon = 25;  // P
  int epochs = 2000;
  double learning_rate = 0.0008;
  double decay_rate = 0.04;  // staircase: lr * (1-decay)^floor(epoch/1000)
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  int batch = 0;  // anchor pairs per step; 0 = full batch
  int width = 200;
  int depth = 2;
  int val_every = 100;
};

struct AdamState {
  Vec first_moment;
  Vec second_moment;
  long step = 0;
};

/// One Adam update with bias correction at the scheduled learning rate.
void adam_step(Vec& params, const Vec& grad, AdamState& state,
               const TrainConfig& cfg, int epoch);

double scheduled_learning_rate(const TrainConfig& cfg, int epoch);

struct TrainResult {
  FlowNet net;
  std::vector<double> loss_history;                 // one entry per epoch
  std::vector<std::pair<int, double>> val_history;  // (epoch, error)
  int best_epoch = -1;
  double best_val = 0.0;
};

/// Full training loop; returns the best-validation parameters when a
/// validation set is supplied, otherwise the final ones.
TrainResult train(const ReducedDataset& training,
                  const ReducedDataset* validation, const TrainConfig& cfg);

/// Mean over trajectories and steps of the squared relative full-state error
/// of the n-fold composed prediction from c_0 (uses the dataset's norm
/// channels; falls back to reduced-space norms when they are absent).
double validation_error(const ReducedDataset& data, const FlowNet& net);

void save_flownet(const std::string& dir, const FlowNet& net);
FlowNet load_flownet(const std::string& dir);

}  // namespace plume
