#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "plume/common.hpp"
#include "plume/dispersion.hpp"
#include "plume/flownet.hpp"
#include "plume/pca.hpp"

namespace plume {

/// Linear sampling of the physical state at fixed sensor locations. Each row
/// holds the bilinear interpolation weights of one sensor (nonnegative,
/// summing to 1).
struct ObservationOperator {
  Mat selection;                              // L x m
  std::vector<std::pair<double, double>> locations;
  int size() const { return static_cast<int>(selection.rows()); }
};

/// Sensors placed at `count` equally spaced longitudes in [x_min, x_max],
/// cycling through the given altitudes.
ObservationOperator make_sensor_layout(const GridSpec& grid, int count,
                                       double x_min, double x_max,
                                       const std::vector<double>& altitudes);

/// Observations stacked over time: column n holds the sensor values at
/// t_{n+1} (the initial state is never observed).
struct ObservationSet {
  Mat values;  // L x N
  Vec stacked() const {
    Vec out(values.size());
    for (Eigen::Index n = 0; n < values.cols(); ++n) {
      out.segment(n * values.rows(), values.rows()) = values.col(n);
    }
    return out;
  }
};

Vec observe(const Vec& state, const ObservationOperator& op);

/// Surrogate predictions of the observations for a given source magnitude:
/// roll the network from the reduced initial state with the supplied reduced
/// wind sequence, reconstruct (mean added back), observe at each step.
ObservationSet predict_observables(const Vec& source_magnitude,
                                   const Mat& wind_reduced, const FlowNet& net,
                                   const PcaBasis& state_basis,
                                   const ObservationOperator& op);

/// Multiplicative Gaussian noise: d = obs .* (1 + noise_rel * xi).
ObservationSet make_test_observations(const StateTrajectory& truth,
                                      const ObservationOperator& op,
                                      double noise_rel, std::uint64_t seed);

/// Abstract parameter-to-observable map exposing matrix-free Jacobian
/// actions at the most recent evaluation point.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual void set_point(const Vec& z) = 0;
  virtual const Vec& prediction() const = 0;
  virtual Vec apply_jacobian(const Vec& v) const = 0;
  virtual Vec apply_jacobian_transpose(const Vec& y) const = 0;
};

/// Surrogate-backed forward map. set_point rolls the network once, caching
/// the per-step states and network Jacobians; both Jacobian actions then run
/// as cheap recursions over the cache without ever forming the full matrix.
class SurrogateForward final : public ForwardModel {
 public:
  SurrogateForward(FlowNet net, const PcaBasis& state_basis, Mat wind_reduced,
                   const ObservationOperator& op);

  int input_dim() const override { return n_steps_; }
  int output_dim() const override { return static_cast<int>(obs_reduced_.rows()) * n_steps_; }
  void set_point(const Vec& z) override;
  const Vec& prediction() const override;
  Vec apply_jacobian(const Vec& v) const override;
  Vec apply_jacobian_transpose(const Vec& y) const override;

  const FlowNet& net() const { return net_; }

 private:
  void ensure_fresh() const;

  FlowNet net_;
  Mat wind_reduced_;  // r_w x N
  Mat obs_reduced_;   // L x r  (selection composed with the basis)
  Vec obs_mean_;      // L      (selection applied to the mean)
  Vec c0_;            // reduced initial state
  int n_steps_ = 0;

  bool fresh_ = false;
  Vec prediction_;
  std::vector<Mat> jac_state_;  // per step, r x r
  std::vector<Vec> jac_source_;  // per step, r
};

/// Full-order forward map backed by the PDE solver (test hook; Jacobian
/// actions by linearity of the solver in the source).
class PdeForward final : public ForwardModel {
 public:
  PdeForward(GridSpec grid, PhysicalParams params, WindField wind,
             const ObservationOperator& op);

  int input_dim() const override { return grid_.n_steps; }
  int output_dim() const override {
    return static_cast<int>(op_.selection.rows()) * grid_.n_steps;
  }
  void set_point(const Vec& z) override;
  const Vec& prediction() const override;
  Vec apply_jacobian(const Vec& v) const override;
  Vec apply_jacobian_transpose(const Vec& y) const override;

 private:
  Vec run(const Vec& z) const;

  GridSpec grid_;
  PhysicalParams params_;
  WindField wind_;
  ObservationOperator op_;
  bool fresh_ = false;
  Vec prediction_;
};

}  // namespace plume
