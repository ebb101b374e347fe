#pragma once

#include <cstdint>
#include <vector>

#include "plume/common.hpp"

namespace plume {

/// Uniform node-centered grid over [0,200] km longitude x [0,20] km altitude.
/// Nodes are flattened x-fastest: index(i,j) = j*nx + i.
struct GridSpec {
  int nx = 201;
  int ny = 41;
  int n_steps = 120;       // N: output intervals; N+1 snapshots per trajectory
  double final_time = 60;  // minutes
  int substeps = 8;        // solver substeps per output interval

  static constexpr double x_extent = 200.0;
  static constexpr double y_extent = 20.0;

  double dx() const { return x_extent / (nx - 1); }
  double dy() const { return y_extent / (ny - 1); }
  double dt() const { return final_time / n_steps; }
  int num_nodes() const { return nx * ny; }
  double x(int i) const { return i * dx(); }
  double y(int j) const { return j * dy(); }
  int index(int i, int j) const { return j * nx + i; }
  double t(int n) const { return n * dt(); }
};

/// Transport constants; defaults reproduce the reference configuration.
struct PhysicalParams {
  double kappa = 0.1;                 // diffusivity, km^2/min
  double settling_speed = 1.705e-4;   // terminal fall speed S, km/min
  double rho_so2 = 2.92;              // kg/m^3
  double rho_atmo = 1.28;             // kg/m^3
  double gravity = 35.316;            // km/min^2
  double drag_coeff = 0.38;
  double particle_radius = 5e-11;     // km
  double reaction_rate = 1.0 / 44640.0;  // e-folding depletion, 1/min
};

/// Nine-coefficient wind generator. variability_scale shrinks each sampling
/// interval about its midpoint (1.0 = greater case, 0.35 = lesser case).
struct WindParams {
  double theta[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  double variability_scale = 1.0;
};

/// State snapshots, one column per time node; column 0 is the initial state.
struct StateTrajectory {
  Mat snapshots;  // m x (N+1)
};

/// Wind values at grid nodes at interval-start times t_0..t_{N-1}.
struct WindField {
  Mat values;  // m x N
};

// Sampling intervals for each wind coefficient (greater-variability case).
extern const double kThetaMin[9];
extern const double kThetaMax[9];

/// Longitudinal wind speed w(x,y,t) in km/min.
double evaluate_wind(const WindParams& wp, double x, double y, double t);

/// Upper bound on |w| over the whole space-time domain for these coefficients.
double wind_speed_bound(const WindParams& wp);

/// Stationary spatial profile of the emission source.
double source_profile(double x, double y);

/// Terminal fall speed from the force balance (gravity vs. drag).
double terminal_speed(const PhysicalParams& p);

/// Source magnitude z(t) = 3e3 * eta1 * exp(-0.015 * eta2 * t).
double source_magnitude_at(double eta1, double eta2, double t);

/// z evaluated at the interval-start times t_0..t_{N-1}.
Vec sample_source_magnitude(double eta1, double eta2, const GridSpec& grid);

/// Independent uniform draws of the nine coefficients on the scaled intervals.
WindParams sample_wind_params(std::uint64_t seed, double variability_scale);

/// Wind evaluated on the grid at times t_0..t_{N-1}.
WindField synthesize_wind(const WindParams& wp, const GridSpec& grid);

/// Smallest substep count satisfying the explicit stability bound
/// dt_sub <= 0.4 * min(min(dx,dy)^2/(4 kappa), dx/max|w|, dy/S).
int required_substeps(const GridSpec& grid, const PhysicalParams& p,
                      double wind_bound);

/// Advance the advection-diffusion-reaction model, emitting N+1 snapshots.
/// Wind and source values are held constant over each output interval.
/// `initial` (tests only) replaces the zero initial condition.
StateTrajectory solve_pde(const Vec& source_magnitude, const WindField& wind,
                          const GridSpec& grid, const PhysicalParams& p,
                          const Vec* initial = nullptr);

StateTrajectory solve_pde(const Vec& source_magnitude, const WindParams& wp,
                          const GridSpec& grid, const PhysicalParams& p);

/// Discrete integral of a state vector (trapezoidal node weights, matching
/// the solver's finite-volume cells, times dx*dy); conserved by the
/// diffusive flux exactly.
double total_mass(const Vec& state, const GridSpec& grid);

/// Squared-norm ratio ||w - wbar||^2 / ||wbar||^2.
double relative_wind_distance(const WindField& w, const WindField& wbar);

/// Indices of the `count` candidates farthest from the mean field, ordered by
/// descending distance; ties resolved toward the lower index.
std::vector<int> select_extreme_winds(const std::vector<WindField>& candidates,
                                      const WindField& wbar, int count);

/// Candidate index maximizing the mean plain-l2 distance to the training
/// winds; ties resolved toward the lower index.
int select_test_wind(const std::vector<WindField>& candidates,
                     const std::vector<WindField>& training);

}  // namespace plume
