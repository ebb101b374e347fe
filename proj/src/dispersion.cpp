#include "plume/dispersion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plume/errors.hpp"
#include "plume/rng.hpp"

namespace plume {

const double kThetaMin[9] = {0.0, 0.95, 0.0, 0.95, -0.1, -0.05, -0.05, -0.05, -0.05};
const double kThetaMax[9] = {0.2, 1.05, 0.2, 1.05, 0.1, 0.15, 0.15, 0.15, 0.15};

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
}

double evaluate_wind(const WindParams& wp, double x, double y, double t) {
  const double* th = wp.theta;
  const double t1 = 0.9 + th[0] * std::cos(2.0 * kPi * th[1] * t / 60.0);
  const double t2 = 0.9 + th[2] * std::cos(4.0 * kPi * th[3] * t / 60.0);
  const double t3 = 0.9 + 0.1 * th[4] * std::cos(2.0 * kPi * t / 60.0);
  const double xf = 1.0 + th[5] * std::sin(4.0 * kPi * t1 * x / 200.0) +
                    th[6] * std::cos(4.0 * kPi * t1 * x / 200.0) +
                    th[7] * std::sin(6.0 * kPi * t2 * x / 200.0) +
                    th[8] * std::cos(6.0 * kPi * t2 * x / 200.0);
  const double yf = 0.25 + 3.75 * t3 * std::sin(kPi * y / 20.0);
  return xf * yf;
}

double wind_speed_bound(const WindParams& wp) {
  const double* th = wp.theta;
  const double xmax = 1.0 + std::abs(th[5]) + std::abs(th[6]) +
                      std::abs(th[7]) + std::abs(th[8]);
  const double t3max = 0.9 + 0.1 * std::abs(th[4]);
  const double ymax = 0.25 + 3.75 * t3max;
  return xmax * ymax;
}

double source_profile(double x, double y) {
  const double ex = x - 5.0;
  const double ey = y - 9.0;
  return std::exp(-100.0 * ex * ex) * std::exp(-0.1 * ey * ey);
}

double terminal_speed(const PhysicalParams& p) {
  return std::sqrt((8.0 / 3.0) * (p.rho_so2 / p.rho_atmo) *
                   (p.gravity / p.drag_coeff) * p.particle_radius);
}

double source_magnitude_at(double eta1, double eta2, double t) {
  return 3e3 * eta1 * std::exp(-0.015 * eta2 * t);
}

Vec sample_source_magnitude(double eta1, double eta2, const GridSpec& grid) {
  Vec z(grid.n_steps);
  for (int n = 0; n < grid.n_steps; ++n) {
    z[n] = source_magnitude_at(eta1, eta2, grid.t(n));
  }
  return z;
}

WindParams sample_wind_params(std::uint64_t seed, double variability_scale) {
  Rng rng(seed);
  WindParams wp;
  wp.variability_scale = variability_scale;
  for (int k = 0; k < 9; ++k) {
    const double mid = 0.5 * (kThetaMin[k] + kThetaMax[k]);
    const double half = 0.5 * (kThetaMax[k] - kThetaMin[k]) * variability_scale;
    wp.theta[k] = rng.uniform(mid - half, mid + half);
  }
  return wp;
}

WindField synthesize_wind(const WindParams& wp, const GridSpec& grid) {
  WindField wind;
  wind.values.resize(grid.num_nodes(), grid.n_steps);
  for (int n = 0; n < grid.n_steps; ++n) {
    const double t = grid.t(n);
    for (int j = 0; j < grid.ny; ++j) {
      const double y = grid.y(j);
      for (int i = 0; i < grid.nx; ++i) {
        wind.values(grid.index(i, j), n) = evaluate_wind(wp, grid.x(i), y, t);
      }
    }
  }
  return wind;
}

int required_substeps(const GridSpec& grid, const PhysicalParams& p,
                      double wind_bound) {
  const double h = std::min(grid.dx(), grid.dy());
  double dt_max = 0.4 * h * h / (4.0 * p.kappa);
  if (wind_bound > 0.0) {
    dt_max = std::min(dt_max, 0.4 * grid.dx() / wind_bound);
  }
  if (p.settling_speed > 0.0) {
    dt_max = std::min(dt_max, 0.4 * grid.dy() / p.settling_speed);
  }
  return static_cast<int>(std::ceil(grid.dt() / dt_max - 1e-12));
}

namespace {

// Semi-discrete right-hand side: vertex-centered finite-volume diffusion
// (mirror stencil at boundaries), first-order upwind advection in advective
// form, pointwise reaction and source.
void rhs(const GridSpec& g, const PhysicalParams& p, const double* wind,
         const double* src_profile, double z, const Vec& u, Vec& out) {
  const int nx = g.nx;
  const int ny = g.ny;
  const double dx = g.dx();
  const double dy = g.dy();
  const double idx2 = p.kappa / (dx * dx);
  const double idy2 = p.kappa / (dy * dy);
  const double idx = 1.0 / dx;
  const double idy = 1.0 / dy;
  const double s = p.settling_speed;
  const double k = p.reaction_rate;
  const double* uu = u.data();
  double* oo = out.data();

  for (int j = 0; j < ny; ++j) {
    const int row = j * nx;
    for (int i = 0; i < nx; ++i) {
      const int q = row + i;
      const double uc = uu[q];

      double lap = 0.0;
      if (i > 0 && i < nx - 1) {
        lap += idx2 * (uu[q - 1] - 2.0 * uc + uu[q + 1]);
      } else if (i == 0) {
        lap += 2.0 * idx2 * (uu[q + 1] - uc);
      } else {
        lap += 2.0 * idx2 * (uu[q - 1] - uc);
      }
      if (j > 0 && j < ny - 1) {
        lap += idy2 * (uu[q - nx] - 2.0 * uc + uu[q + nx]);
      } else if (j == 0) {
        lap += 2.0 * idy2 * (uu[q + nx] - uc);
      } else {
        lap += 2.0 * idy2 * (uu[q - nx] - uc);
      }

      // Horizontal advection -w du/dx, upwinded by the sign of w; the
      // difference degenerates to zero at an inflow boundary node.
      const double w = wind[q];
      double adv = 0.0;
      if (w > 0.0) {
        if (i > 0) adv -= w * (uc - uu[q - 1]) * idx;
      } else if (w < 0.0) {
        if (i < nx - 1) adv -= w * (uu[q + 1] - uc) * idx;
      }
      // Settling +S du/dy (transport with velocity -S); upwind node above.
      if (s != 0.0 && j < ny - 1) {
        adv += s * (uu[q + nx] - uc) * idy;
      }

      oo[q] = lap + adv - k * uc + z * src_profile[q];
    }
  }
}

}  // namespace

StateTrajectory solve_pde(const Vec& source_magnitude, const WindField& wind,
                          const GridSpec& grid, const PhysicalParams& p,
                          const Vec* initial) {
  const int m = grid.num_nodes();
  const int n_steps = grid.n_steps;
  if (source_magnitude.size() != n_steps) {
    throw DimensionMismatch("solve_pde: source magnitude length != N");
  }
  if (wind.values.rows() != m || wind.values.cols() != n_steps) {
    throw DimensionMismatch("solve_pde: wind field shape mismatch");
  }
  double wind_bound = 0.0;
  if (wind.values.size() > 0) {
    wind_bound = wind.values.cwiseAbs().maxCoeff();
  }
  const int needed = required_substeps(grid, p, wind_bound);
  if (grid.substeps < needed) {
    throw StabilityViolation("solve_pde: substeps " +
                             std::to_string(grid.substeps) +
                             " below stability requirement " +
                             std::to_string(needed));
  }

  Vec profile(m);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      profile[grid.index(i, j)] = source_profile(grid.x(i), grid.y(j));
    }
  }

  StateTrajectory traj;
  traj.snapshots.setZero(m, n_steps + 1);
  Vec u = initial ? *initial : Vec::Zero(m);
  if (initial && initial->size() != m) {
    throw DimensionMismatch("solve_pde: initial state length mismatch");
  }
  traj.snapshots.col(0) = u;

  const double dt_sub = grid.dt() / grid.substeps;
  Vec k1(m), k2(m), u1(m);
  for (int n = 0; n < n_steps; ++n) {
    const double* w = wind.values.col(n).data();
    const double z = source_magnitude[n];
    for (int s = 0; s < grid.substeps; ++s) {
      rhs(grid, p, w, profile.data(), z, u, k1);
      u1 = u + dt_sub * k1;
      rhs(grid, p, w, profile.data(), z, u1, k2);
      u += (0.5 * dt_sub) * (k1 + k2);
    }
    if (!u.allFinite()) {
      throw NonFinite("solve_pde: non-finite state at step " +
                      std::to_string(n + 1));
    }
    traj.snapshots.col(n + 1) = u;
  }
  return traj;
}

StateTrajectory solve_pde(const Vec& source_magnitude, const WindParams& wp,
                          const GridSpec& grid, const PhysicalParams& p) {
  return solve_pde(source_magnitude, synthesize_wind(wp, grid), grid, p);
}

double total_mass(const Vec& state, const GridSpec& grid) {
  if (state.size() != grid.num_nodes()) {
    throw DimensionMismatch("total_mass: state length mismatch");
  }
  double sum = 0.0;
  for (int j = 0; j < grid.ny; ++j) {
    const double wy = (j == 0 || j == grid.ny - 1) ? 0.5 : 1.0;
    for (int i = 0; i < grid.nx; ++i) {
      const double wx = (i == 0 || i == grid.nx - 1) ? 0.5 : 1.0;
      sum += wx * wy * state[grid.index(i, j)];
    }
  }
  return sum * grid.dx() * grid.dy();
}

double relative_wind_distance(const WindField& w, const WindField& wbar) {
  if (w.values.rows() != wbar.values.rows() ||
      w.values.cols() != wbar.values.cols()) {
    throw DimensionMismatch("relative_wind_distance: shape mismatch");
  }
  const double ref = wbar.values.squaredNorm();
  if (ref == 0.0) {
    throw ZeroReference("relative_wind_distance: zero reference field");
  }
  return (w.values - wbar.values).squaredNorm() / ref;
}

std::vector<int> select_extreme_winds(const std::vector<WindField>& candidates,
                                      const WindField& wbar, int count) {
  if (count > static_cast<int>(candidates.size())) {
    throw DimensionMismatch("select_extreme_winds: count exceeds pool size");
  }
  std::vector<double> dist(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    dist[c] = relative_wind_distance(candidates[c], wbar);
  }
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist[a] > dist[b]; });
  order.resize(count);
  return order;
}

int select_test_wind(const std::vector<WindField>& candidates,
                     const std::vector<WindField>& training) {
  if (candidates.empty() || training.empty()) {
    throw DimensionMismatch("select_test_wind: empty input set");
  }
  int best = 0;
  double best_score = -1.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double mean = 0.0;
    for (const auto& tw : training) {
      mean += (candidates[c].values - tw.values).norm();
    }
    mean /= static_cast<double>(training.size());
    if (mean > best_score) {
      best_score = mean;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace plume
