#include "plume/pca.hpp"

#include <algorithm>
#include <cmath>

#include "plume/errors.hpp"

namespace plume {

namespace {

// Modified Gram-Schmidt pass; columns produced by the Gram-matrix route are
// already near-orthonormal, this drives them to machine precision without
// reordering.
void reorthonormalize(Mat& u) {
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    for (Eigen::Index prev = 0; prev < c; ++prev) {
      u.col(c) -= u.col(prev).dot(u.col(c)) * u.col(prev);
    }
    const double norm = u.col(c).norm();
    if (norm > 0.0) u.col(c) /= norm;
  }
}

void fix_signs(Mat& u) {
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      const double a = std::abs(u(r, c));
      if (a > best) {
        best = a;
        arg = r;
      }
    }
    if (u(arg, c) < 0.0) u.col(c) = -u.col(c);
  }
}

}  // namespace

PcaBasis fit_pca(const Mat& snapshots, int rank) {
  const Eigen::Index m = snapshots.rows();
  const Eigen::Index k = snapshots.cols();
  if (rank < 1 || rank > std::min(m, k)) {
    throw RankTooLarge("fit_pca: rank " + std::to_string(rank) +
                       " outside [1, min(m,K)]");
  }

  PcaBasis b;
  b.mean = snapshots.rowwise().mean();
  Mat centered = snapshots.colwise() - b.mean;

  b.singular_values.resize(rank);
  if (k <= m) {
    Mat gram(k, k);
    gram.noalias() = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
    b.basis.resize(m, rank);
    for (int c = 0; c < rank; ++c) {
      const Eigen::Index src = k - 1 - c;  // eigenvalues come out ascending
      const double lambda = std::max(eig.eigenvalues()[src], 0.0);
      const double sigma = std::sqrt(lambda);
      b.singular_values[c] = sigma;
      if (sigma > 0.0) {
        b.basis.col(c).noalias() = centered * (eig.eigenvectors().col(src) / sigma);
      } else {
        b.basis.col(c).setZero();
        b.basis(c % m, c) = 1.0;
      }
    }
  } else {
    Mat gram(m, m);
    gram.noalias() = centered * centered.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
    b.basis.resize(m, rank);
    for (int c = 0; c < rank; ++c) {
      const Eigen::Index src = m - 1 - c;
      b.singular_values[c] = std::sqrt(std::max(eig.eigenvalues()[src], 0.0));
      b.basis.col(c) = eig.eigenvectors().col(src);
    }
  }

  reorthonormalize(b.basis);
  fix_signs(b.basis);
  return b;
}

PcaBasis fit_pca_to_error(const Mat& snapshots, double error_target,
                          int max_rank) {
  const int cap = max_rank > 0
                      ? max_rank
                      : static_cast<int>(std::min(snapshots.rows(), snapshots.cols()));
  PcaBasis full = fit_pca(snapshots, cap);

  // Per-column squared residual as a function of rank, from the projection
  // coefficients of the full fit.
  Mat coeffs(cap, snapshots.cols());
  coeffs.noalias() = full.basis.transpose() * (snapshots.colwise() - full.mean);
  Vec col_sq = (snapshots.colwise() - full.mean).colwise().squaredNorm();
  Vec norms = snapshots.colwise().norm();

  int chosen = cap;
  for (int r = 1; r <= cap; ++r) {
    double worst = 0.0;
    for (Eigen::Index c = 0; c < snapshots.cols(); ++c) {
      if (norms[c] == 0.0) continue;
      double res = col_sq[c] - coeffs.col(c).head(r).squaredNorm();
      res = std::max(res, 0.0);
      worst = std::max(worst, std::sqrt(res) / norms[c]);
    }
    if (worst <= error_target) {
      chosen = r;
      break;
    }
  }

  PcaBasis b;
  b.mean = full.mean;
  b.basis = full.basis.leftCols(chosen);
  b.singular_values = full.singular_values.head(chosen);
  return b;
}

Vec project(const Vec& u, const PcaBasis& b) {
  if (u.size() != b.mean.size()) {
    throw DimensionMismatch("project: state length mismatch");
  }
  return b.basis.transpose() * (u - b.mean);
}

Vec reconstruct(const Vec& c, const PcaBasis& b) {
  if (c.size() != b.basis.cols()) {
    throw DimensionMismatch("reconstruct: coordinate length mismatch");
  }
  return b.mean + b.basis * c;
}

double reconstruction_error(const Mat& snapshots, const PcaBasis& b) {
  double worst = 0.0;
  for (Eigen::Index c = 0; c < snapshots.cols(); ++c) {
    const double norm = snapshots.col(c).norm();
    if (norm == 0.0) continue;
    Vec centered = snapshots.col(c) - b.mean;
    double res = centered.squaredNorm() - (b.basis.transpose() * centered).squaredNorm();
    res = std::max(res, 0.0);
    worst = std::max(worst, std::sqrt(res) / norm);
  }
  return worst;
}

}  // namespace plume
