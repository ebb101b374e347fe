#pragma once

#include "plume/common.hpp"

namespace plume {

/// Truncated PCA of a snapshot ensemble: mean, column-orthonormal basis, and
/// singular values of the centered snapshot matrix, sorted descending. Column
/// signs are fixed so the largest-magnitude entry of each column is positive.
struct PcaBasis {
  Vec mean;             // length m
  Mat basis;            // m x r, orthonormal columns
  Vec singular_values;  // length r, non-increasing
  int rank() const { return static_cast<int>(basis.cols()); }
};

/// Fit on raw (uncentered) snapshots, one per column. The thin SVD is taken
/// through the Gram matrix of whichever dimension is smaller.
PcaBasis fit_pca(const Mat& snapshots, int rank);

/// Smallest rank whose max relative reconstruction error on the fitting set
/// is <= `error_target`, then fit at that rank.
PcaBasis fit_pca_to_error(const Mat& snapshots, double error_target,
                          int max_rank = 0);

/// Reduced coordinates of a state vector: basis^T (u - mean).
Vec project(const Vec& u, const PcaBasis& b);

/// mean + basis * c.
Vec reconstruct(const Vec& c, const PcaBasis& b);

/// Max over columns of ||u - reconstruct(project(u))|| / ||u||, skipping
/// zero-norm columns.
double reconstruction_error(const Mat& snapshots, const PcaBasis& b);

}  // namespace plume
