#pragma once

#include <cstdint>

#include "collapse/gmm.hpp"

namespace collapse {

/// Random Fourier feature map for the Gaussian kernel with a shared
/// lengthscale: phi(x) = sqrt(2/F) cos(Omega x + phase), Omega ~ N(0, 1/l^2).
struct RffMap {
  Mat omega;  // F x d
  Vec phase;  // F
  double lengthscale = 1.0;

  int n_features() const { return static_cast<int>(omega.rows()); }
  int dim() const { return static_cast<int>(omega.cols()); }

  static RffMap make(int n_features, int dim, double lengthscale, uint64_t key);

  /// n x F feature matrix. Row-local, deterministic.
  Mat features(const Mat& x) const;
};

/// Median pairwise Euclidean distance over a subsample of at most max_points
/// rows. Returns 1.0 when the subsample is degenerate (all points equal).
double median_pairwise_distance(const Mat& x, uint64_t key, int64_t max_points = 2000);

/// Linear head over a feature map. predict() returns the linear response
/// (for the logistic fit that is the log-odds).
struct LinearModel {
  Vec beta;
  double intercept = 0.0;
};

/// Ridge regression minimizing mean squared error + lambda ||beta||^2
/// (intercept unpenalized), solved in closed form. Feature products are
/// accumulated in fixed row tiles, so the fit is deterministic.
LinearModel ridge_fit(const RffMap& map, const Mat& x, const Vec& y, double lambda);

/// L2-regularized logistic regression (mean log-loss + lambda ||beta||^2,
/// intercept unpenalized) by full-batch Newton iterations. Deterministic:
/// fixed start, fixed iteration cap, exact linear solves.
LinearModel logistic_fit(const RffMap& map, const Mat& x, const Vec& y01, double lambda,
                         int max_iter = 60, double tol = 1e-10);

/// Tiled evaluation of the linear response on raw inputs.
Vec predict(const RffMap& map, const LinearModel& model, const Mat& x);

}  // namespace collapse
