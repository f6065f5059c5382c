#pragma once

#include <Eigen/Dense>
#include <string>

#include "collapse/rng.hpp"

namespace collapse {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Softmax-weighted Gaussian kernel sums over a fixed center set.
///
/// For query rows x_i, center rows c_j, shared variance v and log-weights
/// lw_j (uniform log(1/m) when empty):
///   e_ij        = lw_j - ||x_i - c_j||^2 / (2v)
///   log_sum_i   = log sum_j exp(e_ij)
///   center_mean_i = sum_j softmax_j(e_ij) * c_j
///
/// log_sum excludes the Gaussian constant -(d/2) log(2 pi v); callers add it.
/// Requires lw_j <= 0 (probability weights). Row-tiled and thread-parallel
/// with bit-identical output for any worker count.
struct SoftKernelSum {
  static void eval(const Mat& centers, const Vec& log_weights, double var,
                   const Mat& queries, Vec* log_sum, Mat* center_mean);
};

/// Isotropic Gaussian mixture: K components, shared scale sigma.
struct GaussianMixture {
  Vec weights;
  Mat means;  // K x dim
  double sigma = 1.0;
  int dim = 0;

  void validate() const;

  /// Five clusters in R^dim (dim >= 2): one at the origin and four at
  /// (+-4, +-4), embedded in the first two coordinates.
  static GaussianMixture five_cluster(int dim = 10, double sigma = 0.6);

  std::string to_json() const;
  static GaussianMixture from_json(const std::string& text);
};

/// Forward marginal at time t: means scaled by a_t, component variance
/// a_t^2 sigma^2 + (1 - a_t^2). Weights unchanged. Rejects t < 0 or non-finite.
GaussianMixture diffused_mixture(const GaussianMixture& g, double t);

/// Log density at time 0, stable log-sum-exp over components.
double log_density(const GaussianMixture& g, const Vec& x);

/// Gradient of the log density of diffused_mixture(g, t) at x.
Vec analytic_score(const GaussianMixture& g, const Vec& x, double t);

/// n i.i.d. draws: categorical component, then isotropic Gaussian.
Mat sample(const GaussianMixture& g, int64_t n, SeqRng& rng);

/// Batch log density and/or score of the diffused mixture at time t.
/// Either output may be null.
void gmm_eval_batch(const GaussianMixture& g, double t, const Mat& queries,
                    Vec* log_dens, Mat* score);

/// Posterior component responsibilities of the diffused mixture at x.
Vec responsibilities(const GaussianMixture& g, const Vec& x, double t);

}  // namespace collapse
