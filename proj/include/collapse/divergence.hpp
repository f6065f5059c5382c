#pragma once

#include <cstdint>
#include <memory>

#include "collapse/rff.hpp"
#include "collapse/score_field.hpp"

namespace collapse {

enum class DivergenceMethod { ExactRatio, KdeRatio, ClassifierRatio };

const char* divergence_method_name(DivergenceMethod m);

/// Monte Carlo divergence estimate. `value` may fluctuate slightly negative;
/// clamping happens at reporting time, never here.
struct DivergenceEstimate {
  double value = 0.0;
  double std_error = 0.0;
  DivergenceMethod method = DivergenceMethod::ExactRatio;
  int64_t n_eval = 0;
  int64_t n_capped = 0;
  bool cap_flagged = false;  // capped fraction above 1e-4
};

/// Winsorization threshold for pointwise log ratios.
double log_ratio_cap();

/// chi^2(num || den) = E_den[(num/den - 1)^2] from log ratios evaluated at
/// points drawn from the denominator. Log ratios beyond +-log_ratio_cap()
/// are clamped and counted.
DivergenceEstimate chi2_from_log_ratio(const Vec& log_ratio_at_den_points,
                                       DivergenceMethod method = DivergenceMethod::ExactRatio);

/// KL(num || den) = E_num[log(num/den)] from log ratios evaluated at points
/// drawn from the numerator.
DivergenceEstimate kl_from_log_ratio(const Vec& log_ratio_at_num_points,
                                     DivergenceMethod method = DivergenceMethod::ExactRatio);

/// Exact-ratio estimators: both log densities evaluated at the given points.
DivergenceEstimate chi2_exact_ratio(const DensityScoreField& num, const DensityScoreField& den,
                                    const Mat& den_points);
DivergenceEstimate kl_exact_ratio(const DensityScoreField& num, const DensityScoreField& den,
                                  const Mat& num_points);

/// Kernel density model of a sample set (the t = 0 face of the kernel score
/// system); its log density integrates to one analytically.
std::shared_ptr<const DensityScoreField> density_from_samples(const Mat& samples, double h);

/// Closed-form divergences between isotropic Gaussians N(m0, v0 I), N(m1, v1 I).
/// gaussian_chi2 returns +inf when 2 v1 <= v0 (the ratio is not square-integrable).
double gaussian_chi2(const Vec& m0, double v0, const Vec& m1, double v1);
double gaussian_kl(const Vec& m0, double v0, const Vec& m1, double v1);

/// Classifier-based log-density-ratio model: balanced logistic regression on
/// random Fourier features; the logit output estimates log(num/den).
struct RatioModel {
  RffMap map;
  LinearModel model;
  double cap = 0.0;
  bool separable_flag = false;  // training responses hit the cap

  /// Capped log-ratio estimates at x.
  Vec log_ratio(const Mat& x) const;
};

RatioModel classifier_ratio(const Mat& samples_num, const Mat& samples_den, int feature_dim,
                            double ridge, uint64_t key);

/// chi^2 through the classifier ratio: E_den[(e^{r_hat} - 1)^2].
DivergenceEstimate chi2_classifier(const RatioModel& ratio, const Mat& den_points);

}  // namespace collapse
