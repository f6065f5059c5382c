#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "collapse/rff.hpp"
#include "collapse/sde.hpp"

namespace collapse {

/// Observability coefficient estimate: the fraction of error-martingale
/// variance explained by the terminal state,
///   eta = Var(E[M | Y_end]) / Var(M),
/// with the conditional mean approximated by a cross-fitted feature ridge
/// regression. Any finite regressor under-predicts the conditional mean's
/// variance, so the estimate is conservative (biased toward 0).
struct EtaEstimate {
  double eta = 0.0;        // clamped to [0, 1]
  double std_error = 0.0;  // leave-one-fold-out jackknife
  double var_m = 0.0;
  double var_prediction = 0.0;  // out-of-fold, pre-clamp numerator
  int n_features = 0;
  double ridge = 0.0;
  int64_t n_paths = 0;
};

/// Regresses the batch's martingale accumulator on its terminal states with
/// random Fourier features + ridge, n_folds-cross-fitted: every prediction
/// comes from a model that never saw its row. var_m below 1e-12 returns
/// eta = 0 by convention.
EtaEstimate estimate_eta(const TrajectoryBatch& batch, int feature_dim, double ridge,
                         uint64_t key, int n_folds = 5);

struct ProbeRow {
  std::string perturbation;
  double scale = 0.0;
  double eps_star_sq = 0.0;
  double eps_star_se = 0.0;
  EtaEstimate eta;
  uint64_t seed = 0;
};

struct ProbeConfig {
  double target_energy = 0.25;  // common pathwise error energy across classes
  double tolerance = 0.05;      // relative match requirement
  int max_calibration_rounds = 12;
  int64_t n_paths = 2500;
  DiffusionSchedule schedule;
  int feature_dim = 512;
  double ridge = 1e-4;
};

/// Equal-energy perturbation comparison: each class's magnitude is searched
/// so the ideal-path error energy matches cfg.target_energy within
/// cfg.tolerance (zero-magnitude classes are left as controls), then eta is
/// estimated from a paired run. Deterministic given (classes, cfg, seed).
std::vector<ProbeRow> perturbation_probe(std::shared_ptr<const ScoreField> base,
                                         const std::vector<Perturbation>& classes,
                                         const ProbeConfig& cfg, uint64_t seed);

}  // namespace collapse
