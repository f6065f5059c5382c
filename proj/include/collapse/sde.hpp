#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "collapse/schedule.hpp"
#include "collapse/score_field.hpp"

namespace collapse {

/// Raised when more than 0.1% of a batch's paths hit non-finite states.
class AbortRateError : public std::runtime_error {
 public:
  AbortRateError(int64_t aborted, int64_t total, int first_step)
      : std::runtime_error("path abort rate exceeded: " + std::to_string(aborted) + "/" +
                           std::to_string(total) + " paths, first at step " +
                           std::to_string(first_step)),
        aborted_(aborted),
        total_(total) {}
  int64_t aborted() const { return aborted_; }
  int64_t total() const { return total_; }

 private:
  int64_t aborted_, total_;
};

/// An ensemble of reverse paths: terminal states at t0 plus, per path, the
/// accumulated error martingale M, its quadratic variation <M> (which is the
/// same accumulator as the pathwise error energy), and log Z = M - <M>/2.
struct TrajectoryBatch {
  Mat states;
  Vec martingale_m;
  Vec quad_var;
  Vec log_z;
  int64_t error_paths = 0;  // leading rows whose accumulators were filled
  std::vector<uint8_t> alive;
  std::vector<std::pair<int64_t, int>> aborts;  // (path, step)
  uint64_t noise_key = 0;

  int64_t n_paths() const { return states.rows(); }
  const Vec& energy_samples() const { return quad_var; }

  /// Terminal states of non-aborted paths, packed.
  Mat valid_states() const;
};

struct SdeOptions {
  bool zero_noise = false;    // test hook: deterministic Euler steps
  const Mat* init = nullptr;  // test hook: explicit start states instead of N(0, I)
};

/// Integrates dY = [Y/2 + field(Y, t)] dt + dB from T down to t0 on the
/// uniform grid, starting from N(0, I). Accumulators stay zero.
TrajectoryBatch reverse_sample(const ScoreField& field, const DiffusionSchedule& sched,
                               int64_t n, uint64_t noise_key, const SdeOptions& opts = {});

/// Simulates the ideal process (drift from target_field) while accumulating,
/// per path and with the same noise increments z that drive the path:
///   M += -e(Y, t) . z sqrt(dt),  <M> += ||e(Y, t)||^2 dt,  log Z = M - <M>/2.
TrajectoryBatch paired_girsanov_run(const ScoreField& target_field, const ScoreField& error,
                                    const DiffusionSchedule& sched, int64_t n,
                                    uint64_t noise_key, const SdeOptions& opts = {});

/// Ideal-path run with e = learned - target evaluated on every path.
TrajectoryBatch girsanov_ideal_run(const ScoreField& target, const ScoreField& learned,
                                   const DiffusionSchedule& sched, int64_t n,
                                   uint64_t noise_key);

/// Learned-drift generation run; when target is non-null the first
/// energy_prefix paths also accumulate e = learned - target, giving the
/// learned-path energy on a subset while the whole batch is sampled.
TrajectoryBatch generation_run(const ScoreField& learned, const ScoreField* target,
                               const DiffusionSchedule& sched, int64_t n, uint64_t noise_key,
                               int64_t energy_prefix);

struct MeanSe {
  double value = 0.0;
  double se = 0.0;
  int64_t n = 0;
};

enum class PathLaw { Ideal, Learned };

/// Monte Carlo estimate of E[int ||e(Y_t, t)||^2 dt] with Y under the target
/// drift (Ideal) or the learned drift (Learned).
MeanSe energy(const ScoreField& error, PathLaw along, const ScoreField& target,
              const ScoreField& learned, const DiffusionSchedule& sched, int64_t n,
              uint64_t noise_key);

/// mean exp(log Z) with standard error; 1 within noise when the error field
/// is integrable enough for the change of measure to normalize.
MeanSe girsanov_normalization_check(const TrajectoryBatch& batch);

/// Mean and standard error of the quadratic-variation accumulator.
MeanSe batch_energy(const TrajectoryBatch& batch);

}  // namespace collapse
