#include "collapse/sde.hpp"

#include <cmath>
#include <functional>

#include "collapse/rng.hpp"
#include "collapse/threading.hpp"

namespace collapse {

namespace {

constexpr int64_t kTile = 256;
constexpr double kMaxAbortFrac = 1e-3;

// Writes e(Y_prefix, t) given the already-computed drift rows for the prefix.
using ErrorEval = std::function<void(const Mat& y_prefix, double t,
                                     const Eigen::Ref<const Mat>& drift_prefix, Mat& out)>;

TrajectoryBatch simulate(const ScoreField& drift, const DiffusionSchedule& sched, int64_t n,
                         uint64_t noise_key, const SdeOptions& opts, int64_t error_prefix,
                         const ErrorEval* error_eval) {
  sched.validate();
  if (n < 1) throw std::invalid_argument("simulate: n >= 1");
  const int d = drift.dim();
  const double dt = sched.dt();
  const double sdt = std::sqrt(dt);
  const PathNoise noise(noise_key);

  TrajectoryBatch b;
  b.noise_key = noise_key;
  b.error_paths = error_eval ? std::min<int64_t>(error_prefix, n) : 0;
  b.states.resize(n, d);
  b.martingale_m = Vec::Zero(n);
  b.quad_var = Vec::Zero(n);
  b.log_z = Vec::Zero(n);
  b.alive.assign(n, 1);

  if (opts.init) {
    if (opts.init->rows() != n || opts.init->cols() != d)
      throw std::invalid_argument("simulate: init shape mismatch");
    b.states = *opts.init;
  } else {
    parallel_tiles(n, kTile, [&](int64_t r0, int64_t r1) {
      for (int64_t i = r0; i < r1; ++i)
        noise.fill(static_cast<uint64_t>(i), 0xFFFFFFFFu, b.states.row(i).data(), d);
    });
  }

  Mat drift_val(n, d), z(n, d), err;
  const int64_t p = b.error_paths;
  if (p > 0) err.resize(p, d);
  std::vector<uint8_t> recorded(n, 0);

  for (int k = 0; k < sched.n_steps; ++k) {
    const double t = sched.time_at(k);
    drift.eval(b.states, t, drift_val);
    if (p > 0) (*error_eval)(b.states.topRows(p), t, drift_val.topRows(p), err);
    if (opts.zero_noise) {
      z.setZero();
    } else {
      parallel_tiles(n, kTile, [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i)
          noise.fill(static_cast<uint64_t>(i), static_cast<uint32_t>(k), z.row(i).data(), d);
      });
    }
    parallel_tiles(n, kTile, [&](int64_t r0, int64_t r1) {
      for (int64_t i = r0; i < r1; ++i) {
        if (!b.alive[i]) continue;
        if (i < p) {
          b.martingale_m(i) -= err.row(i).dot(z.row(i)) * sdt;
          b.quad_var(i) += err.row(i).squaredNorm() * dt;
        }
        b.states.row(i) += (0.5 * b.states.row(i) + drift_val.row(i)) * dt + sdt * z.row(i);
        if (!b.states.row(i).allFinite()) b.alive[i] = 0;
      }
    });
    for (int64_t i = 0; i < n; ++i)
      if (!b.alive[i] && !recorded[i]) {
        recorded[i] = 1;
        b.aborts.emplace_back(i, k);
      }
  }

  b.log_z = b.martingale_m - 0.5 * b.quad_var;
  if (static_cast<double>(b.aborts.size()) > kMaxAbortFrac * static_cast<double>(n))
    throw AbortRateError(static_cast<int64_t>(b.aborts.size()), n,
                         b.aborts.empty() ? -1 : b.aborts.front().second);
  return b;
}

MeanSe mean_se_of(const Vec& v, const std::vector<uint8_t>& alive, int64_t limit) {
  MeanSe out;
  double s = 0.0;
  int64_t n = 0;
  for (int64_t i = 0; i < limit; ++i)
    if (alive[i]) {
      s += v(i);
      ++n;
    }
  if (n == 0) return out;
  const double mean = s / n;
  double ss = 0.0;
  for (int64_t i = 0; i < limit; ++i)
    if (alive[i]) ss += (v(i) - mean) * (v(i) - mean);
  out.value = mean;
  out.se = n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
  out.n = n;
  return out;
}

}  // namespace

Mat TrajectoryBatch::valid_states() const {
  int64_t n_ok = 0;
  for (uint8_t a : alive) n_ok += a;
  Mat out(n_ok, states.cols());
  int64_t r = 0;
  for (int64_t i = 0; i < n_paths(); ++i)
    if (alive[i]) out.row(r++) = states.row(i);
  return out;
}

TrajectoryBatch reverse_sample(const ScoreField& field, const DiffusionSchedule& sched,
                               int64_t n, uint64_t noise_key, const SdeOptions& opts) {
  return simulate(field, sched, n, noise_key, opts, 0, nullptr);
}

TrajectoryBatch paired_girsanov_run(const ScoreField& target_field, const ScoreField& error,
                                    const DiffusionSchedule& sched, int64_t n,
                                    uint64_t noise_key, const SdeOptions& opts) {
  ErrorEval fn = [&error](const Mat& y, double t, const Eigen::Ref<const Mat>&, Mat& out) {
    error.eval(y, t, out);
  };
  return simulate(target_field, sched, n, noise_key, opts, n, &fn);
}

TrajectoryBatch girsanov_ideal_run(const ScoreField& target, const ScoreField& learned,
                                   const DiffusionSchedule& sched, int64_t n,
                                   uint64_t noise_key) {
  ErrorEval fn = [&learned](const Mat& y, double t, const Eigen::Ref<const Mat>& drift,
                            Mat& out) {
    learned.eval(y, t, out);
    out -= drift;
  };
  return simulate(target, sched, n, noise_key, {}, n, &fn);
}

TrajectoryBatch generation_run(const ScoreField& learned, const ScoreField* target,
                               const DiffusionSchedule& sched, int64_t n, uint64_t noise_key,
                               int64_t energy_prefix) {
  if (!target || energy_prefix <= 0)
    return simulate(learned, sched, n, noise_key, {}, 0, nullptr);
  ErrorEval fn = [target](const Mat& y, double t, const Eigen::Ref<const Mat>& drift,
                          Mat& out) {
    target->eval(y, t, out);
    out = drift - out;
  };
  return simulate(learned, sched, n, noise_key, {}, energy_prefix, &fn);
}

MeanSe energy(const ScoreField& error, PathLaw along, const ScoreField& target,
              const ScoreField& learned, const DiffusionSchedule& sched, int64_t n,
              uint64_t noise_key) {
  const ScoreField& drift = along == PathLaw::Ideal ? target : learned;
  ErrorEval fn = [&error](const Mat& y, double t, const Eigen::Ref<const Mat>&, Mat& out) {
    error.eval(y, t, out);
  };
  const TrajectoryBatch b = simulate(drift, sched, n, noise_key, {}, n, &fn);
  return batch_energy(b);
}

MeanSe batch_energy(const TrajectoryBatch& batch) {
  return mean_se_of(batch.quad_var, batch.alive, batch.error_paths);
}

MeanSe girsanov_normalization_check(const TrajectoryBatch& batch) {
  Vec ez(batch.error_paths);
  for (int64_t i = 0; i < batch.error_paths; ++i) ez(i) = std::exp(batch.log_z(i));
  return mean_se_of(ez, batch.alive, batch.error_paths);
}

}  // namespace collapse
