#pragma once

#include <cmath>
#include <stdexcept>

namespace collapse {

/// Decay factor a_t = e^{-t/2} of the variance-preserving forward process
/// dX = -X/2 dt + dB.
inline double decay(double t) { return std::exp(-0.5 * t); }

/// Variance of one diffused isotropic component with base std `sigma`:
/// a_t^2 sigma^2 + (1 - a_t^2).
inline double diffused_var(double t, double sigma) {
  const double a2 = decay(t) * decay(t);
  return a2 * sigma * sigma + (1.0 - a2);
}

/// Time grid and kernel bandwidth for reverse integration: uniform steps from
/// T down to t0, plus the smoothing bandwidth h used by sample-based scores.
struct DiffusionSchedule {
  double T = 4.0;
  double t0 = 0.02;
  int n_steps = 500;
  double h = 0.6;

  void validate() const {
    if (!(t0 > 0.0) || !(t0 < T) || !std::isfinite(T))
      throw std::invalid_argument("schedule: need 0 < t0 < T");
    if (n_steps < 1) throw std::invalid_argument("schedule: n_steps >= 1");
    if (!(h > 0.0)) throw std::invalid_argument("schedule: bandwidth > 0");
  }

  double dt() const { return (T - t0) / n_steps; }

  /// Time at the start of step k, k = 0..n_steps-1 (runs from T down).
  double time_at(int k) const { return T - k * dt(); }

  /// Smoothing variance sigma_t^2 = a_t^2 h^2 + (1 - a_t^2).
  double smooth_var(double t) const { return diffused_var(t, h); }
};

}  // namespace collapse
