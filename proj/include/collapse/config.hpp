#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "collapse/gmm.hpp"
#include "collapse/schedule.hpp"

namespace collapse {

/// Everything a run needs, with desk-scale defaults. A blend-weight sweep is
/// a set of configs differing only in `alpha`; each gets its own manifest.
struct RunConfig {
  // data + recursion scale
  int dim = 10;
  int n_train = 10000;
  int n_generations = 12;
  int n_runs = 3;  // run r draws its streams from master_seed + r
  double alpha = 0.5;
  uint64_t master_seed = 20260301;
  double data_sigma = 0.6;

  // reverse-time integration
  double horizon = 4.0;
  double t_min = 0.02;
  int n_steps = 200;
  double bandwidth = 0.6;

  // estimators
  int n_eval = 20000;
  int n_girsanov_paths = 2500;
  int n_energy_paths = 2000;  // prefix of the sampling batch carrying error stats
  int feature_dim = 512;
  double eta_ridge = 1e-4;
  int eta_folds = 5;
  bool analytic_reference = false;  // ablation reference: analytic blend instead of kernel fit

  // perturbation probe
  double probe_energy = 0.25;
  double probe_tolerance = 0.05;
  int probe_paths = 2500;
  int probe_runs = 5;

  DiffusionSchedule schedule() const;
  GaussianMixture data_mixture() const;
};

RunConfig desk_profile();
RunConfig paper_profile();
RunConfig profile_by_name(const std::string& name);  // "desk" | "paper"

/// Field-level problems; empty means valid.
std::vector<std::string> validate(const RunConfig& cfg);

/// Canonical JSON (sorted keys, round-trip-exact doubles). The same config
/// always serializes to the same bytes, so the hash below is stable.
std::string to_json(const RunConfig& cfg);
/// Strict parse: unknown keys and type mismatches are errors naming the
/// field. Fields absent from the JSON keep `base`'s values.
RunConfig config_from_json(const std::string& text, const RunConfig& base = RunConfig{});

uint64_t config_hash(const RunConfig& cfg);
std::string config_hash_hex(const RunConfig& cfg);

}  // namespace collapse
