#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "collapse/config.hpp"
#include "collapse/ledger.hpp"

namespace collapse {

/// One run's ledger rows plus the horizon divergence (the blend target of a
/// hypothetical next round), which has no row of its own.
struct RunArtifacts {
  std::vector<GenerationRecord> records;
  double final_d_chi2 = 0.0;
  double final_d_chi2_se = 0.0;
  std::vector<std::filesystem::path> stores;  // persisted sample sets, oldest first
};

/// Self-training recursion for one run: fit a kernel score on fresh data,
/// sample generation 0, then repeatedly train on a blend of floor(alpha * N)
/// fresh rows and N - floor(alpha * N) rows subsampled without replacement
/// from the previous generation, sampling N new points each round and
/// recording divergences, error energies, and observability per round.
/// Sample sets are persisted under store_dir when it is non-empty.
RunArtifacts run_recursion(const RunConfig& cfg, uint64_t run_seed,
                           const std::filesystem::path& store_dir = {});

/// Effect of one generation's score error on the divergence at a later
/// horizon: reruns the recursion with identical noise and sampling streams
/// but generation `ablate_at`'s fitted score swapped for a reference model
/// (the generation-0 fit by default; the exact blend-target score when
/// cfg.analytic_reference is set) and returns D_horizon - D_horizon^ablated.
double ablation_contribution(const RunConfig& cfg, uint64_t run_seed, int ablate_at, int horizon);

/// Triangular contribution matrix from one rerun per ablated generation.
/// contrib(k-1, n-1) holds the effect of generation k on the divergence at
/// generation n, for 1 <= k <= n <= horizon; entries with n < k are NaN.
/// baseline_d(n-1) is the unablated D_n.
struct HeatmapResult {
  int horizon = 0;
  Mat contrib;
  Vec baseline_d;
};

HeatmapResult heatmap(const RunConfig& cfg, uint64_t run_seed, int horizon);

}  // namespace collapse
