#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "collapse/observability.hpp"

namespace collapse {

/// One (seed, generation) row of the run ledger. The pinned CSV schema
/// carries the scalar columns; companion quantities go to an extras CSV.
struct GenerationRecord {
  uint64_t seed = 0;
  int generation = 0;
  double alpha = 1.0;
  double eps_star_sq = 0.0, eps_star_se = 0.0;
  double eps_hat_sq = 0.0, eps_hat_se = 0.0;
  double eta = 0.0, eta_se = 0.0;
  double i_chi2 = 0.0, i_chi2_se = 0.0;
  double i_kl = 0.0, i_kl_se = 0.0;
  double d_chi2 = 0.0, d_chi2_se = 0.0;
  std::string flags = "ok";  // semicolon-joined tokens, "ok" when clean

  // Extras (same keys, separate file).
  double contraction_lhs = 0.0;  // chi2(blend_i || data) at shared eval points
  double contraction_lhs_se = 0.0;
  int64_t n_fresh = 0;           // fresh rows in this round's training pool
  int64_t n_target_centers = 0;  // kernel centers behind the round's target density
};

/// Ledger CSV: a schema comment line, the pinned header, then one row per
/// record with doubles printed as %.17g (byte-stable round trip).
void write_ledger_csv(const std::filesystem::path& path,
                      const std::vector<GenerationRecord>& rows);
std::vector<GenerationRecord> read_ledger_csv(const std::filesystem::path& path);

void write_extras_csv(const std::filesystem::path& path,
                      const std::vector<GenerationRecord>& rows);
/// Merges extras columns into matching (seed, generation) records in place.
void read_extras_csv(const std::filesystem::path& path, std::vector<GenerationRecord>& rows);

void write_probe_csv(const std::filesystem::path& path, const std::vector<ProbeRow>& rows);

std::string format_double(double v);  // %.17g

}  // namespace collapse
