#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "collapse/ledger.hpp"

namespace collapse {

/// One inequality instance. `margin` is the raw slack before the noise
/// allowance (rhs - lhs for upper-type rows, lhs - rhs for lower-type,
/// -|lhs - rhs| for equality-type); every row passes iff
/// margin >= -3 * combined_se.
struct BoundRow {
  uint64_t seed = 0;
  int generation = 0;
  std::string label;
  double lhs = 0.0;
  double rhs = 0.0;
  double lhs_se = 0.0;
  double rhs_se = 0.0;
  double combined_se = 0.0;
  double margin = 0.0;
  bool pass = true;
};

struct LawFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  bool valid = false;
  bool degenerate = false;  // zero-variance regressor or too few points
};

struct BoundReport {
  std::string name;
  std::vector<BoundRow> rows;
  std::vector<BoundRow> diagnostic_rows;  // reported, never counted in summary
  int n_pass = 0;
  int n_fail = 0;
  int first_fail = -1;  // index into rows, -1 when none
  LawFit fit;
  bool has_fit = false;
  bool gating = true;  // false: informational report, failures don't gate
  std::string notes;
};

/// KL(new generation || blend) <= eps_hat^2 / 2, per row.
BoundReport check_upper(const std::vector<GenerationRecord>& records);

/// chi2(new generation || blend) >= eta * eps_star^2 / 8, per row. The
/// diagnostic rows carry the quartic-corrected form eta eps^2/4 - C eps^4
/// with C fitted across rows (reported only).
BoundReport check_lower(const std::vector<GenerationRecord>& records);

/// Two-sided: eta eps_star^2 / 4 <= I <= 4 eps_star^2 for both divergences.
BoundReport check_sandwich(const std::vector<GenerationRecord>& records);

/// Discounted error accumulation S_{N+1} = eps_N^2 + (1-alpha)^2 S_N from
/// S_0 = 0; entry [k] holds S_{k+1}, so the output aligns with horizons
/// 1..len(eps_sq).
std::vector<double> discounted_sum(const std::vector<double>& eps_sq, double alpha);

/// Lower accumulation law D_N >= [alpha min_i eta_i / (16 (1+(1-alpha)^2))] S_N
/// past the burn-in, plus a pooled descriptive affine fit of D_N on
/// S_N + (1-alpha)^{2N} D_0 (reported via `fit`, never pass/fail).
BoundReport check_accumulation(const std::vector<GenerationRecord>& records, double alpha,
                               int burn_in = 4);

/// Tail-window floor: max of late-generation D must respect
/// alpha / (16 (1+(1-alpha)^2)) * min tail eta * min tail eps_star^2.
BoundReport persistence_diagnostics(const std::vector<GenerationRecord>& records, double alpha);

/// Informational recursion check D_{i+1} + (1-alpha)^2 D_i >= (alpha/2) I_i.
BoundReport check_two_step(const std::vector<GenerationRecord>& records, double alpha);

/// Blend contraction identity |chi2(blend||data) - (1-alpha)^2 D_i| within
/// noise, from the ledger extras.
BoundReport check_contraction(const std::vector<GenerationRecord>& records, double alpha);

void write_bound_report_csv(const std::filesystem::path& path, const BoundReport& report);
nlohmann::json bound_report_summary(const BoundReport& report);

}  // namespace collapse
