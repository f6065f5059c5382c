#include "collapse/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace collapse {

namespace {

enum class Side { Upper, Lower, Equal };

BoundRow make_row(const GenerationRecord& rec, std::string label, Side side, double lhs,
                  double rhs, double lhs_se, double rhs_se) {
  BoundRow row;
  row.seed = rec.seed;
  row.generation = rec.generation;
  row.label = std::move(label);
  row.lhs = lhs;
  row.rhs = rhs;
  row.lhs_se = lhs_se;
  row.rhs_se = rhs_se;
  row.combined_se = std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se);
  switch (side) {
    case Side::Upper: row.margin = rhs - lhs; break;
    case Side::Lower: row.margin = lhs - rhs; break;
    case Side::Equal: row.margin = -std::abs(lhs - rhs); break;
  }
  row.pass = row.margin >= -3.0 * row.combined_se;
  return row;
}

void finalize(BoundReport& report) {
  report.n_pass = report.n_fail = 0;
  report.first_fail = -1;
  for (size_t r = 0; r < report.rows.size(); ++r) {
    if (report.rows[r].pass) {
      ++report.n_pass;
    } else {
      ++report.n_fail;
      if (report.first_fail < 0) report.first_fail = static_cast<int>(r);
    }
  }
}

// Rows grouped per seed, ordered by generation within each group.
std::map<uint64_t, std::vector<const GenerationRecord*>> by_seed(
    const std::vector<GenerationRecord>& records) {
  std::map<uint64_t, std::vector<const GenerationRecord*>> groups;
  for (const auto& r : records) groups[r.seed].push_back(&r);
  for (auto& [seed, rows] : groups) {
    std::sort(rows.begin(), rows.end(), [](const GenerationRecord* a, const GenerationRecord* b) {
      return a->generation < b->generation;
    });
  }
  return groups;
}

// rhs = coef * eta * eps^2 with first-order error propagation.
double product_se(double coef, double eta, double eta_se, double eps_sq, double eps_se) {
  return coef * std::sqrt(eta_se * eta_se * eps_sq * eps_sq + eta * eta * eps_se * eps_se);
}

LawFit affine_fit(const std::vector<double>& x, const std::vector<double>& y) {
  LawFit fit;
  const auto n = static_cast<double>(x.size());
  if (x.size() < 3 || x.size() != y.size()) {
    fit.degenerate = true;
    return fit;
  }
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 1e-18 || syy <= 1e-18) {
    fit.degenerate = true;
    return fit;
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ssr += r * r;
  }
  fit.r2 = 1.0 - ssr / syy;
  fit.valid = true;
  return fit;
}

}  // namespace

BoundReport check_upper(const std::vector<GenerationRecord>& records) {
  BoundReport report;
  report.name = "upper";
  report.notes = "KL(new generation || blend) <= eps_hat^2 / 2";
  for (const auto& rec : records)
    report.rows.push_back(make_row(rec, "kl_upper", Side::Upper, rec.i_kl,
                                   0.5 * rec.eps_hat_sq, rec.i_kl_se, 0.5 * rec.eps_hat_se));
  finalize(report);
  return report;
}

BoundReport check_lower(const std::vector<GenerationRecord>& records) {
  BoundReport report;
  report.name = "lower";
  report.notes =
      "chi2(new generation || blend) >= eta eps_star^2 / 8; diagnostic rows use "
      "eta eps^2/4 - C eps^4 with C least-squares fitted across rows";
  for (const auto& rec : records)
    report.rows.push_back(make_row(
        rec, "chi2_lower", Side::Lower, rec.i_chi2, 0.125 * rec.eta * rec.eps_star_sq,
        rec.i_chi2_se, product_se(0.125, rec.eta, rec.eta_se, rec.eps_star_sq, rec.eps_star_se)));
  finalize(report);

  // Fit C in I = eta eps^2/4 - C eps^4 and report the corrected comparison.
  double num = 0.0, den = 0.0;
  for (const auto& rec : records) {
    const double e4 = rec.eps_star_sq * rec.eps_star_sq;
    num += (0.25 * rec.eta * rec.eps_star_sq - rec.i_chi2) * e4;
    den += e4 * e4;
  }
  const double c_fit = den > 0.0 ? std::max(0.0, num / den) : 0.0;
  report.fit.slope = c_fit;
  report.fit.valid = den > 0.0;
  report.fit.degenerate = !(den > 0.0);
  report.has_fit = true;
  for (const auto& rec : records) {
    const double rhs = 0.25 * rec.eta * rec.eps_star_sq -
                       c_fit * rec.eps_star_sq * rec.eps_star_sq;
    report.diagnostic_rows.push_back(make_row(
        rec, "chi2_lower_quartic", Side::Lower, rec.i_chi2, rhs, rec.i_chi2_se,
        product_se(0.25, rec.eta, rec.eta_se, rec.eps_star_sq, rec.eps_star_se)));
  }
  return report;
}

BoundReport check_sandwich(const std::vector<GenerationRecord>& records) {
  BoundReport report;
  report.name = "sandwich";
  report.notes = "eta eps_star^2 / 4 <= divergence <= 4 eps_star^2, chi2 and KL rows";
  for (const auto& rec : records) {
    const double lower_rhs = 0.25 * rec.eta * rec.eps_star_sq;
    const double lower_se =
        product_se(0.25, rec.eta, rec.eta_se, rec.eps_star_sq, rec.eps_star_se);
    const double upper_rhs = 4.0 * rec.eps_star_sq;
    const double upper_se = 4.0 * rec.eps_star_se;
    report.rows.push_back(make_row(rec, "chi2_lower", Side::Lower, rec.i_chi2, lower_rhs,
                                   rec.i_chi2_se, lower_se));
    report.rows.push_back(make_row(rec, "chi2_upper", Side::Upper, rec.i_chi2, upper_rhs,
                                   rec.i_chi2_se, upper_se));
    report.rows.push_back(
        make_row(rec, "kl_lower", Side::Lower, rec.i_kl, lower_rhs, rec.i_kl_se, lower_se));
    report.rows.push_back(
        make_row(rec, "kl_upper", Side::Upper, rec.i_kl, upper_rhs, rec.i_kl_se, upper_se));
  }
  finalize(report);
  return report;
}

std::vector<double> discounted_sum(const std::vector<double>& eps_sq, double alpha) {
  for (double e : eps_sq)
    if (!(e >= 0.0)) throw std::invalid_argument("discounted_sum: eps_sq must be nonnegative");
  const double decay = (1.0 - alpha) * (1.0 - alpha);
  std::vector<double> s;
  s.reserve(eps_sq.size());
  double cur = 0.0;
  for (double e : eps_sq) {
    cur = e + decay * cur;
    s.push_back(cur);
  }
  return s;
}

BoundReport check_accumulation(const std::vector<GenerationRecord>& records, double alpha,
                               int burn_in) {
  BoundReport report;
  report.name = "accumulation";
  report.notes =
      "lower: D_N >= alpha min(eta) / (16 (1+(1-alpha)^2)) * S_N past burn-in " +
      std::to_string(burn_in) +
      "; fit: descriptive affine regression of D_N on S_N + (1-alpha)^{2N} D_0, not a "
      "pass/fail check";
  const double decay = (1.0 - alpha) * (1.0 - alpha);
  const double denom = 16.0 * (1.0 + decay);
  std::vector<double> fit_x, fit_y;

  for (const auto& [seed, rows] : by_seed(records)) {
    if (rows.empty()) continue;
    if (rows[0]->generation != 0) {
      report.notes += "; seed " + std::to_string(seed) + " skipped (no generation-0 row)";
      continue;
    }
    double eta_min = rows[0]->eta, eta_min_se = rows[0]->eta_se;
    for (const auto* r : rows) {
      if (r->eta < eta_min) {
        eta_min = r->eta;
        eta_min_se = r->eta_se;
      }
    }
    const double coef = alpha * eta_min / denom;
    const double coef_se = alpha * eta_min_se / denom;
    const double d0 = rows[0]->d_chi2;

    double s = 0.0, s_var = 0.0;  // S_N and its variance, discounted in step
    for (size_t j = 0; j + 1 < rows.size(); ++j) {
      s = rows[j]->eps_star_sq + decay * s;
      s_var = rows[j]->eps_star_se * rows[j]->eps_star_se + decay * decay * s_var;
      const int horizon = rows[j]->generation + 1;  // S built from rounds 0..j
      const auto* at = rows[j + 1];
      if (at->generation != horizon) continue;  // non-contiguous ledger slice
      fit_x.push_back(s + std::pow(decay, horizon) * d0);
      fit_y.push_back(at->d_chi2);
      if (horizon <= burn_in) continue;
      const double rhs = coef * s;
      const double rhs_se =
          std::sqrt(coef_se * coef_se * s * s + coef * coef * s_var);
      report.rows.push_back(make_row(*at, "accum_lower", Side::Lower, at->d_chi2, rhs,
                                     at->d_chi2_se, rhs_se));
    }
  }
  finalize(report);
  report.fit = affine_fit(fit_x, fit_y);
  report.has_fit = true;
  return report;
}

BoundReport persistence_diagnostics(const std::vector<GenerationRecord>& records, double alpha) {
  BoundReport report;
  report.name = "persistence";
  report.notes =
      "tail max of D vs floor alpha / (16 (1+(1-alpha)^2)) * min tail eta * min tail eps_star^2";
  const double decay = (1.0 - alpha) * (1.0 - alpha);
  for (const auto& [seed, rows] : by_seed(records)) {
    if (rows.size() < 10) {
      report.notes += "; seed " + std::to_string(seed) + " skipped (needs 10 generations)";
      continue;
    }
    const size_t tail_start = rows.size() / 2;
    const GenerationRecord* best = rows[tail_start];
    double eta_min = best->eta, eta_min_se = best->eta_se;
    double eps_min = best->eps_star_sq, eps_min_se = best->eps_star_se;
    for (size_t j = tail_start; j < rows.size(); ++j) {
      const auto* r = rows[j];
      if (r->d_chi2 > best->d_chi2) best = r;
      if (r->eta < eta_min) {
        eta_min = r->eta;
        eta_min_se = r->eta_se;
      }
      if (r->eps_star_sq < eps_min) {
        eps_min = r->eps_star_sq;
        eps_min_se = r->eps_star_se;
      }
    }
    const double coef = alpha / (16.0 * (1.0 + decay));
    const double floor = coef * eta_min * eps_min;
    const double floor_se = product_se(coef, eta_min, eta_min_se, eps_min, eps_min_se);
    report.rows.push_back(
        make_row(*best, "tail_floor", Side::Lower, best->d_chi2, floor, best->d_chi2_se, floor_se));
  }
  finalize(report);
  return report;
}

BoundReport check_two_step(const std::vector<GenerationRecord>& records, double alpha) {
  BoundReport report;
  report.name = "two_step";
  report.gating = false;
  report.notes = "informational: D_{i+1} + (1-alpha)^2 D_i >= (alpha/2) I_i";
  const double decay = (1.0 - alpha) * (1.0 - alpha);
  for (const auto& [seed, rows] : by_seed(records)) {
    for (size_t j = 0; j + 1 < rows.size(); ++j) {
      const auto* cur = rows[j];
      const auto* next = rows[j + 1];
      if (next->generation != cur->generation + 1) continue;
      const double lhs = next->d_chi2 + decay * cur->d_chi2;
      const double lhs_se = std::sqrt(next->d_chi2_se * next->d_chi2_se +
                                      decay * decay * cur->d_chi2_se * cur->d_chi2_se);
      report.rows.push_back(make_row(*cur, "two_step_lower", Side::Lower, lhs,
                                     0.5 * alpha * cur->i_chi2, lhs_se,
                                     0.5 * alpha * cur->i_chi2_se));
    }
  }
  finalize(report);
  return report;
}

BoundReport check_contraction(const std::vector<GenerationRecord>& records, double alpha) {
  BoundReport report;
  report.name = "contraction";
  report.notes = "identity chi2(blend || data) = (1-alpha)^2 D_i at shared eval points";
  const double decay = (1.0 - alpha) * (1.0 - alpha);
  for (const auto& rec : records)
    report.rows.push_back(make_row(rec, "contraction_eq", Side::Equal, rec.contraction_lhs,
                                   decay * rec.d_chi2, rec.contraction_lhs_se,
                                   decay * rec.d_chi2_se));
  finalize(report);
  return report;
}

void write_bound_report_csv(const std::filesystem::path& path, const BoundReport& report) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("bound report: cannot open " + path.string());
  f << "# collapse-lab bound report v1 name=" << report.name << "\n";
  f << "seed,generation,label,lhs,rhs,lhs_se,rhs_se,combined_se,margin,pass,gating\n";
  auto emit = [&f](const BoundRow& r, bool gating) {
    f << r.seed << ',' << r.generation << ',' << r.label << ',' << format_double(r.lhs) << ','
      << format_double(r.rhs) << ',' << format_double(r.lhs_se) << ','
      << format_double(r.rhs_se) << ',' << format_double(r.combined_se) << ','
      << format_double(r.margin) << ',' << (r.pass ? 1 : 0) << ',' << (gating ? 1 : 0) << "\n";
  };
  for (const auto& r : report.rows) emit(r, report.gating);
  for (const auto& r : report.diagnostic_rows) emit(r, false);
}

nlohmann::json bound_report_summary(const BoundReport& report) {
  nlohmann::json j;
  j["name"] = report.name;
  j["n_pass"] = report.n_pass;
  j["n_fail"] = report.n_fail;
  j["first_fail"] = report.first_fail;
  j["gating"] = report.gating;
  j["notes"] = report.notes;
  if (report.has_fit) {
    j["fit"] = {{"slope", report.fit.slope},
                {"intercept", report.fit.intercept},
                {"r2", report.fit.r2},
                {"valid", report.fit.valid},
                {"degenerate", report.fit.degenerate}};
  }
  return j;
}

}  // namespace collapse
