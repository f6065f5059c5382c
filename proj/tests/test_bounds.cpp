#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "collapse/bounds.hpp"
#include "collapse/ledger.hpp"

using namespace collapse;

namespace {

GenerationRecord rec(uint64_t seed, int gen, double alpha) {
  GenerationRecord r;
  r.seed = seed;
  r.generation = gen;
  r.alpha = alpha;
  r.flags = "ok";
  return r;
}

// Consistent fixture: every estimate sits comfortably inside its bound.
std::vector<GenerationRecord> healthy_ledger(uint64_t seed, int n, double alpha) {
  std::vector<GenerationRecord> rows;
  const double decay = (1.0 - alpha) * (1.0 - alpha);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    auto r = rec(seed, i, alpha);
    r.eps_star_sq = 0.4;
    r.eps_star_se = 0.004;
    r.eps_hat_sq = 0.5;
    r.eps_hat_se = 0.005;
    r.eta = 0.5;
    r.eta_se = 0.01;
    r.i_chi2 = 0.1;  // above eta eps^2/4 = 0.05, below 4 eps^2 = 1.6
    r.i_chi2_se = 0.002;
    r.i_kl = 0.08;  // below eps_hat^2/2 = 0.25
    r.i_kl_se = 0.002;
    r.d_chi2 = 0.05 * (s + std::pow(decay, i) * 0.02) + 0.01;
    r.d_chi2_se = 0.001;
    r.contraction_lhs = decay * r.d_chi2;
    r.contraction_lhs_se = 0.001;
    rows.push_back(r);
    s = r.eps_star_sq + decay * s;
  }
  rows[0].d_chi2 = 0.02;  // anchor for the discounted start term
  rows[0].contraction_lhs = decay * rows[0].d_chi2;
  return rows;
}

}  // namespace

TEST_CASE("a ledger of zeros satisfies every bound with zero slack") {
  std::vector<GenerationRecord> rows;
  for (int i = 0; i < 6; ++i) rows.push_back(rec(1, i, 0.5));

  const std::vector<BoundReport> reports = {check_upper(rows), check_lower(rows),
                                            check_sandwich(rows)};
  for (const auto& report : reports) {
    CHECK(report.n_fail == 0);
    for (const auto& r : report.rows) {
      CHECK(r.lhs == 0.0);
      CHECK(r.rhs == 0.0);
      CHECK(r.margin == 0.0);
      CHECK(r.pass);
    }
  }
  const auto contraction = check_contraction(rows, 0.5);
  CHECK(contraction.n_fail == 0);
}

TEST_CASE("healthy synthetic ledgers pass all gating checks") {
  const auto rows = healthy_ledger(3, 12, 0.5);

  CHECK(check_upper(rows).n_fail == 0);
  CHECK(check_lower(rows).n_fail == 0);
  CHECK(check_sandwich(rows).n_fail == 0);
  CHECK(check_contraction(rows, 0.5).n_fail == 0);

  const auto accum = check_accumulation(rows, 0.5);
  CHECK(accum.n_fail == 0);
  CHECK(accum.rows.size() == 7);  // horizons 5..11
  REQUIRE(accum.has_fit);
  CHECK(accum.fit.valid);
  CHECK(accum.fit.r2 > 0.999);
  CHECK(accum.fit.slope == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(accum.fit.intercept == doctest::Approx(0.01).epsilon(1e-4));

  const auto pers = persistence_diagnostics(rows, 0.5);
  CHECK(pers.rows.size() == 1);
  CHECK(pers.n_fail == 0);
}

TEST_CASE("a relative entropy breaching its ceiling fails every affected row") {
  auto rows = healthy_ledger(4, 3, 0.5);
  for (auto& r : rows) {
    r.i_kl = r.eps_hat_sq;  // twice the allowed ceiling
    r.i_kl_se = 1e-6;
  }
  const auto report = check_upper(rows);
  CHECK(report.n_fail == 3);
  CHECK(report.n_pass == 0);
  CHECK(report.first_fail == 0);
  for (const auto& r : report.rows) CHECK(r.margin < 0.0);
}

TEST_CASE("a vanishing divergence with real observed energy fails the floor") {
  auto rows = healthy_ledger(5, 2, 0.5);
  for (auto& r : rows) {
    r.i_chi2 = 0.0;
    r.i_chi2_se = 1e-9;
    r.eta = 1.0;
    r.eta_se = 1e-9;
    r.eps_star_sq = 8.0;
    r.eps_star_se = 1e-9;
  }
  const auto report = check_lower(rows);
  CHECK(report.n_fail == 2);
  CHECK(report.rows[0].rhs == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("the two-sided envelope rejects each side independently") {
  auto rows = healthy_ledger(6, 1, 0.5);
  rows[0].eta = 1.0;
  rows[0].eta_se = 1e-9;
  rows[0].eps_star_sq = 1.0;
  rows[0].eps_star_se = 1e-9;
  rows[0].i_chi2 = rows[0].i_kl = 1.0;
  rows[0].i_chi2_se = rows[0].i_kl_se = 1e-9;

  SUBCASE("inside the envelope") { CHECK(check_sandwich(rows).n_fail == 0); }
  SUBCASE("above the ceiling") {
    rows[0].i_chi2 = 5.0;
    rows[0].i_chi2_se = 1e-9;
    const auto report = check_sandwich(rows);
    CHECK(report.n_fail == 1);
    CHECK(report.rows[report.first_fail].label == "chi2_upper");
  }
  SUBCASE("below the floor") {
    rows[0].i_kl = 0.1;  // floor is eta eps^2/4 = 0.25
    rows[0].i_kl_se = 1e-9;
    const auto report = check_sandwich(rows);
    CHECK(report.n_fail == 1);
    CHECK(report.rows[report.first_fail].label == "kl_lower");
  }
}

TEST_CASE("discounted accumulation matches the direct geometric sum") {
  const std::vector<double> eps = {0.3, 0.1, 0.7, 0.2, 0.5};
  const double alpha = 0.3;
  const double decay = (1.0 - alpha) * (1.0 - alpha);
  const auto s = discounted_sum(eps, alpha);
  REQUIRE(s.size() == eps.size());
  for (size_t k = 0; k < eps.size(); ++k) {
    double direct = 0.0;
    for (size_t i = 0; i <= k; ++i) direct += std::pow(decay, double(k - i)) * eps[i];
    CHECK(s[k] == doctest::Approx(direct).epsilon(1e-14));
  }
}

TEST_CASE("discounting degenerates correctly at the endpoints") {
  const std::vector<double> eps = {0.3, 0.1, 0.7};
  const auto all_fresh = discounted_sum(eps, 1.0);
  for (size_t k = 0; k < eps.size(); ++k) CHECK(all_fresh[k] == eps[k]);

  // constant energy converges to the geometric limit e / (1 - (1-alpha)^2)
  const double alpha = 0.4, e = 0.2;
  const std::vector<double> constant(200, e);
  const double decay = (1.0 - alpha) * (1.0 - alpha);
  const auto s = discounted_sum(constant, alpha);
  CHECK(s.back() == doctest::Approx(e / (1.0 - decay)).epsilon(1e-12));

  CHECK_THROWS_AS(discounted_sum({0.1, -0.2}, 0.5), std::invalid_argument);
}

TEST_CASE("accumulation handling of malformed ledgers is explicit") {
  SUBCASE("a seed without its first generation is skipped with a note") {
    std::vector<GenerationRecord> rows;
    for (int i = 3; i < 9; ++i) {
      auto r = rec(7, i, 0.5);
      r.eps_star_sq = 0.1;
      rows.push_back(r);
    }
    const auto report = check_accumulation(rows, 0.5);
    CHECK(report.rows.empty());
    CHECK(report.notes.find("skipped") != std::string::npos);
  }
  SUBCASE("a gap in generations drops the rows after it") {
    auto rows = healthy_ledger(8, 12, 0.5);
    rows.erase(rows.begin() + 6);  // lose generation 6
    const auto report = check_accumulation(rows, 0.5);
    CHECK(report.rows.size() < 7);
  }
}

TEST_CASE("a collapsed tail is caught by the persistence floor") {
  auto rows = healthy_ledger(9, 12, 0.9);
  for (size_t j = 6; j < rows.size(); ++j) {
    rows[j].d_chi2 = 0.0015;  // below the tail floor for these energies
    rows[j].d_chi2_se = 1e-5;
    rows[j].eta = 0.8;
    rows[j].eta_se = 1e-4;
    rows[j].eps_star_sq = 0.4;
    rows[j].eps_star_se = 1e-4;
  }
  // floor = 0.9 / (16 (1 + 0.01)) * 0.8 * 0.4 = 0.0178 > 0.0015
  const auto report = persistence_diagnostics(rows, 0.9);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.n_fail == 1);

  const auto short_run = persistence_diagnostics(healthy_ledger(10, 6, 0.9), 0.9);
  CHECK(short_run.rows.empty());
  CHECK(short_run.notes.find("skipped") != std::string::npos);
}

TEST_CASE("the cross-generation recursion check reports without gating") {
  auto rows = healthy_ledger(11, 4, 0.5);
  for (auto& r : rows) {
    r.i_chi2 = 100.0;  // force violation
    r.i_chi2_se = 1e-9;
  }
  const auto report = check_two_step(rows, 0.5);
  CHECK_FALSE(report.gating);
  CHECK(report.n_fail == 3);
  const auto j = bound_report_summary(report);
  CHECK(j.at("gating") == false);
  CHECK(j.at("n_fail") == 3);
}

TEST_CASE("the blend identity tolerates noise but not bias") {
  auto rows = healthy_ledger(12, 4, 0.5);
  CHECK(check_contraction(rows, 0.5).n_fail == 0);
  rows[2].contraction_lhs *= 1.5;
  const auto report = check_contraction(rows, 0.5);
  CHECK(report.n_fail == 1);
  CHECK(report.rows[2].margin < 0.0);
  CHECK(report.rows[2].label == "contraction_eq");
}

TEST_CASE("bound reports serialize with a stable schema") {
  namespace fs = std::filesystem;
  const auto rows = healthy_ledger(13, 6, 0.5);
  const auto report = check_lower(rows);
  const fs::path p = fs::temp_directory_path() / "collapse_bound_report_test.csv";

  write_bound_report_csv(p, report);
  std::ifstream f(p);
  std::string version, header, line;
  std::getline(f, version);
  std::getline(f, header);
  CHECK(version == "# collapse-lab bound report v1 name=lower");
  CHECK(header == "seed,generation,label,lhs,rhs,lhs_se,rhs_se,combined_se,margin,pass,gating");
  int n_lines = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++n_lines;
  CHECK(n_lines == static_cast<int>(report.rows.size() + report.diagnostic_rows.size()));
  f.close();

  std::ostringstream first, second;
  write_bound_report_csv(p, report);
  first << std::ifstream(p).rdbuf();
  write_bound_report_csv(p, report);
  second << std::ifstream(p).rdbuf();
  CHECK(first.str() == second.str());
  fs::remove(p);

  const auto j = bound_report_summary(report);
  CHECK(j.at("name") == "lower");
  CHECK(j.contains("fit"));
  CHECK(j.at("fit").at("slope").get<double>() >= 0.0);
}
