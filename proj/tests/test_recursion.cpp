#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "collapse/config.hpp"
#include "collapse/gmm.hpp"
#include "collapse/recursion.hpp"
#include "collapse/rng.hpp"
#include "collapse/score_field.hpp"
#include "collapse/sde.hpp"
#include "collapse/store.hpp"

using namespace collapse;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.dim = 2;
  cfg.n_train = 300;
  cfg.n_generations = 2;
  cfg.n_runs = 1;
  cfg.alpha = 0.5;
  cfg.data_sigma = 0.6;
  cfg.n_steps = 30;
  cfg.n_eval = 500;
  cfg.n_girsanov_paths = 120;
  cfg.n_energy_paths = 100;
  cfg.feature_dim = 48;
  cfg.master_seed = 900;
  return cfg;
}

}  // namespace

TEST_CASE("a single-round run records coherent bookkeeping") {
  RunConfig cfg = tiny_config();
  cfg.n_generations = 1;
  const auto art = run_recursion(cfg, 41);

  REQUIRE(art.records.size() == 1);
  const auto& r = art.records[0];
  CHECK(r.seed == 41);
  CHECK(r.generation == 0);
  CHECK(r.alpha == 0.5);
  CHECK(r.n_fresh == 150);  // floor(alpha * n_train)
  CHECK(r.n_target_centers == 300);
  CHECK(r.eps_star_sq > 0.0);
  CHECK(r.eps_hat_sq > 0.0);
  CHECK(r.eta >= 0.0);
  CHECK(r.eta <= 1.0);
  CHECK(std::isfinite(r.d_chi2));
  CHECK(std::isfinite(r.i_chi2));
  CHECK(std::isfinite(r.i_kl));
  CHECK(r.d_chi2_se > 0.0);
  CHECK(std::isfinite(art.final_d_chi2));
  CHECK(art.final_d_chi2_se > 0.0);
}

TEST_CASE("reruns with the same seed reproduce every recorded number exactly") {
  const RunConfig cfg = tiny_config();
  const auto a = run_recursion(cfg, 77);
  const auto b = run_recursion(cfg, 77);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    const auto& x = a.records[i];
    const auto& y = b.records[i];
    CHECK(x.d_chi2 == y.d_chi2);
    CHECK(x.eps_star_sq == y.eps_star_sq);
    CHECK(x.eps_hat_sq == y.eps_hat_sq);
    CHECK(x.eta == y.eta);
    CHECK(x.i_chi2 == y.i_chi2);
    CHECK(x.i_kl == y.i_kl);
    CHECK(x.contraction_lhs == y.contraction_lhs);
    CHECK(x.flags == y.flags);
  }
  CHECK(a.final_d_chi2 == b.final_d_chi2);

  const auto c = run_recursion(cfg, 78);
  CHECK(c.records[0].d_chi2 != a.records[0].d_chi2);
}

TEST_CASE("all-fresh training keeps the blend target equal to the data law") {
  RunConfig cfg = tiny_config();
  cfg.alpha = 1.0;
  const auto art = run_recursion(cfg, 5);
  for (const auto& r : art.records) {
    CHECK(r.n_fresh == cfg.n_train);
    CHECK(r.contraction_lhs == 0.0);  // ratio of target to data is exactly one
  }
}

TEST_CASE("generation sampling with and without error accumulators gives identical states") {
  const RunConfig cfg = tiny_config();
  const auto gmm = cfg.data_mixture();
  SeqRng rng(stream_key(3, "fresh"));
  const Mat fresh = sample(gmm, 200, rng);
  KdeScoreField learned(fresh, cfg.bandwidth);
  AnalyticScoreField analytic(gmm);

  const auto sched = cfg.schedule();
  const uint64_t noise = stream_key(3, "noise");
  const auto plain = reverse_sample(learned, sched, 150, noise);
  const auto instrumented = generation_run(learned, &analytic, sched, 150, noise, 60);

  REQUIRE(plain.states.rows() == instrumented.states.rows());
  CHECK((plain.states - instrumented.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK(instrumented.error_paths == 60);
  CHECK(instrumented.quad_var.head(60).minCoeff() > 0.0);
  CHECK(plain.quad_var.maxCoeff() == 0.0);
}

TEST_CASE("ablating with the reference that produced the generation changes nothing") {
  RunConfig cfg = tiny_config();
  cfg.n_generations = 2;
  // ablate_at = 0 swaps generation 0's producer for the reference, which by
  // default is that same generation-0 fit: the rerun is bit-identical.
  const double c = ablation_contribution(cfg, 9, 0, 2);
  CHECK(c == 0.0);
}

TEST_CASE("ablation matrix is triangular and consistent with the scalar form") {
  RunConfig cfg = tiny_config();
  cfg.n_generations = 2;
  const auto hm = heatmap(cfg, 12, 2);
  CHECK(hm.horizon == 2);
  REQUIRE(hm.contrib.rows() == 2);
  REQUIRE(hm.contrib.cols() == 2);
  CHECK(std::isnan(hm.contrib(1, 0)));
  CHECK(std::isfinite(hm.contrib(0, 0)));
  CHECK(std::isfinite(hm.contrib(0, 1)));
  CHECK(std::isfinite(hm.contrib(1, 1)));

  const double direct = ablation_contribution(cfg, 12, 1, 2);
  CHECK(hm.contrib(0, 1) == direct);

  RunConfig one = cfg;
  one.n_generations = 1;
  const auto hm1 = heatmap(one, 12, 1);
  REQUIRE(hm1.contrib.rows() == 1);
  CHECK(std::isfinite(hm1.contrib(0, 0)));
}

TEST_CASE("uninstrumented baseline divergences match the recorded ledger exactly") {
  RunConfig cfg = tiny_config();
  cfg.n_generations = 2;
  const auto art = run_recursion(cfg, 21);
  const auto hm = heatmap(cfg, 21, 2);
  REQUIRE(art.records.size() == 2);
  CHECK(hm.baseline_d[0] == art.records[1].d_chi2);
  CHECK(hm.baseline_d[1] == art.final_d_chi2);
}

TEST_CASE("sample stores round-trip with sidecar metadata") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "collapse_recursion_store_test";
  fs::remove_all(dir);

  RunConfig cfg = tiny_config();
  cfg.n_generations = 1;
  const auto art = run_recursion(cfg, 33, dir);

  REQUIRE(art.stores.size() == 3);  // fresh draw + generations 0 and 1
  for (const auto& p : art.stores) {
    CHECK(fs::exists(p));
    CHECK(fs::exists(sidecar_path(p)));
    const Mat m = load_samples(p);
    CHECK(m.rows() == cfg.n_train);
    CHECK(m.cols() == cfg.dim);
  }
  const auto meta = load_sidecar(art.stores[0]);
  CHECK(meta.contains("rows"));
  fs::remove_all(dir);
}

TEST_CASE("invalid run requests are rejected with field-level messages") {
  RunConfig cfg = tiny_config();
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(run_recursion(cfg, 1), std::invalid_argument);

  RunConfig bad_h = tiny_config();
  bad_h.n_generations = 0;
  CHECK_THROWS_AS(run_recursion(bad_h, 1), std::invalid_argument);

  const RunConfig ok = tiny_config();
  CHECK_THROWS_AS(heatmap(ok, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(heatmap(ok, 1, ok.n_generations + 1), std::invalid_argument);
  CHECK_THROWS_AS(ablation_contribution(ok, 1, 3, 2), std::invalid_argument);
}
