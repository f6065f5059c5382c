#include "collapse/recursion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "collapse/divergence.hpp"
#include "collapse/observability.hpp"
#include "collapse/sde.hpp"
#include "collapse/store.hpp"

namespace collapse {

namespace {

// One named stream per randomness purpose, each forked by round, so an
// ablation rerun replays any round's draws without simulating the rounds
// it skips.
struct StreamKeys {
  uint64_t seed_data, pool_fresh, pool_pick, gen_noise, d_eval, i_eval_fresh, i_eval_pick,
      ideal_noise, eta;

  explicit StreamKeys(uint64_t run_seed)
      : seed_data(stream_key(run_seed, "seed-data")),
        pool_fresh(stream_key(run_seed, "pool-fresh")),
        pool_pick(stream_key(run_seed, "pool-pick")),
        gen_noise(stream_key(run_seed, "gen-noise")),
        d_eval(stream_key(run_seed, "d-eval")),
        i_eval_fresh(stream_key(run_seed, "i-eval-fresh")),
        i_eval_pick(stream_key(run_seed, "i-eval-pick")),
        ideal_noise(stream_key(run_seed, "ideal-noise")),
        eta(stream_key(run_seed, "eta")) {}
};

void require_valid(const RunConfig& cfg, const char* who) {
  const auto errs = validate(cfg);
  if (errs.empty()) return;
  std::string msg = std::string(who) + ": invalid config:";
  for (const auto& e : errs) msg += "\n  " + e;
  throw std::invalid_argument(msg);
}

double logaddexp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

Vec log_ratio_at(const DensityScoreField& num, const DensityScoreField& den, const Mat& pts) {
  Vec a, b;
  num.log_density(pts, 0.0, a);
  den.log_density(pts, 0.0, b);
  return a - b;
}

// chi2(generation n || data) at generation n's dedicated eval points, shared
// between a baseline and its ablated replays.
DivergenceEstimate horizon_divergence(const GaussianMixture& gmm,
                                      const AnalyticScoreField& analytic,
                                      const KdeScoreField& kde_n, int n, int64_t n_eval,
                                      const StreamKeys& keys, Vec* lr_out = nullptr) {
  SeqRng rng(fork_key(keys.d_eval, static_cast<uint64_t>(n)));
  const Mat pts = sample(gmm, n_eval, rng);
  Vec lr = log_ratio_at(kde_n, analytic, pts);
  auto est = chi2_from_log_ratio(lr, DivergenceMethod::KdeRatio);
  if (lr_out) *lr_out = std::move(lr);
  return est;
}

// Round-`round` training pool: floor(alpha N) fresh rows, remainder drawn
// without replacement from the previous generation.
Mat build_pool(const RunConfig& cfg, const GaussianMixture& gmm, const StreamKeys& keys,
               int round, const Mat& prev, int64_t* n_fresh_out) {
  const int64_t n = cfg.n_train;
  const auto n_fresh = static_cast<int64_t>(std::floor(cfg.alpha * static_cast<double>(n)));
  const int64_t n_synth = n - n_fresh;
  if (n_synth > prev.rows())
    throw std::runtime_error("generation " + std::to_string(round + 1) + ": pool needs " +
                             std::to_string(n_synth) + " prior rows, have " +
                             std::to_string(prev.rows()));
  Mat pool(n, cfg.dim);
  if (n_fresh > 0) {
    SeqRng rng(fork_key(keys.pool_fresh, static_cast<uint64_t>(round)));
    pool.topRows(n_fresh) = sample(gmm, n_fresh, rng);
  }
  if (n_synth > 0) {
    SeqRng rng(fork_key(keys.pool_pick, static_cast<uint64_t>(round)));
    const auto idx = rng.sample_without_replacement(prev.rows(), n_synth);
    for (int64_t r = 0; r < n_synth; ++r) pool.row(n_fresh + r) = prev.row(idx[r]);
  }
  if (n_fresh_out) *n_fresh_out = n_fresh;
  return pool;
}

Mat sample_generation(const ScoreField& score, const DiffusionSchedule& sched, int64_t n,
                      uint64_t noise_key, int generation, int64_t* aborts) {
  try {
    auto batch = reverse_sample(score, sched, n, noise_key);
    if (aborts) *aborts += static_cast<int64_t>(batch.aborts.size());
    return batch.valid_states();
  } catch (const AbortRateError& e) {
    throw std::runtime_error("generation " + std::to_string(generation) + ": " + e.what());
  }
}

}  // namespace

RunArtifacts run_recursion(const RunConfig& cfg, uint64_t run_seed,
                           const std::filesystem::path& store_dir) {
  require_valid(cfg, "run_recursion");
  const DiffusionSchedule sched = cfg.schedule();
  sched.validate();
  const GaussianMixture gmm = cfg.data_mixture();
  auto analytic = std::make_shared<AnalyticScoreField>(gmm);
  const StreamKeys keys(run_seed);
  const double h = cfg.bandwidth;

  RunArtifacts out;
  const bool persist = !store_dir.empty();
  if (persist) std::filesystem::create_directories(store_dir);
  auto store_matrix = [&](const Mat& x, const std::string& name, nlohmann::json extra) {
    if (!persist) return;
    extra["seed"] = run_seed;
    const auto p = store_dir / name;
    save_samples(p, x, extra);
    out.stores.push_back(p);
  };
  const std::string tag = std::to_string(run_seed);

  SeqRng data_rng(keys.seed_data);
  const Mat fresh0 = sample(gmm, cfg.n_train, data_rng);
  auto s0 = std::make_shared<KdeScoreField>(fresh0, h);
  store_matrix(fresh0, "fresh_" + tag + ".bin", {{"role", "fresh"}});

  int64_t pending_aborts = 0;
  // density model of the current generation; its training set is the
  // generation's sample set itself
  auto kde_cur = std::make_shared<KdeScoreField>(
      sample_generation(*s0, sched, cfg.n_train, fork_key(keys.gen_noise, 0), 0,
                        &pending_aborts),
      h);
  store_matrix(kde_cur->training(), "gen_" + tag + "_0.bin", {{"generation", 0}});
  out.records.reserve(cfg.n_generations);

  for (int i = 0; i < cfg.n_generations; ++i) {
    GenerationRecord rec;
    rec.seed = run_seed;
    rec.generation = i;
    rec.alpha = cfg.alpha;

    auto target = std::make_shared<MixtureTargetScore>(cfg.alpha, analytic, kde_cur);

    // Divergence of the current generation, plus the blend's divergence at
    // the same eval points: pointwise r_blend = alpha + (1-alpha) r.
    Vec lr_d;
    const auto d_est =
        horizon_divergence(gmm, *analytic, *kde_cur, i, cfg.n_eval, keys, &lr_d);
    rec.d_chi2 = d_est.value;
    rec.d_chi2_se = d_est.std_error;
    Vec lr_blend(lr_d.size());
    if (cfg.alpha == 1.0) {
      lr_blend.setZero();
    } else {
      const double la = std::log(cfg.alpha);
      const double l1a = std::log1p(-cfg.alpha);
      for (int64_t j = 0; j < lr_d.size(); ++j) lr_blend[j] = logaddexp(la, l1a + lr_d[j]);
    }
    const auto c_est = chi2_from_log_ratio(lr_blend, DivergenceMethod::KdeRatio);
    rec.contraction_lhs = c_est.value;
    rec.contraction_lhs_se = c_est.std_error;

    int64_t n_fresh = 0;
    const Mat pool = build_pool(cfg, gmm, keys, i, kde_cur->training(), &n_fresh);
    rec.n_fresh = n_fresh;
    rec.n_target_centers = kde_cur->n_train();
    KdeScoreField learned(pool, h);

    int64_t aborts = pending_aborts;
    pending_aborts = 0;
    TrajectoryBatch gen_batch;
    try {
      gen_batch = generation_run(learned, target.get(), sched, cfg.n_train,
                                 fork_key(keys.gen_noise, static_cast<uint64_t>(i) + 1),
                                 cfg.n_energy_paths);
    } catch (const AbortRateError& e) {
      throw std::runtime_error("generation " + std::to_string(i + 1) + ": " + e.what());
    }
    aborts += static_cast<int64_t>(gen_batch.aborts.size());
    const auto ehat = batch_energy(gen_batch);
    rec.eps_hat_sq = ehat.value;
    rec.eps_hat_se = ehat.se;
    auto kde_next = std::make_shared<KdeScoreField>(gen_batch.valid_states(), h);
    gen_batch = TrajectoryBatch{};

    TrajectoryBatch ideal;
    try {
      ideal = girsanov_ideal_run(*target, learned, sched, cfg.n_girsanov_paths,
                                 fork_key(keys.ideal_noise, static_cast<uint64_t>(i)));
    } catch (const AbortRateError& e) {
      throw std::runtime_error("generation " + std::to_string(i + 1) +
                               " (target-path run): " + e.what());
    }
    aborts += static_cast<int64_t>(ideal.aborts.size());
    const auto estar = batch_energy(ideal);
    rec.eps_star_sq = estar.value;
    rec.eps_star_se = estar.se;
    const auto eta = estimate_eta(ideal, cfg.feature_dim, cfg.eta_ridge,
                                  fork_key(keys.eta, static_cast<uint64_t>(i)), cfg.eta_folds);
    rec.eta = eta.eta;
    rec.eta_se = eta.std_error;
    ideal = TrajectoryBatch{};

    // New generation vs the blend it was trained toward: chi2 at blend-drawn
    // points, KL at the generation's own stored points.
    const auto nf_eval = static_cast<int64_t>(std::floor(cfg.alpha * cfg.n_eval));
    Mat ipts(cfg.n_eval, cfg.dim);
    if (nf_eval > 0) {
      SeqRng rng(fork_key(keys.i_eval_fresh, static_cast<uint64_t>(i)));
      ipts.topRows(nf_eval) = sample(gmm, nf_eval, rng);
    }
    if (nf_eval < cfg.n_eval) {
      SeqRng rng(fork_key(keys.i_eval_pick, static_cast<uint64_t>(i)));
      const Mat& prev = kde_cur->training();
      for (int64_t r = nf_eval; r < cfg.n_eval; ++r)
        ipts.row(r) = prev.row(static_cast<int64_t>(rng.bounded(prev.rows())));
    }
    const auto i_est =
        chi2_from_log_ratio(log_ratio_at(*kde_next, *target, ipts), DivergenceMethod::KdeRatio);
    rec.i_chi2 = i_est.value;
    rec.i_chi2_se = i_est.std_error;
    const auto kl_est = kl_from_log_ratio(
        log_ratio_at(*kde_next, *target, kde_next->training()), DivergenceMethod::KdeRatio);
    rec.i_kl = kl_est.value;
    rec.i_kl_se = kl_est.std_error;

    std::string flags;
    auto add_flag = [&flags](const std::string& tok) {
      if (!flags.empty()) flags += ';';
      flags += tok;
    };
    if (const auto uf = target->underflow_count(); uf > 0)
      add_flag("target_underflow=" + std::to_string(uf));
    if (aborts > 0) add_flag("aborts=" + std::to_string(aborts));
    if (d_est.n_capped > 0) add_flag("d_capped=" + std::to_string(d_est.n_capped));
    if (c_est.n_capped > 0) add_flag("c_capped=" + std::to_string(c_est.n_capped));
    if (i_est.n_capped > 0) add_flag("i_capped=" + std::to_string(i_est.n_capped));
    if (kl_est.n_capped > 0) add_flag("kl_capped=" + std::to_string(kl_est.n_capped));
    const auto sane = [](double v, double se) { return std::isfinite(v) && v >= -3.0 * se; };
    if (!sane(rec.d_chi2, rec.d_chi2_se) || !sane(rec.i_chi2, rec.i_chi2_se) ||
        !sane(rec.i_kl, rec.i_kl_se) || !sane(rec.eps_star_sq, rec.eps_star_se) ||
        !sane(rec.eps_hat_sq, rec.eps_hat_se))
      add_flag("invariant");
    rec.flags = flags.empty() ? "ok" : flags;

    store_matrix(kde_next->training(), "gen_" + tag + "_" + std::to_string(i + 1) + ".bin",
                 {{"generation", i + 1}});
    kde_cur = std::move(kde_next);
    out.records.push_back(std::move(rec));
  }

  const auto d_final =
      horizon_divergence(gmm, *analytic, *kde_cur, cfg.n_generations, cfg.n_eval, keys);
  out.final_d_chi2 = d_final.value;
  out.final_d_chi2_se = d_final.std_error;
  return out;
}

namespace {

struct LightBaseline {
  Mat fresh;
  std::shared_ptr<KdeScoreField> s0;
  std::vector<Mat> samples;            // generations 0..horizon
  std::vector<DivergenceEstimate> d;   // d[n-1] = chi2(generation n || data)
};

// Generations without instrumentation. Stream keys are identical to
// run_recursion's, so the sample sets match it bit for bit.
LightBaseline run_light(const RunConfig& cfg, const GaussianMixture& gmm,
                        const AnalyticScoreField& analytic, const StreamKeys& keys, int horizon) {
  const DiffusionSchedule sched = cfg.schedule();
  sched.validate();
  LightBaseline base;
  SeqRng data_rng(keys.seed_data);
  base.fresh = sample(gmm, cfg.n_train, data_rng);
  base.s0 = std::make_shared<KdeScoreField>(base.fresh, cfg.bandwidth);
  base.samples.push_back(
      sample_generation(*base.s0, sched, cfg.n_train, fork_key(keys.gen_noise, 0), 0, nullptr));
  base.d.resize(horizon);
  for (int i = 0; i < horizon; ++i) {
    const Mat pool = build_pool(cfg, gmm, keys, i, base.samples.back(), nullptr);
    KdeScoreField learned(pool, cfg.bandwidth);
    base.samples.push_back(sample_generation(
        learned, sched, cfg.n_train, fork_key(keys.gen_noise, static_cast<uint64_t>(i) + 1),
        i + 1, nullptr));
    KdeScoreField kde_n(base.samples.back(), cfg.bandwidth);
    base.d[i] = horizon_divergence(gmm, analytic, kde_n, i + 1, cfg.n_eval, keys);
  }
  return base;
}

// Replays generations ablate_at..horizon with the score that produces
// generation `ablate_at` swapped for the reference model; fills d[n-1] for
// n in [max(ablate_at,1), horizon].
std::vector<DivergenceEstimate> run_ablated(const RunConfig& cfg, const GaussianMixture& gmm,
                                            const std::shared_ptr<AnalyticScoreField>& analytic,
                                            const StreamKeys& keys, const LightBaseline& base,
                                            int ablate_at, int horizon) {
  const DiffusionSchedule sched = cfg.schedule();
  std::vector<DivergenceEstimate> d(horizon);

  std::shared_ptr<const ScoreField> ref;
  if (!cfg.analytic_reference) {
    ref = base.s0;
  } else if (ablate_at == 0) {
    ref = analytic;
  } else {
    auto kde_prev = std::make_shared<KdeScoreField>(base.samples[ablate_at - 1], cfg.bandwidth);
    ref = std::make_shared<MixtureTargetScore>(cfg.alpha, analytic, kde_prev);
  }

  Mat cur = sample_generation(*ref, sched, cfg.n_train,
                              fork_key(keys.gen_noise, static_cast<uint64_t>(ablate_at)),
                              ablate_at, nullptr);
  if (ablate_at >= 1) {
    KdeScoreField kde_k(cur, cfg.bandwidth);
    d[ablate_at - 1] = horizon_divergence(gmm, *analytic, kde_k, ablate_at, cfg.n_eval, keys);
  }
  for (int j = ablate_at; j < horizon; ++j) {
    const Mat pool = build_pool(cfg, gmm, keys, j, cur, nullptr);
    KdeScoreField learned(pool, cfg.bandwidth);
    cur = sample_generation(learned, sched, cfg.n_train,
                            fork_key(keys.gen_noise, static_cast<uint64_t>(j) + 1), j + 1,
                            nullptr);
    KdeScoreField kde_n(cur, cfg.bandwidth);
    d[j] = horizon_divergence(gmm, *analytic, kde_n, j + 1, cfg.n_eval, keys);
  }
  return d;
}

}  // namespace

double ablation_contribution(const RunConfig& cfg, uint64_t run_seed, int ablate_at,
                             int horizon) {
  require_valid(cfg, "ablation_contribution");
  if (ablate_at < 0 || horizon < 1 || ablate_at > horizon || horizon > cfg.n_generations)
    throw std::invalid_argument(
        "ablation_contribution: need 0 <= ablate_at <= horizon <= n_generations");
  const GaussianMixture gmm = cfg.data_mixture();
  auto analytic = std::make_shared<AnalyticScoreField>(gmm);
  const StreamKeys keys(run_seed);
  const auto base = run_light(cfg, gmm, *analytic, keys, horizon);
  const auto abl = run_ablated(cfg, gmm, analytic, keys, base, ablate_at, horizon);
  return base.d[horizon - 1].value - abl[horizon - 1].value;
}

HeatmapResult heatmap(const RunConfig& cfg, uint64_t run_seed, int horizon) {
  require_valid(cfg, "heatmap");
  if (horizon < 1 || horizon > cfg.n_generations)
    throw std::invalid_argument("heatmap: need 1 <= horizon <= n_generations");
  const GaussianMixture gmm = cfg.data_mixture();
  auto analytic = std::make_shared<AnalyticScoreField>(gmm);
  const StreamKeys keys(run_seed);
  const auto base = run_light(cfg, gmm, *analytic, keys, horizon);

  HeatmapResult out;
  out.horizon = horizon;
  out.contrib = Mat::Constant(horizon, horizon, std::numeric_limits<double>::quiet_NaN());
  out.baseline_d = Vec(horizon);
  for (int n = 1; n <= horizon; ++n) out.baseline_d[n - 1] = base.d[n - 1].value;
  for (int k = 1; k <= horizon; ++k) {
    const auto abl = run_ablated(cfg, gmm, analytic, keys, base, k, horizon);
    for (int n = k; n <= horizon; ++n)
      out.contrib(k - 1, n - 1) = base.d[n - 1].value - abl[n - 1].value;
  }
  return out;
}

}  // namespace collapse
