#include "collapse/observability.hpp"

#include <cmath>
#include <stdexcept>

namespace collapse {

namespace {

double sample_variance(const Vec& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return (v.array() - m).square().sum() / (v.size() - 1);
}

}  // namespace

EtaEstimate estimate_eta(const TrajectoryBatch& batch, int feature_dim, double ridge,
                         uint64_t key, int n_folds) {
  if (n_folds < 2) throw std::invalid_argument("estimate_eta: n_folds >= 2");

  // Pack alive paths that carry accumulators.
  std::vector<int64_t> rows;
  rows.reserve(batch.error_paths);
  for (int64_t i = 0; i < batch.error_paths; ++i)
    if (batch.alive[i]) rows.push_back(i);
  const int64_t n = static_cast<int64_t>(rows.size());
  if (n < 100) throw std::invalid_argument("estimate_eta: need at least 100 paths");

  Mat x(n, batch.states.cols());
  Vec m(n);
  for (int64_t r = 0; r < n; ++r) {
    x.row(r) = batch.states.row(rows[r]);
    m(r) = batch.martingale_m(rows[r]);
  }

  EtaEstimate est;
  est.n_features = feature_dim;
  est.ridge = ridge;
  est.n_paths = n;
  est.var_m = sample_variance(m);
  if (est.var_m < 1e-12) return est;  // eta = 0 by convention

  const double bw = median_pairwise_distance(x, fork_key(key, "bandwidth"));
  const RffMap map = RffMap::make(feature_dim, static_cast<int>(x.cols()), bw,
                                  fork_key(key, "features"));

  Vec oof(n);
  for (int f = 0; f < n_folds; ++f) {
    int64_t n_tr = 0, n_te = 0;
    for (int64_t r = 0; r < n; ++r) (r % n_folds == f ? n_te : n_tr)++;
    Mat xtr(n_tr, x.cols()), xte(n_te, x.cols());
    Vec ytr(n_tr);
    std::vector<int64_t> te_rows(n_te);
    int64_t a = 0, b = 0;
    for (int64_t r = 0; r < n; ++r) {
      if (r % n_folds == f) {
        xte.row(b) = x.row(r);
        te_rows[b++] = r;
      } else {
        xtr.row(a) = x.row(r);
        ytr(a++) = m(r);
      }
    }
    const LinearModel model = ridge_fit(map, xtr, ytr, ridge);
    const Vec pred = predict(map, model, xte);
    for (int64_t i = 0; i < n_te; ++i) oof(te_rows[i]) = pred(i);
  }

  est.var_prediction = sample_variance(oof);
  const double raw = est.var_prediction / est.var_m;
  est.eta = std::min(1.0, std::max(0.0, raw));

  // Leave-one-fold-out jackknife over the ratio.
  Vec loo(n_folds);
  for (int f = 0; f < n_folds; ++f) {
    int64_t keep = 0;
    for (int64_t r = 0; r < n; ++r)
      if (r % n_folds != f) ++keep;
    Vec mk(keep), pk(keep);
    int64_t a = 0;
    for (int64_t r = 0; r < n; ++r)
      if (r % n_folds != f) {
        mk(a) = m(r);
        pk(a) = oof(r);
        ++a;
      }
    const double vm = sample_variance(mk);
    loo(f) = vm > 0.0 ? sample_variance(pk) / vm : 0.0;
  }
  const double loo_mean = loo.mean();
  est.std_error = std::sqrt((n_folds - 1.0) / n_folds *
                            (loo.array() - loo_mean).square().sum());
  return est;
}

std::vector<ProbeRow> perturbation_probe(std::shared_ptr<const ScoreField> base,
                                         const std::vector<Perturbation>& classes,
                                         const ProbeConfig& cfg, uint64_t seed) {
  if (classes.empty()) throw std::invalid_argument("probe: classes nonempty");
  std::vector<ProbeRow> rows;
  rows.reserve(classes.size());

  for (size_t c = 0; c < classes.size(); ++c) {
    const Perturbation& original = classes[c];
    const uint64_t class_key =
        fork_key(fork_key(stream_key(seed, "probe"), original.name()), static_cast<uint64_t>(c));
    Perturbation p = original;

    TrajectoryBatch batch;
    MeanSe e{};
    // The pathwise energy is exactly quadratic in the magnitude for a fixed
    // noise key (ideal paths do not depend on the error field), so one
    // rescale lands on the target; the loop guards the search anyway.
    for (int round = 0; round < cfg.max_calibration_rounds; ++round) {
      PerturbationErrorField err(base, p);
      batch = paired_girsanov_run(*base, err, cfg.schedule, cfg.n_paths,
                                  fork_key(class_key, "paths"));
      e = batch_energy(batch);
      if (p.magnitude() == 0.0) break;  // control rows stay as given
      if (std::abs(e.value - cfg.target_energy) <= cfg.tolerance * cfg.target_energy)
        break;
      if (e.value <= 0.0) break;  // degenerate class (e.g. sin term vanishes)
      p = p.with_magnitude(p.magnitude() * std::sqrt(cfg.target_energy / e.value));
    }

    ProbeRow row;
    row.perturbation = p.name();
    if (p.magnitude() == 0.0) row.perturbation += "_zero";  // controls get their own label
    row.scale = p.magnitude();
    row.eps_star_sq = e.value;
    row.eps_star_se = e.se;
    row.eta = estimate_eta(batch, cfg.feature_dim, cfg.ridge, fork_key(class_key, "eta"));
    row.seed = seed;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace collapse
