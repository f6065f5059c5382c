#include "collapse/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace collapse {

namespace {

constexpr double kCapFlagFraction = 1e-4;

DivergenceEstimate reduce(const Vec& values, DivergenceMethod method, int64_t n_capped) {
  DivergenceEstimate est;
  est.method = method;
  est.n_eval = values.size();
  est.n_capped = n_capped;
  est.cap_flagged = n_capped > kCapFlagFraction * double(values.size());
  if (values.size() == 0) return est;
  est.value = values.mean();
  if (values.size() > 1) {
    const double ss = (values.array() - est.value).square().sum();
    est.std_error = std::sqrt(ss / (values.size() - 1) / values.size());
  }
  return est;
}

Vec winsorize(const Vec& log_ratio, int64_t& n_capped) {
  const double cap = log_ratio_cap();
  Vec out = log_ratio;
  n_capped = 0;
  for (int64_t i = 0; i < out.size(); ++i) {
    if (out(i) > cap) {
      out(i) = cap;
      ++n_capped;
    } else if (out(i) < -cap) {
      out(i) = -cap;
      ++n_capped;
    }
  }
  return out;
}

}  // namespace

const char* divergence_method_name(DivergenceMethod m) {
  switch (m) {
    case DivergenceMethod::ExactRatio:
      return "exact_ratio";
    case DivergenceMethod::KdeRatio:
      return "kde_ratio";
    case DivergenceMethod::ClassifierRatio:
      return "classifier_ratio";
  }
  return "?";
}

double log_ratio_cap() { return std::log(1e8); }

DivergenceEstimate chi2_from_log_ratio(const Vec& log_ratio_at_den_points,
                                       DivergenceMethod method) {
  int64_t n_capped = 0;
  const Vec lr = winsorize(log_ratio_at_den_points, n_capped);
  Vec v(lr.size());
  for (int64_t i = 0; i < lr.size(); ++i) {
    const double d = std::expm1(lr(i));
    v(i) = d * d;
  }
  return reduce(v, method, n_capped);
}

DivergenceEstimate kl_from_log_ratio(const Vec& log_ratio_at_num_points,
                                     DivergenceMethod method) {
  int64_t n_capped = 0;
  const Vec lr = winsorize(log_ratio_at_num_points, n_capped);
  return reduce(lr, method, n_capped);
}

DivergenceEstimate chi2_exact_ratio(const DensityScoreField& num, const DensityScoreField& den,
                                    const Mat& den_points) {
  Vec ln, ld;
  num.log_density(den_points, 0.0, ln);
  den.log_density(den_points, 0.0, ld);
  return chi2_from_log_ratio(ln - ld);
}

DivergenceEstimate kl_exact_ratio(const DensityScoreField& num, const DensityScoreField& den,
                                  const Mat& num_points) {
  Vec ln, ld;
  num.log_density(num_points, 0.0, ln);
  den.log_density(num_points, 0.0, ld);
  return kl_from_log_ratio(ln - ld);
}

std::shared_ptr<const DensityScoreField> density_from_samples(const Mat& samples, double h) {
  return std::make_shared<KdeScoreField>(samples, h);
}

double gaussian_chi2(const Vec& m0, double v0, const Vec& m1, double v1) {
  if (m0.size() != m1.size()) throw std::invalid_argument("gaussian_chi2: dim mismatch");
  if (!(v0 > 0.0) || !(v1 > 0.0)) throw std::invalid_argument("gaussian_chi2: variances > 0");
  const double denom = 2.0 * v1 - v0;
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  const double d = double(m0.size());
  const double log_factor = d * (std::log(v1) - 0.5 * std::log(v0 * denom));
  const double expo = (m0 - m1).squaredNorm() / denom;
  return std::expm1(log_factor + expo);
}

double gaussian_kl(const Vec& m0, double v0, const Vec& m1, double v1) {
  if (m0.size() != m1.size()) throw std::invalid_argument("gaussian_kl: dim mismatch");
  if (!(v0 > 0.0) || !(v1 > 0.0)) throw std::invalid_argument("gaussian_kl: variances > 0");
  const double d = double(m0.size());
  const double r = v0 / v1;
  return 0.5 * (d * (r - 1.0 - std::log(r)) + (m0 - m1).squaredNorm() / v1);
}

Vec RatioModel::log_ratio(const Mat& x) const {
  Vec r = predict(map, model, x);
  for (int64_t i = 0; i < r.size(); ++i) r(i) = std::clamp(r(i), -cap, cap);
  return r;
}

RatioModel classifier_ratio(const Mat& samples_num, const Mat& samples_den, int feature_dim,
                            double ridge, uint64_t key) {
  if (samples_num.rows() == 0 || samples_den.rows() == 0)
    throw std::invalid_argument("classifier_ratio: both sample sets required");
  if (samples_num.cols() != samples_den.cols())
    throw std::invalid_argument("classifier_ratio: dim mismatch");

  // Balance classes by subsampling the larger set.
  const int64_t m = std::min(samples_num.rows(), samples_den.rows());
  auto take = [&](const Mat& s, uint64_t subkey) {
    if (s.rows() == m) return s;
    SeqRng rng(subkey);
    const auto idx = rng.sample_without_replacement(s.rows(), m);
    Mat out(m, s.cols());
    for (int64_t i = 0; i < m; ++i) out.row(i) = s.row(idx[i]);
    return out;
  };
  const Mat xn = take(samples_num, fork_key(key, "balance-num"));
  const Mat xd = take(samples_den, fork_key(key, "balance-den"));

  Mat pooled(2 * m, xn.cols());
  pooled.topRows(m) = xn;
  pooled.bottomRows(m) = xd;
  Vec y(2 * m);
  y.head(m).setOnes();
  y.tail(m).setZero();

  RatioModel out;
  out.cap = std::log(1e6);
  const double bw = median_pairwise_distance(pooled, fork_key(key, "bandwidth"));
  out.map = RffMap::make(feature_dim, static_cast<int>(pooled.cols()), bw,
                         fork_key(key, "features"));
  out.model = logistic_fit(out.map, pooled, y, ridge);

  const Vec train_resp = predict(out.map, out.model, pooled);
  out.separable_flag = train_resp.lpNorm<Eigen::Infinity>() >= out.cap;
  return out;
}

DivergenceEstimate chi2_classifier(const RatioModel& ratio, const Mat& den_points) {
  const Vec r = ratio.log_ratio(den_points);
  Vec v(r.size());
  int64_t capped = 0;
  for (int64_t i = 0; i < r.size(); ++i) {
    if (std::abs(r(i)) >= ratio.cap) ++capped;
    const double d = std::expm1(r(i));
    v(i) = d * d;
  }
  return reduce(v, DivergenceMethod::ClassifierRatio, capped);
}

}  // namespace collapse
