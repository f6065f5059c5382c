#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "collapse/divergence.hpp"
#include "collapse/gmm.hpp"
#include "collapse/rng.hpp"
#include "collapse/score_field.hpp"

using namespace collapse;

namespace {

double gauss_pdf(double x, double mean, double var) {
  const double z = x - mean;
  return std::exp(-0.5 * z * z / var) / std::sqrt(2.0 * M_PI * var);
}

// Simpson on a wide grid: independent of any library code path.
template <typename F>
double quadrature(F f, double lo, double hi, int n) {
  const double dx = (hi - lo) / n;
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * dx) * (i % 2 ? 4.0 : 2.0);
  return acc * dx / 3.0;
}

GaussianMixture isotropic(const Vec& mean, double var) {
  GaussianMixture g;
  g.dim = static_cast<int>(mean.size());
  g.weights = Vec::Ones(1);
  g.means = mean.transpose();
  g.sigma = std::sqrt(var);
  return g;
}

Mat gaussian_sample(const Vec& mean, double var, int64_t n, uint64_t key) {
  SeqRng rng(key);
  Mat x(n, mean.size());
  for (int64_t i = 0; i < n; ++i)
    for (int j = 0; j < mean.size(); ++j) x(i, j) = mean(j) + std::sqrt(var) * rng.gaussian();
  return x;
}

}  // namespace

TEST_CASE("closed-form gaussian divergences match numerical quadrature in 1-d") {
  const double d0 = 0.4, v0 = 1.3, v1 = 0.9;
  const auto chi2_1d = quadrature(
      [&](double x) {
        const double num = gauss_pdf(x, d0, v0), den = gauss_pdf(x, 0.0, v1);
        const double r = num / den - 1.0;
        return r * r * den;
      },
      -14.0, 14.0, 8000);
  const auto kl_1d = quadrature(
      [&](double x) {
        const double num = gauss_pdf(x, d0, v0), den = gauss_pdf(x, 0.0, v1);
        return num * std::log(num / den);
      },
      -14.0, 14.0, 8000);

  Vec m0 = Vec::Constant(1, d0), m1 = Vec::Zero(1);
  CHECK(gaussian_chi2(m0, v0, m1, v1) == doctest::Approx(chi2_1d).epsilon(1e-7));
  CHECK(gaussian_kl(m0, v0, m1, v1) == doctest::Approx(kl_1d).epsilon(1e-9));
}

TEST_CASE("gaussian divergences factorize over independent coordinates") {
  Vec m0(3), m1 = Vec::Zero(3);
  m0 << 0.3, -0.2, 0.1;
  const double v0 = 1.2, v1 = 0.95;

  double chi2_prod = 1.0, kl_sum = 0.0;
  for (int j = 0; j < 3; ++j) {
    Vec a = Vec::Constant(1, m0(j)), b = Vec::Zero(1);
    chi2_prod *= gaussian_chi2(a, v0, b, v1) + 1.0;
    kl_sum += gaussian_kl(a, v0, b, v1);
  }
  CHECK(gaussian_chi2(m0, v0, m1, v1) == doctest::Approx(chi2_prod - 1.0).epsilon(1e-12));
  CHECK(gaussian_kl(m0, v0, m1, v1) == doctest::Approx(kl_sum).epsilon(1e-12));
}

TEST_CASE("gaussian chi-square diverges when the ratio is not square integrable") {
  Vec m = Vec::Zero(2);
  CHECK(gaussian_chi2(m, 2.0, m, 1.0) == std::numeric_limits<double>::infinity());
  CHECK(gaussian_chi2(m, 2.0 - 1e-9, m, 1.0) > 1e3);
  CHECK(std::isfinite(gaussian_chi2(m, 1.9, m, 1.0)));
  CHECK(gaussian_kl(m, 1.0, m, 1.0) == 0.0);
  CHECK(gaussian_chi2(m, 1.0, m, 1.0) == 0.0);
}

TEST_CASE("monte carlo exact-ratio estimates hit the closed forms within stated error") {
  const int dim = 2;
  Vec m0 = Vec::Zero(dim), m1 = Vec::Zero(dim);
  m0(0) = 0.35;
  const double v0 = 1.0, v1 = 1.15;

  auto num = std::make_shared<AnalyticScoreField>(isotropic(m0, v0));
  auto den = std::make_shared<AnalyticScoreField>(isotropic(m1, v1));

  const auto den_pts = gaussian_sample(m1, v1, 60000, stream_key(404, "den"));
  const auto num_pts = gaussian_sample(m0, v0, 60000, stream_key(404, "num"));

  const auto chi2 = chi2_exact_ratio(*num, *den, den_pts);
  const auto kl = kl_exact_ratio(*num, *den, num_pts);
  const double chi2_true = gaussian_chi2(m0, v0, m1, v1);
  const double kl_true = gaussian_kl(m0, v0, m1, v1);

  CHECK(std::abs(chi2.value - chi2_true) <= 3.0 * chi2.std_error);
  CHECK(std::abs(kl.value - kl_true) <= 3.0 * kl.std_error);
  CHECK(chi2.std_error > 0.0);
  CHECK(chi2.std_error < 0.05);
  CHECK(chi2.method == DivergenceMethod::ExactRatio);
}

TEST_CASE("identical densities give exactly zero divergence and zero error") {
  auto g = GaussianMixture::five_cluster(3, 0.8);
  auto f = std::make_shared<AnalyticScoreField>(g);
  SeqRng rng(stream_key(11, "pts"));
  const Mat pts = sample(g, 4000, rng);
  const auto chi2 = chi2_exact_ratio(*f, *f, pts);
  const auto kl = kl_exact_ratio(*f, *f, pts);
  CHECK(chi2.value == 0.0);
  CHECK(chi2.std_error == 0.0);
  CHECK(kl.value == 0.0);
  CHECK(chi2.n_capped == 0);
}

TEST_CASE("standard error scales like the square root of the sample count") {
  Vec m0 = Vec::Zero(1), m1 = Vec::Zero(1);
  m0(0) = 0.3;
  auto num = std::make_shared<AnalyticScoreField>(isotropic(m0, 1.0));
  auto den = std::make_shared<AnalyticScoreField>(isotropic(m1, 1.0));
  const auto small = gaussian_sample(m1, 1.0, 2000, stream_key(7, "a"));
  const auto large = gaussian_sample(m1, 1.0, 32000, stream_key(7, "a"));
  const double se_small = chi2_exact_ratio(*num, *den, small).std_error;
  const double se_large = chi2_exact_ratio(*num, *den, large).std_error;
  CHECK(se_small / se_large == doctest::Approx(4.0).epsilon(0.35));
}

TEST_CASE("log-ratio reducers compute the stated expectations") {
  Vec lr(4);
  lr << std::log(2.0), std::log(0.5), 0.0, std::log(1.5);
  const auto chi2 = chi2_from_log_ratio(lr);
  double mean = 0.0;
  for (double v : {1.0, -0.5, 0.0, 0.5}) mean += v * v / 4.0;
  CHECK(chi2.value == doctest::Approx(mean).epsilon(1e-12));
  CHECK(chi2.n_eval == 4);

  const auto kl = kl_from_log_ratio(lr);
  CHECK(kl.value == doctest::Approx((std::log(2.0) + std::log(0.5) + std::log(1.5)) / 4.0)
                        .epsilon(1e-12));
}

TEST_CASE("extreme log ratios are winsorized, counted, and flagged") {
  const double cap = log_ratio_cap();
  CHECK(cap > 10.0);

  Vec lr(5);
  lr << cap + 5.0, -(cap + 5.0), 0.1, -0.1, 0.0;
  const auto est = chi2_from_log_ratio(lr);
  CHECK(est.n_capped == 2);
  CHECK(est.cap_flagged);
  CHECK(std::isfinite(est.value));

  Vec mild = Vec::Zero(8);
  const auto clean = kl_from_log_ratio(mild);
  CHECK(clean.n_capped == 0);
  CHECK_FALSE(clean.cap_flagged);

  // capped contributions enter at exactly the cap
  Vec one(1);
  one << cap + 3.0;
  const auto capped = kl_from_log_ratio(one);
  CHECK(capped.value == doctest::Approx(cap).epsilon(1e-12));
}

TEST_CASE("kernel density model of a large sample approaches its generator") {
  Vec m = Vec::Zero(1);
  const double h = 0.05;  // small enough that a sparse center set leaves holes

  auto analytic = std::make_shared<AnalyticScoreField>(isotropic(m, 1.0));
  const auto eval_pts = gaussian_sample(m, 1.0, 4000, stream_key(21, "eval"));

  double prev = std::numeric_limits<double>::infinity();
  for (int64_t n : {200, 2000, 20000}) {
    const auto train = gaussian_sample(m, 1.0, n, stream_key(21, "train"));
    auto kde = density_from_samples(train, h);
    // eval points come from the generator, so it plays the numerator
    const auto kl = kl_exact_ratio(*analytic, *kde, eval_pts);
    CHECK(kl.method == DivergenceMethod::ExactRatio);
    CHECK(kl.value < prev + 3.0 * kl.std_error);
    prev = kl.value;
  }
  // at n = 32000 with a modest bandwidth the mismatch is small
  CHECK(prev < 0.05);
}

TEST_CASE("kernel-ratio and exact-ratio estimates agree on a well-sampled 1-d problem") {
  Vec m0 = Vec::Constant(1, 0.25), m1 = Vec::Zero(1);
  auto num = std::make_shared<AnalyticScoreField>(isotropic(m0, 1.0));
  auto den = std::make_shared<AnalyticScoreField>(isotropic(m1, 1.0));

  const auto den_pts = gaussian_sample(m1, 1.0, 20000, stream_key(33, "pts"));
  const auto num_train = gaussian_sample(m0, 1.0, 50000, stream_key(33, "num-train"));
  const auto den_train = gaussian_sample(m1, 1.0, 50000, stream_key(33, "den-train"));

  const double h = 0.08;
  auto num_kde = density_from_samples(num_train, h);
  auto den_kde = density_from_samples(den_train, h);

  const auto exact = chi2_exact_ratio(*num, *den, den_pts);
  auto kde_est = chi2_exact_ratio(*num_kde, *den_kde, den_pts);
  kde_est.method = DivergenceMethod::KdeRatio;

  // kernel smoothing inflates both densities comparably; the ratio survives
  CHECK(std::abs(kde_est.value - exact.value) <
        0.15 * exact.value + 3.0 * (kde_est.std_error + exact.std_error));
}

TEST_CASE("classifier ratio separates what should be separated and nothing else") {
  const int64_t n = 6000;
  Vec m0 = Vec::Constant(1, 0.5), m1 = Vec::Zero(1);

  const auto num_train = gaussian_sample(m0, 1.0, n, stream_key(55, "num"));
  const auto den_train = gaussian_sample(m1, 1.0, n, stream_key(55, "den"));
  const auto den_pts = gaussian_sample(m1, 1.0, 20000, stream_key(55, "pts"));

  SUBCASE("null comparison stays near zero") {
    const auto alt = gaussian_sample(m1, 1.0, n, stream_key(55, "den2"));
    const auto ratio = classifier_ratio(alt, den_train, 256, 1e-3, stream_key(55, "clf0"));
    const auto est = chi2_classifier(ratio, den_pts);
    CHECK(est.value <= 0.05);
    CHECK_FALSE(ratio.separable_flag);
  }

  SUBCASE("mean-shifted gaussians match the closed form loosely") {
    const auto ratio = classifier_ratio(num_train, den_train, 256, 1e-3, stream_key(55, "clf1"));
    const auto est = chi2_classifier(ratio, den_pts);
    const double truth = gaussian_chi2(m0, 1.0, m1, 1.0);  // e^{0.25} - 1
    CHECK(est.value > 0.05);
    CHECK(std::abs(est.value - truth) < 0.25 * truth + 3.0 * est.std_error);
    CHECK(est.method == DivergenceMethod::ClassifierRatio);
  }

  SUBCASE("disjoint supports raise the separability flag") {
    // with an essentially unregularized fit, separation drives the training
    // log-odds past the winsorization cap
    const auto far = gaussian_sample(Vec::Constant(1, 60.0), 0.01, n, stream_key(55, "far"));
    const auto ratio = classifier_ratio(far, den_train, 256, 1e-10, stream_key(55, "clf2"));
    CHECK(ratio.separable_flag);
  }
}

TEST_CASE("method names are stable strings") {
  CHECK(std::string(divergence_method_name(DivergenceMethod::ExactRatio)) == "exact_ratio");
  CHECK(std::string(divergence_method_name(DivergenceMethod::KdeRatio)) == "kde_ratio");
  CHECK(std::string(divergence_method_name(DivergenceMethod::ClassifierRatio)) ==
        "classifier_ratio");
}
