#include <doctest.h>

#include <cmath>
#include <vector>

#include "collapse/gmm.hpp"
#include "collapse/schedule.hpp"

using namespace collapse;

namespace {

GaussianMixture single(int dim, double sigma) {
  GaussianMixture g;
  g.weights = Vec::Ones(1);
  g.means = Mat::Zero(1, dim);
  g.sigma = sigma;
  g.dim = dim;
  return g;
}

}  // namespace

TEST_CASE("five-cluster target is a valid mixture with the pinned geometry") {
  const auto g = GaussianMixture::five_cluster();
  g.validate();
  CHECK(g.dim == 10);
  CHECK(g.weights.size() == 5);
  CHECK(g.weights.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.sigma == 0.6);
  CHECK(g.means.row(0).norm() == 0.0);
  for (int k = 1; k < 5; ++k) {
    CHECK(std::abs(g.means(k, 0)) == 4.0);
    CHECK(std::abs(g.means(k, 1)) == 4.0);
    CHECK(g.means.row(k).tail(8).norm() == 0.0);
  }
}

TEST_CASE("unit-variance mixtures are stationary under diffusion") {
  auto g = GaussianMixture::five_cluster(4, 1.0);
  for (double t : {0.0, 0.3, 1.7, 4.0}) {
    const auto d = diffused_mixture(g, t);
    CHECK(d.sigma == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("diffusion at t = 0 reproduces the mixture bit for bit") {
  const auto g = GaussianMixture::five_cluster();
  const auto d = diffused_mixture(g, 0.0);
  CHECK(d.sigma == g.sigma);
  CHECK((d.means - g.means).norm() == 0.0);
  CHECK((d.weights - g.weights).norm() == 0.0);
}

TEST_CASE("diffusion rejects invalid times") {
  const auto g = GaussianMixture::five_cluster(2, 0.5);
  CHECK_THROWS(diffused_mixture(g, -0.1));
  CHECK_THROWS(diffused_mixture(g, std::nan("")));
}

TEST_CASE("diffused moments match a brute-force forward simulation") {
  const auto g = GaussianMixture::five_cluster(6, 0.6);
  const double t = 1.3;
  const auto d = diffused_mixture(g, t);

  // Exact Ornstein-Uhlenbeck transitions, many small hops.
  SeqRng rng(stream_key(123, "forward-sim"));
  const int64_t n = 100000;
  Mat x = sample(g, n, rng);
  const int hops = 16;
  const double dt = t / hops;
  const double a = std::exp(-0.5 * dt);
  const double s = std::sqrt(1.0 - a * a);
  for (int h = 0; h < hops; ++h)
    for (int64_t i = 0; i < n; ++i)
      for (int j = 0; j < 6; ++j) x(i, j) = a * x(i, j) + s * rng.gaussian();

  const Vec emp_mean = x.colwise().mean();
  const double emp_m2 = x.rowwise().squaredNorm().mean();

  Vec ana_mean = Vec::Zero(6);
  double ana_m2 = 0.0;
  for (int k = 0; k < d.weights.size(); ++k) {
    ana_mean += d.weights(k) * d.means.row(k).transpose();
    ana_m2 += d.weights(k) *
              (d.means.row(k).squaredNorm() + 6.0 * d.sigma * d.sigma);
  }
  // Second moment per path is ~ 26; SE of the mean ~ sqrt(Var/n) < 0.03.
  CHECK((emp_mean - ana_mean).norm() < 0.05);
  CHECK(std::abs(emp_m2 - ana_m2) < 0.15);
}

TEST_CASE("log density of a standard normal matches the closed form") {
  const auto g = single(2, 1.0);
  Vec x = Vec::Zero(2);
  CHECK(log_density(g, x) == doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-14));
  x << 1.0, -2.0;
  CHECK(log_density(g, x) ==
        doctest::Approx(-std::log(2.0 * M_PI) - 0.5 * 5.0).epsilon(1e-14));
}

TEST_CASE("log density agrees with a direct component sum") {
  const auto g = GaussianMixture::five_cluster();
  SeqRng rng(stream_key(5, "ld-oracle"));
  for (int rep = 0; rep < 20; ++rep) {
    Vec x(10);
    for (int j = 0; j < 10; ++j) x(j) = 3.0 * rng.gaussian();
    const double v = g.sigma * g.sigma;
    double acc = 0.0;
    for (int k = 0; k < 5; ++k)
      acc += g.weights(k) *
             std::exp(-(x.transpose() - g.means.row(k)).squaredNorm() / (2 * v)) /
             std::pow(2.0 * M_PI * v, 5.0);
    CHECK(log_density(g, x) == doctest::Approx(std::log(acc)).epsilon(1e-11));
  }
}

TEST_CASE("score of a single diffused component is linear") {
  const auto g = single(3, 0.7);
  const double t = 0.9;
  const auto d = diffused_mixture(g, t);
  const double v = d.sigma * d.sigma;
  Vec x(3);
  x << 0.4, -1.1, 2.0;
  const Vec s = analytic_score(g, x, t);
  CHECK((s - (-x / v)).norm() < 1e-13);
}

TEST_CASE("score matches finite differences of the log density") {
  const auto g = GaussianMixture::five_cluster();
  SeqRng rng(stream_key(17, "fd"));
  const double t = 0.5;
  const double h = 1e-5;
  for (int rep = 0; rep < 30; ++rep) {
    Vec x(10);
    for (int j = 0; j < 10; ++j) x(j) = 2.5 * rng.gaussian();
    const Vec s = analytic_score(g, x, t);
    Vec fd(10);
    for (int j = 0; j < 10; ++j) {
      Vec xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      Vec ldp, ldm;
      Mat qp = xp.transpose(), qm = xm.transpose();
      gmm_eval_batch(g, t, qp, &ldp, nullptr);
      gmm_eval_batch(g, t, qm, &ldm, nullptr);
      fd(j) = (ldp(0) - ldm(0)) / (2 * h);
    }
    CHECK((fd - s).norm() <= 1e-5 * std::max(1.0, s.norm()));
  }
}

TEST_CASE("batch evaluation agrees with the single-point paths") {
  const auto g = GaussianMixture::five_cluster();
  SeqRng rng(stream_key(21, "batch"));
  Mat q(40, 10);
  for (int i = 0; i < q.size(); ++i) q.data()[i] = 2.0 * rng.gaussian();
  Vec ld;
  Mat sc;
  gmm_eval_batch(g, 0.8, q, &ld, &sc);
  REQUIRE(ld.size() == 40);
  REQUIRE(sc.rows() == 40);
  for (int i = 0; i < 40; ++i) {
    const Vec x = q.row(i).transpose();
    CHECK(sc.row(i).transpose().isApprox(analytic_score(g, x, 0.8), 1e-12));
  }
  // Null outputs are allowed.
  gmm_eval_batch(g, 0.8, q, nullptr, &sc);
  gmm_eval_batch(g, 0.8, q, &ld, nullptr);
}

TEST_CASE("responsibilities are a probability vector") {
  const auto g = GaussianMixture::five_cluster();
  SeqRng rng(stream_key(31, "resp"));
  for (int rep = 0; rep < 10; ++rep) {
    Vec x(10);
    for (int j = 0; j < 10; ++j) x(j) = 4.0 * rng.gaussian();
    const Vec r = responsibilities(g, x, 0.3);
    REQUIRE(r.size() == 5);
    CHECK(r.minCoeff() >= 0.0);
    CHECK(std::abs(r.sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("kernel sum weights reproduce responsibilities") {
  const auto g = GaussianMixture::five_cluster();
  const double t = 0.6;
  const auto d = diffused_mixture(g, t);
  const double v = d.sigma * d.sigma;
  Vec x(10);
  x << 3.0, 3.5, 0.1, -0.2, 0.0, 0.4, 0.0, 0.0, -0.3, 0.2;
  const Vec r = responsibilities(g, x, t);
  Vec mean_direct = Vec::Zero(10);
  for (int k = 0; k < 5; ++k) mean_direct += r(k) * d.means.row(k).transpose();

  Mat q = x.transpose(), cm;
  Vec ls;
  SoftKernelSum::eval(d.means, d.weights.array().log().matrix(), v, q, &ls, &cm);
  CHECK((cm.row(0).transpose() - mean_direct).norm() < 1e-12);
}

TEST_CASE("kernel sum survives exponent underflow on far queries") {
  // All exponents below exp's underflow threshold: the padded-GEMM fast path
  // sees a zero row sum and must fall back to the shifted evaluation.
  Mat centers(3, 2);
  centers << 0.0, 0.0, 0.1, 0.0, 0.0, 0.1;
  Vec lw = Vec::Constant(3, std::log(1.0 / 3.0));
  Mat q(1, 2);
  q << 60.0, 0.0;  // ||x-c||^2 / (2 * 0.001) ~ 1.8e6
  Vec ls;
  Mat cm;
  SoftKernelSum::eval(centers, lw, 0.001, q, &ls, &cm);
  CHECK(std::isfinite(ls(0)));

  // Shifted reference: log sum exp(e_j) with max subtracted.
  std::vector<double> e(3);
  for (int j = 0; j < 3; ++j)
    e[j] = lw(j) - (q.row(0) - centers.row(j)).squaredNorm() / 0.002;
  const double mx = std::max({e[0], e[1], e[2]});
  double acc = 0.0;
  for (double ej : e) acc += std::exp(ej - mx);
  CHECK(ls(0) == doctest::Approx(mx + std::log(acc)).epsilon(1e-12));
  CHECK(std::isfinite(cm(0, 0)));
}

TEST_CASE("sampling hits components at their advertised rates") {
  const auto g = GaussianMixture::five_cluster(2, 0.05);
  SeqRng rng(stream_key(77, "freq"));
  const int64_t n = 50000;
  const Mat x = sample(g, n, rng);
  std::vector<int64_t> counts(5, 0);
  for (int64_t i = 0; i < n; ++i) {
    int best = 0;
    double bd = 1e300;
    for (int k = 0; k < 5; ++k) {
      const double dk = (x.row(i) - g.means.row(k)).squaredNorm();
      if (dk < bd) bd = dk, best = k;
    }
    counts[best]++;
  }
  for (int k = 0; k < 5; ++k) {
    const double p = counts[k] / (double)n;
    CHECK(std::abs(p - 0.2) < 5.0 * std::sqrt(0.2 * 0.8 / n));
  }
}

TEST_CASE("sampling with a vanishing scale concentrates on the means") {
  auto g = GaussianMixture::five_cluster(3, 1e-12);
  SeqRng rng(stream_key(78, "tight"));
  const Mat x = sample(g, 200, rng);
  for (int64_t i = 0; i < x.rows(); ++i) {
    double bd = 1e300;
    for (int k = 0; k < 5; ++k)
      bd = std::min(bd, (x.row(i) - g.means.row(k)).squaredNorm());
    CHECK(bd < 1e-20);
  }
}

TEST_CASE("mixture JSON round-trips") {
  const auto g = GaussianMixture::five_cluster(4, 0.45);
  const auto h = GaussianMixture::from_json(g.to_json());
  CHECK(h.dim == g.dim);
  CHECK(h.sigma == g.sigma);
  CHECK((h.means - g.means).norm() == 0.0);
  CHECK((h.weights - g.weights).norm() == 0.0);
}

TEST_CASE("validate rejects malformed mixtures") {
  auto g = GaussianMixture::five_cluster();
  g.weights(0) += 0.5;
  CHECK_THROWS(g.validate());
  g = GaussianMixture::five_cluster();
  g.sigma = -1.0;
  CHECK_THROWS(g.validate());
  g = GaussianMixture::five_cluster();
  g.means = Mat::Zero(5, 9);
  CHECK_THROWS(g.validate());
}
