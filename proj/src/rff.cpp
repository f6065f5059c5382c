#include "collapse/rff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace collapse {

namespace {

constexpr int64_t kTile = 2048;
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Accumulates A += Phi^T Phi, b += Phi^T y, s += sum(Phi), tile by tile,
// where Phi carries the map's features for rows of x. Never materializes
// the full feature matrix.
struct NormalEquations {
  Mat A;   // F x F
  Vec b;   // F
  Vec col_sum;
  double y_sum = 0.0;
  int64_t n = 0;

  void accumulate(const RffMap& map, const Mat& x, const Vec& y) {
    const int F = map.n_features();
    A = Mat::Zero(F, F);
    b = Vec::Zero(F);
    col_sum = Vec::Zero(F);
    n = x.rows();
    for (int64_t r0 = 0; r0 < n; r0 += kTile) {
      const int64_t r1 = std::min(n, r0 + kTile);
      const Mat phi = map.features(x.middleRows(r0, r1 - r0));
      A.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
      b.noalias() += phi.transpose() * y.segment(r0, r1 - r0);
      col_sum += phi.colwise().sum();
    }
    A = A.selfadjointView<Eigen::Lower>();
    y_sum = y.sum();
  }
};

// Solves the bordered system for (beta, intercept) given sums of products:
//   [A/n + lambda I   c/n] [beta]      [b/n]
//   [c^T/n            1  ] [intercept] = [ybar]
LinearModel solve_bordered(const Mat& A, const Vec& b, const Vec& col_sum, double y_sum,
                           int64_t n, double lambda) {
  const int F = static_cast<int>(A.rows());
  Mat H(F + 1, F + 1);
  H.topLeftCorner(F, F) = A / double(n);
  H.topLeftCorner(F, F).diagonal().array() += lambda;
  H.block(0, F, F, 1) = col_sum / double(n);
  H.block(F, 0, 1, F) = col_sum.transpose() / double(n);
  H(F, F) = 1.0;
  Vec rhs(F + 1);
  rhs.head(F) = b / double(n);
  rhs(F) = y_sum / double(n);
  const Vec sol = H.ldlt().solve(rhs);
  LinearModel m;
  m.beta = sol.head(F);
  m.intercept = sol(F);
  return m;
}

}  // namespace

RffMap RffMap::make(int n_features, int dim, double lengthscale, uint64_t key) {
  if (n_features < 1 || dim < 1) throw std::invalid_argument("rff: positive sizes");
  if (!(lengthscale > 0.0)) throw std::invalid_argument("rff: lengthscale > 0");
  RffMap map;
  map.lengthscale = lengthscale;
  map.omega.resize(n_features, dim);
  map.phase.resize(n_features);
  SeqRng rng(key);
  const double inv_l = 1.0 / lengthscale;
  for (int f = 0; f < n_features; ++f) {
    for (int j = 0; j < dim; ++j) map.omega(f, j) = inv_l * rng.gaussian();
    map.phase(f) = kTwoPi * rng.uniform();
  }
  return map;
}

Mat RffMap::features(const Mat& x) const {
  if (x.cols() != omega.cols()) throw std::invalid_argument("rff: dim mismatch");
  Mat phi = x * omega.transpose();
  phi.rowwise() += phase.transpose();
  phi = phi.array().cos();
  phi *= std::sqrt(2.0 / n_features());
  return phi;
}

double median_pairwise_distance(const Mat& x, uint64_t key, int64_t max_points) {
  const int64_t n = x.rows();
  if (n < 2) return 1.0;
  Mat sub;
  if (n > max_points) {
    SeqRng rng(key);
    const auto idx = rng.sample_without_replacement(n, max_points);
    sub.resize(max_points, x.cols());
    for (int64_t i = 0; i < max_points; ++i) sub.row(i) = x.row(idx[i]);
  } else {
    sub = x;
  }
  const int64_t m = sub.rows();
  std::vector<double> d2;
  d2.reserve(m * (m - 1) / 2);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = i + 1; j < m; ++j)
      d2.push_back((sub.row(i) - sub.row(j)).squaredNorm());
  auto mid = d2.begin() + d2.size() / 2;
  std::nth_element(d2.begin(), mid, d2.end());
  const double med = std::sqrt(*mid);
  return med > 0.0 ? med : 1.0;
}

LinearModel ridge_fit(const RffMap& map, const Mat& x, const Vec& y, double lambda) {
  if (x.rows() != y.size()) throw std::invalid_argument("ridge: size mismatch");
  if (x.rows() < 1) throw std::invalid_argument("ridge: empty fit");
  NormalEquations ne;
  ne.accumulate(map, x, y);
  return solve_bordered(ne.A, ne.b, ne.col_sum, ne.y_sum, ne.n, lambda);
}

LinearModel logistic_fit(const RffMap& map, const Mat& x, const Vec& y01, double lambda,
                         int max_iter, double tol) {
  const int64_t n = x.rows();
  if (n != y01.size()) throw std::invalid_argument("logistic: size mismatch");
  if (n < 2) throw std::invalid_argument("logistic: need data");
  const int F = map.n_features();

  Vec theta = Vec::Zero(F + 1);  // [beta; intercept]
  Mat H(F + 1, F + 1);
  Vec g(F + 1);

  for (int it = 0; it < max_iter; ++it) {
    H.setZero();
    g.setZero();
    for (int64_t r0 = 0; r0 < n; r0 += kTile) {
      const int64_t r1 = std::min(n, r0 + kTile);
      const int64_t m = r1 - r0;
      Mat phi(m, F + 1);
      phi.leftCols(F) = map.features(x.middleRows(r0, m));
      phi.col(F).setOnes();
      const Vec lin = phi * theta;
      Vec p(m), w(m);
      for (int64_t i = 0; i < m; ++i) {
        const double e = 1.0 / (1.0 + std::exp(-lin(i)));
        p(i) = e;
        w(i) = std::max(e * (1.0 - e), 1e-12);
      }
      g.noalias() += phi.transpose() * (p - y01.segment(r0, m));
      H.selfadjointView<Eigen::Lower>().rankUpdate(
          (phi.array().colwise() * w.array().sqrt()).matrix().transpose());
    }
    H = H.selfadjointView<Eigen::Lower>();
    H /= double(n);
    g /= double(n);
    H.topLeftCorner(F, F).diagonal().array() += lambda;
    g.head(F) += lambda * theta.head(F);

    const Vec step = H.ldlt().solve(g);
    theta -= step;
    if (step.lpNorm<Eigen::Infinity>() <= tol * (1.0 + theta.lpNorm<Eigen::Infinity>()))
      break;
  }

  LinearModel model;
  model.beta = theta.head(F);
  model.intercept = theta(F);
  return model;
}

Vec predict(const RffMap& map, const LinearModel& model, const Mat& x) {
  const int64_t n = x.rows();
  Vec out(n);
  for (int64_t r0 = 0; r0 < n; r0 += kTile) {
    const int64_t r1 = std::min(n, r0 + kTile);
    out.segment(r0, r1 - r0) =
        (map.features(x.middleRows(r0, r1 - r0)) * model.beta).array() + model.intercept;
  }
  return out;
}

}  // namespace collapse
