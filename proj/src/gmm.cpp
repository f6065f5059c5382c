#include "collapse/gmm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "collapse/schedule.hpp"
#include "collapse/threading.hpp"

namespace collapse {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int64_t kTile = 256;

// Exact per-row log-sum-exp and weighted center mean, used for rows whose
// fast-path sum underflowed.
void slow_row(const Mat& centers, const Vec& lw, double var, const Eigen::RowVectorXd& x,
              double* log_sum, double* mean_out, int64_t d) {
  const int64_t m = centers.rows();
  const double inv2v = 0.5 / var;
  double mx = -std::numeric_limits<double>::infinity();
  Vec e(m);
  for (int64_t j = 0; j < m; ++j) {
    const double sq = (x - centers.row(j)).squaredNorm();
    e(j) = lw(j) - sq * inv2v;
    if (e(j) > mx) mx = e(j);
  }
  if (!std::isfinite(mx)) {
    if (log_sum) *log_sum = mx;
    if (mean_out)
      for (int64_t c = 0; c < d; ++c) mean_out[c] = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double s = 0.0;
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
  for (int64_t j = 0; j < m; ++j) {
    const double w = std::exp(e(j) - mx);
    s += w;
    if (mean_out) acc += w * centers.row(j);
  }
  if (log_sum) *log_sum = mx + std::log(s);
  if (mean_out)
    for (int64_t c = 0; c < d; ++c) mean_out[c] = acc(c) / s;
}

}  // namespace

void SoftKernelSum::eval(const Mat& centers, const Vec& log_weights, double var,
                         const Mat& queries, Vec* log_sum, Mat* center_mean) {
  const int64_t m = centers.rows();
  const int64_t d = centers.cols();
  const int64_t n = queries.rows();
  if (m == 0) throw std::invalid_argument("kernel sum: empty center set");
  if (queries.cols() != d) throw std::invalid_argument("kernel sum: dim mismatch");
  if (!(var > 0.0)) throw std::invalid_argument("kernel sum: variance must be positive");

  Vec lw = log_weights.size() ? log_weights : Vec::Constant(m, -std::log(double(m)));
  if (lw.size() != m) throw std::invalid_argument("kernel sum: weight length mismatch");
  if ((lw.array() > 0.0).any()) throw std::invalid_argument("kernel sum: log-weights > 0");

  if (log_sum) log_sum->resize(n);
  if (center_mean) center_mean->resize(n, d);

  const double inv_v = 1.0 / var;
  const double inv2v = 0.5 / var;

  // Exponents come out of one GEMM on augmented factors:
  //   u_i = [x_i / v, 1, -||x_i||^2 / (2v)]
  //   v_j = [c_j, lw_j - ||c_j||^2 / (2v), 1]
  // Every e_ij <= max_j lw_j <= 0, so exp() cannot overflow and a max-shift
  // pass is unnecessary; rows that underflow to 0 take the exact slow path.
  Mat V(m, d + 2);
  V.leftCols(d) = centers;
  V.col(d) = lw - centers.rowwise().squaredNorm() * inv2v;
  V.col(d + 1).setOnes();

  parallel_tiles(n, kTile, [&](int64_t r0, int64_t r1) {
    thread_local Mat U, G, S;
    const int64_t b = r1 - r0;
    const auto X = queries.middleRows(r0, b);
    U.resize(b, d + 2);
    U.leftCols(d) = X * inv_v;
    U.col(d).setOnes();
    U.col(d + 1) = -X.rowwise().squaredNorm() * inv2v;
    G.resize(b, m);
    G.noalias() = U * V.transpose();
    G = G.array().exp().matrix();
    Vec rowsum = G.rowwise().sum();
    if (center_mean) {
      S.resize(b, d);
      S.noalias() = G * centers;
    }
    for (int64_t i = 0; i < b; ++i) {
      const double rs = rowsum(i);
      if (rs < 1e-280) {
        slow_row(centers, lw, var, X.row(i), log_sum ? &(*log_sum)(r0 + i) : nullptr,
                 center_mean ? center_mean->row(r0 + i).data() : nullptr, d);
        continue;
      }
      if (log_sum) (*log_sum)(r0 + i) = std::log(rs);
      if (center_mean) center_mean->row(r0 + i) = S.row(i) / rs;
    }
  });
}

void GaussianMixture::validate() const {
  if (dim < 1) throw std::invalid_argument("mixture: dim >= 1");
  if (means.rows() < 1 || means.cols() != dim)
    throw std::invalid_argument("mixture: means must be K x dim");
  if (weights.size() != means.rows())
    throw std::invalid_argument("mixture: weight count mismatch");
  if ((weights.array() < 0.0).any())
    throw std::invalid_argument("mixture: negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("mixture: weights must sum to 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("mixture: sigma > 0");
}

GaussianMixture GaussianMixture::five_cluster(int dim, double sigma) {
  if (dim < 2) throw std::invalid_argument("five_cluster: dim >= 2");
  GaussianMixture g;
  g.dim = dim;
  g.sigma = sigma;
  g.weights = Vec::Constant(5, 0.2);
  g.means = Mat::Zero(5, dim);
  const double c[5][2] = {{0, 0}, {-4, -4}, {-4, 4}, {4, -4}, {4, 4}};
  for (int k = 0; k < 5; ++k) {
    g.means(k, 0) = c[k][0];
    g.means(k, 1) = c[k][1];
  }
  g.validate();
  return g;
}

std::string GaussianMixture::to_json() const {
  nlohmann::json j;
  j["dim"] = dim;
  j["sigma"] = sigma;
  j["weights"] = std::vector<double>(weights.data(), weights.data() + weights.size());
  auto& ms = j["means"] = nlohmann::json::array();
  for (Eigen::Index k = 0; k < means.rows(); ++k) {
    std::vector<double> row(means.row(k).data(), means.row(k).data() + dim);
    ms.push_back(row);
  }
  return j.dump();
}

GaussianMixture GaussianMixture::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  GaussianMixture g;
  g.dim = j.at("dim").get<int>();
  g.sigma = j.at("sigma").get<double>();
  const auto w = j.at("weights").get<std::vector<double>>();
  g.weights = Eigen::Map<const Vec>(w.data(), w.size());
  const auto& ms = j.at("means");
  g.means.resize(ms.size(), g.dim);
  for (size_t k = 0; k < ms.size(); ++k) {
    const auto row = ms[k].get<std::vector<double>>();
    if (static_cast<int>(row.size()) != g.dim)
      throw std::invalid_argument("mixture json: mean length mismatch");
    g.means.row(k) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), g.dim);
  }
  g.validate();
  return g;
}

GaussianMixture diffused_mixture(const GaussianMixture& g, double t) {
  g.validate();
  if (!std::isfinite(t) || t < 0.0)
    throw std::invalid_argument("diffused_mixture: t must be finite and >= 0");
  if (t == 0.0) return g;
  GaussianMixture out = g;
  const double a = decay(t);
  out.means = g.means * a;
  out.sigma = std::sqrt(diffused_var(t, g.sigma));
  return out;
}

void gmm_eval_batch(const GaussianMixture& g, double t, const Mat& queries,
                    Vec* log_dens, Mat* score) {
  const GaussianMixture dm = diffused_mixture(g, t);
  const double v = dm.sigma * dm.sigma;
  Mat mean;
  SoftKernelSum::eval(dm.means, dm.weights.array().log().matrix(), v, queries, log_dens,
                      score ? &mean : nullptr);
  if (log_dens) log_dens->array() -= 0.5 * g.dim * (kLog2Pi + std::log(v));
  if (score) *score = (mean - queries) / v;
}

double log_density(const GaussianMixture& g, const Vec& x) {
  Vec ld;
  Mat q = x.transpose();
  gmm_eval_batch(g, 0.0, q, &ld, nullptr);
  return ld(0);
}

Vec analytic_score(const GaussianMixture& g, const Vec& x, double t) {
  Mat s;
  Mat q = x.transpose();
  gmm_eval_batch(g, t, q, nullptr, &s);
  return s.row(0).transpose();
}

Vec responsibilities(const GaussianMixture& g, const Vec& x, double t) {
  const GaussianMixture dm = diffused_mixture(g, t);
  const double inv2v = 0.5 / (dm.sigma * dm.sigma);
  Vec e(dm.means.rows());
  for (Eigen::Index k = 0; k < dm.means.rows(); ++k)
    e(k) = std::log(dm.weights(k)) - (x.transpose() - dm.means.row(k)).squaredNorm() * inv2v;
  const double mx = e.maxCoeff();
  Vec w = (e.array() - mx).exp();
  return w / w.sum();
}

Mat sample(const GaussianMixture& g, int64_t n, SeqRng& rng) {
  g.validate();
  if (n < 1) throw std::invalid_argument("sample: n >= 1");
  const int64_t K = g.weights.size();
  Mat out(n, g.dim);
  for (int64_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    int64_t k = K - 1;
    for (int64_t c = 0; c < K; ++c) {
      acc += g.weights(c);
      if (u <= acc) {
        k = c;
        break;
      }
    }
    for (int c = 0; c < g.dim; ++c) out(i, c) = g.means(k, c) + g.sigma * rng.gaussian();
  }
  return out;
}

}  // namespace collapse
