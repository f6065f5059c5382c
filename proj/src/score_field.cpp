#include "collapse/score_field.hpp"

#include <cmath>
#include <stdexcept>

namespace collapse {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

AnalyticScoreField::AnalyticScoreField(GaussianMixture g) : gmm_(std::move(g)) {
  gmm_.validate();
}

void AnalyticScoreField::eval_with_log_density(const Mat& states, double t, Mat* score,
                                               Vec* log_dens) const {
  gmm_eval_batch(gmm_, t, states, log_dens, score);
}

KdeScoreField::KdeScoreField(Mat training, double h) : train_(std::move(training)), h_(h) {
  if (train_.rows() == 0) throw std::invalid_argument("kde: empty training set");
  if (!(h_ > 0.0)) throw std::invalid_argument("kde: bandwidth > 0");
}

void KdeScoreField::eval_with_log_density(const Mat& states, double t, Mat* score,
                                          Vec* log_dens) const {
  const double a = decay(t);
  const double v = diffused_var(t, h_);
  const Mat centers = train_ * a;
  Mat mean;
  SoftKernelSum::eval(centers, Vec(), v, states, log_dens, score ? &mean : nullptr);
  if (log_dens) log_dens->array() -= 0.5 * dim() * (kLog2Pi + std::log(v));
  if (score) *score = (mean - states) / v;
}

MixtureTargetScore::MixtureTargetScore(double alpha,
                                       std::shared_ptr<const DensityScoreField> data,
                                       std::shared_ptr<const DensityScoreField> synth)
    : alpha_(alpha), data_(std::move(data)), synth_(std::move(synth)) {
  if (!(alpha_ > 0.0) || alpha_ > 1.0)
    throw std::invalid_argument("mixture target: alpha in (0, 1]");
  if (!data_) throw std::invalid_argument("mixture target: data field required");
  if (alpha_ < 1.0 && !synth_)
    throw std::invalid_argument("mixture target: synth field required for alpha < 1");
  if (synth_ && synth_->dim() != data_->dim())
    throw std::invalid_argument("mixture target: dim mismatch");
}

void MixtureTargetScore::eval_with_log_density(const Mat& states, double t, Mat* score,
                                               Vec* log_dens) const {
  if (alpha_ == 1.0) {
    data_->eval_with_log_density(states, t, score, log_dens);
    return;
  }
  Mat sd, ss;
  Vec ld, ls;
  data_->eval_with_log_density(states, t, score ? &sd : nullptr, &ld);
  synth_->eval_with_log_density(states, t, score ? &ss : nullptr, &ls);
  const double la = std::log(alpha_);
  const double lb = std::log1p(-alpha_);
  const int64_t n = states.rows();
  if (score) score->resize(n, dim());
  if (log_dens) log_dens->resize(n);
  int64_t fallbacks = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double u = la + ld(i);
    const double w = lb + ls(i);
    double lambda;
    if (std::isinf(u) && std::isinf(w) && u < 0 && w < 0) {
      lambda = alpha_;
      ++fallbacks;
    } else if (u >= w) {
      lambda = 1.0 / (1.0 + std::exp(w - u));
    } else {
      const double e = std::exp(u - w);
      lambda = e / (1.0 + e);
    }
    if (score) score->row(i) = lambda * sd.row(i) + (1.0 - lambda) * ss.row(i);
    if (log_dens) {
      const double mx = std::max(u, w);
      (*log_dens)(i) = std::isinf(mx) ? mx : mx + std::log(std::exp(u - mx) + std::exp(w - mx));
    }
  }
  if (fallbacks) underflow_.fetch_add(fallbacks, std::memory_order_relaxed);
}

Perturbation Perturbation::aligned(double scale) {
  Perturbation p;
  p.kind = Kind::AlignedLinear;
  p.scale = scale;
  return p;
}

Perturbation Perturbation::random_linear(int dim, double scale, SeqRng& rng) {
  Perturbation p;
  p.kind = Kind::RandomLinear;
  p.W.resize(dim, dim);
  const double s = scale / std::sqrt(double(dim));
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) p.W(i, j) = s * rng.gaussian();
  return p;
}

Perturbation Perturbation::time_only(double amplitude, double frequency) {
  Perturbation p;
  p.kind = Kind::TimeOnly;
  p.amplitude = amplitude;
  p.frequency = frequency;
  return p;
}

double Perturbation::magnitude() const {
  switch (kind) {
    case Kind::AlignedLinear:
      return scale;
    case Kind::RandomLinear:
      return W.size() ? W.norm() : 0.0;
    case Kind::TimeOnly:
      return amplitude;
  }
  return 0.0;
}

Perturbation Perturbation::with_magnitude(double m) const {
  Perturbation p = *this;
  const double cur = magnitude();
  switch (kind) {
    case Kind::AlignedLinear:
      p.scale = m;
      break;
    case Kind::RandomLinear:
      if (cur > 0.0) p.W = W * (m / cur);
      break;
    case Kind::TimeOnly:
      p.amplitude = m;
      break;
  }
  return p;
}

const char* Perturbation::name() const {
  switch (kind) {
    case Kind::AlignedLinear:
      return "aligned";
    case Kind::RandomLinear:
      return "random";
    case Kind::TimeOnly:
      return "time_only";
  }
  return "?";
}

PerturbationErrorField::PerturbationErrorField(std::shared_ptr<const ScoreField> base,
                                               Perturbation p)
    : base_(std::move(base)), p_(std::move(p)) {
  if (p_.kind == Perturbation::Kind::AlignedLinear && !base_)
    throw std::invalid_argument("aligned perturbation needs a base field");
  dim_ = base_ ? base_->dim() : static_cast<int>(p_.W.rows());
  if (p_.kind == Perturbation::Kind::RandomLinear && p_.W.rows() == 0)
    throw std::invalid_argument("random perturbation needs W");
}

void PerturbationErrorField::eval(const Mat& states, double t, Mat& out) const {
  switch (p_.kind) {
    case Perturbation::Kind::AlignedLinear:
      base_->eval(states, t, out);
      out *= p_.scale;
      return;
    case Perturbation::Kind::RandomLinear:
      out.noalias() = states * p_.W.transpose();
      return;
    case Perturbation::Kind::TimeOnly:
      out.setConstant(states.rows(), states.cols(),
                      p_.amplitude * std::sin(p_.frequency * t));
      return;
  }
}

PerturbedScoreField::PerturbedScoreField(std::shared_ptr<const ScoreField> base,
                                         Perturbation p)
    : base_(base), err_(base, std::move(p)) {}

void PerturbedScoreField::eval(const Mat& states, double t, Mat& out) const {
  base_->eval(states, t, out);
  thread_local Mat e;
  err_.eval(states, t, e);
  out += e;
}

DifferenceErrorField::DifferenceErrorField(std::shared_ptr<const ScoreField> learned,
                                           std::shared_ptr<const ScoreField> target)
    : learned_(std::move(learned)), target_(std::move(target)) {
  if (learned_->dim() != target_->dim())
    throw std::invalid_argument("error field: dim mismatch");
}

void DifferenceErrorField::eval(const Mat& states, double t, Mat& out) const {
  learned_->eval(states, t, out);
  thread_local Mat s;
  target_->eval(states, t, s);
  out -= s;
}

Vec kde_score(const Mat& training, double h, const Vec& x, double t) {
  return KdeScoreField(training, h).eval_one(x, t);
}

Vec mixture_target_score(double alpha, const DensityScoreField& data,
                         const DensityScoreField& synth, const Vec& x, double t) {
  const MixtureTargetScore f(
      alpha, std::shared_ptr<const DensityScoreField>(&data, [](auto*) {}),
      std::shared_ptr<const DensityScoreField>(&synth, [](auto*) {}));
  return f.eval_one(x, t);
}

std::shared_ptr<const ScoreField> error_field(std::shared_ptr<const ScoreField> learned,
                                              std::shared_ptr<const ScoreField> target) {
  return std::make_shared<DifferenceErrorField>(std::move(learned), std::move(target));
}

std::shared_ptr<const ScoreField> inject_perturbation(std::shared_ptr<const ScoreField> base,
                                                      const Perturbation& p) {
  return std::make_shared<PerturbedScoreField>(std::move(base), p);
}

}  // namespace collapse
