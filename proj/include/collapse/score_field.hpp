#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

#include "collapse/gmm.hpp"
#include "collapse/schedule.hpp"

namespace collapse {

/// A drift-correction field s(x, t), evaluated on row batches.
class ScoreField {
 public:
  virtual ~ScoreField() = default;
  virtual int dim() const = 0;
  virtual void eval(const Mat& states, double t, Mat& out) const = 0;

  Vec eval_one(const Vec& x, double t) const {
    Mat q = x.transpose(), s;
    eval(q, t, s);
    return s.row(0).transpose();
  }
};

/// A score field that also exposes the log density of its noised marginal.
class DensityScoreField : public ScoreField {
 public:
  /// Either output pointer may be null.
  virtual void eval_with_log_density(const Mat& states, double t, Mat* score,
                                     Vec* log_dens) const = 0;

  void eval(const Mat& states, double t, Mat& out) const override {
    eval_with_log_density(states, t, &out, nullptr);
  }
  void log_density(const Mat& states, double t, Vec& out) const {
    eval_with_log_density(states, t, nullptr, &out);
  }
};

/// Exact score of a Gaussian mixture's forward marginals.
class AnalyticScoreField final : public DensityScoreField {
 public:
  explicit AnalyticScoreField(GaussianMixture g);
  int dim() const override { return gmm_.dim; }
  void eval_with_log_density(const Mat& states, double t, Mat* score,
                             Vec* log_dens) const override;
  const GaussianMixture& mixture() const { return gmm_; }

 private:
  GaussianMixture gmm_;
};

/// Soft kernel score estimator over a training set with bandwidth h:
/// score(x, t) = sum_j w_j(x, t) (a_t x_j - x) / s_t^2 with softmax weights
/// over -||x - a_t x_j||^2 / (2 s_t^2), s_t^2 = a_t^2 h^2 + (1 - a_t^2).
/// Its log density is the matching kernel-smoothed noised marginal; at t = 0
/// that is the plain bandwidth-h kernel density of the training set.
class KdeScoreField final : public DensityScoreField {
 public:
  KdeScoreField(Mat training, double h);
  int dim() const override { return static_cast<int>(train_.cols()); }
  void eval_with_log_density(const Mat& states, double t, Mat* score,
                             Vec* log_dens) const override;
  int64_t n_train() const { return train_.rows(); }
  const Mat& training() const { return train_; }
  double bandwidth() const { return h_; }

 private:
  Mat train_;
  double h_;
};

/// Score of the blend alpha * data + (1 - alpha) * synth:
///   s(x,t) = lambda s_data + (1 - lambda) s_synth,
///   lambda = alpha p_data / (alpha p_data + (1 - alpha) p_synth)
/// computed in log space. When both densities underflow to -inf the blend is
/// undefined; those evaluations fall back to lambda = alpha and are counted.
class MixtureTargetScore final : public DensityScoreField {
 public:
  MixtureTargetScore(double alpha, std::shared_ptr<const DensityScoreField> data,
                     std::shared_ptr<const DensityScoreField> synth);
  int dim() const override { return data_->dim(); }
  void eval_with_log_density(const Mat& states, double t, Mat* score,
                             Vec* log_dens) const override;
  int64_t underflow_count() const { return underflow_.load(); }
  void reset_underflow_count() const { underflow_.store(0); }

 private:
  double alpha_;
  std::shared_ptr<const DensityScoreField> data_;
  std::shared_ptr<const DensityScoreField> synth_;
  mutable std::atomic<int64_t> underflow_{0};
};

/// Controlled error shapes for injection experiments.
struct Perturbation {
  enum class Kind { AlignedLinear, RandomLinear, TimeOnly };
  Kind kind = Kind::AlignedLinear;
  double scale = 0.0;      // AlignedLinear: e = scale * base(x, t)
  Mat W;                   // RandomLinear:  e = W x
  double amplitude = 0.0;  // TimeOnly:      e = amplitude * sin(frequency t) * 1
  double frequency = 0.0;

  static Perturbation aligned(double scale);
  /// W = scale * G / sqrt(dim), G i.i.d. standard normal, drawn once.
  static Perturbation random_linear(int dim, double scale, SeqRng& rng);
  static Perturbation time_only(double amplitude, double frequency);

  /// The class's magnitude knob; scaling it by c scales e(x,t) by c.
  double magnitude() const;
  Perturbation with_magnitude(double m) const;
  const char* name() const;
};

/// The error e(x, t) of a perturbation. AlignedLinear evaluates the base
/// field it was built against.
class PerturbationErrorField final : public ScoreField {
 public:
  PerturbationErrorField(std::shared_ptr<const ScoreField> base, Perturbation p);
  int dim() const override { return dim_; }
  void eval(const Mat& states, double t, Mat& out) const override;

 private:
  std::shared_ptr<const ScoreField> base_;
  Perturbation p_;
  int dim_;
};

/// base + perturbation error.
class PerturbedScoreField final : public ScoreField {
 public:
  PerturbedScoreField(std::shared_ptr<const ScoreField> base, Perturbation p);
  int dim() const override { return base_->dim(); }
  void eval(const Mat& states, double t, Mat& out) const override;

 private:
  std::shared_ptr<const ScoreField> base_;
  PerturbationErrorField err_;
};

/// Pointwise difference learned - target.
class DifferenceErrorField final : public ScoreField {
 public:
  DifferenceErrorField(std::shared_ptr<const ScoreField> learned,
                       std::shared_ptr<const ScoreField> target);
  int dim() const override { return learned_->dim(); }
  void eval(const Mat& states, double t, Mat& out) const override;

 private:
  std::shared_ptr<const ScoreField> learned_;
  std::shared_ptr<const ScoreField> target_;
};

/// Single-point kernel score (thin wrapper over KdeScoreField).
Vec kde_score(const Mat& training, double h, const Vec& x, double t);

/// Single-point blended target score from explicit parts.
Vec mixture_target_score(double alpha, const DensityScoreField& data,
                         const DensityScoreField& synth, const Vec& x, double t);

std::shared_ptr<const ScoreField> error_field(std::shared_ptr<const ScoreField> learned,
                                              std::shared_ptr<const ScoreField> target);
std::shared_ptr<const ScoreField> inject_perturbation(std::shared_ptr<const ScoreField> base,
                                                      const Perturbation& p);

}  // namespace collapse
