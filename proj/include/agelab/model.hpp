#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agelab/error.hpp"
#include "agelab/random.hpp"

namespace agelab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using ConstMatRef = Eigen::Ref<const Mat>;
using MatRef = Eigen::Ref<Mat>;
using VecRef = Eigen::Ref<Vec>;

inline constexpr double kLog2Pi = 1.8378770664093454836;

struct Interval {
  double lo, hi;
};

// Axis-aligned parameter box; iterates are projected onto it.
struct Box {
  Vec lo, hi;
  Vec clip(const Vec& theta) const { return theta.cwiseMax(lo).cwiseMin(hi); }
  bool contains(const Vec& theta) const {
    return (theta.array() >= lo.array()).all() && (theta.array() <= hi.array()).all();
  }
};

// ---------------------------------------------------------------- truth p*

class TrueDistribution {
 public:
  virtual ~TrueDistribution() = default;
  virtual int dim() const = 0;
  virtual Mat sample(Eigen::Index n, Rng& rng) const = 0;
  virtual void log_density(const ConstMatRef& X, VecRef out) const = 0;
  // Per coordinate, a range outside of which less than 1e-12 of the mass lies.
  virtual std::vector<Interval> support() const = 0;
  // Points where the density is not smooth (same for every coordinate).
  virtual std::vector<double> kinks() const { return {}; }
};

class IsotropicGaussian final : public TrueDistribution {
 public:
  IsotropicGaussian(Vec mean, double sd) : mean_(std::move(mean)), sd_(sd) {
    if (!(sd > 0)) throw DomainError("gaussian scale must be positive");
  }
  int dim() const override { return static_cast<int>(mean_.size()); }
  Mat sample(Eigen::Index n, Rng& rng) const override {
    Mat x = standard_normal(n, dim(), rng) * sd_;
    x.rowwise() += mean_.transpose();
    return x;
  }
  void log_density(const ConstMatRef& X, VecRef out) const override {
    const double c = -0.5 * dim() * (kLog2Pi + 2.0 * std::log(sd_));
    out = ((X.rowwise() - mean_.transpose()).rowwise().squaredNorm() * (-0.5 / (sd_ * sd_))).array() + c;
  }
  std::vector<Interval> support() const override {
    std::vector<Interval> s;
    for (int i = 0; i < dim(); ++i) s.push_back({mean_[i] - 9 * sd_, mean_[i] + 9 * sd_});
    return s;
  }
  const Vec& mean() const { return mean_; }
  double sd() const { return sd_; }

 private:
  Vec mean_;
  double sd_;
};

// Centered Laplace with scale b, sampled by inverse CDF.
class Laplace final : public TrueDistribution {
 public:
  explicit Laplace(double b) : b_(b) {
    if (!(b > 0)) throw DomainError("laplace scale must be positive");
  }
  int dim() const override { return 1; }
  Mat sample(Eigen::Index n, Rng& rng) const override {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Mat x(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      double U;
      do U = unif(rng);  // U == 0 would hit log(0)
      while (U == 0.0);
      double u = U - 0.5;
      double sgn = u < 0 ? -1.0 : 1.0;
      x(i, 0) = sgn * b_ * std::log1p(-2.0 * std::abs(u));
    }
    return x;
  }
  void log_density(const ConstMatRef& X, VecRef out) const override {
    out = -X.col(0).array().abs() / b_ - std::log(2.0 * b_);
  }
  std::vector<Interval> support() const override { return {{-28 * b_, 28 * b_}}; }
  std::vector<double> kinks() const override { return {0.0}; }
  double b() const { return b_; }

 private:
  double b_;
};

// ---------------------------------------------------------------- generators

// Maps standard normal latents to data; densities p_theta are Gaussian in every
// family here.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual int theta_dim() const = 0;
  virtual int latent_dim() const = 0;
  virtual int data_dim() const = 0;

  Mat sample_latent(Eigen::Index m, Rng& rng) const { return standard_normal(m, latent_dim(), rng); }

  virtual void apply(const Vec& theta, const ConstMatRef& Z, MatRef X) const = 0;
  Mat apply(const Vec& theta, const ConstMatRef& Z) const {
    Mat X(Z.rows(), data_dim());
    apply(theta, Z, X);
    return X;
  }
  // Row i of `out` is J(z_i)^T g_i, J = dG/dtheta (data_dim x theta_dim).
  virtual void pullback(const Vec& theta, const ConstMatRef& Z, const ConstMatRef& G, MatRef out) const = 0;
  virtual Mat jacobian(const Vec& theta, const Vec& z) const = 0;

  virtual void log_density(const Vec& theta, const ConstMatRef& X, VecRef out) const = 0;
  // Row i: d/dtheta log p_theta(x_i).
  virtual void score(const Vec& theta, const ConstMatRef& X, MatRef out) const = 0;
  // Row i, block j (columns j*theta_dim ...): d score / d x_j.
  virtual void score_grad_x(const Vec& theta, const ConstMatRef& X, MatRef out) const = 0;
  virtual std::vector<Interval> support(const Vec& theta) const = 0;
  // argmax of the average log-likelihood (before projection onto the box).
  virtual Vec mle(const ConstMatRef& X) const = 0;
};

// G(z) = A theta + sigma z with a fixed loading matrix A.
class LocationGenerator final : public Generator {
 public:
  LocationGenerator(Mat loading, double sigma) : A_(std::move(loading)), sigma_(sigma) {
    if (!(sigma > 0)) throw DomainError("generator scale must be positive");
  }
  int theta_dim() const override { return static_cast<int>(A_.cols()); }
  int latent_dim() const override { return static_cast<int>(A_.rows()); }
  int data_dim() const override { return static_cast<int>(A_.rows()); }

  void apply(const Vec& theta, const ConstMatRef& Z, MatRef X) const override {
    Vec shift = A_ * theta;
    X = (Z * sigma_).rowwise() + shift.transpose();
  }
  using Generator::apply;
  void pullback(const Vec&, const ConstMatRef&, const ConstMatRef& G, MatRef out) const override {
    out.noalias() = G * A_;
  }
  Mat jacobian(const Vec&, const Vec&) const override { return A_; }
  void log_density(const Vec& theta, const ConstMatRef& X, VecRef out) const override {
    Vec shift = A_ * theta;
    const double c = -0.5 * data_dim() * (kLog2Pi + 2.0 * std::log(sigma_));
    out = ((X.rowwise() - shift.transpose()).rowwise().squaredNorm() * (-0.5 / (sigma_ * sigma_))).array() + c;
  }
  void score(const Vec& theta, const ConstMatRef& X, MatRef out) const override {
    Vec shift = A_ * theta;
    out.noalias() = ((X.rowwise() - shift.transpose()) * A_) / (sigma_ * sigma_);
  }
  void score_grad_x(const Vec&, const ConstMatRef& X, MatRef out) const override {
    // d S_k / d x_j = A(j, k) / sigma^2, constant in x
    const int p = theta_dim();
    for (int j = 0; j < data_dim(); ++j)
      for (int k = 0; k < p; ++k) out.col(j * p + k).setConstant(A_(j, k) / (sigma_ * sigma_));
    (void)X;
  }
  std::vector<Interval> support(const Vec& theta) const override {
    Vec shift = A_ * theta;
    std::vector<Interval> s;
    for (int i = 0; i < data_dim(); ++i) s.push_back({shift[i] - 9 * sigma_, shift[i] + 9 * sigma_});
    return s;
  }
  Vec mle(const ConstMatRef& X) const override {
    Vec xbar = X.colwise().mean().transpose();
    return (A_.transpose() * A_).ldlt().solve(A_.transpose() * xbar);
  }
  const Mat& loading() const { return A_; }
  double sigma() const { return sigma_; }

 private:
  Mat A_;
  double sigma_;
};

// G(z) = theta z in one dimension, so p_theta = N(0, theta^2).
class ScaleGenerator final : public Generator {
 public:
  int theta_dim() const override { return 1; }
  int latent_dim() const override { return 1; }
  int data_dim() const override { return 1; }

  void apply(const Vec& theta, const ConstMatRef& Z, MatRef X) const override { X = Z * theta[0]; }
  using Generator::apply;
  void pullback(const Vec&, const ConstMatRef& Z, const ConstMatRef& G, MatRef out) const override {
    out = Z.array() * G.array();
  }
  Mat jacobian(const Vec&, const Vec& z) const override { return Mat::Constant(1, 1, z[0]); }
  void log_density(const Vec& theta, const ConstMatRef& X, VecRef out) const override {
    const double t = theta[0];
    out = X.col(0).array().square() * (-0.5 / (t * t)) - (0.5 * kLog2Pi + std::log(t));
  }
  void score(const Vec& theta, const ConstMatRef& X, MatRef out) const override {
    const double t = theta[0];
    out.col(0) = X.col(0).array().square() / (t * t * t) - 1.0 / t;
  }
  void score_grad_x(const Vec& theta, const ConstMatRef& X, MatRef out) const override {
    const double t = theta[0];
    out.col(0) = X.col(0) * (2.0 / (t * t * t));
  }
  std::vector<Interval> support(const Vec& theta) const override { return {{-9 * theta[0], 9 * theta[0]}}; }
  Vec mle(const ConstMatRef& X) const override {
    return Vec::Constant(1, std::sqrt(X.col(0).squaredNorm() / static_cast<double>(X.rows())));
  }
};

// ---------------------------------------------------------------- discriminator features

// D_psi(x) = psi^T phi(x).
class FeatureMap {
 public:
  virtual ~FeatureMap() = default;
  virtual int dim() const = 0;
  virtual int input_dim() const = 0;
  virtual bool has_intercept() const = 0;
  virtual void eval(const ConstMatRef& X, MatRef Phi) const = 0;
  // Column j*dim()+k holds d phi_k / d x_j.
  virtual void grad_x(const ConstMatRef& X, MatRef G) const = 0;

  Mat eval(const ConstMatRef& X) const {
    Mat Phi(X.rows(), dim());
    eval(X, Phi);
    return Phi;
  }
  Mat grad_x(const ConstMatRef& X) const {
    Mat G(X.rows(), dim() * input_dim());
    grad_x(X, G);
    return G;
  }
  // Row i: gradient in x of D_psi at x_i.
  virtual Mat grad_discriminator(const ConstMatRef& X, const Vec& psi) const {
    Mat G = grad_x(X);
    Mat out(X.rows(), input_dim());
    for (int j = 0; j < input_dim(); ++j) out.col(j).noalias() = G.middleCols(j * dim(), dim()) * psi;
    return out;
  }
};

// (1, x_1, ..., x_d)
class AffineFeatures final : public FeatureMap {
 public:
  explicit AffineFeatures(int d) : d_(d) {}
  int dim() const override { return d_ + 1; }
  int input_dim() const override { return d_; }
  bool has_intercept() const override { return true; }
  void eval(const ConstMatRef& X, MatRef Phi) const override {
    Phi.col(0).setOnes();
    Phi.rightCols(d_) = X;
  }
  void grad_x(const ConstMatRef&, MatRef G) const override {
    G.setZero();
    for (int j = 0; j < d_; ++j) G.col(j * dim() + 1 + j).setOnes();
  }
  Mat grad_discriminator(const ConstMatRef& X, const Vec& psi) const override {
    return psi.tail(d_).transpose().replicate(X.rows(), 1);
  }

 private:
  int d_;
};

// (1, x, x^2)
class QuadraticFeatures final : public FeatureMap {
 public:
  int dim() const override { return 3; }
  int input_dim() const override { return 1; }
  bool has_intercept() const override { return true; }
  void eval(const ConstMatRef& X, MatRef Phi) const override {
    Phi.col(0).setOnes();
    Phi.col(1) = X.col(0);
    Phi.col(2) = X.col(0).array().square();
  }
  void grad_x(const ConstMatRef& X, MatRef G) const override {
    G.col(0).setZero();
    G.col(1).setOnes();
    G.col(2) = 2.0 * X.col(0);
  }
};

// (1, |x|, x^2)
class AbsQuadraticFeatures final : public FeatureMap {
 public:
  int dim() const override { return 3; }
  int input_dim() const override { return 1; }
  bool has_intercept() const override { return true; }
  void eval(const ConstMatRef& X, MatRef Phi) const override {
    Phi.col(0).setOnes();
    Phi.col(1) = X.col(0).cwiseAbs();
    Phi.col(2) = X.col(0).array().square();
  }
  void grad_x(const ConstMatRef& X, MatRef G) const override {
    G.col(0).setZero();
    G.col(1) = X.col(0).array().sign();
    G.col(2) = 2.0 * X.col(0);
  }
};

// (1, x1, x2, x1^2, x2^2, x1 x2)
class Quadratic2DFeatures final : public FeatureMap {
 public:
  int dim() const override { return 6; }
  int input_dim() const override { return 2; }
  bool has_intercept() const override { return true; }
  void eval(const ConstMatRef& X, MatRef Phi) const override {
    Phi.col(0).setOnes();
    Phi.col(1) = X.col(0);
    Phi.col(2) = X.col(1);
    Phi.col(3) = X.col(0).array().square();
    Phi.col(4) = X.col(1).array().square();
    Phi.col(5) = X.col(0).array() * X.col(1).array();
  }
  void grad_x(const ConstMatRef& X, MatRef G) const override {
    G.setZero();
    G.col(1).setOnes();
    G.col(3) = 2.0 * X.col(0);
    G.col(5) = X.col(1);
    G.col(6 + 2).setOnes();
    G.col(6 + 4) = 2.0 * X.col(1);
    G.col(6 + 5) = X.col(0);
  }
};

// Fisher score of the generator family at a pilot estimate; no intercept.
class ScoreFeatures final : public FeatureMap {
 public:
  ScoreFeatures(std::shared_ptr<const Generator> gen, Vec pilot) : gen_(std::move(gen)), pilot_(std::move(pilot)) {}
  int dim() const override { return gen_->theta_dim(); }
  int input_dim() const override { return gen_->data_dim(); }
  bool has_intercept() const override { return false; }
  void eval(const ConstMatRef& X, MatRef Phi) const override { gen_->score(pilot_, X, Phi); }
  void grad_x(const ConstMatRef& X, MatRef G) const override { gen_->score_grad_x(pilot_, X, G); }
  const Vec& pilot() const { return pilot_; }

 private:
  std::shared_ptr<const Generator> gen_;
  Vec pilot_;
};

// ---------------------------------------------------------------- settings

enum class SettingKind { gaussian_mean, laplace_gaussian, gaussian2, two_gaussian };

class Setting {
 public:
  Setting(SettingKind kind, std::shared_ptr<const TrueDistribution> truth, std::shared_ptr<const Generator> gen,
          std::shared_ptr<const FeatureMap> features, Box box)
      : kind_(kind), truth_(std::move(truth)), gen_(std::move(gen)), features_(std::move(features)),
        box_(std::move(box)) {}
  virtual ~Setting() = default;

  SettingKind kind() const { return kind_; }
  virtual std::string name() const = 0;
  const TrueDistribution& truth() const { return *truth_; }
  const Generator& generator() const { return *gen_; }
  std::shared_ptr<const Generator> generator_ptr() const { return gen_; }
  const FeatureMap& features() const { return *features_; }
  const Box& theta_box() const { return box_; }

  // Coefficients with psi^T phi(x) = log p*(x) - log p_theta(x).
  virtual Vec optimal_discriminator(const Vec& theta) const = 0;

  // Training defaults (initial point and step size).
  virtual Vec default_theta0() const = 0;
  virtual double default_eta() const = 0;

  Mat true_sample(Eigen::Index n, Rng& rng) const {
    if (n < 1) throw DomainError("sample size must be at least 1");
    return truth_->sample(n, rng);
  }

 private:
  SettingKind kind_;
  std::shared_ptr<const TrueDistribution> truth_;
  std::shared_ptr<const Generator> gen_;
  std::shared_ptr<const FeatureMap> features_;
  Box box_;
};

using SettingPtr = std::shared_ptr<const Setting>;

// p* = N(mu0, I), G(z) = theta + z.
class GaussianMean final : public Setting {
 public:
  explicit GaussianMean(Vec mu0)
      : Setting(SettingKind::gaussian_mean, std::make_shared<IsotropicGaussian>(mu0, 1.0),
                std::make_shared<LocationGenerator>(Mat::Identity(mu0.size(), mu0.size()), 1.0),
                std::make_shared<AffineFeatures>(static_cast<int>(mu0.size())),
                Box{Vec::Constant(mu0.size(), -1e3), Vec::Constant(mu0.size(), 1e3)}),
        mu0_(std::move(mu0)) {}
  std::string name() const override { return "gaussian-mean"; }
  Vec optimal_discriminator(const Vec& theta) const override {
    Vec psi(mu0_.size() + 1);
    psi[0] = 0.5 * (theta.squaredNorm() - mu0_.squaredNorm());
    psi.tail(mu0_.size()) = mu0_ - theta;
    return psi;
  }
  Vec default_theta0() const override { return Vec::Constant(mu0_.size(), 0.5); }
  double default_eta() const override { return 1.0; }
  const Vec& mu0() const { return mu0_; }

 private:
  Vec mu0_;
};

// p* = Laplace(b), p_theta = N(0, theta^2).
class LaplaceGaussian final : public Setting {
 public:
  explicit LaplaceGaussian(double b = 1.5)
      : Setting(SettingKind::laplace_gaussian, std::make_shared<Laplace>(b), std::make_shared<ScaleGenerator>(),
                std::make_shared<AbsQuadraticFeatures>(), Box{Vec::Constant(1, 0.1), Vec::Constant(1, 1e3)}),
        b_(b) {}
  std::string name() const override { return "laplace-gaussian"; }
  Vec optimal_discriminator(const Vec& theta) const override {
    const double t = theta[0];
    Vec psi(3);
    psi << std::log(std::sqrt(2.0 * std::numbers::pi) * t / (2.0 * b_)), -1.0 / b_, 0.5 / (t * t);
    return psi;
  }
  Vec default_theta0() const override { return Vec::Constant(1, 0.1); }
  double default_eta() const override { return 0.5; }
  double b() const { return b_; }

 private:
  double b_;
};

// p* = N(mu0, sigma0^2), p_theta = N(0, theta^2).
class Gaussian2 final : public Setting {
 public:
  Gaussian2(double mu0 = 1.0, double sigma0 = 1.0)
      : Setting(SettingKind::gaussian2, std::make_shared<IsotropicGaussian>(Vec::Constant(1, mu0), sigma0),
                std::make_shared<ScaleGenerator>(), std::make_shared<QuadraticFeatures>(),
                Box{Vec::Constant(1, 0.1), Vec::Constant(1, 1e3)}),
        mu0_(mu0),
        sigma0_(sigma0) {}
  std::string name() const override { return "gaussian2"; }
  Vec optimal_discriminator(const Vec& theta) const override {
    const double t = theta[0], s2 = sigma0_ * sigma0_;
    Vec psi(3);
    psi << std::log(t / sigma0_) - mu0_ * mu0_ / (2.0 * s2), mu0_ / s2, 0.5 * (1.0 / (t * t) - 1.0 / s2);
    return psi;
  }
  Vec default_theta0() const override { return Vec::Constant(1, 0.5); }
  double default_eta() const override { return 0.5; }
  double mu0() const { return mu0_; }
  double sigma0() const { return sigma0_; }

 private:
  double mu0_, sigma0_;
};

// Real class N(0, s1 I_2) against fake class N((mu2, mu2), s2 I_2). The fake
// class is written as a generator with theta = mu2 so the discriminator
// machinery applies unchanged.
class TwoGaussianClassify final : public Setting {
 public:
  TwoGaussianClassify(double mu2 = 0.3, double sigma1sq = 0.1, double sigma2sq = 0.05)
      : Setting(SettingKind::two_gaussian, std::make_shared<IsotropicGaussian>(Vec::Zero(2), checked_sd(sigma1sq)),
                std::make_shared<LocationGenerator>(Mat::Ones(2, 1), checked_sd(sigma2sq)),
                std::make_shared<Quadratic2DFeatures>(), Box{Vec::Constant(1, -1e3), Vec::Constant(1, 1e3)}),
        mu2_(mu2),
        s1_(sigma1sq),
        s2_(sigma2sq) {
    if (sigma1sq == sigma2sq) throw DomainError("two-gaussian needs distinct class variances");
  }
  std::string name() const override { return "two-gaussian"; }
  Vec optimal_discriminator(const Vec& theta) const override {
    const double m = theta[0];
    Vec psi(6);
    const double q = 0.5 * (1.0 / s2_ - 1.0 / s1_);
    psi << std::log(s2_ / s1_) + m * m / s2_, -m / s2_, -m / s2_, q, q, 0.0;
    return psi;
  }
  Vec default_theta0() const override { return Vec::Constant(1, mu2_); }
  double default_eta() const override { return 0.5; }
  double mu2() const { return mu2_; }
  Vec mu2_theta() const { return Vec::Constant(1, mu2_); }
  double sigma1sq() const { return s1_; }
  double sigma2sq() const { return s2_; }

 private:
  static double checked_sd(double var) {
    if (!(var > 0)) throw DomainError("two-gaussian variances must be positive");
    return std::sqrt(var);
  }
  double mu2_, s1_, s2_;
};

inline SettingPtr make_setting(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "gaussian-mean") return std::make_shared<GaussianMean>(Vec::Constant(1, 1.0));
  if (s == "laplace-gaussian") return std::make_shared<LaplaceGaussian>();
  if (s == "gaussian2") return std::make_shared<Gaussian2>();
  if (s == "two-gaussian") return std::make_shared<TwoGaussianClassify>();
  throw ValidationError("--setting", "unknown setting '" + name +
                                         "' (gaussian-mean|laplace-gaussian|gaussian2|two-gaussian)");
}

}  // namespace agelab
