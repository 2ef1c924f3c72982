#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "agelab/divergence.hpp"
#include "agelab/error.hpp"
#include "agelab/model.hpp"

namespace agelab {

struct NewtonOptions {
  int max_iter = 200;
  double grad_tol = 1e-10;
  double armijo = 1e-4;
  double separation_norm = 1e6;
  int max_halvings = 60;
  Eigen::Index chunk = 512;
};

struct DiscriminatorFit {
  Vec psi_hat;
  double loss = 0;
  double grad_norm = 0;
  int iterations = 0;
  bool converged = false;
  bool gradient_fallback = false;  // a Newton system was not positive definite
  std::vector<double> loss_path;
};

namespace detail {

using Arr = Eigen::ArrayXd;

// Per-point loss, slope and curvature of the real-side and fake-side terms.
struct LogisticKernel {
  double log_lambda, lambda;
  mutable Arr u, a, one, inv, lg, sp, sn;
  void eval(const Arr& D, bool real, Arr& val, Arr& d1, Arr& d2) const {
    // u = D - log(lambda); real term softplus(-u), fake term lambda * softplus(u)
    u = D - log_lambda;
    a = (-u.abs()).exp();
    one = 1.0 + a;
    inv = one.inverse();
    lg = one.log();
    lg -= ((one - 1.0) - a) * inv;  // log1p(a): undo the rounding of 1 + a to first order
    sp = (u >= 0).select(inv, a * inv);  // sigmoid(u)
    sn = (u >= 0).select(a * inv, inv);  // sigmoid(-u)
    if (real) {
      val = (-u).max(0.0) + lg;
      d1 = -sn;
      d2 = sp * sn;
    } else {
      val = lambda * (u.max(0.0) + lg);
      d1 = lambda * sp;
      d2 = lambda * sp * sn;
    }
  }
};

struct FganKernel {
  Divergence div;
  void eval(const Arr& D, bool real, Arr& val, Arr& d1, Arr& d2) const {
    auto check = [&](double arg) {
      if (!(arg <= kExponentCap)) throw OverflowError(std::string(name(div)), arg);
    };
    switch (div) {
      case Divergence::kl:
        if (real) {
          val = -D, d1.setConstant(D.size(), -1.0), d2.setZero(D.size());
        } else {
          check(D.maxCoeff());
          val = D.exp(), d1 = val, d2 = val;
        }
        return;
      case Divergence::revkl:
        if (real) {
          check((-D).maxCoeff());
          val = (-D).exp(), d1 = -val, d2 = val;
        } else {
          val = D, d1.setOnes(D.size()), d2.setZero(D.size());
        }
        return;
      case Divergence::h2:
        if (real) {
          check((-0.5 * D).maxCoeff());
          val = (-0.5 * D).exp(), d1 = -0.5 * val, d2 = 0.25 * val;
        } else {
          check((0.5 * D).maxCoeff());
          val = (0.5 * D).exp(), d1 = 0.5 * val, d2 = 0.25 * val;
        }
        return;
      case Divergence::js: {
        LogisticKernel k{0.0, 1.0, {}, {}, {}, {}, {}, {}, {}};
        k.eval(D, real, val, d1, d2);
        return;
      }
    }
  }
};

struct Evaluation {
  double f;
  Vec g;
  Mat H;
};

// Loss (1/n) sum real-term + (1/m) sum fake-term for D = Phi psi, with gradient
// and Hessian. Chunked so feature blocks stay in cache.
template <class Kernel>
class LinearLossEvaluator {
 public:
  LinearLossEvaluator(const FeatureMap& fm, const ConstMatRef& real, const ConstMatRef& fake, const Kernel& k,
                      Eigen::Index chunk)
      : fm_(fm), real_(real), fake_(fake), k_(k), chunk_(chunk), p_(fm.dim()) {
    Phi_.resize(chunk_, p_);
    Pv_.resize(chunk_, p_);
  }

  Evaluation operator()(const Vec& psi) {
    Evaluation e{0.0, Vec::Zero(p_), Mat::Zero(p_, p_)};
    accumulate(real_, true, psi, e);
    accumulate(fake_, false, psi, e);
    return e;
  }

 private:
  void accumulate(const ConstMatRef& X, bool real, const Vec& psi, Evaluation& e) {
    const Eigen::Index N = X.rows();
    const double scale = 1.0 / static_cast<double>(N);
    double f = 0.0;
    Vec g = Vec::Zero(p_);
    Mat H = Mat::Zero(p_, p_);
    for (Eigen::Index s = 0; s < N; s += chunk_) {
      const Eigen::Index len = std::min(chunk_, N - s);
      auto Phi = Phi_.topRows(len);
      fm_.eval(X.middleRows(s, len), Phi);
      D_ = (Phi * psi).array();
      k_.eval(D_, real, val_, d1_, d2_);
      f += val_.sum();
      g.noalias() += Phi.transpose() * d1_.matrix();
      auto Pv = Pv_.topRows(len);
      Pv = (Phi.array().colwise() * d2_).matrix();
      H.noalias() += Phi.transpose().lazyProduct(Pv);  // p is tiny; skip GEMM packing
    }
    e.f += scale * f;
    e.g += scale * g;
    e.H += scale * H;
  }

  const FeatureMap& fm_;
  ConstMatRef real_, fake_;
  const Kernel& k_;
  Eigen::Index chunk_;
  int p_;
  Mat Phi_, Pv_;
  Arr D_, val_, d1_, d2_;
};

template <class Kernel>
DiscriminatorFit newton_fit(const FeatureMap& fm, const ConstMatRef& real, const ConstMatRef& fake, const Kernel& k,
                            const NewtonOptions& opt, const std::optional<Vec>& psi0) {
  if (real.rows() < 1 || fake.rows() < 1) throw DomainError("discriminator fit needs nonempty samples");
  if (real.cols() != fm.input_dim() || fake.cols() != fm.input_dim())
    throw DomainError("sample dimension does not match the feature map");
  if (psi0 && psi0->size() != fm.dim()) throw DomainError("starting discriminator has the wrong length");
  LinearLossEvaluator<Kernel> eval(fm, real, fake, k, opt.chunk);

  DiscriminatorFit fit;
  Vec psi = psi0 ? *psi0 : Vec::Zero(fm.dim());
  Evaluation cur = eval(psi);
  if (!std::isfinite(cur.f)) throw DivergenceError("non-finite loss at the starting point");
  fit.loss_path.push_back(cur.f);

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const double gnorm = cur.g.norm();
    if (gnorm <= opt.grad_tol) break;

    Vec step;
    Eigen::LLT<Mat> llt(cur.H);
    if (llt.info() == Eigen::Success) {
      step = llt.solve(-cur.g);
    }
    if (llt.info() != Eigen::Success || !step.allFinite()) {
      step = -cur.g;
      fit.gradient_fallback = true;
    }
    const double slope = cur.g.dot(step);  // negative

    double t = 1.0;
    bool accepted = false, overflowed = false;
    Evaluation trial;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      Vec cand = psi + t * step;
      try {
        trial = eval(cand);
      } catch (const OverflowError&) {
        overflowed = true;
        continue;
      }
      overflowed = false;
      if (!std::isfinite(trial.f)) continue;
      const double slack = 1e-12 * (1.0 + std::abs(cur.f));
      const bool armijo = trial.f <= cur.f + opt.armijo * t * slope;
      // Close to the optimum the predicted decrease drowns in rounding; fall
      // back to requiring a smaller gradient with no real loss increase.
      const bool flat = -t * slope <= slack && trial.g.norm() < gnorm && trial.f <= cur.f + slack;
      if (armijo || flat) {
        psi = std::move(cand);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (overflowed) throw DivergenceError("persistent exponent overflow along the Newton direction");
      break;  // stalled: report the current point
    }
    if (!(trial.f <= cur.f + 1e-12 * (1.0 + std::abs(cur.f))))
      throw std::logic_error("Newton iterate increased the loss");
    cur = std::move(trial);
    fit.loss_path.push_back(cur.f);
    if (psi.norm() > opt.separation_norm)
      throw SeparationError("discriminator norm exceeded " + std::to_string(opt.separation_norm) +
                            " (separable samples)");
  }
  // Strictly separated samples have no finite minimizer; the gradient can still
  // fall below tolerance far out along the separating direction.
  if (fm.has_intercept()) {
    const double lo_real = (fm.eval(real) * psi).minCoeff(), hi_fake = (fm.eval(fake) * psi).maxCoeff();
    if (lo_real > hi_fake)
      throw SeparationError("fitted discriminator separates the samples (min real " + std::to_string(lo_real) +
                            " > max fake " + std::to_string(hi_fake) + ")");
  }
  fit.psi_hat = psi;
  fit.loss = cur.f;
  fit.grad_norm = cur.g.norm();
  fit.iterations = it;
  fit.converged = fit.grad_norm <= opt.grad_tol;
  return fit;
}

// Table-2 losses for every divergence, JS included (no routing).
inline DiscriminatorFit fit_table2(Divergence div, const FeatureMap& fm, const ConstMatRef& real,
                                   const ConstMatRef& fake, const NewtonOptions& opt = {},
                                   const std::optional<Vec>& psi0 = std::nullopt) {
  return newton_fit(fm, real, fake, FganKernel{div}, opt, psi0);
}

}  // namespace detail

// Minimizes (1/n) sum log(1 + lambda e^{-D(x_i)}) + (lambda/m) sum log(1 + e^{D(x~_j)}/lambda).
inline DiscriminatorFit fit_logistic(const FeatureMap& fm, const ConstMatRef& real, const ConstMatRef& fake,
                                     double lambda, const NewtonOptions& opt = {},
                                     const std::optional<Vec>& psi0 = std::nullopt) {
  if (!(lambda >= 1.0) || !std::isfinite(lambda)) throw DomainError("lambda must be a finite number >= 1");
  detail::LogisticKernel k{std::log(lambda), lambda, {}, {}, {}, {}, {}, {}, {}};
  return detail::newton_fit(fm, real, fake, k, opt, psi0);
}

// Uncorrected f-GAN discriminator loss. JS shares the logistic path at lambda = 1,
// which is the same objective.
inline DiscriminatorFit fit_fgan(Divergence div, const FeatureMap& fm, const ConstMatRef& real,
                                 const ConstMatRef& fake, const NewtonOptions& opt = {},
                                 const std::optional<Vec>& psi0 = std::nullopt) {
  if (div == Divergence::js) return fit_logistic(fm, real, fake, 1.0, opt, psi0);
  return detail::fit_table2(div, fm, real, fake, opt, psi0);
}

}  // namespace agelab
