#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "agelab/divergence.hpp"
#include "agelab/error.hpp"
#include "agelab/model.hpp"
#include "agelab/quadrature.hpp"

namespace agelab {

inline int default_panels(int data_dim) { return data_dim == 1 ? 64 : 24; }

// D_f(p*, p_theta) = E_{p*} f(p_theta / p*) on a fixed rule, in log space so
// far tails neither overflow nor underflow into NaN.
inline double divergence_objective(const Setting& s, Divergence div, const Vec& theta,
                                   const std::vector<quad::Rule1D>& rule) {
  double total = 0.0;
  Vec lp, lq;
  quad::for_each_block(rule, [&](const Mat& X, const Vec& w) {
    lp.resize(X.rows());
    lq.resize(X.rows());
    s.truth().log_density(X, lp);
    s.generator().log_density(theta, X, lq);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double a = lp[i], c = lq[i], lr = c - a;
      double v = 0.0;
      switch (div) {
        case Divergence::kl: v = std::exp(a) * (-lr); break;
        case Divergence::revkl: v = std::exp(c) * lr; break;
        case Divergence::js:
          v = -(std::exp(a) + std::exp(c)) * (softplus(lr) - std::numbers::ln2) + std::exp(c) * lr;
          break;
        case Divergence::h2: {
          const double t = std::exp(0.5 * c) - std::exp(0.5 * a);
          v = t * t;
          break;
        }
      }
      acc += w[i] * v;
    }
    total += acc;
  });
  return total;
}

inline double divergence_objective(const Setting& s, Divergence div, const Vec& theta, int panels = 0) {
  if (panels <= 0) panels = default_panels(s.truth().dim());
  return divergence_objective(s, div, theta, quad::data_rule(s, theta, panels));
}

// Central-difference gradient of the objective; every stencil point shares
// one rule so the differences are smooth in theta.
inline Vec objective_gradient(const Setting& s, Divergence div, const Vec& theta, double h = 1e-4, int panels = 0) {
  if (panels <= 0) panels = default_panels(s.truth().dim());
  auto rule = quad::data_rule(s, theta, panels, 1.2);
  Vec g(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Vec tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    g[k] = (divergence_objective(s, div, tp, rule) - divergence_objective(s, div, tm, rule)) / (2 * h);
  }
  return g;
}

// Five-point second differences on the diagonal, four-point mixed differences off it.
inline Mat objective_hessian(const Setting& s, Divergence div, const Vec& theta, double h = 1e-4, int panels = 0) {
  if (panels <= 0) panels = default_panels(s.truth().dim());
  auto rule = quad::data_rule(s, theta, panels, 1.2);
  auto L = [&](const Vec& t) { return divergence_objective(s, div, t, rule); };
  const Eigen::Index q = theta.size();
  Mat H(q, q);
  const double f0 = L(theta);
  for (Eigen::Index k = 0; k < q; ++k) {
    auto at = [&](double off) {
      Vec t = theta;
      t[k] += off;
      return L(t);
    };
    H(k, k) = (-at(2 * h) + 16 * at(h) - 30 * f0 + 16 * at(-h) - at(-2 * h)) / (12 * h * h);
    for (Eigen::Index j = 0; j < k; ++j) {
      auto at2 = [&](double a, double b) {
        Vec t = theta;
        t[k] += a;
        t[j] += b;
        return L(t);
      };
      H(k, j) = H(j, k) = (at2(h, h) - at2(h, -h) - at2(-h, h) + at2(-h, -h)) / (4 * h * h);
    }
  }
  return H;
}

struct ThetaStarOptions {
  int grid = 81;
  double tol = 1e-8;
  int panels = 0;
};

// Minimizer of the quadrature objective over the parameter box: a coarse
// profile locates the basin, golden-section search refines it.
inline Vec theta_star(const Setting& s, Divergence div, const ThetaStarOptions& opt = {}) {
  if (s.kind() == SettingKind::two_gaussian)
    throw UnsupportedSetting("theta_star: two-gaussian has no generator objective");
  if (s.generator().theta_dim() != 1) {
    if (s.kind() == SettingKind::gaussian_mean)  // well-specified: p_theta = p* at theta = mu0
      return static_cast<const GaussianMean&>(s).mu0();
    throw UnsupportedSetting("theta_star needs a one-dimensional parameter");
  }
  const double lo = s.theta_box().lo[0], hi = s.theta_box().hi[0];
  auto L = [&](double t) { return divergence_objective(s, div, Vec::Constant(1, t), opt.panels); };

  std::vector<std::pair<double, double>> profile;
  const bool geometric = lo > 0;
  for (int i = 0; i < opt.grid; ++i) {
    const double u = static_cast<double>(i) / (opt.grid - 1);
    const double t = geometric ? lo * std::pow(hi / lo, u) : lo + (hi - lo) * u;
    profile.emplace_back(t, L(t));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < profile.size(); ++i)
    if (profile[i].second < profile[best].second) best = i;
  double scale = 0;
  for (auto& p : profile) scale = std::max(scale, std::abs(p.second));
  const double slack = 1e-9 * scale;  // saturated tails are flat up to rounding
  for (std::size_t i = 1; i < profile.size(); ++i) {
    const bool ok = i <= best ? profile[i].second <= profile[i - 1].second + slack
                              : profile[i].second + slack >= profile[i - 1].second;
    if (!ok) throw OptimizationError("theta_star: objective profile is not unimodal", profile);
  }

  double a = profile[best == 0 ? 0 : best - 1].first;
  double b = profile[std::min(best + 1, profile.size() - 1)].first;
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = L(c), fd = L(d);
  while (b - a > opt.tol) {
    if (fc <= fd) {
      b = d, d = c, fd = fc;
      c = b - invphi * (b - a);
      fc = L(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + invphi * (b - a);
      fd = L(d);
    }
  }
  return Vec::Constant(1, 0.5 * (a + b));
}

}  // namespace agelab
