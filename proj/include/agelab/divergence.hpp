#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>
#include <string_view>

#include "agelab/error.hpp"

namespace agelab {

// JS is stored as twice the Jensen-Shannon divergence so its f-GAN losses are
// the plain logistic ones.
enum class Divergence { kl, revkl, js, h2 };

inline constexpr std::array<Divergence, 4> kAllDivergences{Divergence::kl, Divergence::revkl,
                                                           Divergence::js, Divergence::h2};

// Largest argument handed to an unbounded exponential before we give up.
inline constexpr double kExponentCap = 50.0;

inline std::string_view name(Divergence div) {
  switch (div) {
    case Divergence::kl: return "kl";
    case Divergence::revkl: return "revkl";
    case Divergence::js: return "js";
    case Divergence::h2: return "h2";
  }
  return "?";
}

inline Divergence parse_divergence(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto d : kAllDivergences)
    if (s == name(d)) return d;
  throw ValidationError("--divergence", "unknown divergence '" + std::string(text) + "' (kl|revkl|js|h2)");
}

inline double f_value(Divergence div, double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("f_value needs a finite positive ratio");
  switch (div) {
    case Divergence::kl: return -std::log(r);
    case Divergence::revkl: return r * std::log(r);
    case Divergence::js: return -(r + 1.0) * std::log((1.0 + r) / 2.0) + r * std::log(r);
    case Divergence::h2: {
      double t = std::sqrt(r) - 1.0;
      return t * t;
    }
  }
  return 0.0;
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

inline double capped_exp(double arg, Divergence div) {
  if (!(arg <= kExponentCap)) throw OverflowError(std::string(name(div)), arg);
  return std::exp(arg);
}

// Values and first/second derivatives in d of the two f-GAN losses.
struct LossTerms {
  double l1, l2, dl1, dl2, d2l1, d2l2;
};

template <class Exp>
LossTerms loss_terms(Divergence div, double d, Exp ex) {
  switch (div) {
    case Divergence::kl: {
      double e = ex(d);
      return {-d, e, -1.0, e, 0.0, e};
    }
    case Divergence::revkl: {
      double e = ex(-d);
      return {e, d, -e, 1.0, e, 0.0};
    }
    case Divergence::js: {
      double sp = sigmoid(d), sn = sigmoid(-d);
      return {softplus(-d), softplus(d), -sn, sp, sp * sn, sp * sn};
    }
    case Divergence::h2: {
      double en = ex(-0.5 * d), ep = ex(0.5 * d);
      return {en, ep, -0.5 * en, 0.5 * ep, 0.25 * en, 0.25 * ep};
    }
  }
  return {};
}

// No cap: the asymptotic integrals deliberately walk far into the tails.
inline LossTerms loss_terms_unchecked(Divergence div, double d) {
  return loss_terms(div, d, [](double a) { return std::exp(a); });
}

inline double scaling_unchecked(Divergence div, double d) {
  switch (div) {
    case Divergence::kl: return std::exp(d);
    case Divergence::revkl: return 1.0;
    case Divergence::js: return sigmoid(d);
    case Divergence::h2: return 0.5 * std::exp(0.5 * d);
  }
  return 0.0;
}

// Derivative of the scaling factor in d.
inline double scaling_slope_unchecked(Divergence div, double d) {
  switch (div) {
    case Divergence::kl: return std::exp(d);
    case Divergence::revkl: return 0.0;
    case Divergence::js: return sigmoid(d) * sigmoid(-d);
    case Divergence::h2: return 0.25 * std::exp(0.5 * d);
  }
  return 0.0;
}

}  // namespace detail

// Weight on the discriminator gradient in the generator update, as a function
// of d = log(p*/p_theta).
inline double scaling_factor(Divergence div, double d) {
  if (!std::isfinite(d)) throw DomainError("scaling_factor needs a finite log-ratio");
  switch (div) {
    case Divergence::kl: return detail::capped_exp(d, div);
    case Divergence::h2: return 0.5 * detail::capped_exp(0.5 * d, div);
    default: return detail::scaling_unchecked(div, d);
  }
}

struct FganLosses {
  double l1, l2, dl1, dl2;
};

inline FganLosses fgan_losses(Divergence div, double d) {
  if (!std::isfinite(d)) throw DomainError("fgan_losses needs a finite argument");
  auto t = detail::loss_terms(div, d, [div](double a) { return detail::capped_exp(a, div); });
  return {t.l1, t.l2, t.dl1, t.dl2};
}

struct FganCurvature {
  double d2l1, d2l2;
};

inline FganCurvature fgan_curvature(Divergence div, double d) {
  if (!std::isfinite(d)) throw DomainError("fgan_curvature needs a finite argument");
  auto t = detail::loss_terms(div, d, [div](double a) { return detail::capped_exp(a, div); });
  return {t.d2l1, t.d2l2};
}

}  // namespace agelab
