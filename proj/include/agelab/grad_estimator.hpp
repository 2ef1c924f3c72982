#pragma once

#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "agelab/divergence.hpp"
#include "agelab/error.hpp"
#include "agelab/model.hpp"

namespace agelab {

struct GradientEstimate {
  Vec h;
  double per_draw_norm_mean = 0;
  Eigen::Index m_used = 0;
  Vec per_draw_sd;  // coordinate-wise spread of the per-draw terms
};

// Elementwise scaling factor; throws with the offending position on overflow.
struct StandardScaling {
  void operator()(Divergence div, const Eigen::ArrayXd& D, Eigen::ArrayXd& out) const {
    double cap_arg = 0;
    switch (div) {
      case Divergence::kl: cap_arg = 1.0; break;
      case Divergence::h2: cap_arg = 0.5; break;
      default: break;
    }
    if (cap_arg > 0) {
      Eigen::Index at;
      if (!(cap_arg * D.maxCoeff(&at) <= kExponentCap) || !D.allFinite()) {
        for (at = 0; at < D.size(); ++at)
          if (!(cap_arg * D[at] <= kExponentCap)) break;
        throw OverflowError(std::string(name(div)) + " scaling factor at draw offset " + std::to_string(at),
                            cap_arg * D[std::min(at, D.size() - 1)]);
      }
    }
    switch (div) {
      case Divergence::kl: out = D.exp(); break;
      case Divergence::revkl: out.setOnes(D.size()); break;
      case Divergence::js: out = 1.0 / (1.0 + (-D).exp()); break;
      case Divergence::h2: out = 0.5 * (0.5 * D).exp(); break;
    }
  }
};

// Per-draw contribution -s(G(z); D) J(z)^T grad_x D(G(z)).
template <class Scaling = StandardScaling>
Vec h_prime(Divergence div, const Generator& gen, const FeatureMap& fm, const Vec& psi, const Vec& theta,
            const Vec& z, const Scaling& scaling = {}) {
  Mat Z = z.transpose();
  Mat X = gen.apply(theta, Z);
  Eigen::ArrayXd D = (fm.eval(X) * psi).array(), s(1);
  try {
    scaling(div, D, s);
  } catch (const OverflowError& e) {
    std::ostringstream msg;
    msg << e.source() << " (theta=" << theta.transpose() << ", z=" << z.transpose() << ")";
    throw OverflowError(msg.str(), e.argument());
  }
  Mat G = fm.grad_discriminator(X, psi) * s[0];
  Mat out(1, gen.theta_dim());
  gen.pullback(theta, Z, G, out);
  return -out.row(0).transpose();
}

// Plain mean of h_prime over the latent batch; chunk partial sums are combined
// pairwise so the result depends on the chunk size only.
template <class Scaling = StandardScaling>
GradientEstimate h_estimate(Divergence div, const Generator& gen, const FeatureMap& fm, const Vec& psi,
                            const Vec& theta, const ConstMatRef& Z, Eigen::Index chunk = 4096,
                            const Scaling& scaling = {}) {
  const Eigen::Index m = Z.rows();
  if (m < 1) throw DomainError("h_estimate needs a nonempty latent batch");
  const int q = gen.theta_dim();
  std::vector<Vec> sums, squares;
  std::vector<double> norms;
  Mat X, P;
  Eigen::ArrayXd D, s;
  for (Eigen::Index start = 0; start < m; start += chunk) {
    const Eigen::Index len = std::min(chunk, m - start);
    auto Zc = Z.middleRows(start, len);
    X.resize(len, gen.data_dim());
    gen.apply(theta, Zc, X);
    D = (fm.eval(X) * psi).array();
    try {
      scaling(div, D, s);
    } catch (const OverflowError& e) {
      throw OverflowError(e.source() + " (batch start " + std::to_string(start) + ")", e.argument());
    }
    Mat G = fm.grad_discriminator(X, psi);
    G.array().colwise() *= s;
    P.resize(len, q);
    gen.pullback(theta, Zc, G, P);
    sums.push_back(-P.colwise().sum().transpose());
    squares.push_back(P.array().square().colwise().sum().transpose());
    norms.push_back(P.rowwise().norm().sum());
  }
  auto pairwise = [](auto& v) {
    for (std::size_t width = 1; width < v.size(); width *= 2)
      for (std::size_t i = 0; i + width < v.size(); i += 2 * width) v[i] += v[i + width];
    return v.front();
  };
  GradientEstimate est;
  est.m_used = m;
  const double md = static_cast<double>(m);
  est.h = pairwise(sums) / md;
  Vec sq = pairwise(squares) / md;
  est.per_draw_norm_mean = pairwise(norms) / md;
  est.per_draw_sd = Vec::Zero(q);
  if (m > 1) est.per_draw_sd = ((sq.array() - est.h.array().square()).max(0.0) * md / (md - 1)).sqrt().matrix();
  if (!est.h.allFinite()) throw DomainError("gradient estimate is not finite");
  return est;
}

}  // namespace agelab
