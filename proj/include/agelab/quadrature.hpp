#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "agelab/error.hpp"
#include "agelab/model.hpp"

namespace agelab::quad {

// 15-point Kronrod abscissae/weights on [-1, 1] (QUADPACK qk15), positive half.
inline constexpr std::array<double, 8> kXgk{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> kWgk{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};

struct Rule1D {
  Vec x, w;
  Eigen::Index size() const { return x.size(); }
};

// Composite 15-point rule over the hull of `parts`; each part is cut into
// `panels` equal pieces and every kink becomes a panel edge.
inline Rule1D composite_rule(const std::vector<Interval>& parts, const std::vector<double>& kinks, int panels) {
  if (parts.empty() || panels < 1) throw DomainError("composite_rule needs at least one interval and panel");
  std::vector<double> edges;
  double lo = parts.front().lo, hi = parts.front().hi;
  for (const auto& p : parts) {
    if (!(p.hi > p.lo)) throw DomainError("empty integration interval");
    lo = std::min(lo, p.lo);
    hi = std::max(hi, p.hi);
    for (int k = 0; k <= panels; ++k) edges.push_back(p.lo + (p.hi - p.lo) * k / panels);
  }
  for (double c : kinks)
    if (c > lo && c < hi) edges.push_back(c);
  std::sort(edges.begin(), edges.end());
  const double tiny = 1e-12 * (hi - lo);
  std::vector<double> uniq;
  for (double e : edges)
    if (uniq.empty() || e - uniq.back() > tiny) uniq.push_back(e);
  uniq.back() = hi;

  const auto npan = static_cast<Eigen::Index>(uniq.size() - 1);
  Rule1D r;
  r.x.resize(15 * npan);
  r.w.resize(15 * npan);
  Eigen::Index k = 0;
  for (Eigen::Index p = 0; p < npan; ++p) {
    const double a = uniq[p], b = uniq[p + 1], c = 0.5 * (a + b), h = 0.5 * (b - a);
    for (int j = 0; j < 7; ++j) {
      r.x[k] = c - h * kXgk[j];
      r.w[k++] = h * kWgk[j];
      r.x[k] = c + h * kXgk[j];
      r.w[k++] = h * kWgk[j];
    }
    r.x[k] = c;
    r.w[k++] = h * kWgk[7];
  }
  return r;
}

// Tensor product of one rule per axis, visited in blocks of rows.
// f(const Mat& X, const Vec& w) sees block coordinates and product weights.
template <class F>
void for_each_block(const std::vector<Rule1D>& axes, F&& f, Eigen::Index block = 4096) {
  const auto dim = static_cast<int>(axes.size());
  Eigen::Index total = 1;
  for (const auto& a : axes) total *= a.size();
  Mat X(block, dim);
  Vec w(block);
  std::vector<Eigen::Index> idx(dim, 0);
  for (Eigen::Index start = 0; start < total; start += block) {
    const Eigen::Index len = std::min(block, total - start);
    if (len != X.rows()) {
      X.resize(len, dim);
      w.resize(len);
    }
    for (Eigen::Index i = 0; i < len; ++i) {
      double wt = 1.0;
      for (int d = 0; d < dim; ++d) {
        X(i, d) = axes[d].x[idx[d]];
        wt *= axes[d].w[idx[d]];
      }
      w[i] = wt;
      for (int d = dim - 1; d >= 0; --d) {  // odometer, last axis fastest
        if (++idx[d] < axes[d].size()) break;
        idx[d] = 0;
      }
    }
    f(static_cast<const Mat&>(X), static_cast<const Vec&>(w));
  }
}

// Rule for expectations under p* and p_theta alike: covers both supports and
// the kinks of p*.
inline std::vector<Rule1D> data_rule(const Setting& s, const Vec& theta, int panels, double widen = 1.0) {
  auto ts = s.truth().support();
  auto gs = s.generator().support(theta);
  std::vector<Rule1D> axes;
  for (std::size_t d = 0; d < ts.size(); ++d) {
    Interval g = gs[d];
    const double c = 0.5 * (g.lo + g.hi), h = 0.5 * (g.hi - g.lo) * widen;
    axes.push_back(composite_rule({ts[d], {c - h, c + h}}, s.truth().kinks(), panels));
  }
  return axes;
}

// Standard normal latent measure on [-9, 9]^k; weights include the density.
inline std::vector<Rule1D> latent_rule(int latent_dim, int panels) {
  std::vector<Rule1D> axes;
  for (int d = 0; d < latent_dim; ++d) {
    Rule1D r = composite_rule({{-9.0, 9.0}}, {}, panels);
    r.w.array() *= (-0.5 * r.x.array().square()).exp() / std::sqrt(2.0 * std::numbers::pi);
    axes.push_back(std::move(r));
  }
  return axes;
}

}  // namespace agelab::quad
