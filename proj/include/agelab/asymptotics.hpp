#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agelab/divergence.hpp"
#include "agelab/error.hpp"
#include "agelab/model.hpp"
#include "agelab/objective.hpp"
#include "agelab/quadrature.hpp"
#include "agelab/train.hpp"

namespace agelab {

// Rows of the discriminator variance table: the corrected logistic loss and
// the four uncorrected f-GAN losses.
enum class DiscRow { age, kl, revkl, js, h2 };
inline constexpr std::array<DiscRow, 5> kAllRows{DiscRow::age, DiscRow::kl, DiscRow::revkl, DiscRow::js,
                                                 DiscRow::h2};

inline std::string_view name(DiscRow r) {
  switch (r) {
    case DiscRow::age: return "age";
    case DiscRow::kl: return "kl";
    case DiscRow::revkl: return "revkl";
    case DiscRow::js: return "js";
    case DiscRow::h2: return "h2";
  }
  return "?";
}

inline DiscRow row_of(Divergence d) {
  switch (d) {
    case Divergence::kl: return DiscRow::kl;
    case Divergence::revkl: return DiscRow::revkl;
    case Divergence::js: return DiscRow::js;
    case Divergence::h2: return DiscRow::h2;
  }
  return DiscRow::age;
}

inline Divergence divergence_of(DiscRow r) {
  switch (r) {
    case DiscRow::kl: return Divergence::kl;
    case DiscRow::revkl: return Divergence::revkl;
    case DiscRow::js: return Divergence::js;
    case DiscRow::h2: return Divergence::h2;
    default: throw std::invalid_argument("the logistic row has no f-divergence");
  }
}

struct QuadOptions {
  int panels = 0;          // data-space panels per axis (0: per-dimension default)
  int latent_panels = 96;  // panels on [-9, 9] for latent integrals
  bool self_check = true;  // repeat with doubled panels and report the change
  double tolerance = 1e-6; // largest acceptable self-check change before QuadratureError
};

inline int data_panels(const Setting& s, const QuadOptions& o) {
  if (o.panels > 0) return o.panels;
  return s.truth().dim() == 1 ? 128 : 28;
}

inline Mat sigma_zero(int dim) {
  if (dim < 1) throw DomainError("sigma_zero needs dim >= 1");
  Mat S = Mat::Zero(dim, dim);
  S(0, 0) = 1.0;
  return S;
}

namespace detail {

inline Mat symmetrized(const Mat& M, const char* what) {
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if (!((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale))
    throw std::logic_error(std::string(what) + " is not symmetric");
  return 0.5 * (M + M.transpose());
}

inline Eigen::LLT<Mat> spd_factor(const Mat& H, const char* what) {
  Eigen::LLT<Mat> llt(H);
  if (llt.info() != Eigen::Success) throw DomainError(std::string(what) + " is not positive definite");
  return llt;
}

// Largest entrywise change, relative to max(1, |entry|).
inline double rel_change(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  return ((a - b).array().abs() / b.array().abs().max(1.0)).maxCoeff();
}

inline void add_gram(Mat& G, const Mat& Phi, const Eigen::ArrayXd& wt) {
  G.noalias() += Phi.transpose() * (Phi.array().colwise() * wt).matrix();
}

// Feature Gram matrices of the closed-form table, one pass over data nodes.
struct TablePass {
  Mat A_age;
  std::array<Mat, 4> A, B;  // indexed by Divergence
};

inline TablePass table_pass(const Setting& s, const Vec& theta, double lambda, const std::vector<quad::Rule1D>& rule) {
  const FeatureMap& fm = s.features();
  const int p = fm.dim();
  TablePass tp;
  tp.A_age = Mat::Zero(p, p);
  for (int k = 0; k < 4; ++k) tp.A[k] = tp.B[k] = Mat::Zero(p, p);
  const double L = std::log(lambda);
  Vec lp, lq;
  Mat Phi;
  Eigen::ArrayXd w[9];
  quad::for_each_block(rule, [&](const Mat& X, const Vec& wq) {
    const Eigen::Index N = X.rows();
    lp.resize(N), lq.resize(N);
    s.truth().log_density(X, lp);
    s.generator().log_density(theta, X, lq);
    Phi.resize(N, p);
    fm.eval(X, Phi);
    for (auto& a : w) a.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const double a = lp[i], c = lq[i], D = a - c, P = std::exp(a), Q = std::exp(c), q = wq[i];
      const double sm = sigmoid(-D), spl = sigmoid(D);
      w[0][i] = q * P * sigmoid(L - D);
      w[1][i] = q * P;
      w[2][i] = q * (P + std::exp(2 * a - c - L));
      w[3][i] = q * Q;
      w[4][i] = q * (std::exp(2 * c - a) + Q / lambda);
      w[5][i] = q * P * sm;
      w[6][i] = q * P * sm * (sm + spl / lambda);
      w[7][i] = q * std::exp(0.5 * (a + c));
      w[8][i] = q * (Q + P / lambda);
    }
    add_gram(tp.A_age, Phi, w[0]);
    for (int k = 0; k < 4; ++k) {
      add_gram(tp.A[k], Phi, w[1 + 2 * k]);
      add_gram(tp.B[k], Phi, w[2 + 2 * k]);
    }
  });
  return tp;
}

inline std::array<Mat, 5> table_rows(const TablePass& tp, double lambda, int p) {
  const Mat corr = (1.0 + 1.0 / lambda) * sigma_zero(p);
  std::array<Mat, 5> rows;
  auto age = spd_factor(tp.A_age, "logistic Hessian");
  rows[0] = symmetrized(age.solve(Mat::Identity(p, p)) - corr, "logistic variance");
  for (int k = 0; k < 4; ++k) {
    auto f = spd_factor(tp.A[k], "f-GAN Hessian");
    Mat X = f.solve(tp.B[k]);
    Mat S = f.solve(X.transpose());
    rows[1 + k] = symmetrized(S - corr, "f-GAN variance");
  }
  return rows;
}

// Per-point loss slopes and curvatures, in d = log p*/p_theta, for one row.
struct RowDerivs {
  double d1, d2, dd1, dd2;  // real slope, fake slope, real curvature, fake curvature
};

inline RowDerivs row_derivs(DiscRow row, double D, double lambda) {
  if (row == DiscRow::age) {
    const double u = D - std::log(lambda), sp = sigmoid(u), sn = sigmoid(-u);
    return {-sn, lambda * sp, sp * sn, lambda * sp * sn};
  }
  auto t = loss_terms_unchecked(divergence_of(row), D);
  return {t.dl1, t.dl2, t.d2l1, t.d2l2};
}

struct SandwichPass {
  Mat H, V;
};

inline SandwichPass sandwich_pass(const Setting& s, const Vec& theta, double lambda, DiscRow row,
                                  const std::vector<quad::Rule1D>& rule) {
  const FeatureMap& fm = s.features();
  const int p = fm.dim();
  Mat H = Mat::Zero(p, p), S1 = Mat::Zero(p, p), S2 = Mat::Zero(p, p);
  Vec m1 = Vec::Zero(p), m2 = Vec::Zero(p);
  Vec lp, lq;
  Mat Phi;
  Eigen::ArrayXd wh, w1, w2, v1, v2;
  quad::for_each_block(rule, [&](const Mat& X, const Vec& wq) {
    const Eigen::Index N = X.rows();
    lp.resize(N), lq.resize(N);
    s.truth().log_density(X, lp);
    s.generator().log_density(theta, X, lq);
    Phi.resize(N, p);
    fm.eval(X, Phi);
    wh.resize(N), w1.resize(N), w2.resize(N), v1.resize(N), v2.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const double P = std::exp(lp[i]), Q = std::exp(lq[i]), q = wq[i];
      const RowDerivs r = row_derivs(row, lp[i] - lq[i], lambda);
      wh[i] = q * (P * r.dd1 + Q * r.dd2);
      v1[i] = q * (P * r.d1);
      v2[i] = q * (Q * r.d2);
      w1[i] = v1[i] * r.d1;
      w2[i] = v2[i] * r.d2;
    }
    add_gram(H, Phi, wh);
    add_gram(S1, Phi, w1);
    add_gram(S2, Phi, w2);
    m1.noalias() += Phi.transpose() * v1.matrix();
    m2.noalias() += Phi.transpose() * v2.matrix();
  });
  SandwichPass sp;
  sp.H = symmetrized(H, "sandwich Hessian");
  sp.V = symmetrized(S1 - m1 * m1.transpose() + (S2 - m2 * m2.transpose()) / lambda, "sandwich score variance");
  return sp;
}

}  // namespace detail

struct DiscTable {
  std::array<Mat, 5> rows;  // indexed like kAllRows
  double error_bound = 0;
  const Mat& operator[](DiscRow r) const { return rows[static_cast<int>(r)]; }
};

inline void check_lambda(double lambda) {
  if (!(lambda >= 1) || !std::isfinite(lambda)) throw DomainError("lambda must be a finite number >= 1");
}

// Every row of the discriminator variance table at (theta, lambda).
inline DiscTable disc_table(const Setting& s, const Vec& theta, double lambda, const QuadOptions& o = {}) {
  check_lambda(lambda);
  if (!s.features().has_intercept()) throw UnsupportedSetting("variance table needs an intercept feature");
  const int P = data_panels(s, o), p = s.features().dim();
  DiscTable t;
  t.rows = detail::table_rows(detail::table_pass(s, theta, lambda, quad::data_rule(s, theta, P)), lambda, p);
  if (o.self_check) {
    auto fine =
        detail::table_rows(detail::table_pass(s, theta, lambda, quad::data_rule(s, theta, 2 * P)), lambda, p);
    for (int k = 0; k < 5; ++k) t.error_bound = std::max(t.error_bound, detail::rel_change(t.rows[k], fine[k]));
    if (!(t.error_bound <= o.tolerance))
      throw QuadratureError("discriminator variance table did not converge", t.error_bound);
  }
  return t;
}

inline Mat disc_variance(const Setting& s, const Vec& theta, double lambda, DiscRow which, const QuadOptions& o = {}) {
  return disc_table(s, theta, lambda, o)[which];
}

struct Sandwich {
  Mat H, V, sigma;
  double error_bound = 0;
};

// General M-estimator route H^{-1} V H^{-1}, no closed-form simplification.
inline Sandwich disc_sandwich(const Setting& s, const Vec& theta, double lambda, DiscRow which,
                              const QuadOptions& o = {}) {
  check_lambda(lambda);
  const int P = data_panels(s, o);
  auto build = [&](int panels) {
    auto sp = detail::sandwich_pass(s, theta, lambda, which, quad::data_rule(s, theta, panels));
    auto llt = detail::spd_factor(sp.H, "sandwich Hessian");
    Mat X = llt.solve(sp.V);
    return Sandwich{sp.H, sp.V, detail::symmetrized(llt.solve(X.transpose()), "sandwich variance"), 0.0};
  };
  Sandwich out = build(P);
  if (o.self_check) {
    Sandwich fine = build(2 * P);
    out.error_bound = detail::rel_change(out.sigma, fine.sigma);
    if (!(out.error_bound <= o.tolerance))
      throw QuadratureError("sandwich variance did not converge", out.error_bound);
  }
  return out;
}

// E_{p_theta}[S S^T] by quadrature.
inline Mat fisher_information(const Setting& s, const Vec& theta, const QuadOptions& o = {}) {
  const Generator& g = s.generator();
  auto build = [&](int panels) {
    const int q = g.theta_dim();
    Mat I = Mat::Zero(q, q), S;
    Vec lq;
    quad::for_each_block(quad::data_rule(s, theta, panels), [&](const Mat& X, const Vec& w) {
      lq.resize(X.rows());
      S.resize(X.rows(), q);
      g.log_density(theta, X, lq);
      g.score(theta, X, S);
      detail::add_gram(I, S, w.array() * lq.array().exp());
    });
    return detail::symmetrized(I, "Fisher information");
  };
  const int P = data_panels(s, o);
  Mat I = build(P);
  if (o.self_check) {
    const double err = detail::rel_change(I, build(2 * P));
    if (!(err <= o.tolerance)) throw QuadratureError("Fisher information did not converge", err);
  }
  return I;
}

// ---------------------------------------------------------------- generator variance

enum class GenMethod { age, fgan };

struct GenVariance {
  Vec theta_star;
  Mat sigma;       // full asymptotic covariance of sqrt(n)(theta_hat - theta*)
  Mat xi_part;     // discriminator-noise piece
  Mat zeta_part;   // latent-noise piece
  Mat cross_part;  // covariance cross term (zero under two samples)
  Mat H_g, C, Ehh, Sigma_c, Sigma_disc, H_disc;
  double error_bound = 0;
};

namespace detail {

struct LatentPass {
  Mat C, Ehh, M;  // M = E[(-h')(l2' phi)^T]
  Vec Eh, El;     // E[h'], E[l2' phi]
};

inline LatentPass latent_pass(const Setting& s, Divergence div, DiscRow row, const Vec& theta, const Vec& psi,
                              double lambda, int panels) {
  const Generator& g = s.generator();
  const FeatureMap& fm = s.features();
  const int q = g.theta_dim(), p = fm.dim(), dx = g.data_dim();
  LatentPass lp{Mat::Zero(q, p), Mat::Zero(q, q), Mat::Zero(q, p), Vec::Zero(q), Vec::Zero(p)};
  Mat X, Phi, Gx, GD, Pd, Pk, Hp;
  quad::for_each_block(quad::latent_rule(g.latent_dim(), panels), [&](const Mat& Z, const Vec& w) {
    const Eigen::Index N = Z.rows();
    X.resize(N, dx);
    g.apply(theta, Z, X);
    Phi = fm.eval(X);
    Gx = fm.grad_x(X);
    GD = fm.grad_discriminator(X, psi);
    Eigen::ArrayXd D = (Phi * psi).array(), sc(N), ss(N), l2(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      sc[i] = scaling_unchecked(div, D[i]);
      ss[i] = scaling_slope_unchecked(div, D[i]);
      l2[i] = row_derivs(row, D[i], lambda).d2;
    }
    Pd.resize(N, q);
    g.pullback(theta, Z, GD, Pd);  // J^T grad_x D
    Hp = -(Pd.array().colwise() * sc).matrix();
    // dh'/dpsi_k = -(s' phi_k J^T grad D + s J^T grad phi_k)
    Pk.resize(N, q);
    Mat Gk(N, dx);
    for (int k = 0; k < p; ++k) {
      for (int j = 0; j < dx; ++j) Gk.col(j) = Gx.col(j * p + k);
      g.pullback(theta, Z, Gk, Pk);
      lp.C.col(k) -= ((Pd.array().colwise() * (ss * Phi.col(k).array())) + (Pk.array().colwise() * sc))
                         .matrix()
                         .transpose() *
                     w;
    }
    const Eigen::ArrayXd wa = w.array();
    lp.Ehh.noalias() += Hp.transpose() * (Hp.array().colwise() * wa).matrix();
    lp.Eh.noalias() += Hp.transpose() * w;
    Mat Lphi = (Phi.array().colwise() * (l2 * wa)).matrix();
    lp.M.noalias() -= Hp.transpose() * Lphi;
    lp.El.noalias() += Lphi.colwise().sum().transpose();
  });
  return lp;
}

inline GenVariance assemble_gen(const Setting& s, Divergence div, double lambda, GenMethod method, Scheme scheme,
                                const Vec& theta, const Mat& H_g, int panels, int latent_panels) {
  const DiscRow row = method == GenMethod::age ? DiscRow::age : row_of(div);
  const int p = s.features().dim();
  auto rule = quad::data_rule(s, theta, panels);
  GenVariance gv;
  gv.theta_star = theta;
  gv.H_g = H_g;
  gv.Sigma_disc = table_rows(table_pass(s, theta, lambda, rule), lambda, p)[static_cast<int>(row)];
  gv.H_disc = sandwich_pass(s, theta, lambda, row, rule).H;
  const Vec psi = s.optimal_discriminator(theta);
  LatentPass lt = latent_pass(s, div, row, theta, psi, lambda, latent_panels);
  gv.C = lt.C;
  gv.Ehh = symmetrized(lt.Ehh, "E[h' h'^T]");
  auto hd = spd_factor(gv.H_disc, "discriminator Hessian");
  const Mat K = hd.solve(gv.C.transpose());  // H_disc^{-1} C^T
  const Mat cov = lt.M - (-lt.Eh) * lt.El.transpose();
  gv.Sigma_c = scheme == Scheme::two_sample ? Mat::Zero(gv.C.rows(), gv.C.rows()) : Mat(cov * K);
  auto hg = spd_factor(H_g, "generator Hessian");
  auto sandwich = [&](const Mat& M) {
    Mat X = hg.solve(M);
    return Mat(hg.solve(X.transpose()));
  };
  gv.xi_part = symmetrized(sandwich(gv.C * gv.Sigma_disc * gv.C.transpose()), "discriminator-noise term");
  gv.zeta_part = sandwich(gv.Ehh) / lambda;
  gv.cross_part = sandwich(gv.Sigma_c + gv.Sigma_c.transpose()) / lambda;
  gv.sigma = symmetrized(gv.xi_part + gv.zeta_part + gv.cross_part, "generator variance");
  return gv;
}

}  // namespace detail

// Asymptotic covariance of the generator estimate at theta* (given, or the
// quadrature minimizer of the divergence).
inline GenVariance gen_variance(const Setting& s, Divergence div, double lambda, GenMethod method,
                                Scheme scheme = Scheme::one_sample, const QuadOptions& o = {},
                                const std::optional<Vec>& theta = std::nullopt) {
  check_lambda(lambda);
  const Vec th = theta ? *theta : theta_star(s, div);
  const int P = data_panels(s, o);
  const Mat H_g = detail::symmetrized(objective_hessian(s, div, th, 1e-4, P), "generator Hessian");
  GenVariance gv = detail::assemble_gen(s, div, lambda, method, scheme, th, H_g, P, o.latent_panels);
  if (o.self_check) {
    const Mat H_fine = detail::symmetrized(objective_hessian(s, div, th, 1e-4, 2 * P), "generator Hessian");
    GenVariance fine = detail::assemble_gen(s, div, lambda, method, scheme, th, H_fine, 2 * P, 2 * o.latent_panels);
    gv.error_bound = std::max({detail::rel_change(gv.sigma, fine.sigma), detail::rel_change(gv.Sigma_c, fine.Sigma_c),
                               detail::rel_change(gv.H_g, fine.H_g)});
    if (!(gv.error_bound <= o.tolerance))
      throw QuadratureError("generator variance did not converge", gv.error_bound);
  }
  return gv;
}

// ||Sigma_f - Sigma_d||_F for each f row, one entry per lambda.
struct LambdaScalingRow {
  double lambda;
  std::array<double, 4> norm;  // indexed by Divergence
};

inline std::vector<LambdaScalingRow> lambda_scaling(const Setting& s, const Vec& theta,
                                                    const std::vector<double>& lambdas, const QuadOptions& o = {}) {
  std::vector<LambdaScalingRow> out;
  for (double lam : lambdas) {
    DiscTable t = disc_table(s, theta, lam, o);
    LambdaScalingRow r{lam, {}};
    for (int k = 0; k < 4; ++k) r.norm[k] = (t.rows[1 + k] - t.rows[0]).norm();
    out.push_back(r);
  }
  return out;
}

}  // namespace agelab
