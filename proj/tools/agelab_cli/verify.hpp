#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "agelab/asymptotics.hpp"
#include "agelab/disc_fit.hpp"
#include "agelab/divergence.hpp"
#include "agelab/grad_estimator.hpp"
#include "agelab/model.hpp"
#include "agelab/montecarlo.hpp"
#include "agelab/objective.hpp"
#include "agelab/train.hpp"

namespace agelab::verify {

// Deliberate defects the suite must catch.
enum class Fault { none, scaling_sign };

struct Outcome {
  bool ok = true;
  std::string detail;
};

struct Check {
  std::string name;
  std::string what;
  std::function<Outcome(Fault)> run;
};

namespace detail {

inline double scaling(Fault f, Divergence div, double d) {
  const double s = scaling_factor(div, d);
  return f == Fault::scaling_sign ? -s : s;
}

// StandardScaling with the injected defect applied.
struct FaultyScaling {
  Fault fault;
  void operator()(Divergence div, const Eigen::ArrayXd& D, Eigen::ArrayXd& out) const {
    StandardScaling{}(div, D, out);
    if (fault == Fault::scaling_sign) out = -out;
  }
};

inline std::string num(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

inline Outcome fail(std::string msg) { return {false, std::move(msg)}; }

inline std::vector<SettingPtr> one_d_settings() {
  return {std::make_shared<GaussianMean>(Vec::Constant(1, 1.0)), std::make_shared<LaplaceGaussian>(),
          std::make_shared<Gaussian2>()};
}

inline QuadOptions quiet() {
  QuadOptions o;
  o.self_check = false;
  return o;
}

}  // namespace detail

inline std::vector<Check> checks() {
  using detail::fail;
  using detail::num;
  std::vector<Check> c;

  c.push_back({"scaling-table", "scaling factor at d = 0 equals (1, 1, 1/2, 1/2)", [](Fault f) {
                 const double want[4] = {1.0, 1.0, 0.5, 0.5};
                 for (int k = 0; k < 4; ++k)
                   if (detail::scaling(f, kAllDivergences[k], 0.0) != want[k])
                     return fail(std::string(name(kAllDivergences[k])) + " gives " +
                                 num(detail::scaling(f, kAllDivergences[k], 0.0)));
                 return Outcome{};
               }});

  c.push_back({"f-normalization", "f(1) = 0 for every divergence", [](Fault) {
                 for (auto d : kAllDivergences)
                   if (f_value(d, 1.0) != 0.0) return fail(std::string(name(d)));
                 return Outcome{};
               }});

  c.push_back({"gradient-identity",
               "derivative of the fake-side f-GAN loss equals the scaling factor (100 random points)", [](Fault f) {
                 std::mt19937_64 rng(11);
                 std::uniform_real_distribution<double> u(-5, 5);
                 std::uniform_int_distribution<int> k(0, 3);
                 for (int i = 0; i < 100; ++i) {
                   const Divergence div = kAllDivergences[k(rng)];
                   const double d = u(rng), h = 1e-5;
                   const double fd = (fgan_losses(div, d + h).l2 - fgan_losses(div, d - h).l2) / (2 * h);
                   const double s = detail::scaling(f, div, d);
                   if (!(std::abs(fd - s) <= 1e-6 * std::max(1.0, std::abs(s))))
                     return fail(std::string(name(div)) + " at d=" + num(d) + ": slope " + num(fd) + " vs " + num(s));
                 }
                 return Outcome{};
               }});

  c.push_back({"gradient-mc", "Monte-Carlo generator gradient at the optimal discriminator matches the objective slope",
               [](Fault f) {
                 Gaussian2 s;
                 for (auto div : kAllDivergences) {
                   const Vec th = Vec::Constant(1, 1.2);
                   Rng rng(5);
                   Mat Z = s.generator().sample_latent(200000, rng);
                   auto est = h_estimate(div, s.generator(), s.features(), s.optimal_discriminator(th), th, Z, 4096,
                                         detail::FaultyScaling{f});
                   const double se = est.per_draw_sd[0] / std::sqrt(200000.0);
                   const double g = objective_gradient(s, div, th)[0];
                   if (!(std::abs(est.h[0] - g) <= 4 * se))
                     return fail(std::string(name(div)) + ": estimate " + num(est.h[0]) + " vs slope " + num(g));
                 }
                 return Outcome{};
               }});

  c.push_back({"sigma0", "intercept lemma: E^-1[Y xx] E[Y x] E[Y x]^T E^-1[Y xx] is the unit (1,1) matrix", [](Fault) {
                 std::mt19937_64 rng(3);
                 std::normal_distribution<double> nd;
                 for (int trial = 0; trial < 3; ++trial) {
                   Vec coef(3);
                   for (auto& v : coef) v = 0.3 * nd(rng);
                   Mat A = Mat::Zero(4, 4);
                   Vec b = Vec::Zero(4);
                   const int N = 100000;
                   for (int i = 0; i < N; ++i) {
                     Vec x(4);
                     x[0] = 1;
                     for (int j = 1; j < 4; ++j) x[j] = nd(rng);
                     const double y = std::exp(coef.dot(x.tail(3)));
                     A += y * x * x.transpose();
                     b += y * x;
                   }
                   A /= N;
                   b /= N;
                   Vec a = A.ldlt().solve(b);
                   const double err = (a * a.transpose() - sigma_zero(4)).cwiseAbs().maxCoeff();
                   if (!(err <= 1e-2)) return fail("trial " + std::to_string(trial) + " error " + num(err));
                 }
                 return Outcome{};
               }});

  c.push_back({"psi-star", "exp(D_psi*) p_theta integrates to one (20 parameters per setting)", [](Fault) {
                 auto all = detail::one_d_settings();
                 all.push_back(std::make_shared<TwoGaussianClassify>());
                 for (const auto& s : all) {
                   const Box& box = s->theta_box();
                   for (int i = 0; i < 20; ++i) {
                     double lo = std::max(box.lo[0], -3.0), hi = std::min(box.hi[0], 3.0);
                     if (s->kind() == SettingKind::two_gaussian) lo = -0.5, hi = 0.5;
                     const Vec th = Vec::Constant(s->generator().theta_dim(), lo + (hi - lo) * (i + 0.5) / 20);
                     const Vec psi = s->optimal_discriminator(th);
                     double total = 0;
                     Vec lq;
                     quad::for_each_block(quad::data_rule(*s, th, s->truth().dim() == 1 ? 128 : 28),
                                          [&](const Mat& X, const Vec& w) {
                                            lq.resize(X.rows());
                                            s->generator().log_density(th, X, lq);
                                            total += w.dot(((s->features().eval(X) * psi).array() + lq.array())
                                                               .exp()
                                                               .matrix());
                                          });
                     if (!(std::abs(total - 1) <= 1e-8)) return fail(s->name() + " theta=" + num(th[0]));
                   }
                 }
                 return Outcome{};
               }});

  c.push_back({"derivatives", "Jacobians, scores and feature gradients match central differences", [](Fault) {
                 auto all = detail::one_d_settings();
                 all.push_back(std::make_shared<TwoGaussianClassify>());
                 std::mt19937_64 rng(7);
                 std::normal_distribution<double> nd;
                 const double h = 1e-6;
                 auto close = [](double a, double b) { return std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(b)); };
                 for (const auto& s : all) {
                   const Generator& g = s->generator();
                   const FeatureMap& fm = s->features();
                   for (int rep = 0; rep < 10; ++rep) {
                     Vec th = s->default_theta0().array() + 0.5 + 0.2 * std::abs(nd(rng));
                     Vec z(g.latent_dim());
                     for (auto& v : z) v = nd(rng);
                     Mat J = g.jacobian(th, z);
                     Mat X = g.apply(th, z.transpose());
                     for (int k = 0; k < g.theta_dim(); ++k) {
                       Vec tp = th, tm = th;
                       tp[k] += h, tm[k] -= h;
                       Mat fd = (g.apply(tp, z.transpose()) - g.apply(tm, z.transpose())) / (2 * h);
                       for (int j = 0; j < g.data_dim(); ++j)
                         if (!close(J(j, k), fd(0, j))) return fail(s->name() + " jacobian");
                       Vec lp(1), lm(1);
                       g.log_density(tp, X, lp);
                       g.log_density(tm, X, lm);
                       Mat S(1, g.theta_dim());
                       g.score(th, X, S);
                       if (!close(S(0, k), (lp[0] - lm[0]) / (2 * h))) return fail(s->name() + " score");
                     }
                     Mat G = fm.grad_x(X);
                     for (int j = 0; j < fm.input_dim(); ++j) {
                       Mat Xp = X, Xm = X;
                       Xp(0, j) += h, Xm(0, j) -= h;
                       Mat fd = (fm.eval(Xp) - fm.eval(Xm)) / (2 * h);
                       for (int k = 0; k < fm.dim(); ++k)
                         if (!close(G(0, j * fm.dim() + k), fd(0, k))) return fail(s->name() + " feature gradient");
                       if (fm.has_intercept() && G(0, j * fm.dim()) != 0.0) return fail(s->name() + " intercept grad");
                     }
                   }
                 }
                 return Outcome{};
               }});

  c.push_back({"theta-star-order", "JS minimizer lies between the reverse-KL and KL minimizers (gaussian2)", [](Fault) {
                 Gaussian2 s;
                 const double r = theta_star(s, Divergence::revkl)[0], k = theta_star(s, Divergence::kl)[0],
                              j = theta_star(s, Divergence::js)[0];
                 if (!(r < j && j < k)) return fail("revkl " + num(r) + ", js " + num(j) + ", kl " + num(k));
                 if (!(std::abs(r - 1) <= 1e-6 && std::abs(k - std::sqrt(2.0)) <= 1e-6))
                   return fail("closed forms missed");
                 return Outcome{};
               }});

  c.push_back({"sandwich", "logistic variance: closed form equals H^-1 V H^-1 to 1e-8", [](Fault) {
                 Gaussian2 g2;
                 TwoGaussianClassify tg;
                 std::vector<std::pair<const Setting*, Vec>> pts{{&g2, Vec::Constant(1, 0.7)},
                                                                 {&g2, Vec::Constant(1, 1.6)},
                                                                 {&tg, tg.mu2_theta()}};
                 for (auto& [s, th] : pts)
                   for (double lam : {1.0, 10.0}) {
                     Mat a = disc_variance(*s, th, lam, DiscRow::age);
                     Mat b = disc_sandwich(*s, th, lam, DiscRow::age).sigma;
                     if (!(agelab::detail::rel_change(b, a) <= 1e-8)) return fail(s->name() + " lambda=" + num(lam));
                   }
                 return Outcome{};
               }});

  c.push_back({"corollary2", "well-specified point: table rows agree and generator variance is (1+1/lambda) I", [](Fault) {
                 GaussianMean gm(Vec::Constant(1, 1.0));
                 for (double lam : {1.0, 10.0}) {
                   DiscTable t = disc_table(gm, gm.mu0(), lam);
                   for (auto r : kAllRows)
                     if (!(agelab::detail::rel_change(t[r], t[DiscRow::age]) <= 1e-8))
                       return fail(std::string(name(r)) + " row differs");
                   for (auto d : kAllDivergences) {
                     const double v = gen_variance(gm, d, lam, GenMethod::age).sigma(0, 0);
                     if (!(std::abs(v - (1 + 1 / lam)) <= 1e-6)) return fail(std::string(name(d)) + " gives " + num(v));
                   }
                 }
                 return Outcome{};
               }});

  c.push_back({"quadrature-self-check", "doubling the node budget moves table entries by < 1e-8", [](Fault) {
                 Gaussian2 g2;
                 LaplaceGaussian lg;
                 for (const Setting* s : {static_cast<const Setting*>(&g2), static_cast<const Setting*>(&lg)}) {
                   const double e = disc_table(*s, Vec::Constant(1, 1.3), 10.0).error_bound;
                   if (!(e < 1e-8)) return fail(s->name() + " change " + num(e));
                 }
                 return Outcome{};
               }});

  c.push_back({"theorem9", "Sigma_f - Sigma_d is positive definite away from the model", [](Fault) {
                 Gaussian2 g2;
                 TwoGaussianClassify tg;
                 std::vector<std::pair<const Setting*, Vec>> pts{{&g2, Vec::Constant(1, 0.8)},
                                                                 {&g2, Vec::Constant(1, 1.5)},
                                                                 {&tg, Vec::Constant(1, 0.3)}};
                 for (auto& [s, th] : pts) {
                   DiscTable t = disc_table(*s, th, 10.0);
                   for (int k = 1; k < 5; ++k) {
                     Eigen::SelfAdjointEigenSolver<Mat> es(t.rows[k] - t.rows[0], Eigen::EigenvaluesOnly);
                     if (!(es.eigenvalues().minCoeff() > 1e-10))
                       return fail(s->name() + " " + std::string(name(kAllRows[k])) + " min eig " +
                                   num(es.eigenvalues().minCoeff()));
                   }
                 }
                 return Outcome{};
               }});

  c.push_back({"hg-analytic", "generator Hessian by differences matches closed forms (gaussian mean)", [](Fault) {
                 GaussianMean gm(Vec::Constant(1, 1.0));
                 // KL and reverse KL are (t - mu)^2 / 2; squared Hellinger 2 - 2 exp(-(t - mu)^2 / 8)
                 const std::pair<Divergence, double> want[] = {
                     {Divergence::kl, 1.0}, {Divergence::revkl, 1.0}, {Divergence::h2, 0.5}};
                 for (auto [d, v] : want) {
                   const double h = objective_hessian(gm, d, gm.mu0())(0, 0);
                   if (!(std::abs(h - v) <= 1e-5)) return fail(std::string(name(d)) + " gives " + num(h));
                 }
                 return Outcome{};
               }});

  // The AGE and KL rows share their first-order term in 1/lambda, so the KL
  // gap shrinks at least that fast (on gaussian2 it is second order).
  c.push_back({"lambda-scaling", "KL gap shrinks at least like 1/lambda, the other gaps level off", [](Fault) {
                 Gaussian2 g2;
                 auto rows = lambda_scaling(g2, Vec::Constant(1, 1.3), {1e2, 1e3, 1e4});
                 for (int i = 1; i < 3; ++i) {
                   const double kl = rows[i].norm[0] / rows[i - 1].norm[0];
                   if (!(kl > 0 && kl <= 0.2)) return fail("kl ratio " + num(kl));
                 }
                 for (int k = 1; k < 4; ++k) {
                   const double r = rows[2].norm[k] / rows[1].norm[k];
                   if (!(r >= 0.8 && r <= 1.2)) return fail(std::string(name(kAllDivergences[k])) + " ratio " + num(r));
                 }
                 return Outcome{};
               }});

  c.push_back({"covterm", "KL covariance terms meet as lambda grows; the two-sample scheme zeroes them (gaussian2)",
               [](Fault) {
                 Gaussian2 g2;
                 const Vec th = theta_star(g2, Divergence::kl);
                 auto sc = [&](double lam, GenMethod m, Scheme sch) {
                   return gen_variance(g2, Divergence::kl, lam, m, sch, detail::quiet(), th).Sigma_c(0, 0);
                 };
                 const double f = sc(1, GenMethod::fgan, Scheme::one_sample);
                 double prev = std::abs(sc(1, GenMethod::age, Scheme::one_sample) - f);
                 for (double lam : {10.0, 100.0, 1000.0}) {
                   const double gap = std::abs(sc(lam, GenMethod::age, Scheme::one_sample) - f);
                   if (!(gap < prev)) return fail("gap grew at lambda=" + num(lam));
                   prev = gap;
                 }
                 if (prev > 1e-3 * std::abs(f)) return fail("gap at lambda=1000 is " + num(prev));
                 if (sc(10, GenMethod::age, Scheme::two_sample) != 0.0) return fail("two-sample term not zero");
                 return Outcome{};
               }});

  c.push_back({"age-fgan-js", "at lambda = 1 the JS f-GAN run is the corrected run, bit for bit", [](Fault) {
                 Gaussian2 g2;
                 TrainConfig cfg;
                 cfg.n = 200;
                 cfg.T = 10;
                 cfg.theta0 = g2.default_theta0();
                 cfg.seed = 99;
                 RunResult a = run_age(g2, Divergence::js, cfg), b = run_fgan(g2, Divergence::js, cfg);
                 if (a.theta_path.size() != b.theta_path.size()) return fail("different lengths");
                 for (std::size_t t = 0; t < a.theta_path.size(); ++t)
                   if (a.theta_path[t] != b.theta_path[t] || a.h_norm_path[t] != b.h_norm_path[t])
                     return fail("diverge at t=" + std::to_string(t));
                 return Outcome{};
               }});

  c.push_back({"newton-monotone", "Newton loss path never increases", [](Fault) {
                 TwoGaussianClassify tg;
                 Rng rng(4);
                 Mat real = tg.true_sample(2000, rng);
                 Mat fake = tg.generator().apply(tg.mu2_theta(), tg.generator().sample_latent(20000, rng));
                 for (auto div : kAllDivergences) {
                   DiscriminatorFit f = fit_fgan(div, tg.features(), real, fake);
                   for (std::size_t i = 1; i < f.loss_path.size(); ++i)
                     if (f.loss_path[i] > f.loss_path[i - 1]) return fail(std::string(name(div)));
                   if (!f.converged) return fail(std::string(name(div)) + " did not converge");
                 }
                 return Outcome{};
               }});

  c.push_back({"determinism", "repeated experiment gives identical CSV at 1 and 4 threads", [](Fault) {
                 ExperimentSpec e;
                 e.setting = make_setting("gaussian2");
                 e.divergence = Divergence::revkl;
                 e.n = 100;
                 e.lambda = 2;
                 e.reps = 8;
                 e.T = 20;
                 e.threads = 1;
                 const std::string a = csv_row(e, run_experiment(e));
                 e.threads = 4;
                 const std::string b = csv_row(e, run_experiment(e));
                 if (a != b) return fail("rows differ");
                 return Outcome{};
               }});

  return c;
}

}  // namespace agelab::verify
