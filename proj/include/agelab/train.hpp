#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "agelab/disc_fit.hpp"
#include "agelab/divergence.hpp"
#include "agelab/error.hpp"
#include "agelab/grad_estimator.hpp"
#include "agelab/model.hpp"
#include "agelab/random.hpp"

namespace agelab {

inline constexpr std::uint64_t kDefaultSeed = 2024;

enum class Scheme { one_sample, two_sample };

inline std::string_view name(Scheme s) { return s == Scheme::one_sample ? "one-sample" : "two-sample"; }

struct TrainConfig {
  int T = 100;
  double eta = 0.5;
  Vec theta0;
  Scheme scheme = Scheme::one_sample;
  double lambda = 1.0;
  Eigen::Index n = 1000;
  std::uint64_t seed = kDefaultSeed;
  bool warm_start = false;  // reuse the previous psi as the Newton start
  NewtonOptions newton;
};

struct RunResult {
  Vec theta_hat;
  std::vector<Vec> theta_path;       // theta_0 .. theta_T
  std::vector<double> h_norm_path;   // norm of the gradient estimate at each theta_t
  int selected_t = -1;
  std::vector<bool> disc_converged;  // per iteration
  std::vector<bool> disc_fallback;   // Newton system fell back to gradient steps
  bool failed = false;
  int failed_at = -1;
  std::string failure;
};

inline Eigen::Index latent_size(const TrainConfig& cfg) {
  return static_cast<Eigen::Index>(std::llround(cfg.lambda * static_cast<double>(cfg.n)));
}

inline void validate(const TrainConfig& cfg, const Setting& s) {
  if (cfg.T < 1) throw ValidationError("--T", "T must be at least 1");
  // eta = 0 is accepted: it is the degenerate "no movement" configuration.
  if (!(cfg.eta >= 0) || !std::isfinite(cfg.eta)) throw ValidationError("--eta", "eta must be finite and >= 0");
  if (!(cfg.lambda >= 1) || !std::isfinite(cfg.lambda)) throw ValidationError("--lambda", "lambda must be >= 1");
  if (cfg.n < 2) throw ValidationError("--n", "n must be at least 2");
  if (cfg.theta0.size() != s.generator().theta_dim())
    throw ValidationError("--theta0", "theta0 has the wrong dimension");
  if (!s.theta_box().contains(cfg.theta0)) throw ValidationError("--theta0", "theta0 lies outside the parameter box");
}

namespace detail {

struct RunData {
  Mat real, Z, Z_step;
};

// Real sample first, then the latent sample, then (two-sample) the step sample.
inline RunData draw_run_data(const Setting& s, const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  RunData d;
  d.real = s.true_sample(cfg.n, rng);
  const Eigen::Index m = latent_size(cfg);
  d.Z = s.generator().sample_latent(m, rng);
  if (cfg.scheme == Scheme::two_sample) d.Z_step = s.generator().sample_latent(m, rng);
  return d;
}

// Shared approximate-gradient-descent loop. fit(fake, psi_prev) returns the
// discriminator fit; grad(theta, psi, Z) the generator gradient estimate.
template <class Fit, class Grad>
RunResult descend(const Setting& s, const TrainConfig& cfg, const Vec& start, Fit&& fit, Grad&& grad) {
  const RunData data = draw_run_data(s, cfg);
  const Mat& Zstep = cfg.scheme == Scheme::two_sample ? data.Z_step : data.Z;
  const Generator& gen = s.generator();

  RunResult r;
  Vec theta = start;
  std::optional<Vec> psi_prev;
  Mat fake(data.Z.rows(), gen.data_dim());
  for (int t = 0; t <= cfg.T; ++t) {
    r.theta_path.push_back(theta);
    gen.apply(theta, data.Z, fake);
    Vec h;
    try {
      DiscriminatorFit f = fit(data.real, fake, cfg.warm_start ? psi_prev : std::nullopt);
      r.disc_converged.push_back(f.converged);
      r.disc_fallback.push_back(f.gradient_fallback);
      psi_prev = f.psi_hat;
      h = grad(theta, f.psi_hat, Zstep).h;
    } catch (const SeparationError& e) {
      r.failure = e.what();
    } catch (const DivergenceError& e) {
      r.failure = e.what();
    } catch (const OverflowError& e) {
      r.failure = e.what();
    }
    if (!r.failure.empty()) {
      r.failed = true;
      r.failed_at = t;
      r.theta_path.pop_back();
      return r;
    }
    r.h_norm_path.push_back(h.norm());
    if (t < cfg.T) theta = s.theta_box().clip(theta - cfg.eta * h);
  }
  // argmin over t = 1..T, earliest on ties
  r.selected_t = 1;
  for (int t = 2; t <= cfg.T; ++t)
    if (r.h_norm_path[t] < r.h_norm_path[r.selected_t]) r.selected_t = t;
  r.theta_hat = r.theta_path[r.selected_t];
  return r;
}

}  // namespace detail

inline RunResult run_age(const Setting& s, Divergence div, const TrainConfig& cfg) {
  validate(cfg, s);
  const FeatureMap& fm = s.features();
  return detail::descend(
      s, cfg, cfg.theta0,
      [&](const Mat& real, const Mat& fake, const std::optional<Vec>& psi0) {
        return fit_logistic(fm, real, fake, cfg.lambda, cfg.newton, psi0);
      },
      [&](const Vec& theta, const Vec& psi, const Mat& Z) {
        return h_estimate(div, s.generator(), fm, psi, theta, Z);
      });
}

inline RunResult run_fgan(const Setting& s, Divergence div, const TrainConfig& cfg) {
  validate(cfg, s);
  const FeatureMap& fm = s.features();
  return detail::descend(
      s, cfg, cfg.theta0,
      [&](const Mat& real, const Mat& fake, const std::optional<Vec>& psi0) {
        return fit_fgan(div, fm, real, fake, cfg.newton, psi0);
      },
      [&](const Vec& theta, const Vec& psi, const Mat& Z) {
        return h_estimate(div, s.generator(), fm, psi, theta, Z);
      });
}

// Second-stage run: logistic fit on the generator's score at theta_init (no
// intercept) and the reverse-KL step, starting from theta_init.
inline RunResult run_local_gan(const Setting& s, const TrainConfig& cfg, const Vec& theta_init) {
  TrainConfig c = cfg;
  c.theta0 = theta_init;
  validate(c, s);
  const ScoreFeatures fm(s.generator_ptr(), theta_init);
  return detail::descend(
      s, c, theta_init,
      [&](const Mat& real, const Mat& fake, const std::optional<Vec>& psi0) {
        return fit_logistic(fm, real, fake, c.lambda, c.newton, psi0);
      },
      [&](const Vec& theta, const Vec& psi, const Mat& Z) {
        return h_estimate(Divergence::revkl, s.generator(), fm, psi, theta, Z);
      });
}

inline Vec mle_estimate(const Setting& s, const ConstMatRef& X) { return s.theta_box().clip(s.generator().mle(X)); }

// Same real-sample stream as the adversarial runs, so seeds line up.
inline Vec run_mle(const Setting& s, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("--n", "n must be at least 1");
  Rng rng(seed);
  return mle_estimate(s, s.true_sample(n, rng));
}

}  // namespace agelab
