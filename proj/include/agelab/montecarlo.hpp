#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "agelab/disc_fit.hpp"
#include "agelab/divergence.hpp"
#include "agelab/error.hpp"
#include "agelab/model.hpp"
#include "agelab/objective.hpp"
#include "agelab/random.hpp"
#include "agelab/train.hpp"

namespace agelab {

enum class Method { age, fgan, local, mle };

inline std::string_view name(Method m) {
  switch (m) {
    case Method::age: return "age";
    case Method::fgan: return "fgan";
    case Method::local: return "local";
    case Method::mle: return "mle";
  }
  return "?";
}

inline Method parse_method(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto m : {Method::age, Method::fgan, Method::local, Method::mle})
    if (s == name(m)) return m;
  throw ValidationError("--method", "unknown method '" + std::string(text) + "' (age|fgan|local|mle)");
}

inline Scheme parse_scheme(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "one-sample" || s == "one") return Scheme::one_sample;
  if (s == "two-sample" || s == "two") return Scheme::two_sample;
  throw ValidationError("--scheme", "unknown scheme '" + std::string(text) + "' (one-sample|two-sample)");
}

// Where the local-GAN stage gets its initial estimate.
enum class LocalPilot { age, theta0 };

struct ExperimentSpec {
  SettingPtr setting;
  Divergence divergence = Divergence::kl;
  Method method = Method::age;
  Scheme scheme = Scheme::one_sample;
  Eigen::Index n = 1000;
  double lambda = 1.0;
  int reps = 500;
  std::uint64_t base_seed = kDefaultSeed;
  std::optional<int> T;
  std::optional<double> eta;
  std::optional<Vec> theta0;
  LocalPilot local_pilot = LocalPilot::age;
  bool warm_start = false;
  unsigned threads = 0;  // 0: AGELAB_THREADS, else hardware concurrency
};

struct Summary {
  Vec var;  // per coordinate, divisor R - 1
  double var_sum = 0;
  double bias2 = 0;
  Vec mean_estimate;
  Vec reference;  // theta* or psi*
  double mc_stderr_var = 0;
  int successes = 0;
  int failures = 0;
  bool unreliable = false;  // more than half of the repetitions failed
  double wall_time = 0;     // seconds
  std::vector<std::string> failure_messages;  // first few, rep order
};

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("AGELAB_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline void validate(const ExperimentSpec& e) {
  if (!e.setting) throw ValidationError("--setting", "no setting given");
  if (e.reps < 2) throw ValidationError("--reps", "reps must be at least 2");
  if (e.n < 2) throw ValidationError("--n", "n must be at least 2");
  if (!(e.lambda >= 1) || !std::isfinite(e.lambda)) throw ValidationError("--lambda", "lambda must be >= 1");
  if (e.T && *e.T < 1) throw ValidationError("--T", "T must be at least 1");
  if (e.eta && (!(*e.eta >= 0) || !std::isfinite(*e.eta))) throw ValidationError("--eta", "eta must be >= 0");
}

inline TrainConfig train_config(const ExperimentSpec& e, std::uint64_t seed) {
  const Setting& s = *e.setting;
  TrainConfig c;
  c.T = e.T.value_or(100);
  c.eta = e.eta.value_or(s.default_eta());
  c.theta0 = e.theta0.value_or(s.default_theta0());
  c.scheme = e.scheme;
  c.lambda = e.lambda;
  c.n = e.n;
  c.seed = seed;
  c.warm_start = e.warm_start;
  return c;
}

namespace detail {

struct RepOutcome {
  std::optional<Vec> estimate;
  std::string failure;
};

// Parallel map over repetitions; results land in rep order, so aggregation
// does not depend on scheduling.
template <class F>
std::vector<RepOutcome> map_reps(int reps, unsigned threads, F&& one) {
  std::vector<RepOutcome> out(reps);
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    for (int r; (r = next.fetch_add(1)) < reps;) {
      try {
        out[r] = one(r);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        next.store(reps);
      }
    }
  };
  const unsigned k = std::min<unsigned>(threads, static_cast<unsigned>(reps));
  if (k <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < k; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
  return out;
}

inline Summary summarize(const std::vector<RepOutcome>& outcomes, const Vec& reference) {
  Summary s;
  s.reference = reference;
  std::vector<const Vec*> ok;
  for (const auto& o : outcomes) {
    if (o.estimate) {
      ok.push_back(&*o.estimate);
    } else {
      ++s.failures;
      if (s.failure_messages.size() < 5) s.failure_messages.push_back(o.failure);
    }
  }
  s.successes = static_cast<int>(ok.size());
  if (s.successes < 2) {
    std::string msg = "fewer than two successful repetitions (" + std::to_string(s.failures) + " failed)";
    if (!s.failure_messages.empty()) msg += "; first failure: " + s.failure_messages.front();
    throw Error(msg);
  }
  const double k = s.successes;
  Vec mean = Vec::Zero(reference.size());
  for (auto* v : ok) mean += *v;
  mean /= k;
  Vec ss = Vec::Zero(reference.size());
  for (auto* v : ok) ss.array() += (*v - mean).array().square();
  s.var = ss / (k - 1);
  s.var_sum = s.var.sum();
  s.mean_estimate = mean;
  s.bias2 = (mean - reference).squaredNorm();
  s.mc_stderr_var = s.var_sum * std::sqrt(2.0 / (k - 1));
  s.unreliable = 2 * s.failures > static_cast<int>(outcomes.size());
  return s;
}

}  // namespace detail

// Reference point of a generator experiment: the minimizer of the divergence
// being targeted (KL for maximum likelihood).
inline Vec experiment_reference(const ExperimentSpec& e) {
  const Divergence d = e.method == Method::mle ? Divergence::kl : e.divergence;
  return theta_star(*e.setting, d);
}

// One generator run; nullopt-with-message on a counted failure.
inline detail::RepOutcome run_once(const ExperimentSpec& e, int rep) {
  const Setting& s = *e.setting;
  const std::uint64_t seed = rep_seed(e.base_seed, static_cast<std::uint64_t>(rep));
  const TrainConfig cfg = train_config(e, seed);
  auto from = [&](const RunResult& r) {
    detail::RepOutcome o;
    if (r.failed)
      o.failure = "rep " + std::to_string(rep) + " failed at t=" + std::to_string(r.failed_at) + ": " + r.failure;
    else
      o.estimate = r.theta_hat;
    return o;
  };
  switch (e.method) {
    case Method::age: return from(run_age(s, e.divergence, cfg));
    case Method::fgan: return from(run_fgan(s, e.divergence, cfg));
    case Method::mle: return {run_mle(s, e.n, seed), {}};
    case Method::local: {
      Vec pilot = cfg.theta0;
      if (e.local_pilot == LocalPilot::age) {
        RunResult first = run_age(s, e.divergence, cfg);
        if (first.failed) return from(first);
        pilot = first.theta_hat;
      }
      return from(run_local_gan(s, cfg, pilot));
    }
  }
  return {};
}

inline Summary run_experiment(const ExperimentSpec& e) {
  validate(e);
  const auto t0 = std::chrono::steady_clock::now();
  const Vec ref = experiment_reference(e);
  auto outcomes = detail::map_reps(e.reps, resolve_threads(e.threads), [&](int r) { return run_once(e, r); });
  Summary s = detail::summarize(outcomes, ref);
  s.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

// Discriminator-only experiment: one fit per repetition on fresh samples
// (n real, m = lambda n fake at the setting's reference parameter).
inline Summary run_disc_experiment(const ExperimentSpec& e) {
  validate(e);
  if (e.method != Method::age && e.method != Method::fgan)
    throw ValidationError("--method", "discriminator experiments take age or fgan");
  const auto t0 = std::chrono::steady_clock::now();
  const Setting& s = *e.setting;
  const Vec theta = e.theta0.value_or(s.default_theta0());
  const Vec ref = s.optimal_discriminator(theta);
  const auto m = static_cast<Eigen::Index>(std::llround(e.lambda * static_cast<double>(e.n)));
  auto outcomes = detail::map_reps(e.reps, resolve_threads(e.threads), [&](int rep) {
    Rng rng(rep_seed(e.base_seed, static_cast<std::uint64_t>(rep)));
    Mat real = s.true_sample(e.n, rng);
    Mat fake = s.generator().apply(theta, s.generator().sample_latent(m, rng));
    detail::RepOutcome o;
    try {
      DiscriminatorFit f = e.method == Method::age ? fit_logistic(s.features(), real, fake, e.lambda)
                                                   : fit_fgan(e.divergence, s.features(), real, fake);
      o.estimate = f.psi_hat;
    } catch (const SeparationError& x) {
      o.failure = "rep " + std::to_string(rep) + ": " + x.what();
    } catch (const DivergenceError& x) {
      o.failure = "rep " + std::to_string(rep) + ": " + x.what();
    } catch (const OverflowError& x) {
      o.failure = "rep " + std::to_string(rep) + ": " + x.what();
    }
    return o;
  });
  Summary sum = detail::summarize(outcomes, ref);
  sum.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sum;
}

// ---------------------------------------------------------------- output

inline const char* kCsvHeader =
    "setting,divergence,method,scheme,n,lambda,reps,seed,var,bias2,mean,theta_star,failures,mc_stderr_var";

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string join6(const Vec& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fmt6(v[i]);
  return s;
}

inline std::string csv_row(const ExperimentSpec& e, const Summary& s) {
  std::string r;
  r += e.setting->name() + ",";
  r += std::string(name(e.divergence)) + ",";
  r += std::string(name(e.method)) + ",";
  r += std::string(name(e.scheme)) + ",";
  r += std::to_string(e.n) + ",";
  r += fmt6(e.lambda) + ",";
  r += std::to_string(e.reps) + ",";
  r += std::to_string(e.base_seed) + ",";
  r += fmt6(s.var_sum) + ",";
  r += fmt6(s.bias2) + ",";
  r += join6(s.mean_estimate) + ",";
  r += join6(s.reference) + ",";
  r += std::to_string(s.failures) + ",";
  r += fmt6(s.mc_stderr_var);
  return r;
}

}  // namespace agelab
