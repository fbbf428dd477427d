#pragma once

/**
 * @file
 * @brief Brute-force leave-one-out retraining, VIF-vs-LOO comparison
 * reports, and synthetic data generators.
 */

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "vif/attributor.hpp"
#include "vif/coxloss.hpp"
#include "vif/decomposable.hpp"
#include "vif/embedloss.hpp"
#include "vif/errors.hpp"
#include "vif/losscore.hpp"
#include "vif/ltrloss.hpp"
#include "vif/numkit.hpp"
#include "vif/rng.hpp"

namespace vif {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Runs body(k) for k in [0, count) on up to `jobs` threads (0 = all cores).
template <class Body>
void parallel_for(std::size_t count, std::size_t jobs, Body&& body) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, count);
  if (jobs <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next.fetch_add(1); k < count; k = next.fetch_add(1)) body(k);
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Leave-one-out
// ---------------------------------------------------------------------------

struct LooResult {
  std::size_t object_id = 0;
  ParamVector params;              // theta(1_{-i})
  std::vector<double> target_deltas;  // f(theta(1_{-i})) - f(theta(1)), one per target
  double seconds = 0.0;
  std::optional<Error> error;

  bool ok() const { return !error.has_value(); }
};

/// Starting point for retraining without object i: the configured
/// initialization for free parameters, the full-data optimum for the
/// parameters object i owns (they are frozen and never move).
inline Vector loo_initial_params(const LossModel& model, const TrainConfig& cfg, const Vector& theta_full,
                                 const PresenceVector& b) {
  Vector init = model.initial_params(cfg.seed);
  const auto free = model.free_parameters(b);
  for (std::size_t j = 0; j < free.size(); ++j)
    if (!free[j]) init[static_cast<Eigen::Index>(j)] = theta_full[static_cast<Eigen::Index>(j)];
  return init;
}

/// Retrains without each object in turn. Failures are recorded per object.
inline std::vector<LooResult> loo_retrain(const LossModel& model, const TrainConfig& cfg, const Vector& theta_full,
                                          std::span<const std::size_t> objects,
                                          std::span<const TargetFunction* const> targets, std::size_t jobs = 1) {
  std::vector<double> base(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) base[t] = targets[t]->value(theta_full);
  std::vector<LooResult> out(objects.size());
  parallel_for(objects.size(), jobs, [&](std::size_t k) {
    LooResult& r = out[k];
    r.object_id = objects[k];
    const Stopwatch sw;
    try {
      const PresenceVector b = PresenceVector::drop_one(model.n_objects(), r.object_id);
      const TrainResult tr = train(model, b, cfg, loo_initial_params(model, cfg, theta_full, b));
      r.params = tr.params;
      r.target_deltas.resize(targets.size());
      for (std::size_t t = 0; t < targets.size(); ++t) {
        r.target_deltas[t] = targets[t]->value(tr.params.theta) - base[t];
        require(std::isfinite(r.target_deltas[t]), ErrorCode::NonFinite,
                "non-finite target change without object " + std::to_string(r.object_id));
      }
    } catch (const Error& e) {
      r.error = e;
    }
    r.seconds = sw.seconds();
  });
  return out;
}

struct LooRun {
  TrainResult full;
  std::vector<LooResult> results;
  double seconds = 0.0;  // retraining wall time, full fit excluded
};

inline LooRun run_loo(const LossModel& model, const TrainConfig& cfg, std::span<const std::size_t> objects,
                      std::span<const TargetFunction* const> targets, std::size_t jobs = 1) {
  LooRun run;
  run.full = train(model, model.full_presence(), cfg);
  const Stopwatch sw;
  run.results = loo_retrain(model, cfg, run.full.params.theta, objects, targets, jobs);
  run.seconds = sw.seconds();
  return run;
}

/// Sign-aligned LOO scores, f(theta(1)) - f(theta(1_{-i})), which VIF
/// estimates up to the factor n. Failed objects are skipped.
inline std::vector<InfluenceRecord> loo_records(std::span<const LooResult> results) {
  std::vector<InfluenceRecord> out;
  for (const auto& r : results) {
    if (!r.ok()) continue;
    for (std::size_t t = 0; t < r.target_deltas.size(); ++t) out.push_back({r.object_id, t, 0.0, -r.target_deltas[t]});
  }
  return out;
}

/// Copies LOO scores onto matching (object, test) VIF records.
inline void attach_loo(std::vector<InfluenceRecord>& vif, std::span<const LooResult> results) {
  std::map<std::pair<std::size_t, std::size_t>, double> loo;
  for (const auto& r : loo_records(results)) loo[{r.object_id, r.test_id}] = *r.loo_score;
  for (auto& rec : vif) {
    if (auto it = loo.find({rec.object_id, rec.test_id}); it != loo.end()) rec.loo_score = it->second;
  }
}

inline double pearson_or_identical(std::span<const double> a, std::span<const double> b) {
  if (std::equal(a.begin(), a.end(), b.begin(), b.end())) return 1.0;
  return pearson(a, b);
}

struct RepeatResult {
  double pearson_r = 0.0;             // over all (object, test) pairs
  std::vector<double> per_test;       // NaN where a test's deltas are constant
};

/// Agreement of two brute-force LOO runs, the second under seed2: a
/// re-seeded copy of the model when it has internal randomness, and a
/// training configuration with seed2.
inline RepeatResult brute_force_repeat(const LossModel& model, const TrainConfig& cfg, std::uint64_t seed2,
                                       std::span<const std::size_t> objects,
                                       std::span<const TargetFunction* const> targets, std::size_t jobs = 1) {
  const LooRun first = run_loo(model, cfg, objects, targets, jobs);
  const auto other = model.reseeded(seed2);
  TrainConfig cfg2 = cfg;
  cfg2.seed = seed2;
  const LooRun second = run_loo(other ? *other : model, cfg2, objects, targets, jobs);

  RepeatResult out;
  std::vector<double> a, b;
  std::vector<std::vector<double>> ta(targets.size()), tb(targets.size());
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const auto& r1 = first.results[k];
    const auto& r2 = second.results[k];
    if (!r1.ok() || !r2.ok()) continue;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      a.push_back(r1.target_deltas[t]);
      b.push_back(r2.target_deltas[t]);
      ta[t].push_back(r1.target_deltas[t]);
      tb[t].push_back(r2.target_deltas[t]);
    }
  }
  out.pearson_r = pearson_or_identical(a, b);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    try {
      out.per_test.push_back(pearson_or_identical(ta[t], tb[t]));
    } catch (const Error&) {
      out.per_test.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

struct ExperimentReport {
  double pearson_r = 0.0;
  std::size_t n_pairs = 0;
  double vif_runtime = 0.0;
  double loo_runtime = 0.0;
  double improvement_ratio = 0.0;  // loo_runtime / vif_runtime
};

/// Pearson r between VIF scores and LOO scores over every record carrying both.
inline ExperimentReport compare(std::span<const InfluenceRecord> records, double vif_seconds, double loo_seconds) {
  std::vector<double> v, l;
  for (const auto& r : records) {
    if (!r.loo_score) continue;
    v.push_back(r.vif_score);
    l.push_back(*r.loo_score);
  }
  ExperimentReport rep;
  rep.n_pairs = v.size();
  rep.pearson_r = pearson(v, l);
  rep.vif_runtime = vif_seconds;
  rep.loo_runtime = loo_seconds;
  rep.improvement_ratio = vif_seconds > 0.0 ? loo_seconds / vif_seconds : std::numeric_limits<double>::infinity();
  return rep;
}

/// Same, pairing VIF records with LOO records by (object, test).
inline ExperimentReport compare(std::span<const InfluenceRecord> vif, std::span<const InfluenceRecord> loo,
                                double vif_seconds, double loo_seconds) {
  std::map<std::pair<std::size_t, std::size_t>, double> by_key;
  for (const auto& r : loo)
    if (r.loo_score) by_key[{r.object_id, r.test_id}] = *r.loo_score;
  std::vector<InfluenceRecord> joined;
  for (const auto& r : vif) {
    if (auto it = by_key.find({r.object_id, r.test_id}); it != by_key.end())
      joined.push_back({r.object_id, r.test_id, r.vif_score, it->second});
  }
  return compare(joined, vif_seconds, loo_seconds);
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Exponential proportional-hazards data: x ~ N(0, I), event time with rate
/// exp(theta*^T x), independent exponential censoring whose rate is chosen
/// so that the expected censored fraction is censor_rate.
inline SurvivalDataset synth_survival(std::size_t n, std::size_t d, const Vector& theta_star, double censor_rate,
                                      std::uint64_t seed) {
  require(n >= 1 && d >= 1, ErrorCode::ConfigError, "synth_survival: n and d must be positive");
  require(static_cast<std::size_t>(theta_star.size()) == d, ErrorCode::ConfigError,
          "synth_survival: theta* has the wrong dimension");
  require(censor_rate >= 0.0 && censor_rate < 1.0, ErrorCode::ConfigError,
          "synth_survival: censor_rate must be in [0, 1)");
  Rng rng(seed);
  SurvivalDataset data;
  const auto nn = static_cast<Eigen::Index>(n);
  data.x.resize(nn, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < nn; ++i)
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j) data.x(i, j) = rng.normal();
  const Vector hazard = (data.x * theta_star).array().exp().matrix();

  // P(censored | x_i) = c / (c + hazard_i); bisect c on the sample mean.
  double c = 0.0;
  if (censor_rate > 0.0) {
    auto frac = [&](double rate) { return (rate / (rate + hazard.array())).mean(); };
    double lo = 0.0, hi = 1.0;
    while (frac(hi) < censor_rate) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (frac(mid) < censor_rate ? lo : hi) = mid;
    }
    c = 0.5 * (lo + hi);
  }

  data.y.resize(nn);
  data.delta.resize(n);
  for (Eigen::Index i = 0; i < nn; ++i) {
    const double t = rng.exponential(hazard[i]);
    const double cens = c > 0.0 ? rng.exponential(c) : std::numeric_limits<double>::infinity();
    data.y[i] = std::min(t, cens);
    data.delta[static_cast<std::size_t>(i)] = t <= cens ? 1 : 0;
  }

  // Continuous draws essentially never tie; nudge any that do.
  std::vector<Eigen::Index> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<Eigen::Index>(i);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return data.y[a] < data.y[b]; });
  for (std::size_t k = 1; k < n; ++k) {
    if (data.y[order[k]] <= data.y[order[k - 1]]) data.y[order[k]] = std::nextafter(data.y[order[k - 1]], INFINITY);
  }
  return data;
}

struct SyntheticRanking {
  RankingDataset data;
  Matrix w_star;  // n x p planted scorer
};

/// Plackett-Luce lists from a planted linear scorer: x ~ N(0, I_p),
/// W* ~ N(0, 1), each list is the top k of W* x + Gumbel noise.
inline SyntheticRanking synth_ranking(std::size_t m, std::size_t n, std::size_t k, std::size_t p, std::uint64_t seed) {
  require(m >= 1 && n >= 1 && p >= 1, ErrorCode::ConfigError, "synth_ranking: sizes must be positive");
  require(k <= n, ErrorCode::ConfigError, "synth_ranking: k must not exceed n");
  Rng rng(seed);
  SyntheticRanking out;
  out.w_star.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < out.w_star.rows(); ++i)
    for (Eigen::Index j = 0; j < out.w_star.cols(); ++j) out.w_star(i, j) = rng.normal();
  out.data.n_items = n;
  out.data.x.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  for (std::size_t q = 0; q < m; ++q) {
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(p); ++j) out.data.x(static_cast<Eigen::Index>(q), j) = rng.normal();
    const Vector z = out.w_star * out.data.x.row(static_cast<Eigen::Index>(q)).transpose();
    std::vector<std::pair<double, std::size_t>> noisy(n);
    for (std::size_t l = 0; l < n; ++l) noisy[l] = {z[static_cast<Eigen::Index>(l)] + rng.gumbel(), l};
    std::partial_sort(noisy.begin(), noisy.begin() + static_cast<std::ptrdiff_t>(k), noisy.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> list;
    for (std::size_t j = 0; j < k; ++j) list.push_back(noisy[j].second);
    out.data.lists.push_back(std::move(list));
  }
  return out;
}

/// G(n, edge_prob) random graph.
inline Graph synth_graph(std::size_t n, double edge_prob, std::uint64_t seed) {
  require(edge_prob >= 0.0 && edge_prob <= 1.0, ErrorCode::ConfigError, "edge probability must be in [0, 1]");
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.uniform() < edge_prob) e.emplace_back(u, v);
  return Graph(n, std::move(e));
}

/// Named graph presets ("karate").
inline Graph synth_graph(const std::string& preset) {
  if (preset == "karate") return Graph::karate();
  fail(ErrorCode::ConfigError, "unknown graph preset '" + preset + "'");
}

struct LogisticFixture {
  std::shared_ptr<const LogisticModel> points;
  std::shared_ptr<const SumOfPointsLoss> loss;
};

/// Ridge logistic regression on x ~ N(0, I), labels from a random planted
/// direction with logistic noise.
inline LogisticFixture logistic_fixture(std::size_t n, std::size_t d, std::uint64_t seed, double ridge = 0.01) {
  require(n >= 1 && d >= 1, ErrorCode::ConfigError, "logistic_fixture: n and d must be positive");
  Rng rng(seed);
  Vector w(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = rng.normal();
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Vector y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
    const double prob = 1.0 / (1.0 + std::exp(-x.row(i).dot(w)));
    y[i] = rng.uniform() < prob ? 1.0 : -1.0;
  }
  auto points = std::make_shared<const LogisticModel>(std::move(x), std::move(y), ridge);
  return {points, std::make_shared<const SumOfPointsLoss>(points)};
}

}  // namespace vif
