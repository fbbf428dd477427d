#pragma once

/**
 * @file
 * @brief Random-walk contrastive node embeddings with node presence masks.
 *
 * Parameters are laid out as segment "emb" (n x k, row u is e_u) followed by
 * segment "out" (k x n, column l is w_l). The score of pair (u, l) is
 * s_ul = e_u . w_l and every window pair (u, v) of the walk corpus costs
 * -log softmax_l(s_ul)[v] over the present nodes l.
 *
 * Window pairs are aggregated into counts C_uv before evaluation; with
 * c_u = sum_v C_uv the loss is sum_u [ -sum_v C_uv s_uv + c_u lse_l(s_ul) ].
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vif/errors.hpp"
#include "vif/log.hpp"
#include "vif/losscore.hpp"
#include "vif/numkit.hpp"
#include "vif/rng.hpp"

namespace vif {

class Graph {
 public:
  Graph() = default;

  Graph(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges) : n_(n), adj_(n) {
    for (auto [u, v] : edges) {
      require(u < n && v < n, ErrorCode::DataError,
              "edge (" + std::to_string(u) + ", " + std::to_string(v) + ") references a node >= " + std::to_string(n));
      require(u != v, ErrorCode::DataError, "self loop on node " + std::to_string(u));
      if (u > v) std::swap(u, v);
      edges_.emplace_back(u, v);
    }
    std::sort(edges_.begin(), edges_.end());
    require(std::adjacent_find(edges_.begin(), edges_.end()) == edges_.end(), ErrorCode::DataError,
            "duplicate edge in graph");
    for (auto [u, v] : edges_) {
      adj_[u].push_back(v);
      adj_[v].push_back(u);
    }
    for (auto& a : adj_) std::sort(a.begin(), a.end());
  }

  std::size_t size() const { return n_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t u) const { return adj_.at(u); }

  /// Graph with node i deleted and nodes above i shifted down by one.
  Graph without(std::size_t i) const {
    require(i < n_, ErrorCode::InvalidArgument, "node index out of range");
    std::vector<std::pair<std::size_t, std::size_t>> e;
    for (auto [u, v] : edges_) {
      if (u == i || v == i) continue;
      e.emplace_back(u > i ? u - 1 : u, v > i ? v - 1 : v);
    }
    return Graph(n_ - 1, std::move(e));
  }

  /// Zachary's karate club: 34 members, 78 friendships.
  static Graph karate() {
    static const std::vector<std::vector<std::size_t>> upper = {
        {1, 2, 3, 4, 5, 6, 7, 8, 10, 11, 12, 13, 17, 19, 21, 31},
        {2, 3, 7, 13, 17, 19, 21, 30},
        {3, 7, 8, 9, 13, 27, 28, 32},
        {7, 12, 13},
        {6, 10},
        {6, 10, 16},
        {16},
        {},
        {30, 32, 33},
        {33},
        {},
        {},
        {},
        {33},
        {32, 33},
        {32, 33},
        {},
        {},
        {32, 33},
        {33},
        {32, 33},
        {},
        {32, 33},
        {25, 27, 29, 32, 33},
        {25, 27, 31},
        {31},
        {29, 33},
        {33},
        {31, 33},
        {32, 33},
        {32, 33},
        {32, 33},
        {33},
        {},
    };
    std::vector<std::pair<std::size_t, std::size_t>> e;
    for (std::size_t u = 0; u < upper.size(); ++u)
      for (std::size_t v : upper[u]) e.emplace_back(u, v);
    return Graph(34, std::move(e));
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::vector<std::vector<std::size_t>> adj_;
};

struct WalkParams {
  std::size_t walks_per_node = 200;
  std::size_t walk_length = 6;
  std::size_t window = 3;

  void validate() const {
    require(walks_per_node >= 1, ErrorCode::ConfigError, "walks_per_node must be >= 1");
    require(walk_length >= 1, ErrorCode::ConfigError, "walk_length must be >= 1");
    require(window >= 1, ErrorCode::ConfigError, "window must be >= 1");
  }
};

struct WalkCorpus {
  std::vector<std::vector<std::size_t>> walks;
  std::size_t walks_per_node = 0;
  std::size_t walk_length = 0;
  std::uint64_t seed = 0;
};

/// walks_per_node uniform-neighbor walks from every present node (in id
/// order), restricted to the subgraph induced by b.
inline WalkCorpus generate_walks(const Graph& g, const PresenceVector& b, std::size_t walks_per_node,
                                 std::size_t walk_length, std::uint64_t seed) {
  require(b.size() == g.size(), ErrorCode::InvalidArgument, "presence vector length mismatch");
  require(b.count() >= 2, ErrorCode::EmptyGraph, "need at least two present nodes to generate walks");
  WalkCorpus out{{}, walks_per_node, walk_length, seed};
  Rng rng(seed);
  std::vector<std::size_t> live;
  for (std::size_t start = 0; start < g.size(); ++start) {
    if (!b[start]) continue;
    for (std::size_t w = 0; w < walks_per_node; ++w) {
      std::vector<std::size_t> walk{start};
      walk.reserve(walk_length);
      while (walk.size() < walk_length) {
        live.clear();
        for (std::size_t v : g.neighbors(walk.back()))
          if (b[v]) live.push_back(v);
        if (live.empty()) break;
        walk.push_back(live[rng.below(live.size())]);
      }
      out.walks.push_back(std::move(walk));
    }
  }
  return out;
}

struct TripletSet {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (anchor, positive)
};

inline TripletSet walks_to_triplets(const WalkCorpus& corpus, std::size_t window) {
  TripletSet out;
  for (const auto& walk : corpus.walks) {
    for (std::size_t p = 0; p < walk.size(); ++p) {
      for (std::size_t o = 1; o <= window && p + o < walk.size(); ++o) {
        if (walk[p] == walk[p + o]) continue;
        out.pairs.emplace_back(walk[p], walk[p + o]);
        out.pairs.emplace_back(walk[p + o], walk[p]);
      }
    }
  }
  return out;
}

/// Window pairs aggregated by anchor.
struct PairCounts {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;  // rows[u] = sorted (v, C_uv)
  std::vector<double> totals;                                     // c_u
  std::size_t num_pairs = 0;

  static PairCounts from(const TripletSet& t, std::size_t n) {
    PairCounts c;
    c.n = n;
    std::vector<std::map<std::size_t, double>> acc(n);
    for (auto [u, v] : t.pairs) {
      require(u < n && v < n, ErrorCode::InvalidArgument, "triplet references unknown node");
      acc[u][v] += 1.0;
    }
    c.rows.resize(n);
    c.totals.assign(n, 0.0);
    for (std::size_t u = 0; u < n; ++u) {
      for (auto [v, w] : acc[u]) {
        c.rows[u].emplace_back(v, w);
        c.totals[u] += w;
      }
    }
    c.num_pairs = t.pairs.size();
    return c;
  }

  /// Drop every pair that touches an absent node.
  PairCounts filtered(const PresenceVector& b) const {
    PairCounts c;
    c.n = n;
    c.rows.resize(n);
    c.totals.assign(n, 0.0);
    for (std::size_t u = 0; u < n; ++u) {
      if (!b[u]) continue;
      for (auto [v, w] : rows[u]) {
        if (!b[v]) continue;
        c.rows[u].emplace_back(v, w);
        c.totals[u] += w;
        c.num_pairs += static_cast<std::size_t>(w);
      }
    }
    return c;
  }

  std::vector<std::size_t> anchors() const {
    std::vector<std::size_t> out;
    for (std::size_t u = 0; u < n; ++u)
      if (totals[u] > 0.0) out.push_back(u);
    return out;
  }
};

/// Score evaluation on a fixed count table; shared by the model and the
/// pair-loss target.
class ContrastiveKernel {
 public:
  ContrastiveKernel(std::size_t n, std::size_t k) : n_(n), k_(k) {}

  std::size_t n() const { return n_; }
  std::size_t k() const { return k_; }
  std::size_t dim() const { return 2 * n_ * k_; }
  Eigen::Index e_index(std::size_t u, std::size_t a) const { return static_cast<Eigen::Index>(u * k_ + a); }
  Eigen::Index w_index(std::size_t l, std::size_t a) const { return static_cast<Eigen::Index>(n_ * k_ + a * n_ + l); }

  Vector e(const Vector& theta, std::size_t u) const {
    Vector out(static_cast<Eigen::Index>(k_));
    for (std::size_t a = 0; a < k_; ++a) out[static_cast<Eigen::Index>(a)] = theta[e_index(u, a)];
    return out;
  }
  Vector w(const Vector& theta, std::size_t l) const {
    Vector out(static_cast<Eigen::Index>(k_));
    for (std::size_t a = 0; a < k_; ++a) out[static_cast<Eigen::Index>(a)] = theta[w_index(l, a)];
    return out;
  }

  /// Softmax over present nodes of s_ul; returns log-sum-exp and fills p
  /// (p_l = 0 for absent l).
  double softmax(const Vector& theta, std::size_t u, const PresenceVector& b, std::vector<double>& p) const {
    const Vector eu = e(theta, u);
    p.assign(n_, 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < n_; ++l) {
      if (!b[l]) continue;
      p[l] = eu.dot(w(theta, l));
      mx = std::max(mx, p[l]);
    }
    double z = 0.0;
    for (std::size_t l = 0; l < n_; ++l) {
      if (!b[l]) continue;
      p[l] = std::exp(p[l] - mx);
      z += p[l];
    }
    for (double& x : p) x /= z;
    return mx + std::log(z);
  }

  double anchor_value(const Vector& theta, const PairCounts& c, const PresenceVector& b, std::size_t u) const {
    std::vector<double> p;
    const double lse = softmax(theta, u, b, p);
    const Vector eu = e(theta, u);
    double v = c.totals[u] * lse;
    for (auto [l, cnt] : c.rows[u]) v -= cnt * eu.dot(w(theta, l));
    return v;
  }

  void add_anchor_gradient(const Vector& theta, const PairCounts& c, const PresenceVector& b, std::size_t u,
                           Vector& g) const {
    std::vector<double> p;
    softmax(theta, u, b, p);
    const Vector eu = e(theta, u);
    const double cu = c.totals[u];
    std::vector<double> coef(n_, 0.0);  // g_l = c_u p_l - C_ul
    for (std::size_t l = 0; l < n_; ++l) coef[l] = cu * p[l];
    for (auto [l, cnt] : c.rows[u]) coef[l] -= cnt;
    for (std::size_t l = 0; l < n_; ++l) {
      if (coef[l] == 0.0) continue;
      for (std::size_t a = 0; a < k_; ++a) {
        g[e_index(u, a)] += coef[l] * theta[w_index(l, a)];
        g[w_index(l, a)] += coef[l] * eu[static_cast<Eigen::Index>(a)];
      }
    }
  }

  void add_anchor_hessian(const Vector& theta, const PairCounts& c, const PresenceVector& b, std::size_t u,
                          Matrix& h) const {
    std::vector<double> p;
    softmax(theta, u, b, p);
    const Vector eu = e(theta, u);
    const double cu = c.totals[u];
    std::vector<double> coef(n_, 0.0);
    for (std::size_t l = 0; l < n_; ++l) coef[l] = cu * p[l];
    for (auto [l, cnt] : c.rows[u]) coef[l] -= cnt;
    const auto kk = static_cast<Eigen::Index>(k_);
    Vector wbar = Vector::Zero(kk);
    Matrix wsq = Matrix::Zero(kk, kk);
    std::vector<Vector> ws(n_);
    for (std::size_t l = 0; l < n_; ++l) {
      ws[l] = w(theta, l);
      if (!b[l]) continue;
      wbar += p[l] * ws[l];
      wsq += p[l] * ws[l] * ws[l].transpose();
    }
    const Matrix hee = cu * (wsq - wbar * wbar.transpose());
    const Matrix eet = eu * eu.transpose();
    for (std::size_t a = 0; a < k_; ++a)
      for (std::size_t c2 = 0; c2 < k_; ++c2) h(e_index(u, a), e_index(u, c2)) += hee(Eigen::Index(a), Eigen::Index(c2));
    for (std::size_t m = 0; m < n_; ++m) {
      if (!b[m]) continue;
      // d/dw_m of grad e_u: g_m I + c_u p_m (w_m - wbar) e_u^T
      const Matrix block = cu * p[m] * (ws[m] - wbar) * eu.transpose();
      for (std::size_t a = 0; a < k_; ++a) {
        for (std::size_t c2 = 0; c2 < k_; ++c2) {
          double val = block(Eigen::Index(a), Eigen::Index(c2)) + (a == c2 ? coef[m] : 0.0);
          h(e_index(u, a), w_index(m, c2)) += val;
          h(w_index(m, c2), e_index(u, a)) += val;
        }
      }
      for (std::size_t l = 0; l < n_; ++l) {
        if (!b[l]) continue;
        const double s = cu * ((l == m ? p[l] : 0.0) - p[l] * p[m]);
        if (s == 0.0) continue;
        for (std::size_t a = 0; a < k_; ++a)
          for (std::size_t c2 = 0; c2 < k_; ++c2) h(w_index(l, a), w_index(m, c2)) += s * eet(Eigen::Index(a), Eigen::Index(c2));
      }
    }
  }

  void add_anchor_hvp(const Vector& theta, const PairCounts& c, const PresenceVector& b, std::size_t u,
                      const Vector& v, Vector& out) const {
    std::vector<double> p;
    softmax(theta, u, b, p);
    const Vector eu = e(theta, u);
    const double cu = c.totals[u];
    std::vector<double> coef(n_, 0.0);
    for (std::size_t l = 0; l < n_; ++l) coef[l] = cu * p[l];
    for (auto [l, cnt] : c.rows[u]) coef[l] -= cnt;
    const auto kk = static_cast<Eigen::Index>(k_);
    const Vector ve = e(v, u);
    Vector wbar = Vector::Zero(kk);
    std::vector<Vector> ws(n_), vws(n_);
    std::vector<double> ev(n_, 0.0);  // e_u . vw_l
    double pev = 0.0;
    for (std::size_t l = 0; l < n_; ++l) {
      if (!b[l]) continue;
      ws[l] = w(theta, l);
      vws[l] = w(v, l);
      ev[l] = eu.dot(vws[l]);
      wbar += p[l] * ws[l];
      pev += p[l] * ev[l];
    }
    Vector oe = Vector::Zero(kk);
    for (std::size_t l = 0; l < n_; ++l) {
      if (!b[l]) continue;
      const Vector dw = ws[l] - wbar;
      oe += cu * p[l] * ws[l] * ws[l].dot(ve);
      oe += coef[l] * vws[l] + cu * p[l] * dw * ev[l];
      const Vector ow = coef[l] * ve + cu * p[l] * eu * dw.dot(ve) + cu * p[l] * (ev[l] - pev) * eu;
      for (std::size_t a = 0; a < k_; ++a) out[w_index(l, a)] += ow[static_cast<Eigen::Index>(a)];
    }
    oe -= cu * wbar * wbar.dot(ve);
    for (std::size_t a = 0; a < k_; ++a) out[e_index(u, a)] += oe[static_cast<Eigen::Index>(a)];
  }

 private:
  std::size_t n_;
  std::size_t k_;
};

enum class PresenceMode {
  Regenerate,  // re-run the walks on the node-deleted graph
  Filter,      // keep the full-graph walks and drop pairs touching absent nodes
};

struct EmbeddingOptions {
  PresenceMode mode = PresenceMode::Regenerate;
  double ridge = 0.0;       // ridge/2 * (|e_u|^2 + |w_u|^2) for every present node u
  double init_scale = 0.1;  // initial parameters ~ N(0, init_scale^2)
};

class EmbeddingModel final : public LossModel {
 public:
  using Options = EmbeddingOptions;

  EmbeddingModel(Graph graph, std::size_t k, WalkParams walks, std::uint64_t master_seed, Options opt = {})
      : graph_(std::move(graph)), k_(k), walks_(walks), seed_(master_seed), opt_(opt), kernel_(graph_.size(), k),
        cache_(std::make_shared<Cache>()) {
    require(k >= 1, ErrorCode::ConfigError, "embedding dimension must be >= 1");
    require(opt_.ridge >= 0.0, ErrorCode::ConfigError, "ridge must be >= 0");
    require(opt_.init_scale >= 0.0, ErrorCode::ConfigError, "init_scale must be >= 0");
    require(graph_.size() >= 2, ErrorCode::EmptyGraph, "graph needs at least two nodes");
    walks_.validate();
  }

  const Graph& graph() const { return graph_; }
  std::size_t embedding_dim() const { return k_; }
  const WalkParams& walk_params() const { return walks_; }
  std::uint64_t master_seed() const { return seed_; }
  PresenceMode mode() const { return opt_.mode; }
  const Options& options() const { return opt_; }
  const ContrastiveKernel& kernel() const { return kernel_; }

  std::string name() const override { return "embedding"; }
  std::size_t n_objects() const override { return graph_.size(); }
  std::size_t dim() const override { return kernel_.dim(); }
  bool convex() const override { return false; }

  ParamLayout layout() const override {
    ParamLayout l;
    l.add("emb", graph_.size() * k_).add("out", k_ * graph_.size());
    return l;
  }

  /// Walk RNG seed used for presence vector b.
  std::uint64_t walk_seed(const PresenceVector& b) const { return hash_combine(seed_, b.hash(seed_)); }

  /// Pair counts defining L(., b); cached per b.
  std::shared_ptr<const PairCounts> counts(const PresenceVector& b) const {
    check(b);
    const std::string key = b.encode();
    {
      std::lock_guard lock(cache_->mutex);
      if (auto it = cache_->entries.find(key); it != cache_->entries.end()) return it->second;
    }
    std::shared_ptr<const PairCounts> built;
    if (opt_.mode == PresenceMode::Filter && !b.all()) {
      built = std::make_shared<PairCounts>(counts(full_presence())->filtered(b));
    } else {
      built = std::make_shared<PairCounts>(counts_with_seed(b, walk_seed(b)));
    }
    std::lock_guard lock(cache_->mutex);
    if (cache_->entries.size() >= kCacheLimit) cache_->entries.clear();
    cache_->entries.emplace(key, built);
    return built;
  }

  /// Counts from walks drawn with an explicit seed (uncached).
  PairCounts counts_with_seed(const PresenceVector& b, std::uint64_t seed) const {
    const WalkCorpus corpus = generate_walks(graph_, b, walks_.walks_per_node, walks_.walk_length, seed);
    return PairCounts::from(walks_to_triplets(corpus, walks_.window), graph_.size());
  }

  double value(const Vector& theta, const PresenceVector& b) const override {
    return value_on(theta, *counts(b), b) + ridge_value(theta, b);
  }

  double value_on(const Vector& theta, const PairCounts& c, const PresenceVector& b) const {
    check_theta(theta);
    if (c.num_pairs == 0) {
      log::info("embedding: empty triplet set, loss is 0");
      return 0.0;
    }
    double v = 0.0;
    for (std::size_t u : c.anchors()) v += kernel_.anchor_value(theta, c, b, u);
    return v;
  }

  Vector gradient(const Vector& theta, const PresenceVector& b) const override {
    Vector g = gradient_on(theta, *counts(b), b);
    add_ridge(theta, b, 1.0, g);
    return g;
  }

  Vector gradient_on(const Vector& theta, const PairCounts& c, const PresenceVector& b) const {
    check_theta(theta);
    Vector g = Vector::Zero(theta.size());
    for (std::size_t u : c.anchors()) kernel_.add_anchor_gradient(theta, c, b, u, g);
    return g;
  }

  Matrix hessian(const Vector& theta, const PresenceVector& b) const override {
    check_theta(theta);
    const auto c = counts(b);
    Matrix h = Matrix::Zero(theta.size(), theta.size());
    for (std::size_t u : c->anchors()) kernel_.add_anchor_hessian(theta, *c, b, u, h);
    if (opt_.ridge > 0.0) {
      const auto free = free_parameters(b);
      for (std::size_t j = 0; j < free.size(); ++j)
        if (free[j]) h(Eigen::Index(j), Eigen::Index(j)) += opt_.ridge;
    }
    return h;
  }

  Vector hvp(const Vector& theta, const PresenceVector& b, const Vector& v) const override {
    check_theta(theta);
    const auto c = counts(b);
    Vector out = Vector::Zero(theta.size());
    for (std::size_t u : c->anchors()) kernel_.add_anchor_hvp(theta, *c, b, u, v, out);
    add_ridge(v, b, 1.0, out);
    return out;
  }

  /// One unit term per anchor node with at least one window pair; each
  /// carries an equal share of the ridge.
  std::size_t num_terms(const PresenceVector& b) const override {
    return std::max<std::size_t>(counts(b)->anchors().size(), 1);
  }

  Vector term_gradient(std::size_t t, const Vector& theta, const PresenceVector& b) const override {
    const auto c = counts(b);
    const auto anchors = c->anchors();
    Vector g = Vector::Zero(theta.size());
    if (t < anchors.size()) kernel_.add_anchor_gradient(theta, *c, b, anchors[t], g);
    add_ridge(theta, b, 1.0 / static_cast<double>(std::max<std::size_t>(anchors.size(), 1)), g);
    return g;
  }

  Vector term_hvp(std::size_t t, const Vector& theta, const PresenceVector& b, const Vector& v) const override {
    const auto c = counts(b);
    const auto anchors = c->anchors();
    Vector out = Vector::Zero(theta.size());
    if (t < anchors.size()) kernel_.add_anchor_hvp(theta, *c, b, anchors[t], v, out);
    add_ridge(v, b, 1.0 / static_cast<double>(std::max<std::size_t>(anchors.size(), 1)), out);
    return out;
  }

  /// Rows e_i and columns w_i of absent nodes are frozen.
  std::vector<bool> free_parameters(const PresenceVector& b) const override {
    check(b);
    std::vector<bool> free(dim(), true);
    for (std::size_t i = 0; i < graph_.size(); ++i) {
      if (b[i]) continue;
      for (std::size_t a = 0; a < k_; ++a) {
        free[static_cast<std::size_t>(kernel_.e_index(i, a))] = false;
        free[static_cast<std::size_t>(kernel_.w_index(i, a))] = false;
      }
    }
    return free;
  }

  Vector initial_params(std::uint64_t seed) const override {
    Rng rng(hash_combine(seed, 0xe3b0c442ULL));
    Vector theta(static_cast<Eigen::Index>(dim()));
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = opt_.init_scale * rng.normal();
    return theta;
  }

  std::shared_ptr<const LossModel> reseeded(std::uint64_t seed) const override {
    return std::make_shared<EmbeddingModel>(graph_, k_, walks_, seed, opt_);
  }

 private:
  static constexpr std::size_t kCacheLimit = 4096;

  struct Cache {
    std::mutex mutex;
    std::map<std::string, std::shared_ptr<const PairCounts>> entries;
  };

  void check(const PresenceVector& b) const {
    require(b.size() == n_objects(), ErrorCode::InvalidArgument, "presence vector length mismatch");
  }
  double ridge_value(const Vector& theta, const PresenceVector& b) const {
    if (opt_.ridge == 0.0) return 0.0;
    const auto free = free_parameters(b);
    double sq = 0.0;
    for (std::size_t j = 0; j < free.size(); ++j)
      if (free[j]) sq += theta[Eigen::Index(j)] * theta[Eigen::Index(j)];
    return 0.5 * opt_.ridge * sq;
  }

  void add_ridge(const Vector& theta, const PresenceVector& b, double share, Vector& out) const {
    if (opt_.ridge == 0.0) return;
    const auto free = free_parameters(b);
    for (std::size_t j = 0; j < free.size(); ++j)
      if (free[j]) out[Eigen::Index(j)] += share * opt_.ridge * theta[Eigen::Index(j)];
  }

  void check_theta(const Vector& theta) const {
    require(static_cast<std::size_t>(theta.size()) == dim(), ErrorCode::InvalidArgument, "theta has wrong dimension");
  }

  Graph graph_;
  std::size_t k_;
  WalkParams walks_;
  std::uint64_t seed_;
  Options opt_;
  ContrastiveKernel kernel_;
  std::shared_ptr<Cache> cache_;
};

/// f(theta) = -log softmax_l(e_u . w_l)[v] over the nodes present in b.
class PairLossTarget final : public TargetFunction {
 public:
  PairLossTarget(std::size_t n, std::size_t k, std::size_t u, std::size_t v, PresenceVector b)
      : kernel_(n, k), u_(u), v_(v), b_(std::move(b)) {
    require(u < n && v < n, ErrorCode::InvalidArgument, "pair target node out of range");
    require(b_.size() == n && b_[u] && b_[v], ErrorCode::InvalidArgument, "pair target nodes must be present");
  }
  PairLossTarget(std::size_t n, std::size_t k, std::size_t u, std::size_t v)
      : PairLossTarget(n, k, u, v, PresenceVector::all_ones(n)) {}

  double value(const Vector& theta) const override {
    std::vector<double> p;
    const double lse = kernel_.softmax(theta, u_, b_, p);
    return lse - kernel_.e(theta, u_).dot(kernel_.w(theta, v_));
  }

  Vector gradient(const Vector& theta) const override {
    PairCounts c;
    c.n = kernel_.n();
    c.rows.resize(c.n);
    c.totals.assign(c.n, 0.0);
    c.rows[u_].emplace_back(v_, 1.0);
    c.totals[u_] = 1.0;
    c.num_pairs = 1;
    Vector g = Vector::Zero(theta.size());
    kernel_.add_anchor_gradient(theta, c, b_, u_, g);
    return g;
  }

 private:
  ContrastiveKernel kernel_;
  std::size_t u_, v_;
  PresenceVector b_;
};

inline PairLossTarget pair_loss_target(const EmbeddingModel& model, std::size_t u, std::size_t v) {
  return PairLossTarget(model.n_objects(), model.embedding_dim(), u, v);
}

}  // namespace vif
