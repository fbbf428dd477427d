// vif_cli: synthesize data, train, attribute, retrain leave-one-out, and
// compare, driven by one JSON run configuration.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "vif/io.hpp"
#include "vif/vif.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace vif;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

json scenario_defaults(const std::string& scenario) {
  json d;
  d["train"] = {{"optimizer", "newton"}, {"learning_rate", 0.01}, {"epochs", 200},    {"batch_size", 0},
                {"weight_decay", 0.0},   {"grad_tol", 1e-8},      {"max_newton_iter", 100}};
  d["solver"] = {{"kind", "explicit"},   {"damping", nullptr}, {"cg_tol", 1e-8},    {"cg_max_iter", 0},
                 {"lissa_depth", 1000}, {"lissa_scale", 0.0}, {"lissa_batch", 1}, {"lissa_seed", 0}};
  d["objects"] = nullptr;
  d["tests"] = nullptr;
  if (scenario == "cox") {
    d["data"] = {{"n", 200}, {"d", 3}, {"censor_rate", 0.2}, {"n_test", 50}, {"theta_star", {0.8, -0.5, 0.3}},
                 {"train_csv", nullptr}, {"test_csv", nullptr}};
    d["model"] = json::object();
  } else if (scenario == "embed") {
    d["data"] = {{"graph", "karate"}, {"n", 34}, {"edge_prob", 0.1}, {"edges", nullptr}};
    d["model"] = {{"embedding_dim", 2}, {"walks_per_node", 200}, {"walk_length", 6}, {"window", 3},
                  {"ridge", 300.0},     {"presence_mode", "regenerate"}, {"init_scale", 0.1}};
  } else if (scenario == "ltr") {
    d["data"] = {{"queries", 200},           {"items", 30},            {"k", 5},
                 {"features", 8},            {"test_queries", 20},     {"queries_csv", nullptr},
                 {"labels_csv", nullptr},    {"test_queries_csv", nullptr}, {"test_labels_csv", nullptr}};
    d["model"] = {{"ridge", 0.1}};
  } else if (scenario == "logistic") {
    d["data"] = {{"n", 50}, {"d", 5}, {"n_test", 20}};
    d["model"] = {{"ridge", 0.01}};
  } else {
    fail(ErrorCode::ConfigError, "unknown scenario '" + scenario + "' (expected cox, embed, ltr or logistic)");
  }
  return d;
}

/// Overlays `user` onto `base`, rejecting keys the defaults do not know.
void overlay(json& base, const json& user, const std::string& path) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    require(base.contains(it.key()), ErrorCode::ConfigError, "unknown config field '" + key + "'");
    if (base[it.key()].is_object() && it.value().is_object()) {
      overlay(base[it.key()], it.value(), key);
    } else {
      base[it.key()] = it.value();
    }
  }
}

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> solver;
  std::optional<double> damping;
  std::optional<std::size_t> jobs;
  std::optional<std::string> out;
  std::optional<std::string> checkpoint;
  std::optional<std::string> influences;
  std::optional<std::string> loo;
  bool force = false;
};

struct RunConfig {
  json effective;  // scenario, seed, data, model, train, solver, objects, tests
  std::string out;
  std::size_t jobs = 0;

  const std::string& scenario() const { return effective.at("scenario").get_ref<const std::string&>(); }
  std::uint64_t seed() const { return effective.at("seed").get<std::uint64_t>(); }
  const json& data() const { return effective.at("data"); }
  const json& model() const { return effective.at("model"); }

  /// Hash of everything that determines the fit and the LOO ground truth.
  /// Solver settings, out and jobs are excluded: they change neither.
  std::string hash() const {
    json keyed = effective;
    keyed.erase("solver");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(keyed.dump())));
    return buf;
  }

  fs::path path(const std::string& name) const { return fs::path(out) / name; }

  std::string data_path(const char* key, const std::string& fallback) const {
    const json& v = data().at(key);
    return v.is_null() ? path(fallback).string() : v.get<std::string>();
  }

  TrainConfig train_config() const {
    const json& t = effective.at("train");
    TrainConfig cfg;
    const auto opt = t.at("optimizer").get<std::string>();
    if (opt == "newton") {
      cfg.optimizer = Optimizer::Newton;
    } else if (opt == "gd") {
      cfg.optimizer = Optimizer::GradientDescent;
    } else if (opt == "adam") {
      cfg.optimizer = Optimizer::Adam;
    } else {
      fail(ErrorCode::ConfigError, "unknown optimizer '" + opt + "' (expected newton, gd or adam)");
    }
    cfg.learning_rate = t.at("learning_rate").get<double>();
    cfg.epochs = t.at("epochs").get<int>();
    cfg.batch_size = t.at("batch_size").get<std::size_t>();
    cfg.weight_decay = t.at("weight_decay").get<double>();
    cfg.grad_tol = t.at("grad_tol").get<double>();
    cfg.seed = seed();
    cfg.validate();
    return cfg;
  }

  int max_newton_iter() const { return effective.at("train").at("max_newton_iter").get<int>(); }

  SolverSpec solver() const {
    const json& s = effective.at("solver");
    SolverSpec spec;
    spec.kind = parse_solver(s.at("kind").get<std::string>());
    if (!s.at("damping").is_null()) spec.damping = s.at("damping").get<double>();
    spec.cg_tol = s.at("cg_tol").get<double>();
    spec.cg_max_iter = s.at("cg_max_iter").get<int>();
    spec.lissa_depth = s.at("lissa_depth").get<int>();
    spec.lissa_scale = s.at("lissa_scale").get<double>();
    spec.lissa_batch = s.at("lissa_batch").get<std::size_t>();
    spec.lissa_seed = s.at("lissa_seed").get<std::uint64_t>();
    require(!spec.damping || *spec.damping >= 0.0, ErrorCode::ConfigError, "damping must be >= 0");
    require(spec.lissa_batch >= 1, ErrorCode::ConfigError, "lissa_batch must be >= 1");
    return spec;
  }
};

RunConfig load_config(const Flags& flags) {
  json user = json::object();
  if (!flags.config_path.empty()) {
    std::ifstream in(flags.config_path);
    require(in.good(), ErrorCode::ConfigError, "cannot open config " + flags.config_path);
    try {
      user = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorCode::ConfigError, "config " + flags.config_path + ": " + e.what());
    }
    require(user.is_object(), ErrorCode::ConfigError, "config must be a JSON object");
  }
  const std::string scenario = user.value("scenario", std::string("cox"));
  json eff = scenario_defaults(scenario);
  eff["scenario"] = scenario;
  eff["seed"] = nullptr;
  std::string out = "run";
  if (user.contains("out")) {
    out = user["out"].get<std::string>();
    user.erase("out");
  }
  try {
    overlay(eff, user, "");
    if (flags.seed) eff["seed"] = *flags.seed;
    if (flags.solver) eff["solver"]["kind"] = *flags.solver;
    if (flags.damping) eff["solver"]["damping"] = *flags.damping;
    require(!eff["seed"].is_null(), ErrorCode::ConfigError, "a seed is required (config field 'seed' or --seed)");
    require(eff["seed"].is_number_unsigned() || (eff["seed"].is_number_integer() && eff["seed"].get<long long>() >= 0),
            ErrorCode::ConfigError, "seed must be a non-negative integer");
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  RunConfig cfg{std::move(eff), flags.out.value_or(out), flags.jobs.value_or(0)};
  try {
    cfg.train_config();
    cfg.solver();
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Scenarios: data, model and targets
// ---------------------------------------------------------------------------

struct Problem {
  std::shared_ptr<const LossModel> model;
  std::vector<std::unique_ptr<TargetFunction>> targets;
  std::vector<std::shared_ptr<const DecomposableModel>> keep_alive;

  std::vector<const TargetFunction*> target_ptrs() const {
    std::vector<const TargetFunction*> out;
    for (const auto& t : targets) out.push_back(t.get());
    return out;
  }
};

Vector json_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write_logistic_csv(const std::string& path, const LogisticModel& m) {
  auto out = io::open_out(path);
  out << "y";
  for (std::size_t j = 0; j < m.dim(); ++j) out << ",x" << j + 1;
  out << "\n";
  for (Eigen::Index i = 0; i < m.features().rows(); ++i) {
    out << io::format_double(m.labels()[i]);
    for (Eigen::Index j = 0; j < m.features().cols(); ++j) out << "," << io::format_double(m.features()(i, j));
    out << "\n";
  }
}

std::shared_ptr<const LogisticModel> read_logistic_csv(const std::string& path, double ridge) {
  const auto t = io::read_csv(path);
  require(t.header.size() >= 2 && t.header[0] == "y", ErrorCode::DataError, path + ": header must be y,x1..xd");
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  const auto d = static_cast<Eigen::Index>(t.header.size() - 1);
  Matrix x(n, d);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string where = path + ":" + std::to_string(t.line_numbers[static_cast<std::size_t>(i)]);
    y[i] = io::parse_double(t.rows[static_cast<std::size_t>(i)][0], where);
    require(y[i] == 1.0 || y[i] == -1.0, ErrorCode::DataError, where + ": label must be -1 or 1");
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = io::parse_double(t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j + 1)], where);
  }
  return std::make_shared<const LogisticModel>(std::move(x), std::move(y), ridge);
}

Graph scenario_graph(const RunConfig& cfg) {
  const json& d = cfg.data();
  const auto kind = d.at("graph").get<std::string>();
  if (kind == "karate") return Graph::karate();
  if (kind == "random") return synth_graph(d.at("n").get<std::size_t>(), d.at("edge_prob").get<double>(), cfg.seed());
  if (kind == "file") {
    require(!d.at("edges").is_null(), ErrorCode::ConfigError, "data.graph = file needs data.edges");
    return io::read_edge_list(d.at("edges").get<std::string>());
  }
  fail(ErrorCode::ConfigError, "data.graph must be karate, random or file");
}

/// Writes the scenario's dataset files into the output directory.
std::vector<std::string> synthesize(const RunConfig& cfg) {
  const json& d = cfg.data();
  fs::create_directories(cfg.out);
  std::vector<std::string> written;
  const std::string& s = cfg.scenario();
  if (s == "cox") {
    const auto dim = d.at("d").get<std::size_t>();
    const Vector theta_star = json_vector(d.at("theta_star"));
    require(static_cast<std::size_t>(theta_star.size()) == dim, ErrorCode::ConfigError,
            "data.theta_star must have data.d entries");
    const auto rate = d.at("censor_rate").get<double>();
    io::write_survival_csv(cfg.path("train.csv"), synth_survival(d.at("n").get<std::size_t>(), dim, theta_star, rate, cfg.seed()));
    io::write_survival_csv(cfg.path("test.csv"),
                           synth_survival(d.at("n_test").get<std::size_t>(), dim, theta_star, rate, hash_combine(cfg.seed(), 1)));
    written = {"train.csv", "test.csv"};
  } else if (s == "embed") {
    io::write_edge_list(cfg.path("graph.txt"), scenario_graph(cfg));
    written = {"graph.txt"};
  } else if (s == "ltr") {
    const auto m = d.at("queries").get<std::size_t>(), n = d.at("items").get<std::size_t>();
    const auto k = d.at("k").get<std::size_t>(), p = d.at("features").get<std::size_t>();
    // Train and test queries share one planted scorer: draw them together and split.
    const std::size_t mt = d.at("test_queries").get<std::size_t>();
    const auto all = synth_ranking(m + mt, n, k, p, cfg.seed());
    RankingDataset train{n, all.data.x.topRows(static_cast<Eigen::Index>(m)),
                         {all.data.lists.begin(), all.data.lists.begin() + static_cast<std::ptrdiff_t>(m)}};
    RankingDataset test{n, all.data.x.bottomRows(static_cast<Eigen::Index>(mt)),
                        {all.data.lists.begin() + static_cast<std::ptrdiff_t>(m), all.data.lists.end()}};
    io::write_ranking_csv(cfg.path("queries.csv"), cfg.path("labels.csv"), train);
    io::write_ranking_csv(cfg.path("test_queries.csv"), cfg.path("test_labels.csv"), test);
    written = {"queries.csv", "labels.csv", "test_queries.csv", "test_labels.csv"};
  } else if (s == "logistic") {
    const auto n = d.at("n").get<std::size_t>(), dim = d.at("d").get<std::size_t>();
    const auto nt = d.at("n_test").get<std::size_t>();
    const double ridge = cfg.model().at("ridge").get<double>();
    const auto fx = logistic_fixture(n + nt, dim, cfg.seed(), ridge);
    const Matrix& x = fx.points->features();
    const Vector& y = fx.points->labels();
    write_logistic_csv(cfg.path("train.csv"), LogisticModel(x.topRows(static_cast<Eigen::Index>(n)), y.head(static_cast<Eigen::Index>(n)), ridge));
    write_logistic_csv(cfg.path("test.csv"), LogisticModel(x.bottomRows(static_cast<Eigen::Index>(nt)), y.tail(static_cast<Eigen::Index>(nt)), ridge));
    written = {"train.csv", "test.csv"};
  }
  return written;
}

Problem load_problem(const RunConfig& cfg) {
  Problem p;
  const json& d = cfg.data();
  const json& m = cfg.model();
  const std::string& s = cfg.scenario();
  if (s == "cox") {
    auto train = io::read_survival_csv(cfg.data_path("train_csv", "train.csv"));
    auto test = io::read_survival_csv(cfg.data_path("test_csv", "test.csv"));
    require(test.features() == train.features(), ErrorCode::DataError, "train and test feature counts differ");
    p.model = std::make_shared<CoxModel>(std::move(train));
    for (Eigen::Index i = 0; i < test.x.rows(); ++i) p.targets.push_back(std::make_unique<RelativeRiskTarget>(test.x.row(i).transpose()));
  } else if (s == "embed") {
    const fs::path file = d.at("edges").is_null() ? cfg.path("graph.txt") : fs::path(d.at("edges").get<std::string>());
    Graph g = io::read_edge_list(file.string());
    EmbeddingOptions opt;
    const auto mode = m.at("presence_mode").get<std::string>();
    require(mode == "regenerate" || mode == "filter", ErrorCode::ConfigError,
            "model.presence_mode must be regenerate or filter");
    opt.mode = mode == "filter" ? PresenceMode::Filter : PresenceMode::Regenerate;
    opt.ridge = m.at("ridge").get<double>();
    opt.init_scale = m.at("init_scale").get<double>();
    const WalkParams walks{m.at("walks_per_node").get<std::size_t>(), m.at("walk_length").get<std::size_t>(),
                           m.at("window").get<std::size_t>()};
    const auto k = m.at("embedding_dim").get<std::size_t>();
    auto model = std::make_shared<EmbeddingModel>(std::move(g), k, walks, cfg.seed(), opt);
    const std::size_t n = model->n_objects();
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = 0; v < n; ++v) p.targets.push_back(std::make_unique<PairLossTarget>(n, k, u, v));
    p.model = std::move(model);
  } else if (s == "ltr") {
    const auto n = d.at("items").get<std::size_t>();
    auto train = io::read_ranking_csv(cfg.data_path("queries_csv", "queries.csv"), cfg.data_path("labels_csv", "labels.csv"), n);
    auto test = io::read_ranking_csv(cfg.data_path("test_queries_csv", "test_queries.csv"),
                                     cfg.data_path("test_labels_csv", "test_labels.csv"), n);
    require(test.features() == train.features(), ErrorCode::DataError, "train and test feature counts differ");
    for (std::size_t q = 0; q < test.queries(); ++q)
      p.targets.push_back(std::make_unique<QueryLossTarget>(n, test.x.row(static_cast<Eigen::Index>(q)).transpose(), test.lists[q]));
    p.model = std::make_shared<ListMleModel>(std::move(train), m.at("ridge").get<double>());
  } else if (s == "logistic") {
    const double ridge = m.at("ridge").get<double>();
    auto train = read_logistic_csv(cfg.path("train.csv").string(), ridge);
    auto test = read_logistic_csv(cfg.path("test.csv").string(), ridge);
    require(test->dim() == train->dim(), ErrorCode::DataError, "train and test feature counts differ");
    for (std::size_t i = 0; i < test->n_points(); ++i) p.targets.push_back(std::make_unique<PointLossTarget>(test, i));
    p.keep_alive = {train, test};
    p.model = std::make_shared<SumOfPointsLoss>(train);
  }
  return p;
}

std::vector<std::size_t> selection(const json& sel, std::size_t n, const char* what) {
  std::vector<std::size_t> out;
  if (sel.is_null()) {
    out.resize(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  for (const auto& v : sel) {
    const auto i = v.get<long long>();
    require(i >= 0 && static_cast<std::size_t>(i) < n, ErrorCode::ConfigError,
            std::string(what) + " index " + std::to_string(i) + " out of range [0, " + std::to_string(n) + ")");
    out.push_back(static_cast<std::size_t>(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metadata
// ---------------------------------------------------------------------------

void write_json(const fs::path& path, const json& j) {
  auto out = io::open_out(path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::DataError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::DataError, path.string() + ": " + e.what());
  }
}

fs::path meta_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".meta.json");
  return p;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

io::Checkpoint load_checkpoint(const RunConfig& cfg, const Flags& flags, const LossModel& model) {
  const std::string path = flags.checkpoint.value_or(cfg.path("checkpoint.bin").string());
  io::Checkpoint ck = io::read_checkpoint(path);
  const auto stored = ck.header.value("config_hash", std::string());
  if (stored != cfg.hash()) {
    require(flags.force, ErrorCode::ConfigError,
            "checkpoint " + path + " was trained under config " + stored + ", current config is " + cfg.hash() +
                " (use --force to override)");
    log::info("checkpoint config hash mismatch ignored (--force)");
  }
  require(static_cast<std::size_t>(ck.params.theta.size()) == model.dim() && ck.params.layout == model.layout(),
          ErrorCode::DataError, "checkpoint " + path + " does not match the model's parameter layout");
  return ck;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg) {
  const auto files = synthesize(cfg);
  write_json(cfg.path("run.json"), json{{"config_hash", cfg.hash()}, {"config", cfg.effective}, {"version", kVersion}});
  std::cout << json{{"written", files}, {"out", cfg.out}}.dump() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const Problem p = load_problem(cfg);
  const TrainResult tr = train(*p.model, p.model->full_presence(), cfg.train_config(), std::nullopt, cfg.max_newton_iter());
  fs::create_directories(cfg.out);
  json header{{"config_hash", cfg.hash()}, {"scenario", cfg.scenario()}, {"loss", tr.loss},
              {"grad_norm", tr.grad_norm},  {"iterations", tr.iterations}, {"converged", tr.converged},
              {"version", kVersion}};
  io::write_checkpoint(cfg.path("checkpoint.bin").string(), tr.params, header);
  std::cout << header.dump() << "\n";
  return 0;
}

int cmd_attribute(const RunConfig& cfg, const Flags& flags) {
  const Problem p = load_problem(cfg);
  const io::Checkpoint ck = load_checkpoint(cfg, flags, *p.model);
  const auto objects = selection(cfg.effective.at("objects"), p.model->n_objects(), "objects");
  const auto tests = selection(cfg.effective.at("tests"), p.targets.size(), "tests");
  const auto all = p.target_ptrs();
  std::vector<const TargetFunction*> chosen;
  for (std::size_t t : tests) chosen.push_back(all[t]);

  const Stopwatch sw;
  auto records = attribute_targets(*p.model, ck.params.theta, chosen, objects, cfg.solver());
  const double seconds = sw.seconds();
  for (auto& r : records) r.test_id = tests[r.test_id];

  const fs::path csv = flags.influences ? fs::path(*flags.influences) : cfg.path("influences.csv");
  io::write_influences_csv(csv.string(), records);
  write_json(meta_path(csv), json{{"config_hash", cfg.hash()},
                                  {"vif_runtime", seconds},
                                  {"solver", to_string(cfg.solver().kind)},
                                  {"damping", cfg.solver().resolved_damping(*p.model)},
                                  {"records", records.size()},
                                  {"version", kVersion}});
  std::cout << json{{"influences", csv.string()}, {"records", records.size()}, {"vif_runtime", seconds}}.dump() << "\n";
  return 0;
}

int cmd_loo(const RunConfig& cfg, const Flags& flags) {
  const Problem p = load_problem(cfg);
  const io::Checkpoint ck = load_checkpoint(cfg, flags, *p.model);
  const auto objects = selection(cfg.effective.at("objects"), p.model->n_objects(), "objects");
  const auto tests = selection(cfg.effective.at("tests"), p.targets.size(), "tests");
  const auto all = p.target_ptrs();
  std::vector<const TargetFunction*> chosen;
  for (std::size_t t : tests) chosen.push_back(all[t]);

  const Stopwatch sw;
  const auto results = loo_retrain(*p.model, cfg.train_config(), ck.params.theta, objects, chosen, cfg.jobs);
  const double seconds = sw.seconds();
  json failures = json::array();
  for (const auto& r : results) {
    if (!r.ok()) failures.push_back({{"object_id", r.object_id}, {"code", std::string(to_string(r.error->code()))}, {"message", r.error->what()}});
  }
  auto records = loo_records(results);
  for (auto& r : records) r.test_id = tests[r.test_id];

  const fs::path csv = flags.loo ? fs::path(*flags.loo) : cfg.path("loo.csv");
  io::write_loo_csv(csv.string(), records);
  write_json(meta_path(csv), json{{"config_hash", cfg.hash()}, {"loo_runtime", seconds}, {"failures", failures},
                                  {"records", records.size()}, {"version", kVersion}});
  std::cout << json{{"loo", csv.string()}, {"records", records.size()}, {"failures", failures.size()},
                    {"loo_runtime", seconds}}
                   .dump()
            << "\n";
  return 0;
}

/// Pairs influences.csv with loo.csv by (object_id, test_id).
int cmd_compare(const RunConfig& cfg, const Flags& flags) {
  const fs::path inf_csv = flags.influences ? fs::path(*flags.influences) : cfg.path("influences.csv");
  const fs::path loo_csv = flags.loo ? fs::path(*flags.loo) : cfg.path("loo.csv");
  auto vif = io::read_scores_csv(inf_csv.string());
  const auto loo = io::read_scores_csv(loo_csv.string());

  json inf_meta = fs::exists(meta_path(inf_csv)) ? read_json(meta_path(inf_csv)) : json::object();
  json loo_meta = fs::exists(meta_path(loo_csv)) ? read_json(meta_path(loo_csv)) : json::object();
  const auto h1 = inf_meta.value("config_hash", std::string());
  const auto h2 = loo_meta.value("config_hash", std::string());
  if (h1 != h2) {
    require(flags.force, ErrorCode::ConfigError,
            "influences (" + (h1.empty() ? std::string("no hash") : h1) + ") and LOO scores (" +
                (h2.empty() ? std::string("no hash") : h2) + ") come from different configs (use --force to override)");
    log::info("compare: config hash mismatch ignored (--force)");
  }

  // A LOO-only file pairs its loo column; an influences file paired with itself contributes its vif column.
  const bool loo_has_scores = std::all_of(loo.begin(), loo.end(), [](const auto& r) { return r.loo_score.has_value(); });
  std::vector<InfluenceRecord> loo_side = loo;
  if (!loo_has_scores) {
    for (auto& r : loo_side) r.loo_score = r.vif_score;
  }
  const double vif_seconds = inf_meta.value("vif_runtime", 0.0);
  const double loo_seconds = loo_meta.value("loo_runtime", loo_meta.value("vif_runtime", 0.0));
  const ExperimentReport rep = compare(vif, loo_side, vif_seconds, loo_seconds);

  std::map<std::pair<std::size_t, std::size_t>, double> by_key;
  for (const auto& r : loo_side) by_key[{r.object_id, r.test_id}] = *r.loo_score;
  for (auto& r : vif) {
    if (auto it = by_key.find({r.object_id, r.test_id}); it != by_key.end()) r.loo_score = it->second;
  }
  fs::create_directories(cfg.out);
  const fs::path merged = cfg.path("influences.csv");
  if (fs::weakly_canonical(merged) != fs::weakly_canonical(loo_csv)) io::write_influences_csv(merged.string(), vif);

  json summary{{"pearson_r", rep.pearson_r},
               {"n_pairs", rep.n_pairs},
               {"vif_runtime", rep.vif_runtime},
               {"loo_runtime", rep.loo_runtime},
               {"improvement_ratio", std::isfinite(rep.improvement_ratio) ? json(rep.improvement_ratio) : json(nullptr)},
               {"config_hash", h1},
               {"config", cfg.effective},
               {"version", kVersion},
               {"created", utc_now()}};
  write_json(cfg.path("summary.json"), summary);
  std::cout << json{{"pearson_r", rep.pearson_r}, {"n_pairs", rep.n_pairs}}.dump() << "\n";
  return 0;
}

/// Finite-difference derivative checks at seeded (theta, b) points. The
/// points are random rather than trained: near an optimum the gradient is
/// ~0 and a relative error says nothing.
int cmd_check(const RunConfig& cfg) {
  const Problem p = load_problem(cfg);
  const LossModel& model = *p.model;

  const std::size_t points = 10;
  double worst_g = 0.0, worst_h = 0.0;
  json rows = json::array();
  for (std::size_t k = 0; k < points; ++k) {
    Rng rng(hash_combine(cfg.seed(), k));
    Vector theta(static_cast<Eigen::Index>(model.dim()));
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = 0.3 * rng.normal();
    PresenceVector b = model.full_presence();
    if (k > 0) b.set(static_cast<std::size_t>(rng.below(model.n_objects())), false);
    const double g = check_gradient(model, theta, b);
    const double h = check_hessian(model, theta, b);
    worst_g = std::max(worst_g, g);
    worst_h = std::max(worst_h, h);
    rows.push_back({{"point", k}, {"absent", b.count() == b.size() ? json(nullptr) : json(b.size() - b.count())},
                    {"grad_error", g}, {"hessian_error", h}});
  }
  json report{{"model", model.name()},
              {"max_grad_error", worst_g},
              {"max_hessian_error", worst_h},
              {"pass", worst_g <= 1e-4 && worst_h <= 1e-3},
              {"points", rows}};
  fs::create_directories(cfg.out);
  write_json(cfg.path("check.json"), report);
  std::cout << json{{"max_grad_error", worst_g}, {"max_hessian_error", worst_h}, {"pass", report["pass"]}}.dump() << "\n";
  return 0;
}

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
      return 1;
    case ErrorCode::DataError:
    case ErrorCode::EmptyGraph:
    case ErrorCode::EmptyTripletSet:
    case ErrorCode::NoPresentItems:
    case ErrorCode::NoEvents:
    case ErrorCode::EmptyRiskSet:
      return 2;
    case ErrorCode::SingularMatrix:
    case ErrorCode::Diverged:
    case ErrorCode::NonFinite:
    case ErrorCode::DegenerateInput:
    case ErrorCode::UnrealizableMixture:
      return 3;
  }
  return 3;
}

int report_error(const std::string& code, const std::string& message, int exit) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}, {"exit_code", exit}}}}.dump() << "\n";
  return exit;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vif: influence-function attribution of training objects (Cox, embedding, ranking, logistic)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", vif::kVersion);
  Flags flags;

  auto add_common = [&](CLI::App* sub, bool solver_flags) {
    sub->add_option("--config", flags.config_path, "Run configuration (JSON)");
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { flags.seed = v; }, "Master seed");
    sub->add_option_function<std::string>("--out", [&](const std::string& v) { flags.out = v; }, "Output directory");
    sub->add_option_function<std::size_t>("--jobs", [&](const std::size_t& v) { flags.jobs = v; },
                                          "Worker threads for LOO retraining (default: all cores)");
    sub->add_flag("--force", flags.force, "Accept outputs produced under a different config");
    sub->add_option_function<std::string>("--checkpoint", [&](const std::string& v) { flags.checkpoint = v; },
                                          "Checkpoint path (default: OUT/checkpoint.bin)");
    if (solver_flags) {
      sub->add_option_function<std::string>("--solver", [&](const std::string& v) { flags.solver = v; },
                                            "Inverse-Hessian solver")
          ->check(CLI::IsMember({"explicit", "cg", "lissa"}));
      sub->add_option_function<double>("--damping", [&](const double& v) { flags.damping = v; }, "Damping lambda >= 0");
    }
  };

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset for the scenario");
  auto* train_cmd = app.add_subcommand("train", "Fit theta(1) and write a checkpoint");
  auto* attribute = app.add_subcommand("attribute", "Compute VIF scores (influences.csv)");
  auto* loo = app.add_subcommand("loo", "Brute-force leave-one-out retraining (loo.csv)");
  auto* compare_cmd = app.add_subcommand("compare", "Correlate influences with LOO scores (summary.json)");
  auto* check = app.add_subcommand("check", "Finite-difference gradient/Hessian checks");
  for (auto* s : {synth, train_cmd, attribute, loo, compare_cmd, check}) add_common(s, true);
  for (auto* s : {attribute, compare_cmd})
    s->add_option_function<std::string>("--influences", [&](const std::string& v) { flags.influences = v; },
                                        "influences.csv path");
  for (auto* s : {loo, compare_cmd})
    s->add_option_function<std::string>("--loo", [&](const std::string& v) { flags.loo = v; }, "loo.csv path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("ConfigError", e.what(), 1);
  }

  try {
    const RunConfig cfg = load_config(flags);
    if (*synth) return cmd_synth(cfg);
    if (*train_cmd) return cmd_train(cfg);
    if (*attribute) return cmd_attribute(cfg, flags);
    if (*loo) return cmd_loo(cfg, flags);
    if (*compare_cmd) return cmd_compare(cfg, flags);
    if (*check) return cmd_check(cfg);
  } catch (const vif::Error& e) {
    return report_error(std::string(vif::to_string(e.code())), e.what(), exit_code(e.code()));
  } catch (const nlohmann::json::exception& e) {
    return report_error("ConfigError", e.what(), 1);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error("DataError", e.what(), 2);
  }
  return 1;
}
