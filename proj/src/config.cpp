#include "ctscore/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ctscore {

using nlohmann::json;

namespace {

const std::map<ExperimentKind, std::string>& kind_names() {
  static const std::map<ExperimentKind, std::string> names{
      {ExperimentKind::kSimulate, "simulate"},
      {ExperimentKind::kScoreDirect, "score-direct"},
      {ExperimentKind::kScoreBridge, "score-bridge"},
      {ExperimentKind::kScoreMultilevel, "score-ml"},
      {ExperimentKind::kEstimate, "estimate"},
      {ExperimentKind::kBenchmark, "benchmark"},
  };
  return names;
}

// Reads `obj`, rejecting keys outside `allowed` so typos do not pass silently.
class Reader {
 public:
  Reader(const json& obj, std::string where, std::set<std::string> allowed)
      : obj_(obj), where_(std::move(where)) {
    if (!obj.is_object()) throw ConfigError(where_ + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
      if (!allowed.count(key)) throw ConfigError(where_ + ": unknown key \"" + key + "\"");
    }
  }

  template <class T>
  void get(const std::string& key, T& out) const {
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }
  void get_theta(const std::string& key, Theta& out) const {
    if (!obj_.contains(key)) return;
    std::vector<double> v;
    get(key, v);
    out = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  bool has(const std::string& key) const { return obj_.contains(key); }
  const json& at(const std::string& key) const { return obj_.at(key); }
  std::string path(const std::string& key) const { return where_ + "." + key; }

 private:
  const json& obj_;
  std::string where_;
};

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::string to_string(ExperimentKind kind) { return kind_names().at(kind); }

ExperimentKind parse_kind(const std::string& name) {
  for (const auto& [k, n] : kind_names()) {
    if (n == name) return k;
  }
  throw ConfigError("unknown experiment kind \"" + name + "\"");
}

MLConfig MLSpec::resolve() const {
  if (particles.empty()) return allocate_particles(L, l_star, rho, beta, scale);
  MLConfig cfg;
  cfg.l_star = l_star;
  cfg.L = L;
  cfg.rho = rho;
  cfg.beta = beta;
  cfg.particles = particles;
  cfg.validate();
  return cfg;
}

ModelSpec ExperimentConfig::model() const {
  ModelSpec m = builtin_model(model_id, fixed);
  if (box) m.set_domain(*box);
  return m;
}

BackendConfig ExperimentConfig::backend_config() const {
  BackendConfig b;
  if (backend == "direct") {
    b.kind = BackendKind::kDirect;
  } else if (backend == "bridge") {
    b.kind = BackendKind::kBridge;
  } else if (backend == "ml") {
    b.kind = BackendKind::kMultilevel;
    b.ml = ml.resolve();
  } else if (backend == "kalman") {
    b.kind = BackendKind::kKalman;
  } else {
    throw ConfigError("estimate.backend: unknown backend \"" + backend + "\"");
  }
  b.level = level;
  b.particles = particles;
  b.aux.proposal_scale = proposal_scale;
  b.fd_step = fd_step;
  return b;
}

Theta ExperimentConfig::data_theta() const { return data.theta ? *data.theta : theta; }

void ExperimentConfig::validate() const {
  ModelSpec m = [&] {
    try {
      return model();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
  }();
  auto check_theta = [&](const Theta& t, const std::string& key) {
    if (t.size() != m.param_dim()) {
      throw ConfigError(key + ": expected " + std::to_string(m.param_dim()) + " values");
    }
    if (!validate_theta(m, t)) throw ConfigError(key + ": outside the parameter domain");
  };
  if (kind == ExperimentKind::kEstimate) {
    check_theta(theta0, "theta0");
  } else if (data.source == "simulate" || kind != ExperimentKind::kSimulate) {
    check_theta(theta, "theta");
  }
  if (data.source == "simulate") {
    check_theta(data_theta(), "data.theta");
  } else if (data.source == "csv") {
    if (data.path.empty()) throw ConfigError("data.path: required for csv data");
  } else {
    throw ConfigError("data.source: expected \"simulate\" or \"csv\"");
  }
  if (!m.admissible(x_star)) throw ConfigError("x_star: outside the state space");
  if (horizon < 1) throw ConfigError("horizon: must be >= 1");
  if (level < 0) throw ConfigError("level: must be >= 0");
  if (particles < 1) throw ConfigError("particles: must be >= 1");
  if (replications < 1) throw ConfigError("replications: must be >= 1");
  if (workers < 1) throw ConfigError("workers: must be >= 1");
  if (!(proposal_scale > 0.0)) throw ConfigError("proposal_scale: must be > 0");
  const bool uses_ml = kind == ExperimentKind::kScoreMultilevel ||
                       (kind == ExperimentKind::kEstimate && backend == "ml");
  if (uses_ml) {
    try {
      ml.resolve();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("ml: ") + e.what());
    }
  }
  int finest = level;
  if (uses_ml) finest = ml.L;
  if (kind == ExperimentKind::kEstimate) {
    backend_config();
    if (mode != "online" && mode != "offline") {
      throw ConfigError("estimate.mode: expected \"online\" or \"offline\"");
    }
    if (mode == "online") {
      try {
        schedule.validate();
      } catch (const std::exception& e) {
        throw ConfigError(std::string("estimate: ") + e.what());
      }
    }
    if (iterations < 0) throw ConfigError("estimate.iterations: must be >= 0");
    if (backend == "kalman" && model_id != 1) {
      throw ConfigError("estimate.backend: the Kalman backend needs model 1");
    }
  }
  if (kind == ExperimentKind::kBenchmark) {
    if (benchmark.levels.size() < 3) throw ConfigError("benchmark.levels: need at least 3 levels");
    for (int L : benchmark.levels) {
      if (L < 1 || L > benchmark.reference_level) {
        throw ConfigError("benchmark.levels: every level must lie in 1..reference_level");
      }
      if (L < ml.l_star) throw ConfigError("benchmark.levels: every level must be >= ml.l_star");
    }
    for (const auto& method : benchmark.methods) {
      if (method != "ml" && method != "bridge" && method != "direct") {
        throw ConfigError("benchmark.methods: unknown method \"" + method + "\"");
      }
    }
    if (benchmark.reference != "kalman" && benchmark.reference != "bridge") {
      throw ConfigError("benchmark.reference: expected \"kalman\" or \"bridge\"");
    }
    if (benchmark.reference == "kalman" && model_id != 1) {
      throw ConfigError("benchmark.reference: the Kalman reference needs model 1");
    }
    finest = benchmark.reference_level;
  }
  if (data.source == "simulate" && data.level < finest) {
    throw ConfigError("data.level: must be at least the finest level used (" +
                      std::to_string(finest) + ")");
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  ExperimentConfig cfg;
  Reader r(doc, "config",
           {"kind", "model", "theta", "theta0", "x_star", "level", "particles", "horizon", "ml",
            "proposal_scale", "estimate", "benchmark", "data", "seed", "replications", "workers",
            "output"});
  if (r.has("kind")) {
    std::string kind;
    r.get("kind", kind);
    cfg.kind = parse_kind(kind);
  }
  if (r.has("model")) {
    Reader m(r.at("model"), "config.model", {"id", "kappa", "sigma", "beta", "box"});
    m.get("id", cfg.model_id);
    cfg.fixed.clear();
    for (const char* key : {"kappa", "sigma", "beta"}) {
      if (m.has(key)) {
        double v = 0.0;
        m.get(key, v);
        cfg.fixed[key] = v;
      }
    }
    if (m.has("box")) {
      Reader b(m.at("box"), "config.model.box", {"lower", "upper"});
      ThetaDomain d;
      b.get_theta("lower", d.lower);
      b.get_theta("upper", d.upper);
      cfg.box = d;
    }
  }
  r.get_theta("theta", cfg.theta);
  r.get_theta("theta0", cfg.theta0);
  r.get("x_star", cfg.x_star);
  r.get("level", cfg.level);
  r.get("particles", cfg.particles);
  r.get("horizon", cfg.horizon);
  r.get("proposal_scale", cfg.proposal_scale);
  r.get("seed", cfg.seed);
  r.get("replications", cfg.replications);
  r.get("workers", cfg.workers);
  r.get("output", cfg.output_dir);
  if (r.has("ml")) {
    Reader m(r.at("ml"), "config.ml", {"l_star", "L", "rho", "beta", "scale", "particles"});
    m.get("l_star", cfg.ml.l_star);
    m.get("L", cfg.ml.L);
    m.get("rho", cfg.ml.rho);
    m.get("beta", cfg.ml.beta);
    m.get("scale", cfg.ml.scale);
    m.get("particles", cfg.ml.particles);
  }
  if (r.has("estimate")) {
    Reader e(r.at("estimate"), "config.estimate",
             {"backend", "mode", "iterations", "c", "gamma", "fd_step"});
    e.get("backend", cfg.backend);
    e.get("mode", cfg.mode);
    e.get("iterations", cfg.iterations);
    e.get("c", cfg.schedule.c);
    e.get("gamma", cfg.schedule.gamma);
    e.get("fd_step", cfg.fd_step);
  }
  if (r.has("benchmark")) {
    Reader b(r.at("benchmark"), "config.benchmark",
             {"levels", "methods", "reference", "reference_level", "reference_particles",
              "bridge_scale", "direct_scale"});
    b.get("levels", cfg.benchmark.levels);
    b.get("methods", cfg.benchmark.methods);
    b.get("reference", cfg.benchmark.reference);
    b.get("reference_level", cfg.benchmark.reference_level);
    b.get("reference_particles", cfg.benchmark.reference_particles);
    b.get("bridge_scale", cfg.benchmark.bridge_scale);
    b.get("direct_scale", cfg.benchmark.direct_scale);
  }
  if (r.has("data")) {
    Reader d(r.at("data"), "config.data",
             {"source", "level", "theta", "y_star", "per_replication", "path", "seconds_per_unit",
              "log"});
    d.get("source", cfg.data.source);
    d.get("level", cfg.data.level);
    if (d.has("theta")) {
      Theta t;
      d.get_theta("theta", t);
      cfg.data.theta = t;
    }
    d.get("y_star", cfg.data.y_star);
    d.get("per_replication", cfg.data.per_replication);
    d.get("path", cfg.data.path);
    d.get("seconds_per_unit", cfg.data.seconds_per_unit);
    d.get("log", cfg.data.take_log);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string to_json(const ExperimentConfig& c) {
  json model{{"id", c.model_id}};
  for (const auto& [k, v] : c.fixed) model[k] = v;
  if (c.box) model["box"] = {{"lower", to_vector(c.box->lower)}, {"upper", to_vector(c.box->upper)}};
  json data{{"source", c.data.source},
            {"level", c.data.level},
            {"y_star", c.data.y_star},
            {"per_replication", c.data.per_replication},
            {"path", c.data.path},
            {"seconds_per_unit", c.data.seconds_per_unit},
            {"log", c.data.take_log}};
  if (c.data.theta) data["theta"] = to_vector(*c.data.theta);
  json doc{
      {"kind", to_string(c.kind)},
      {"model", model},
      {"theta", to_vector(c.theta)},
      {"theta0", to_vector(c.theta0)},
      {"x_star", c.x_star},
      {"level", c.level},
      {"particles", c.particles},
      {"horizon", c.horizon},
      {"ml",
       {{"l_star", c.ml.l_star},
        {"L", c.ml.L},
        {"rho", c.ml.rho},
        {"beta", c.ml.beta},
        {"scale", c.ml.scale},
        {"particles", c.ml.particles}}},
      {"proposal_scale", c.proposal_scale},
      {"estimate",
       {{"backend", c.backend},
        {"mode", c.mode},
        {"iterations", c.iterations},
        {"c", c.schedule.c},
        {"gamma", c.schedule.gamma},
        {"fd_step", c.fd_step}}},
      {"benchmark",
       {{"levels", c.benchmark.levels},
        {"methods", c.benchmark.methods},
        {"reference", c.benchmark.reference},
        {"reference_level", c.benchmark.reference_level},
        {"reference_particles", c.benchmark.reference_particles},
        {"bridge_scale", c.benchmark.bridge_scale},
        {"direct_scale", c.benchmark.direct_scale}}},
      {"data", data},
      {"seed", c.seed},
      {"replications", c.replications},
      {"workers", c.workers},
      {"output", c.output_dir},
  };
  return doc.dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
  // The worker count and output location do not change results.
  ExperimentConfig c = config;
  c.workers = 1;
  c.output_dir.clear();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : to_json(c)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

Theta vec(std::initializer_list<double> v) {
  Theta t(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) t[i++] = x;
  return t;
}

// Score settings per model: fixed constants, x_star and theta.
ExperimentConfig score_base(int model_id) {
  ExperimentConfig c;
  c.model_id = model_id;
  c.level = 10;
  c.horizon = 50;
  c.replications = 56;
  c.data.level = 10;
  switch (model_id) {
    case 1:
      c.fixed = {{"kappa", 2.0}, {"sigma", 0.3}};
      c.x_star = 0.2;
      c.theta = vec({-0.4, -0.5});
      break;
    case 2:
      c.fixed = {{"kappa", 2.2}, {"sigma", 0.25}};
      c.x_star = 1.0;
      c.theta = vec({1.3, -0.5, 0.18});
      break;
    case 3:
      c.fixed = {{"kappa", 1.5}, {"sigma", 0.25}};
      c.x_star = 2.0;
      c.theta = vec({2.0, 1.0, 0.45});
      break;
    default:
      c.fixed = {{"beta", 2.0}};
      c.x_star = 1.3;
      c.theta = vec({2.4, 0.5, 0.4});
      break;
  }
  return c;
}

// Estimation settings per model.
ExperimentConfig estimate_base(int model_id) {
  ExperimentConfig c;
  c.kind = ExperimentKind::kEstimate;
  c.model_id = model_id;
  c.level = 10;
  c.particles = 2000;
  c.horizon = 20000;
  c.replications = 1;
  c.data.level = 10;
  switch (model_id) {
    case 1:
      c.fixed = {{"kappa", 2.0}, {"sigma", 0.3}};
      c.x_star = 0.2;
      c.data.theta = vec({-0.7, -0.5});
      c.theta0 = vec({-0.05, -1.5});
      c.schedule.gamma = 0.85;
      c.ml = {7, 10, 0.14, 1.0, 1.0, {}};
      break;
    case 2:
      c.fixed = {{"kappa", 2.2}, {"sigma", 0.25}};
      c.x_star = 1.8;
      c.data.theta = vec({1.3, -0.5, 0.18});
      c.theta0 = vec({0.8, -1.0, 0.8});
      c.schedule.gamma = 0.95;
      c.ml = {7, 10, 0.09, 1.0, 1.0, {}};
      break;
    case 3:
      c.fixed = {{"kappa", 2.0}, {"sigma", 0.25}};
      c.x_star = 1.5;
      c.data.theta = vec({2.0, 1.0, 0.45});
      c.theta0 = vec({1.24, 0.6, 1.11});
      c.schedule.gamma = 0.9;
      c.ml = {7, 10, 0.11, 1.0, 1.0, {}};
      break;
    default:
      c.fixed = {{"beta", 2.0}};
      c.x_star = 1.3;
      c.level = 9;
      c.particles = 2500;
      c.horizon = 11425;
      c.theta0 = vec({2.4, 0.5, 0.4});
      c.schedule.gamma = 0.82;
      c.ml = {8, 9, 0.1, 0.5, 1.4, {}};
      c.data.source = "csv";
      c.data.path = "mid_prices.csv";
      c.data.seconds_per_unit = 512;
      c.data.take_log = true;
      break;
  }
  c.theta = c.theta0;
  return c;
}

std::map<std::string, ExperimentConfig> build_presets() {
  std::map<std::string, ExperimentConfig> p;
  const std::size_t direct_n[] = {3000, 7000, 4000, 5000};
  const std::size_t bridge_n[] = {1000, 2000, 1000, 1500};
  for (int id = 1; id <= 4; ++id) {
    const std::string m = "model" + std::to_string(id);
    ExperimentConfig d = score_base(id);
    d.kind = ExperimentKind::kScoreDirect;
    d.particles = direct_n[id - 1];
    p["fig3-" + m] = d;
    ExperimentConfig b = score_base(id);
    b.kind = ExperimentKind::kScoreBridge;
    b.particles = bridge_n[id - 1];
    p["fig3-" + m + "-bridge"] = b;
    for (auto* c : {&d, &b}) {
      c->horizon = 20;
      c->replications = 16;
      c->particles /= 4;
    }
    p["fig3-" + m + "-desk"] = d;
    p["fig3-" + m + "-bridge-desk"] = b;

    ExperimentConfig bench = score_base(id);
    bench.kind = ExperimentKind::kBenchmark;
    bench.ml.l_star = id == 4 ? 8 : 7;
    bench.ml.rho = 0.14;
    bench.ml.beta = id == 4 ? 0.5 : 1.0;
    for (int L = bench.ml.l_star; L <= 10; ++L) bench.benchmark.levels.push_back(L);
    bench.benchmark.reference = "bridge";
    bench.benchmark.reference_level = 11;
    bench.benchmark.reference_particles = 2000;
    bench.data.level = 11;
    bench.horizon = 50;
    if (id != 4 || bench.benchmark.levels.size() >= 3) p["fig4-" + m + "-paper"] = bench;

    ExperimentConfig est = estimate_base(id);
    const std::string fig = "fig" + std::to_string(4 + id) + "-" + m;
    p[fig] = est;
    ExperimentConfig est_ml = est;
    est_ml.backend = "ml";
    p[fig + "-ml"] = est_ml;
    if (id <= 3) {
      est.level = 9;
      est.particles = 1000;
      est.horizon = 2000;
      est.replications = 8;
      est.data.level = 9;
      est.data.per_replication = true;
      p[fig + "-desk"] = est;
    }
  }
  // Model 4's sweep of top levels has only two points at paper scale.
  p.erase("fig4-model4-paper");

  ExperimentConfig fig4 = score_base(1);
  fig4.kind = ExperimentKind::kBenchmark;
  fig4.horizon = 5;
  fig4.replications = 16;
  fig4.ml.l_star = 5;
  fig4.ml.rho = 0.14;
  fig4.benchmark.levels = {6, 7, 8, 9};
  fig4.benchmark.reference = "kalman";
  fig4.benchmark.reference_level = 10;
  fig4.data.level = 10;
  fig4.data.per_replication = true;
  p["fig4-model1"] = fig4;

  for (const char* kind : {"direct", "bridge"}) {
    ExperimentConfig c = score_base(1);
    c.kind = std::string(kind) == "direct" ? ExperimentKind::kScoreDirect
                                           : ExperimentKind::kScoreBridge;
    c.horizon = 40;
    c.particles = 500;
    c.replications = 8;
    p[std::string("fig1-model1-") + kind] = c;
  }

  ExperimentConfig sim = score_base(1);
  sim.kind = ExperimentKind::kSimulate;
  sim.replications = 1;
  p["simulate-model1"] = sim;

  ExperimentConfig ml = score_base(1);
  ml.kind = ExperimentKind::kScoreMultilevel;
  ml.horizon = 20;
  ml.replications = 16;
  ml.ml = {5, 8, 0.14, 1.0, 1.0, {}};
  p["score-ml-model1"] = ml;
  return p;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, cfg] : build_presets()) names.push_back(name);
  return names;
}

ExperimentConfig preset(const std::string& name) {
  const auto all = build_presets();
  const auto it = all.find(name);
  if (it == all.end()) throw ConfigError("unknown preset \"" + name + "\"");
  return it->second;
}

}  // namespace ctscore
