#include "ctscore/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <map>
#include <mutex>
#include <thread>

#include "ctscore/csv.hpp"
#include "ctscore/estimation.hpp"
#include "ctscore/multilevel.hpp"
#include "ctscore/smoother_bridge.hpp"
#include "ctscore/smoother_direct.hpp"
#include "ctscore/summary.hpp"

namespace ctscore {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string numbered(const std::string& stem, int rep) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%03d.csv", rep);
  return stem + buf;
}

std::vector<std::string> indexed(const std::string& name, Eigen::Index d) {
  std::vector<std::string> out;
  for (Eigen::Index i = 1; i <= d; ++i) out.push_back(name + "_" + std::to_string(i));
  return out;
}

template <class... Parts>
std::vector<std::string> concat(Parts&&... parts) {
  std::vector<std::string> out;
  (out.insert(out.end(), parts.begin(), parts.end()), ...);
  return out;
}

void append(std::vector<double>& row, const Eigen::VectorXd& v) {
  row.insert(row.end(), v.data(), v.data() + v.size());
}

struct Context {
  const ExperimentConfig& cfg;
  ModelSpec model;
  std::string comment;
  fs::path dir;
  std::ostream* log;
  std::mutex log_mutex;

  void note(const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    *log << msg << std::endl;
  }
  fs::path file(const std::string& name, ExperimentResult& result) const {
    result.files.push_back(dir / name);
    return dir / name;
  }
};

void write_failures(Context& ctx, ExperimentResult& result) {
  if (result.failures.empty()) return;
  std::ofstream out(ctx.file("failures.txt", result));
  for (const auto& [rep, msg] : result.failures) out << rep << ": " << msg << "\n";
}

// Replications share one dataset unless data.per_replication is set.
int data_index(const ExperimentConfig& cfg, int rep) { return cfg.data.per_replication ? rep : 0; }

std::vector<std::pair<int, std::string>> collect(const std::vector<std::string>& errors) {
  std::vector<std::pair<int, std::string>> out;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) out.emplace_back(static_cast<int>(i), errors[i]);
  }
  return out;
}

void run_simulate(Context& ctx, ExperimentResult& result) {
  const auto& cfg = ctx.cfg;
  std::vector<HiddenPath> hidden(cfg.replications);
  std::vector<ObsRecord> obs(cfg.replications);
  std::vector<std::function<void()>> tasks;
  for (int r = 0; r < cfg.replications; ++r) {
    tasks.push_back([&, r] { obs[r] = experiment_data(cfg, r, &hidden[r]); });
  }
  result.failures = collect(run_parallel(tasks, cfg.workers));
  for (int r = 0; r < cfg.replications; ++r) {
    if (obs[r].increments.empty()) continue;
    const double dt = std::ldexp(1.0, -obs[r].level);
    if (!hidden[r].values.empty()) {
      CsvWriter h(ctx.file(numbered("hidden", r), result), {"t", "x"}, ctx.comment);
      for (std::size_t k = 0; k < hidden[r].values.size(); ++k) {
        h.row({static_cast<double>(k) * dt, hidden[r].values[k]});
      }
    }
    CsvWriter o(ctx.file(numbered("obs", r), result), {"t", "y", "dy"}, ctx.comment);
    const auto path = obs[r].path();
    for (std::size_t k = 0; k < path.size(); ++k) {
      const double dy = k < obs[r].increments.size() ? obs[r].increments[k] : 0.0;
      o.row({static_cast<double>(k) * dt, path[k], dy});
    }
  }
}

// Score trajectories from one algorithm.
std::vector<ScoreEstimate> score_run(const ExperimentConfig& cfg, const ModelSpec& model,
                                     const ObsRecord& obs, int rep) {
  AuxSpec aux;
  aux.proposal_scale = cfg.proposal_scale;
  switch (cfg.kind) {
    case ExperimentKind::kScoreDirect:
      return run_alg1(model, cfg.theta, obs, cfg.level, cfg.particles, cfg.horizon, cfg.x_star,
                      RandomStream(cfg.seed, {static_cast<std::uint64_t>(rep), StreamRole::kDirect}));
    case ExperimentKind::kScoreBridge:
      return run_alg3(model, cfg.theta, obs, cfg.level, cfg.particles, cfg.horizon, cfg.x_star,
                      RandomStream(cfg.seed, {static_cast<std::uint64_t>(rep), StreamRole::kBridge}),
                      {}, aux);
    default: {
      RandomStream rng(cfg.seed, {static_cast<std::uint64_t>(rep), StreamRole::kCoupled});
      return run_ml(model, cfg.theta, obs, cfg.ml.resolve(), cfg.horizon, cfg.x_star, rng, aux);
    }
  }
}

void run_score(Context& ctx, ExperimentResult& result) {
  const auto& cfg = ctx.cfg;
  const int R = cfg.replications;
  const bool oracle = ctx.model.id() == 1;
  const int datasets = cfg.data.per_replication ? R : 1;
  std::vector<ObsRecord> data(datasets);
  std::vector<std::vector<Eigen::VectorXd>> kalman(datasets);
  std::vector<std::vector<ScoreEstimate>> runs(R);
  std::vector<double> wall(R, 0.0);

  std::vector<std::function<void()>> prep;
  for (int i = 0; i < datasets; ++i) {
    prep.push_back([&, i] {
      data[i] = experiment_data(cfg, i);
      if (oracle) {
        kalman[i] = kalman_score_path(ctx.model, cfg.theta, data[i], cfg.x_star, cfg.horizon,
                                      cfg.fd_step);
      }
    });
  }
  const auto prep_errors = run_parallel(prep, cfg.workers);
  for (const auto& e : prep_errors) {
    if (!e.empty()) throw Error("data generation failed: " + e);
  }

  std::vector<std::function<void()>> tasks;
  for (int r = 0; r < R; ++r) {
    tasks.push_back([&, r] {
      const auto start = Clock::now();
      runs[r] = score_run(cfg, ctx.model, data[data_index(cfg, r)], r);
      wall[r] = seconds_since(start);
      ctx.note("replication " + std::to_string(r) + " done in " + std::to_string(wall[r]) + " s");
    });
  }
  result.failures = collect(run_parallel(tasks, cfg.workers));

  const Eigen::Index d = ctx.model.param_dim();
  for (int r = 0; r < R; ++r) {
    if (runs[r].empty()) continue;
    auto header = concat(std::vector<std::string>{"time"}, indexed("score", d));
    if (oracle) header = concat(header, indexed("kalman", d));
    header = concat(header, std::vector<std::string>{"ess", "backward_ess", "pair_failures",
                                                     "drift_evals", "density_evals",
                                                     "gaussian_draws"});
    CsvWriter w(ctx.file(numbered("score", r), result), header, ctx.comment);
    for (const auto& e : runs[r]) {
      std::vector<double> row{static_cast<double>(e.time)};
      append(row, e.value);
      if (oracle) append(row, kalman[data_index(cfg, r)][e.time - 1]);
      for (double v : {e.ess, e.backward_ess, static_cast<double>(e.pair_failures),
                       static_cast<double>(e.cost.drift_evals),
                       static_cast<double>(e.cost.density_evals),
                       static_cast<double>(e.cost.gaussian_draws)}) {
        row.push_back(v);
      }
      w.row(row);
    }
  }

  std::vector<int> ok;
  for (int r = 0; r < R; ++r) {
    if (!runs[r].empty()) ok.push_back(r);
  }
  if (ok.empty()) return;
  auto header = concat(std::vector<std::string>{"time"}, indexed("mean", d), indexed("se", d));
  if (oracle) header = concat(header, indexed("kalman", d));
  header.push_back("replications");
  CsvWriter s(ctx.file("summary.csv", result), header, ctx.comment);
  for (int k = 0; k < cfg.horizon; ++k) {
    std::vector<Eigen::VectorXd> samples;
    Eigen::VectorXd ref = Eigen::VectorXd::Zero(d);
    for (int r : ok) {
      samples.push_back(runs[r][k].value);
      if (oracle) ref += kalman[data_index(cfg, r)][k];
    }
    std::vector<double> row{static_cast<double>(k + 1)};
    if (samples.size() >= 2) {
      const MeanSe ms = mean_se(samples);
      append(row, ms.mean);
      append(row, ms.se);
    } else {
      append(row, samples.front());
      append(row, Eigen::VectorXd::Zero(d));
    }
    if (oracle) append(row, ref / static_cast<double>(ok.size()));
    row.push_back(static_cast<double>(ok.size()));
    s.row(row);
  }

  CsvWriter t(ctx.file("timing.csv", result), {"replication", "wall_seconds"}, ctx.comment);
  for (int r : ok) t.row({static_cast<double>(r), wall[r]});
}

void run_estimate(Context& ctx, ExperimentResult& result) {
  const auto& cfg = ctx.cfg;
  const int R = cfg.replications;
  const BackendConfig backend = cfg.backend_config();
  const Eigen::Index d = ctx.model.param_dim();
  std::vector<std::vector<RMLRecord>> online(R);
  std::vector<std::vector<Theta>> offline(R);
  std::vector<char> done(R, 0);

  std::vector<std::function<void()>> tasks;
  for (int r = 0; r < R; ++r) {
    tasks.push_back([&, r] {
      const ObsRecord obs = experiment_data(cfg, data_index(cfg, r));
      RandomStream rng(cfg.seed, {static_cast<std::uint64_t>(r), StreamRole::kEstimation});
      if (cfg.mode == "online") {
        online[r] = run_rml(ctx.model, obs, backend, cfg.schedule, cfg.theta0, cfg.horizon,
                            cfg.x_star, rng);
      } else {
        offline[r] = offline_gradient(ctx.model, obs, backend, cfg.schedule, cfg.theta0,
                                      cfg.iterations, cfg.horizon, cfg.x_star, rng);
      }
      done[r] = 1;
      ctx.note("replication " + std::to_string(r) + " done");
    });
  }
  result.failures = collect(run_parallel(tasks, cfg.workers));

  auto final_header = concat(std::vector<std::string>{"replication"}, indexed("final", d),
                             indexed("average", d));
  if (cfg.data.source == "simulate") final_header = concat(final_header, indexed("error", d));
  CsvWriter s(ctx.file("summary.csv", result), final_header, ctx.comment);
  const Theta truth = cfg.data_theta();
  for (int r = 0; r < R; ++r) {
    if (!done[r]) continue;
    std::vector<Theta> path;
    if (cfg.mode == "online") {
      CsvWriter w(ctx.file(numbered("theta", r), result),
                  concat(std::vector<std::string>{"time"}, indexed("theta", d),
                         indexed("estimate", d),
                         std::vector<std::string>{"step_size", "increment_norm", "collapsed",
                                                  "rejected", "clipped", "pair_failures"}),
                  ctx.comment);
      for (const auto& rec : online[r]) {
        std::vector<double> row{static_cast<double>(rec.time)};
        append(row, rec.theta);
        append(row, rec.estimate.size() == d ? rec.estimate : Eigen::VectorXd::Constant(d, NAN));
        for (double v : {rec.step_size, rec.increment_norm, double(rec.collapsed),
                         double(rec.rejected), double(rec.clipped), double(rec.pair_failures)}) {
          row.push_back(v);
        }
        w.row(row);
        path.push_back(rec.theta);
      }
    } else {
      CsvWriter w(ctx.file(numbered("theta", r), result),
                  concat(std::vector<std::string>{"iteration"}, indexed("theta", d)), ctx.comment);
      for (std::size_t m = 0; m < offline[r].size(); ++m) {
        std::vector<double> row{static_cast<double>(m)};
        append(row, offline[r][m]);
        w.row(row);
      }
      path = offline[r];
    }
    if (path.empty()) continue;
    const std::size_t window = std::min<std::size_t>(200, path.size());
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(d);
    for (std::size_t i = path.size() - window; i < path.size(); ++i) avg += path[i];
    avg /= static_cast<double>(window);
    std::vector<double> row{static_cast<double>(r)};
    append(row, path.back());
    append(row, avg);
    if (cfg.data.source == "simulate") append(row, (avg - truth).cwiseAbs());
    s.row(row);
  }
}

void run_benchmark(Context& ctx, ExperimentResult& result) {
  const auto& cfg = ctx.cfg;
  const auto& b = cfg.benchmark;
  const int R = cfg.replications;
  const Eigen::Index d = ctx.model.param_dim();
  const int datasets = cfg.data.per_replication ? R : 1;
  AuxSpec aux;
  aux.proposal_scale = cfg.proposal_scale;

  std::vector<ObsRecord> data(datasets);
  std::vector<std::vector<Eigen::VectorXd>> reference(datasets);
  std::vector<std::function<void()>> prep;
  for (int i = 0; i < datasets; ++i) {
    prep.push_back([&, i] {
      data[i] = experiment_data(cfg, i);
      const ObsRecord ref_obs = coarsen_obs(data[i], b.reference_level);
      if (b.reference == "kalman") {
        reference[i] =
            kalman_score_path(ctx.model, cfg.theta, ref_obs, cfg.x_star, cfg.horizon, cfg.fd_step);
      } else {
        RandomStream rng(cfg.seed ^ 0x5eedu,
                         {static_cast<std::uint64_t>(i), StreamRole::kBridge,
                          static_cast<std::uint32_t>(b.reference_level)});
        for (const auto& e : run_alg3(ctx.model, cfg.theta, ref_obs, b.reference_level,
                                      b.reference_particles, cfg.horizon, cfg.x_star, rng, {},
                                      aux)) {
          reference[i].push_back(e.value);
        }
      }
    });
  }
  for (const auto& e : run_parallel(prep, cfg.workers)) {
    if (!e.empty()) throw Error("reference run failed: " + e);
  }
  ctx.note("reference computed");

  struct Cell {
    std::string method;
    int L;
    int rep;
    std::size_t particles = 0;
    Eigen::VectorXd sq;  // mean over unit times of the squared error
    double cost = 0.0;
    double wall = 0.0;
    bool ok = false;
  };
  std::vector<Cell> cells;
  for (const auto& method : b.methods) {
    for (int L : b.levels) {
      for (int r = 0; r < R; ++r) cells.push_back(Cell{method, L, r, 0, {}, 0.0, 0.0, false});
    }
  }
  std::vector<std::function<void()>> tasks;
  for (auto& cell : cells) {
    tasks.push_back([&, c = &cell] {
      const ObsRecord& obs = data[data_index(cfg, c->rep)];
      const auto& ref = reference[data_index(cfg, c->rep)];
      const auto start = Clock::now();
      const StreamKey key{static_cast<std::uint64_t>(c->rep), StreamRole::kCoupled,
                          static_cast<std::uint32_t>(c->L)};
      std::vector<ScoreEstimate> est;
      if (c->method == "ml") {
        MLSpec spec = cfg.ml;
        spec.L = c->L;
        spec.particles.clear();
        const MLConfig ml = spec.resolve();
        for (std::size_t n : ml.particles) c->particles += n;
        RandomStream rng(cfg.seed, key);
        est = run_ml(ctx.model, cfg.theta, obs, ml, cfg.horizon, cfg.x_star, rng, aux);
      } else {
        const double scale = c->method == "bridge" ? b.bridge_scale : b.direct_scale;
        c->particles = std::max<std::size_t>(
            2, static_cast<std::size_t>(std::floor(scale * std::ldexp(1.0, c->L))));
        if (c->method == "bridge") {
          est = run_alg3(ctx.model, cfg.theta, obs, c->L, c->particles, cfg.horizon, cfg.x_star,
                         RandomStream(cfg.seed, {key.replication, StreamRole::kBridge, key.level}),
                         {}, aux);
        } else {
          est = run_alg1(ctx.model, cfg.theta, obs, c->L, c->particles, cfg.horizon, cfg.x_star,
                         RandomStream(cfg.seed, {key.replication, StreamRole::kDirect, key.level}));
        }
      }
      c->sq = Eigen::VectorXd::Zero(d);
      for (std::size_t k = 0; k < est.size(); ++k) c->sq += (est[k].value - ref[k]).cwiseAbs2();
      c->sq /= static_cast<double>(est.size());
      c->cost = static_cast<double>(est.back().cost.total());
      c->wall = seconds_since(start);
      c->ok = true;
      ctx.note(c->method + " L=" + std::to_string(c->L) + " rep " + std::to_string(c->rep) +
               " done");
    });
  }
  const auto errors = run_parallel(tasks, cfg.workers);
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) {
      result.failures.emplace_back(cells[i].rep, cells[i].method + " L=" +
                                                     std::to_string(cells[i].L) + ": " + errors[i]);
    }
  }

  CsvWriter reps(ctx.file("benchmark_replications.csv", result),
                 concat(std::vector<std::string>{"method", "L", "replication", "particles"},
                        indexed("mse", d), std::vector<std::string>{"cost"}),
                 ctx.comment);
  std::map<std::pair<std::string, int>, BenchmarkResult> agg;
  std::vector<std::pair<std::string, int>> order;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    std::vector<double> row{static_cast<double>(c.L), static_cast<double>(c.rep),
                            static_cast<double>(c.particles)};
    append(row, c.sq);
    row.push_back(c.cost);
    reps.row({c.method}, row);
    const auto key = std::make_pair(c.method, c.L);
    auto [it, fresh] = agg.try_emplace(key);
    BenchmarkResult& br = it->second;
    if (fresh) {
      order.push_back(key);
      br.method = c.method;
      br.level = c.L;
      br.particles = c.particles;
      br.mse = Eigen::VectorXd::Zero(d);
      br.reference = b.reference + "@" + std::to_string(b.reference_level);
    }
    br.mse += c.sq;
    br.cost += c.cost;
    br.wall_seconds += c.wall;
    br.replications += 1;
  }
  CsvWriter out(ctx.file("benchmark.csv", result),
                concat(std::vector<std::string>{"method", "reference", "L", "particles",
                                                "replications", "mse"},
                       indexed("mse", d), std::vector<std::string>{"cost"}),
                ctx.comment);
  CsvWriter timing(ctx.file("timing.csv", result), {"method", "L", "wall_seconds"}, ctx.comment);
  for (const auto& key : order) {
    BenchmarkResult& br = agg[key];
    br.mse /= br.replications;
    br.cost /= br.replications;
    br.mse_total = br.mse.sum();
    std::vector<double> row{static_cast<double>(br.level), static_cast<double>(br.particles),
                            static_cast<double>(br.replications), br.mse_total};
    append(row, br.mse);
    row.push_back(br.cost);
    out.row({br.method, br.reference}, row);
    timing.row({br.method}, {static_cast<double>(br.level), br.wall_seconds});
  }

  // Slope fits need the benchmark file closed and complete; fit from memory.
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> pts;
  for (const auto& key : order) {
    pts[key.first].first.push_back(agg[key].mse_total);
    pts[key.first].second.push_back(agg[key].cost);
  }
  CsvWriter fit(ctx.file("fit.csv", result), {"method", "points", "slope", "slope_se"},
                ctx.comment);
  for (const auto& [method, p] : pts) {
    if (p.first.size() < 3) continue;
    const SlopeFit f = cost_mse_slope(p.first, p.second);
    fit.row({method}, {static_cast<double>(f.points), f.slope, f.slope_se});
  }
}

}  // namespace

ObsRecord experiment_data(const ExperimentConfig& cfg, int rep, HiddenPath* hidden) {
  if (cfg.data.source == "csv") {
    ObsRecord obs = load_price_csv(cfg.data.path, cfg.data.seconds_per_unit, cfg.data.take_log);
    if (obs.horizon < cfg.horizon) {
      throw ConfigError("data.path: " + std::to_string(obs.horizon) +
                        " unit times available, horizon needs " + std::to_string(cfg.horizon));
    }
    return obs;
  }
  const ModelSpec model = cfg.model();
  const auto r = static_cast<std::uint64_t>(rep);
  RandomStream hidden_rng(cfg.seed, {r, StreamRole::kHidden});
  RandomStream obs_rng(cfg.seed, {r, StreamRole::kObservations});
  HiddenPath path =
      simulate_hidden(model, cfg.data_theta(), Grid{cfg.data.level, cfg.horizon}, cfg.x_star,
                      hidden_rng);
  ObsRecord obs = simulate_observations(model, cfg.data_theta(), path, cfg.data.y_star, obs_rng);
  if (hidden) *hidden = std::move(path);
  return obs;
}

std::vector<Eigen::VectorXd> kalman_score_path(const ModelSpec& model, const Theta& theta,
                                               const ObsRecord& obs, double x_star, int horizon,
                                               double h) {
  const auto* lin = std::get_if<LinearGaussianModel>(&model.variant());
  if (!lin) throw std::invalid_argument("kalman_score_path: needs model 1");
  const Eigen::Index d = theta.size();
  std::vector<LinearGaussianFilter> plus, minus;
  for (Eigen::Index i = 0; i < d; ++i) {
    LinearGaussianModel::Params tp = to_params<LinearGaussianModel>(theta);
    LinearGaussianModel::Params tm = tp;
    tp[i] += h;
    tm[i] -= h;
    plus.emplace_back(*lin, tp, x_star);
    minus.emplace_back(*lin, tm, x_star);
  }
  const double dt = std::ldexp(1.0, -obs.level);
  std::vector<Eigen::VectorXd> out;
  for (int k = 0; k < horizon; ++k) {
    Eigen::VectorXd g(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      plus[i].advance(obs.unit_block(k), dt);
      minus[i].advance(obs.unit_block(k), dt);
      g[i] = (plus[i].loglik() - minus[i].loglik()) / (2.0 * h);
    }
    out.push_back(g);
  }
  return out;
}

std::vector<std::string> run_parallel(const std::vector<std::function<void()>>& tasks,
                                      int workers) {
  std::vector<std::string> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        tasks[i]();
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(std::max(workers, 1), tasks.size());
  if (n <= 1) {
    worker();
    return errors;
  }
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return errors;
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  Context ctx{config, config.model(),
              "config_hash=" + config_hash(config) + " seed=" + std::to_string(config.seed),
              config.output_dir, log, {}};
  fs::create_directories(ctx.dir);
  {
    std::ofstream cfg_out(ctx.dir / "config.json");
    cfg_out << to_json(config) << "\n";
  }
  ExperimentResult result;
  result.replications = config.replications;
  result.files.push_back(ctx.dir / "config.json");
  switch (config.kind) {
    case ExperimentKind::kSimulate:
      run_simulate(ctx, result);
      break;
    case ExperimentKind::kScoreDirect:
    case ExperimentKind::kScoreBridge:
    case ExperimentKind::kScoreMultilevel:
      run_score(ctx, result);
      break;
    case ExperimentKind::kEstimate:
      run_estimate(ctx, result);
      break;
    case ExperimentKind::kBenchmark:
      run_benchmark(ctx, result);
      break;
  }
  write_failures(ctx, result);
  return result;
}

}  // namespace ctscore
