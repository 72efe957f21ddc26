// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers as arguments
// to run a subset; artifacts go to $ROWLAB_ACCEPTANCE_OUT (default ./acceptance_output).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rowlab/bench.hpp"
#include "rowlab/config.hpp"
#include "rowlab/env.hpp"
#include "rowlab/geometry.hpp"
#include "rowlab/nn.hpp"
#include "rowlab/ppo.hpp"
#include "rowlab/rowmap.hpp"
#include "rowlab/sensor.hpp"
#include "rowlab/text_io.hpp"
#include "rowlab/world.hpp"

using namespace rowlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  std::string name;
  double budget_s;  // 0 = no time limit asserted
  std::function<Outcome()> run;
};

fs::path output_dir() {
  const char* env = std::getenv("ROWLAB_ACCEPTANCE_OUT");
  fs::path dir = env ? fs::path(env) : fs::path("acceptance_output");
  fs::create_directories(dir);
  return dir;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------------------

Outcome compression_identity() {
  // A ring of cylinders around the sensor returns on every ray.
  std::vector<world::Plant> ring;
  for (int k = 0; k < 400; ++k) {
    const double a = 2 * std::numbers::pi * k / 400;
    ring.push_back({{1.2 * std::cos(a), 1.2 * std::sin(a)}, 0.03, 1.5});
  }
  const world::PlantationMap map(world::RowSpec::straight(10.0), ring, {});
  const sensor::PointCloud cloud = sensor::sweep({{0, 0}, 0}, map, sensor::LidarConfig{}, 1);
  const rowmap::RowMap rm = rowmap::transform(cloud, rowmap::VoxelGridSpec{});
  const std::size_t scalars_in = 3 * cloud.size();
  const std::size_t scalars_out = rm.cells.size();
  const double reduction = 100.0 * (1.0 - static_cast<double>(scalars_out) / scalars_in);
  const bool pass = cloud.size() == 7200 && scalars_out == 900 &&
                    std::abs(reduction - 95.83) < 0.005;
  return {pass, std::to_string(cloud.size()) + " points (" + std::to_string(scalars_in) +
                    " values) -> " + std::to_string(scalars_out) + " cells, reduction " +
                    fmt(reduction, 6) + "% (published 95.83%)"};
}

// Per-point binning into the default ROI, counting distinct occupied height levels.
std::vector<float> brute_force_map(const sensor::PointCloud& cloud) {
  std::map<std::pair<int, int>, std::set<int>> levels;
  for (const auto& p : cloud.points) {
    const int ix = static_cast<int>(std::floor(p.x() / 0.1));
    const int iy = static_cast<int>(std::floor(p.y() / 0.1));
    const int iz = static_cast<int>(std::floor(p.z() / 0.1));
    if (ix < 0 || ix >= 30 || iy < -15 || iy >= 15 || iz < -2 || iz >= 2) continue;
    levels[{ix, iy + 15}].insert(iz);
  }
  std::vector<float> cells(900, 0.0f);
  for (const auto& [cell, zs] : levels) {
    cells[static_cast<std::size_t>(cell.second * 30 + cell.first)] =
        static_cast<float>(zs.size()) / 4.0f;
  }
  return cells;
}

Outcome downsampling_oracle() {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> ux(-0.5, 3.5), uy(-2.0, 2.0), uz(-0.4, 0.4);
  std::uniform_int_distribution<int> count(0, 7200);
  int mismatches = 0;
  std::size_t occupied = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    sensor::PointCloud cloud;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) cloud.points.emplace_back(ux(rng), uy(rng), uz(rng));
    const rowmap::RowMap rm = rowmap::transform(cloud, rowmap::VoxelGridSpec{});
    if (rm.cells != brute_force_map(cloud)) ++mismatches;
    for (float v : rm.cells) occupied += v > 0 ? 1 : 0;
  }
  return {mismatches == 0, "1000 random clouds, " + std::to_string(mismatches) +
                               " mismatching maps, " + std::to_string(occupied) +
                               " occupied cells compared"};
}

// ---------------------------------------------------------------------------------------

// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) over a parameter set.
double gradient_relative_error(nn::Mlp<double>& net, const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& g, const std::vector<Eigen::Index>& params) {
  nn::Mlp<double>::Cache cache;
  net.forward(x, &cache);
  const Eigen::VectorXd analytic = net.backward(cache, g);
  Eigen::VectorXd a(static_cast<Eigen::Index>(params.size())), n(a.size());
  const double h = 1e-6;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Eigen::Index i = params[k];
    const double keep = net.parameters()[i];
    net.mutable_parameters()[i] = keep + h;
    const double up = (net.forward(x).array() * g.array()).sum();
    net.mutable_parameters()[i] = keep - h;
    const double down = (net.forward(x).array() * g.array()).sum();
    net.mutable_parameters()[i] = keep;
    a[static_cast<Eigen::Index>(k)] = analytic[i];
    n[static_cast<Eigen::Index>(k)] = (up - down) / (2 * h);
  }
  return (a - n).norm() / std::max({a.norm(), n.norm(), 1e-300});
}

Outcome gradient_correctness() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::vector<std::vector<int>> shapes{{4, 1}, {4, 8, 1}, {6, 16, 8, 2}, {5, 12, 12, 12, 3}};
  const std::vector<nn::Activation> acts{nn::Activation::kElu, nn::Activation::kTanh,
                                         nn::Activation::kIdentity};
  double worst = 0.0;
  int configs = 0;
  for (const auto& shape : shapes) {
    for (auto hidden : acts) {
      for (auto output : acts) {
        nn::Mlp<double> net(shape, hidden, output);
        net.init_orthogonal(rng, std::sqrt(2.0), 1.0);
        for (Eigen::Index i = 0; i < net.parameter_count(); ++i) {
          net.mutable_parameters()[i] += 0.1 * normal(rng);
        }
        Eigen::MatrixXd x(shape.front(), 6), g(shape.back(), 6);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
        std::vector<Eigen::Index> all(static_cast<std::size_t>(net.parameter_count()));
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
        worst = std::max(worst, gradient_relative_error(net, x, g, all));
        ++configs;
      }
    }
  }
  // The full-size actor and critic on stacked row maps; a random subset of parameters from
  // every layer.
  for (int pass = 0; pass < 2; ++pass) {
    nn::Mlp<double> net({2700, 512, 256, 128, 1}, nn::Activation::kElu);
    net.init_orthogonal(rng, std::sqrt(2.0), pass == 0 ? 0.01 : 1.0);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2700, 4);
    std::bernoulli_distribution occupied(0.05);
    std::uniform_int_distribution<int> level(1, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = occupied(rng) ? level(rng) / 4.0 : 0.0;
    Eigen::MatrixXd g(1, 4);
    for (Eigen::Index i = 0; i < 4; ++i) g(0, i) = normal(rng);
    // Parameters touched by occupied inputs carry gradient; sample them preferentially.
    std::vector<Eigen::Index> params;
    std::uniform_int_distribution<Eigen::Index> any(0, net.parameter_count() - 1);
    std::uniform_int_distribution<int> row(0, 511);
    for (int k = 0; k < 600; ++k) params.push_back(any(rng));
    for (int k = 0; k < 600; ++k) {
      int col = 0;
      do col = static_cast<int>(std::uniform_int_distribution<int>(0, 2699)(rng));
      while (x(col, k % 4) == 0.0);
      params.push_back(static_cast<Eigen::Index>(col) * 512 + row(rng));
    }
    const Eigen::Index tail = net.parameter_count();
    for (Eigen::Index i = tail - 200; i < tail; ++i) params.push_back(i);
    worst = std::max(worst, gradient_relative_error(net, x, g, params));
    ++configs;
  }
  return {worst <= 1e-6, std::to_string(configs) + " network configurations, worst relative error " +
                             fmt(worst, 3) + " (limit 1e-6)"};
}

// ---------------------------------------------------------------------------------------

Outcome gae_oracle() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> length(1, 10);
  std::bernoulli_distribution truncated(0.3);
  double worst = 0.0;
  for (int ep = 0; ep < 200; ++ep) {
    const int n = length(rng);
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n, 0);
    for (int k = 0; k < n; ++k) {
      r[k] = normal(rng);
      v[k] = normal(rng);
    }
    const bool cut = truncated(rng);
    const double boot = cut ? normal(rng) : 0.0;
    if (!cut) d[n - 1] = 1;
    const double gamma = 0.99;
    const auto got = ppo::gae(r, v, d, boot, gamma, 1.0);
    for (int t = 0; t < n; ++t) {
      double ret = 0.0, w = 1.0;
      for (int k = t; k < n; ++k) {
        ret += w * r[k];
        w *= gamma;
      }
      if (cut) ret += w * boot;
      worst = std::max(worst, std::abs(got.advantages[t] - (ret - v[t])));
    }
  }
  return {worst <= 1e-12, "200 episodes, max |error| " + fmt(worst, 3) + " (limit 1e-12)"};
}

// ---------------------------------------------------------------------------------------

Outcome reward_contract() {
  const env::Scenario scenario;
  const env::RewardConfig& cfg = scenario.env.reward;
  const double v = scenario.env.forward_speed, dt = scenario.env.dt;
  const double top = 5.0 * v * dt;
  env::RobotState prev;
  prev.last_omega = 0.0;
  std::vector<std::string> failures;

  // Worked examples.
  if (std::abs(env::reward(prev, prev, 0.0, false, cfg, dt) - 0.28175) > 1e-15) {
    failures.push_back("example 1");
  }
  if (env::reward(prev, prev, 1.5, true, cfg, dt) != -1.0) failures.push_back("example 2");
  if (std::abs(env::reward(prev, prev, std::sqrt(cfg.sigma / 2), false, cfg, dt) - 0.140875) >
      1e-15) {
    failures.push_back("example 3");
  }

  // Bounds and monotonicity on random command pairs.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> w(-1.5, 1.5);
  int checks = 0;
  for (int i = 0; i < 200000; ++i) {
    env::RobotState last;
    last.last_omega = w(rng);
    const double a = w(rng), b = w(rng);
    const bool hit = i % 4 == 0;
    const double ra = env::reward(last, prev, a, hit, cfg, dt);
    const double rb = env::reward(last, prev, b, hit, cfg, dt);
    if (ra < -1.0 || ra > top) failures.push_back("bounds");
    const bool a_smaller = std::abs(a - last.last_omega) <= std::abs(b - last.last_omega);
    if (a_smaller ? ra < rb : ra > rb) failures.push_back("monotonicity");
    checks += 2;
    if (failures.size() > 5) break;
  }

  // Rewards observed along random-policy rollouts.
  env::CropRowVecEnv envs(scenario, 16, 3);
  std::vector<double> actions(16);
  std::vector<EnvTransition> out(16);
  for (int t = 0; t < 200; ++t) {
    for (double& a : actions) a = w(rng);
    envs.step(actions, out);
    for (const auto& tr : out) {
      if (tr.reward < -1.0 || tr.reward > top) failures.push_back("rollout bounds");
      ++checks;
    }
  }
  std::string detail = "3 worked examples, " + std::to_string(checks) + " property checks, upper bound " +
                       fmt(top, 6);
  if (!failures.empty()) detail += "; first failure: " + failures.front();
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------------------

Outcome closed_form_traversal() {
  env::Scenario scenario;
  const bench::SweepSpec published = bench::SweepSpec::paper();
  scenario.row = bench::row_for(0.0, 0.0, published.row_length, scenario.row);
  const auto seeds = bench::trial_seeds(1, published.trials);
  const auto run = bench::run_trials(bench::ScriptedAgent(0.0), scenario, seeds);
  const bench::Summary s = bench::summarize(run.results);
  const bool pass = std::abs(s.avg_distance - 100.0) <= 0.06 && std::abs(s.avg_time - 177.46) <= 0.2 &&
                    s.success_rate == 1.0;
  return {pass, std::to_string(s.trials) + " trials: distance " + fmt(s.avg_distance, 6) + " m, time " +
                    fmt(s.avg_time, 6) + " s (published 100 m, 177.49 s), success " +
                    fmt(100 * s.success_rate) + "%"};
}

// ---------------------------------------------------------------------------------------

// Training run shared by the reproduction and ablation criteria.
struct TrainingLog {
  std::vector<ppo::IterationMetrics> metrics;
  ppo::Checkpoint checkpoint;
};

TrainingLog train_preset(config::RunConfig cfg, int max_iterations, const fs::path& dir,
                         const std::function<bool(const ppo::IterationMetrics&)>& stop = {}) {
  env::CropRowVecEnv envs(cfg.scenario, cfg.ppo.num_envs, mix_seed(cfg.seed, 1), cfg.train.threads);
  ppo::Trainer trainer(envs, cfg.ppo, mix_seed(cfg.seed, 2));
  TrainingLog log;
  std::string csv = ppo::metrics_csv_header();
  fs::create_directories(dir);
  for (int it = 0; it < max_iterations; ++it) {
    log.metrics.push_back(trainer.iterate());
    const auto& m = log.metrics.back();
    csv += ppo::metrics_csv_row(m);
    write_file(dir / "metrics.csv", csv);
    std::cerr << "  [" << cfg.preset << "] iter " << m.iteration << " return " << fmt(m.mean_return)
              << " success " << fmt(m.success_rate, 3) << "\n";
    if (stop && stop(m)) break;
  }
  log.checkpoint = trainer.checkpoint(config::emit_config(cfg));
  ppo::save_checkpoint((dir / "final.ckpt").string(), log.checkpoint);
  return log;
}

Outcome training_reproduction() {
  const fs::path dir = output_dir() / "straight_row_training";
  config::RunConfig cfg = config::preset("baseline");
  cfg.seed = 1;
  cfg.scenario.row = world::RowSpec::straight(25.0);
  // Stop once 90% of the rolling window of training episodes complete the row; the window
  // spans several iterations, so this cannot trigger on a lucky batch. Training episodes
  // sample actions, so this is stricter than it looks for the mean policy.
  const TrainingLog log = train_preset(cfg, 500, dir, [](const ppo::IterationMetrics& m) {
    return m.iteration >= 30 && m.success_rate >= 0.90;
  });
  const int iterations = static_cast<int>(log.metrics.size());

  const bench::PolicyAgent agent(log.checkpoint.policy, /*deterministic=*/true);
  const auto seeds = bench::trial_seeds(2024, 15);
  const auto run = bench::run_trials(agent, cfg.scenario, seeds);
  int completed = 0;
  for (const auto& r : run.results) completed += r.success ? 1 : 0;
  const bench::Summary s = bench::summarize(run.results);

  // Table-III-shaped output for the ten published plantation configurations.
  bench::SweepSpec spec = bench::SweepSpec::paper();
  spec.seed = 2024;
  const auto rows = bench::sweep(agent, cfg.scenario, spec);
  bench::write_sweep((output_dir() / "table3_sweep").string(), rows);
  const bool table_ok = rows.size() == 10;

  return {completed >= 14 && table_ok,
          std::to_string(iterations) + " iterations (" +
              std::to_string(log.checkpoint.env_steps) + " env steps), " +
              std::to_string(completed) + "/15 trials completed the 25 m row (need 14), mean distance " +
              fmt(s.avg_distance) + " m; " + std::to_string(rows.size()) +
              "-row sweep table written"};
}

// ---------------------------------------------------------------------------------------

Outcome ablation_contract() {
  const fs::path dir = output_dir() / "ablation";
  std::vector<bench::Series> series;
  std::string detail;
  bool pass = true;
  for (const std::string name : {"baseline", "no-history", "no-downsampling"}) {
    config::RunConfig cfg = config::preset(name);
    cfg.seed = 1;
    std::string status;
    try {
      const TrainingLog log = train_preset(cfg, 20, dir / name);
      bench::Series s{name, {}, {}};
      bool finite = log.metrics.size() == 20;
      for (const auto& m : log.metrics) {
        s.x.push_back(static_cast<double>(m.env_steps));
        s.y.push_back(m.mean_return);
        finite = finite && std::isfinite(m.mean_return);
      }
      series.push_back(std::move(s));
      status = finite ? "ok (obs " + std::to_string(cfg.scenario.observation_size()) + ", last return " +
                            fmt(log.metrics.back().mean_return) + ")"
                      : "non-finite returns";
      if (name != "baseline") pass = pass && finite;
    } catch (const std::exception& e) {
      status = std::string("crashed: ") + e.what();
      if (name != "baseline") pass = false;
    }
    detail += (detail.empty() ? "" : "; ") + name + " " + status;
  }
  write_file(dir / "returns.svg", bench::line_plot_svg(series, "Ablation: training return",
                                                       "environment steps", "mean episode return"));
  return {pass, detail};
}

// ---------------------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ROWLAB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const fs::path dir = output_dir() / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> differing;
  int failures = 0;
  for (const char* preset : {"baseline", "no-history"}) {
    const std::string common = std::string("train --preset ") + preset + " --iterations 2 --seed 11 --out ";
    const fs::path a = dir / (std::string(preset) + "_a"), b = dir / (std::string(preset) + "_b");
    failures += run_cli(common + a.string()) != 0;
    failures += run_cli(common + b.string()) != 0;
    if (read_file(a / "metrics.csv") != read_file(b / "metrics.csv") ||
        read_file(a / "metrics.csv").empty()) {
      differing.push_back(std::string(preset) + " metrics.csv");
    }
    if (read_file(a / "checkpoints" / "final.ckpt") != read_file(b / "checkpoints" / "final.ckpt")) {
      differing.push_back(std::string(preset) + " final.ckpt");
    }
  }
  const std::string ckpt = (dir / "baseline_a" / "checkpoints" / "final.ckpt").string();
  for (const std::string extra : {"", " --deterministic"}) {
    const std::string common = "eval --checkpoint " + ckpt + " --trials 3 --row-length 10 --seed 5" +
                               extra + " --threads 2 --trajectories --out ";
    const std::string tag = extra.empty() ? "sampled" : "mean";
    const fs::path a = dir / ("eval_a_" + tag), b = dir / ("eval_b_" + tag);
    failures += run_cli(common + a.string()) != 0;
    failures += run_cli(common + b.string()) != 0;
    for (const char* file : {"table.csv", "distances.csv"}) {
      if (read_file(a / file) != read_file(b / file) || read_file(a / file).empty()) {
        differing.push_back(std::string("eval") + extra + " " + file);
      }
    }
  }
  const std::string sweep = "eval --agent scripted-zero --sweep paper --trials 2 --row-length 10 --out ";
  failures += run_cli(sweep + (dir / "sweep_a").string()) != 0;
  failures += run_cli(sweep + (dir / "sweep_b").string()) != 0;
  if (read_file(dir / "sweep_a" / "table.csv") != read_file(dir / "sweep_b" / "table.csv")) {
    differing.push_back("sweep table.csv");
  }
  std::string detail = "2 train and 3 eval commands run twice; " + std::to_string(failures) +
                       " failed commands, " + std::to_string(differing.size()) + " differing outputs";
  if (!differing.empty()) detail += " (first: " + differing.front() + ")";
  return {failures == 0 && differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "compression identity", 1.0, compression_identity},
      {2, "downsampling oracle", 30.0, downsampling_oracle},
      {3, "gradient correctness", 60.0, gradient_correctness},
      {4, "GAE oracle", 5.0, gae_oracle},
      {5, "reward contract", 0.0, reward_contract},
      {6, "closed-form traversal", 10.0, closed_form_traversal},
      {7, "straight-row training reproduction", 7200.0, training_reproduction},
      {8, "ablation presets", 1800.0, ablation_contract},
      {9, "determinism", 0.0, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt(seconds, 3) + " s";
    if (c.budget_s > 0.0) {
      timing += " of " + fmt(c.budget_s, 5) + " s";
      if (seconds > c.budget_s) {
        outcome.pass = false;
        timing += ", over budget";
      }
    }
    failed += outcome.pass ? 0 : 1;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << "  criterion " << c.number << " (" << c.name
              << "): " << outcome.detail << " [" << timing << "]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
