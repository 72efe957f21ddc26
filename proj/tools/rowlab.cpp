// rowlab: train, evaluate and inspect crop-row following policies.
//
// Exit codes: 0 success, 1 internal error, 2 usage or configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rowlab/bench.hpp"
#include "rowlab/config.hpp"
#include "rowlab/env.hpp"
#include "rowlab/ppo.hpp"
#include "rowlab/rowmap.hpp"
#include "rowlab/sensor.hpp"
#include "rowlab/text_io.hpp"
#include "rowlab/world.hpp"

namespace fs = std::filesystem;
using namespace rowlab;

namespace {

/// Bad input from the user: reported and mapped to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string output_root() {
  const char* root = std::getenv("ROWLAB_OUTPUT_ROOT");
  return root && *root ? root : "runs";
}

config::RunConfig resolve_config(const std::string& path, const std::string& preset_name,
                                 const std::optional<std::string>& fallback_text = std::nullopt) {
  std::optional<std::string> preset_override;
  if (!preset_name.empty()) preset_override = preset_name;
  if (!path.empty()) return config::load_config(path, preset_override);
  if (fallback_text && !fallback_text->empty()) {
    return config::parse_config(*fallback_text, preset_override);
  }
  return config::preset(preset_name.empty() ? "baseline" : preset_name);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path.string(), text);
}

// --- train ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string preset;
  std::string out;
  std::optional<int> iterations;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

int cmd_train(const TrainArgs& args) {
  config::RunConfig cfg = resolve_config(args.config_path, args.preset);
  if (args.iterations) cfg.train.iterations = *args.iterations;
  if (args.seed) cfg.seed = *args.seed;
  if (args.threads) cfg.train.threads = *args.threads;
  cfg.validate();

  const fs::path dir = args.out.empty()
                           ? fs::path(output_root()) /
                                 ("train-" + cfg.preset + "-seed" + std::to_string(cfg.seed))
                           : fs::path(args.out);
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "plots");
  const std::string echo = config::emit_config(cfg);
  write_text(dir / "config.yaml", echo);

  env::CropRowVecEnv envs(cfg.scenario, cfg.ppo.num_envs, mix_seed(cfg.seed, 1),
                          cfg.train.threads);
  ppo::Trainer trainer(envs, cfg.ppo, mix_seed(cfg.seed, 2));
  std::cout << "training preset=" << cfg.preset << " observation_size="
            << envs.observation_size() << " iterations=" << cfg.train.iterations
            << " -> " << dir.string() << "\n";

  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  metrics << ppo::metrics_csv_header();
  bench::Series returns{"mean return", {}, {}};
  auto write_plot = [&] {
    write_text(dir / "plots" / "returns.svg",
               bench::line_plot_svg(std::span(&returns, 1), "Training return (" + cfg.preset + ")",
                                    "environment steps", "mean episode return"));
  };

  try {
    for (int it = 1; it <= cfg.train.iterations; ++it) {
      const ppo::IterationMetrics m = trainer.iterate();
      metrics << ppo::metrics_csv_row(m) << std::flush;
      returns.x.push_back(static_cast<double>(m.env_steps));
      returns.y.push_back(m.mean_return);
      std::cout << "iter " << m.iteration << " steps " << m.env_steps << " return "
                << format_double(m.mean_return) << " success " << format_double(m.success_rate)
                << " kl " << format_double(m.approx_kl) << " lr "
                << format_double(m.learning_rate) << "\n"
                << std::flush;
      if (cfg.train.checkpoint_every > 0 && it % cfg.train.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), "iter_%06d.ckpt", it);
        ppo::save_checkpoint((dir / "checkpoints" / name).string(), trainer.checkpoint(echo));
        write_plot();
      }
    }
  } catch (const ppo::TrainingAborted& e) {
    ppo::save_checkpoint((dir / "checkpoints" / "aborted.ckpt").string(),
                         [&] {
                           ppo::Checkpoint c = e.checkpoint();
                           c.metadata = echo;
                           return c;
                         }());
    write_plot();
    std::cerr << "error: training aborted: " << e.what()
              << " (last good state saved to checkpoints/aborted.ckpt)\n";
    return 1;
  }
  ppo::save_checkpoint((dir / "checkpoints" / "final.ckpt").string(), trainer.checkpoint(echo));
  write_plot();
  return 0;
}

// --- eval ----------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string agent = "policy";
  double omega = 0.0;
  std::string config_path;
  std::string out;
  std::string sweep;
  std::optional<double> frequency;
  std::optional<double> amplitude;
  std::optional<int> trials;
  std::optional<double> row_length;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool deterministic = false;
  bool trajectories = false;
};

int cmd_eval(const EvalArgs& args) {
  // Everything that can fail on bad input is checked before any output is created.
  std::optional<ppo::Checkpoint> checkpoint;
  std::unique_ptr<bench::Agent> agent;
  if (args.agent == "policy") {
    if (args.checkpoint.empty()) throw UsageError("eval needs --checkpoint or --agent scripted-*");
    if (!fs::is_regular_file(args.checkpoint)) {
      throw UsageError("checkpoint not found: " + args.checkpoint);
    }
    try {
      checkpoint = ppo::load_checkpoint(args.checkpoint);
    } catch (const ParseError& e) {
      throw UsageError("cannot read checkpoint " + args.checkpoint + ": " + e.what());
    }
  } else if (args.agent == "scripted-zero") {
    agent = std::make_unique<bench::ScriptedAgent>(0.0);
  } else if (args.agent == "scripted") {
    agent = std::make_unique<bench::ScriptedAgent>(args.omega);
  } else {
    throw UsageError("unknown agent '" + args.agent +
                     "' (expected policy, scripted-zero or scripted)");
  }

  config::RunConfig cfg = resolve_config(
      args.config_path, "",
      checkpoint ? std::optional<std::string>(checkpoint->metadata) : std::nullopt);
  if (args.trials) cfg.bench.trials = *args.trials;
  if (args.row_length) cfg.bench.row_length = *args.row_length;
  if (args.seed) cfg.bench.seed = *args.seed;
  if (args.deterministic) cfg.bench.deterministic = true;
  if (args.threads) cfg.train.threads = *args.threads;
  cfg.validate();

  if (checkpoint) {
    if (checkpoint->policy.observation_size() != cfg.scenario.observation_size()) {
      throw UsageError("checkpoint expects " +
                       std::to_string(checkpoint->policy.observation_size()) +
                       " observation values but the configuration produces " +
                       std::to_string(cfg.scenario.observation_size()));
    }
    agent = std::make_unique<bench::PolicyAgent>(checkpoint->policy, cfg.bench.deterministic);
  }

  bench::SweepSpec spec;
  if (args.sweep == "paper") {
    spec = bench::SweepSpec::paper();
  } else if (!args.sweep.empty()) {
    throw UsageError("unknown sweep '" + args.sweep + "' (expected paper)");
  } else {
    const world::RowSpec& row = cfg.scenario.row;
    const double f = args.frequency.value_or(
        row.pattern == world::RowPattern::kStraight ? 0.0 : row.frequency);
    const double a = args.amplitude.value_or(row.effective_amplitude());
    spec.configs = {{f, a}};
  }
  spec.trials = cfg.bench.trials;
  spec.row_length = cfg.bench.row_length;
  spec.seed = cfg.bench.seed;
  spec.options.threads = cfg.train.threads;
  spec.options.record_trajectories = args.trajectories;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const fs::path dir =
      args.out.empty() ? fs::path(output_root()) / ("eval-seed" + std::to_string(spec.seed))
                       : fs::path(args.out);
  fs::create_directories(dir);
  write_text(dir / "config.yaml", config::emit_config(cfg));

  const std::vector<bench::SweepRow> rows = bench::sweep(*agent, cfg.scenario, spec);
  bench::write_sweep(dir.string(), rows);
  std::cout << bench::table_csv(rows);
  return 0;
}

// --- inspect / dump ------------------------------------------------------------------

struct InspectArgs {
  std::string file;
  std::string kind = "auto";
  std::string config_path;
  std::string pgm;
  std::string grid_out;
};

std::string detect_kind(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::vector<std::string> tokens;
    for (std::string w; words >> w;) tokens.push_back(w);
    if (tokens.empty()) continue;
    if (tokens[0] == "rowlab-plantation") return "plantation";
    return tokens.size() == 3 ? "cloud" : "map";
  }
  return "cloud";  // an empty file is an empty cloud
}

void print_map_stats(const rowmap::RowMap& map) {
  int occupied = 0;
  for (float v : map.cells) occupied += v > 0.0f ? 1 : 0;
  std::cout << "grid: " << map.size_x << " x " << map.size_y << "\n"
            << "occupied_cells: " << occupied << "\n"
            << "occupancy_fraction: " << format_double(map.occupancy_fraction()) << "\n";
}

int cmd_inspect(const InspectArgs& args) {
  const config::RunConfig cfg = resolve_config(args.config_path, "");
  std::string text;
  try {
    text = read_file(args.file);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const std::string kind = args.kind == "auto" ? detect_kind(text) : args.kind;

  if (kind == "plantation") {
    const world::PlantationMap map = world::deserialize(text);
    const world::RowSpec& spec = map.spec();
    std::cout << "kind: plantation\n"
              << "pattern: " << world::to_string(spec.pattern) << "\n"
              << "row_length: " << format_double(spec.row_length) << "\n"
              << "left_plants: " << map.left_plants().size() << "\n"
              << "right_plants: " << map.right_plants().size() << "\n";
    return 0;
  }

  rowmap::RowMap map;
  if (kind == "cloud") {
    const sensor::PointCloud cloud = sensor::read_cloud(text);
    map = rowmap::transform(cloud, cfg.scenario.grid);
    std::cout << "kind: cloud\npoints: " << cloud.points.size() << "\n";
  } else if (kind == "map") {
    map = rowmap::from_text(text, cfg.scenario.grid.height_levels);
    std::cout << "kind: map\n";
  } else {
    throw UsageError("unknown kind '" + kind + "' (expected auto, cloud, map or plantation)");
  }
  print_map_stats(map);
  std::cout << "cells:\n" << rowmap::to_text(map);
  if (!args.pgm.empty()) write_text(args.pgm, rowmap::to_pgm(map));
  if (!args.grid_out.empty()) write_text(args.grid_out, rowmap::to_text(map));
  return 0;
}

struct DumpArgs {
  std::string what;
  std::string out;
  std::string config_path;
  std::uint64_t seed = 1;
  double arc = 0.0;
  double lateral = 0.0;
  double heading_deg = 0.0;
};

int cmd_dump(const DumpArgs& args) {
  const config::RunConfig cfg = resolve_config(args.config_path, "");
  world::RowSpec row = cfg.scenario.row;
  row.seed = args.seed;
  const world::PlantationMap map = world::generate(row, cfg.scenario.plants);
  if (args.what == "plantation") {
    write_text(args.out, world::serialize(map));
    return 0;
  }
  const world::Centerline& c = map.centerline();
  const double x = c.x_at_arc_length(std::clamp(args.arc, 0.0, row.row_length));
  const Pose2 pose{c.point(x) + args.lateral * c.normal(x),
                   wrap_angle(std::atan(c.slope(x)) + args.heading_deg * std::numbers::pi / 180.0)};
  const sensor::PointCloud cloud =
      sensor::sweep(pose, map, cfg.scenario.lidar, mix_seed(args.seed, 7));
  if (args.what == "cloud") {
    write_text(args.out, sensor::write_cloud(cloud));
  } else if (args.what == "map") {
    write_text(args.out, rowmap::to_text(rowmap::transform(cloud, cfg.scenario.grid)));
  } else {
    throw UsageError("unknown dump target '" + args.what + "' (expected cloud, map or plantation)");
  }
  return 0;
}

int cmd_config(const std::string& preset_name, const std::string& out) {
  const std::string text = config::emit_config(config::preset(preset_name));
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rowlab: LiDAR row-map crop-row following with PPO"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a policy with PPO");
  train_cmd->add_option("--config", train.config_path, "YAML run configuration");
  train_cmd->add_option("--preset", train.preset, "baseline | no-history | no-downsampling");
  train_cmd->add_option("--out", train.out, "Output directory");
  train_cmd->add_option("--iterations", train.iterations, "PPO iterations");
  train_cmd->add_option("--seed", train.seed, "Run seed");
  train_cmd->add_option("--threads", train.threads, "Worker threads for rollouts");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy or scripted agent");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Policy checkpoint");
  eval_cmd->add_option("--agent", eval.agent, "policy | scripted-zero | scripted");
  eval_cmd->add_option("--omega", eval.omega, "Yaw rate of the scripted agent (rad/s)");
  eval_cmd->add_option("--config", eval.config_path, "YAML run configuration");
  eval_cmd->add_option("--out", eval.out, "Output directory");
  eval_cmd->add_option("--sweep", eval.sweep, "Named sweep (paper)");
  eval_cmd->add_option("--frequency", eval.frequency, "Row frequency (0 = straight)");
  eval_cmd->add_option("--amplitude", eval.amplitude, "Row amplitude (m)");
  eval_cmd->add_option("--trials", eval.trials, "Trials per configuration");
  eval_cmd->add_option("--row-length", eval.row_length, "Row length (m)");
  eval_cmd->add_option("--seed", eval.seed, "Evaluation seed");
  eval_cmd->add_option("--threads", eval.threads, "Worker threads for trials");
  eval_cmd->add_flag("--deterministic", eval.deterministic, "Use the policy mean");
  eval_cmd->add_flag("--trajectories", eval.trajectories, "Write per-trial trajectory logs");

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "Render a row map, point cloud or plantation");
  inspect_cmd->add_option("file", inspect.file, "Input file")->required();
  inspect_cmd->add_option("--kind", inspect.kind, "auto | cloud | map | plantation");
  inspect_cmd->add_option("--config", inspect.config_path, "YAML run configuration");
  inspect_cmd->add_option("--pgm", inspect.pgm, "Write the row map as a PGM image");
  inspect_cmd->add_option("--grid-out", inspect.grid_out, "Write the row map text grid");

  DumpArgs dump;
  auto* dump_cmd = app.add_subcommand("dump", "Write a generated plantation, cloud or row map");
  dump_cmd->add_option("what", dump.what, "plantation | cloud | map")->required();
  dump_cmd->add_option("--out", dump.out, "Output file")->required();
  dump_cmd->add_option("--config", dump.config_path, "YAML run configuration");
  dump_cmd->add_option("--seed", dump.seed, "Plantation and noise seed");
  dump_cmd->add_option("--arc", dump.arc, "Robot position along the row (m)");
  dump_cmd->add_option("--lateral", dump.lateral, "Lateral offset from the centerline (m)");
  dump_cmd->add_option("--heading", dump.heading_deg, "Heading offset (deg)");

  std::string config_preset = "baseline";
  std::string config_out;
  auto* config_cmd = app.add_subcommand("config", "Print the default configuration");
  config_cmd->add_option("--preset", config_preset, "baseline | no-history | no-downsampling");
  config_cmd->add_option("--out", config_out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval);
    if (*inspect_cmd) return cmd_inspect(inspect);
    if (*dump_cmd) return cmd_dump(dump);
    if (*config_cmd) return cmd_config(config_preset, config_out);
  } catch (const config::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
