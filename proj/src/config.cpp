#include "rowlab/config.hpp"

#include <functional>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "rowlab/text_io.hpp"

namespace rowlab::config {

ConfigError::ConfigError(const std::string& what, int line, int column)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ", column " +
                                        std::to_string(column) + ": " + what
                                  : what),
      line_(line),
      column_(column) {}

void RunConfig::validate() const {
  if (schema_version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version) +
                      " (expected " + std::to_string(kSchemaVersion) + ")");
  }
  try {
    scenario.validate();
    ppo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  if (train.iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (train.checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (train.threads < 1) throw ConfigError("train.threads must be >= 1");
  if (bench.trials < 1) throw ConfigError("bench.trials must be >= 1");
  if (!(bench.row_length > 0.0)) throw ConfigError("bench.row_length must be > 0");
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"baseline", "no-history", "no-downsampling"};
  return names;
}

RunConfig preset(std::string_view name) {
  RunConfig cfg;
  cfg.preset = std::string(name);
  if (name == "baseline") return cfg;
  if (name == "no-history") {
    cfg.scenario.env.history_length = 1;
    return cfg;
  }
  if (name == "no-downsampling") {
    cfg.scenario.env.history_length = 1;
    cfg.scenario.env.observation = env::ObservationMode::kRawCloud;
    return cfg;
  }
  throw ConfigError("unknown preset '" + std::string(name) +
                    "' (expected baseline, no-history or no-downsampling)");
}

namespace {

// One schema drives both parsing and emission so the two cannot drift apart.
struct Field {
  std::string key;
  std::function<void(const YAML::Node&)> read;  // leaf only
  std::function<std::string()> write;           // leaf only
  std::vector<Field> children;                  // section only

  bool is_section() const { return !children.empty(); }
};

[[noreturn]] void fail_at(const YAML::Node& node, const std::string& what) {
  const YAML::Mark mark = node.Mark();
  if (mark.is_null()) throw ConfigError(what);
  throw ConfigError(what, mark.line + 1, mark.column + 1);
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& key, const char* type_name) {
  if (!node.IsScalar()) fail_at(node, "'" + key + "' must be " + type_name);
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail_at(node, "'" + key + "' must be " + type_name + ", got '" + node.Scalar() + "'");
  }
}

Field real(std::string key, double& v) {
  return {key, [&v, key](const YAML::Node& n) { v = scalar<double>(n, key, "a number"); },
          [&v] { return format_double(v); }, {}};
}

Field integer(std::string key, int& v) {
  return {key, [&v, key](const YAML::Node& n) { v = scalar<int>(n, key, "an integer"); },
          [&v] { return std::to_string(v); }, {}};
}

Field unsigned64(std::string key, std::uint64_t& v) {
  return {key,
          [&v, key](const YAML::Node& n) {
            if (n.IsScalar() && !n.Scalar().empty() && n.Scalar()[0] == '-') {
              fail_at(n, "'" + key + "' must be a non-negative integer");
            }
            v = scalar<std::uint64_t>(n, key, "a non-negative integer");
          },
          [&v] { return std::to_string(v); }, {}};
}

Field flag(std::string key, bool& v) {
  return {key, [&v, key](const YAML::Node& n) { v = scalar<bool>(n, key, "true or false"); },
          [&v] { return std::string(v ? "true" : "false"); }, {}};
}

template <typename T>
Field list(std::string key, std::vector<T>& v, const char* type_name) {
  return {key,
          [&v, key, type_name](const YAML::Node& n) {
            if (!n.IsSequence()) fail_at(n, "'" + key + "' must be a list of " + type_name);
            std::vector<T> out;
            for (const YAML::Node& item : n) out.push_back(scalar<T>(item, key, type_name));
            v = std::move(out);
          },
          [&v] {
            std::string s = "[";
            for (std::size_t i = 0; i < v.size(); ++i) {
              if (i) s += ", ";
              if constexpr (std::is_same_v<T, double>) {
                s += format_double(v[i]);
              } else {
                s += std::to_string(v[i]);
              }
            }
            return s + "]";
          },
          {}};
}

/// Fixed-length numeric tuple bound to individual doubles.
Field tuple(std::string key, std::vector<double*> slots) {
  return {key,
          [slots, key](const YAML::Node& n) {
            if (!n.IsSequence() || n.size() != slots.size()) {
              fail_at(n, "'" + key + "' must be a list of " + std::to_string(slots.size()) +
                             " numbers");
            }
            for (std::size_t i = 0; i < slots.size(); ++i) {
              *slots[i] = scalar<double>(n[i], key, "a number");
            }
          },
          [slots] {
            std::string s = "[";
            for (std::size_t i = 0; i < slots.size(); ++i) {
              if (i) s += ", ";
              s += format_double(*slots[i]);
            }
            return s + "]";
          },
          {}};
}

template <typename E>
Field choice(std::string key, E& v, E (*parse)(std::string_view),
             std::string_view (*show)(E)) {
  return {key,
          [&v, key, parse](const YAML::Node& n) {
            const auto text = scalar<std::string>(n, key, "a string");
            try {
              v = parse(text);
            } catch (const std::invalid_argument& e) {
              fail_at(n, e.what());
            }
          },
          [&v, show] { return std::string(show(v)); }, {}};
}

Field section(std::string key, std::vector<Field> children) {
  return {std::move(key), {}, {}, std::move(children)};
}

std::vector<Field> schema(RunConfig& c) {
  world::RowSpec& row = c.scenario.row;
  world::PlantModel& plants = c.scenario.plants;
  sensor::LidarConfig& lidar = c.scenario.lidar;
  rowmap::VoxelGridSpec& grid = c.scenario.grid;
  env::EnvConfig& e = c.scenario.env;
  ppo::PpoConfig& p = c.ppo;
  return {
      integer("schema_version", c.schema_version),
      {"preset", [&c](const YAML::Node& n) { c.preset = scalar<std::string>(n, "preset", "a string"); },
       [&c] { return c.preset; }, {}},
      unsigned64("seed", c.seed),
      section("world",
              {section("row", {choice("pattern", row.pattern, world::parse_row_pattern,
                                      world::to_string),
                               real("frequency", row.frequency), real("amplitude", row.amplitude),
                               real("length", row.row_length), real("spacing", row.row_spacing),
                               real("reference_length", row.reference_length),
                               unsigned64("seed", row.seed)}),
               section("plants", {real("radius", plants.radius), real("height", plants.height),
                                  real("spacing", plants.spacing),
                                  real("lateral_jitter_sigma", plants.lateral_jitter_sigma),
                                  real("radius_jitter_sigma", plants.radius_jitter_sigma),
                                  real("truncation", plants.truncation),
                                  flag("jitter", plants.jitter)})}),
      section("sensor", {list("channels_deg", lidar.channels_deg, "numbers"),
                         integer("azimuth_count", lidar.azimuth_count),
                         real("max_range", lidar.max_range),
                         real("mount_height", lidar.mount_height),
                         real("noise_sigma", lidar.noise_sigma)}),
      section("rowmap", {tuple("delta", {&grid.delta.x(), &grid.delta.y(), &grid.delta.z()}),
                         tuple("roi_x", {&grid.roi_x.lo, &grid.roi_x.hi}),
                         tuple("roi_y", {&grid.roi_y.lo, &grid.roi_y.hi}),
                         tuple("roi_z", {&grid.roi_z.lo, &grid.roi_z.hi}),
                         integer("height_levels", grid.height_levels)}),
      section("env",
              {real("forward_speed", e.forward_speed), real("dt", e.dt),
               real("omega_max", e.omega_max), integer("history_length", e.history_length),
               real("time_limit_factor", e.time_limit_factor),
               real("start_lateral_jitter", e.start_lateral_jitter),
               real("start_heading_jitter_deg", e.start_heading_jitter_deg),
               flag("regenerate_map", e.regenerate_map),
               choice("observation", e.observation, env::parse_observation_mode, env::to_string),
               section("footprint",
                       {real("length", e.footprint.length), real("width", e.footprint.width)}),
               section("reward", {real("w_task", e.reward.w_task),
                                  real("w_penalty", e.reward.w_penalty),
                                  real("w_collision", e.reward.w_collision),
                                  real("sigma", e.reward.sigma)})}),
      section("nn", {list("actor_hidden", p.actor_hidden, "integers"),
                     list("critic_hidden", p.critic_hidden, "integers"),
                     choice("activation", p.activation, nn::parse_activation, nn::to_string),
                     real("init_std", p.init_std)}),
      section("ppo", {real("clip", p.clip), real("learning_rate", p.learning_rate),
                      flag("adaptive_lr", p.adaptive_lr), real("gamma", p.gamma),
                      real("lambda", p.lambda), real("desired_kl", p.desired_kl),
                      real("entropy_coef", p.entropy_coef), real("value_coef", p.value_coef),
                      integer("num_envs", p.num_envs), integer("steps_per_env", p.steps_per_env),
                      integer("epochs", p.epochs), integer("minibatches", p.minibatches),
                      real("max_grad_norm", p.max_grad_norm), real("lr_min", p.lr_min),
                      real("lr_max", p.lr_max)}),
      section("train", {integer("iterations", c.train.iterations),
                        integer("checkpoint_every", c.train.checkpoint_every),
                        integer("threads", c.train.threads)}),
      section("bench", {integer("trials", c.bench.trials), real("row_length", c.bench.row_length),
                        flag("deterministic", c.bench.deterministic),
                        unsigned64("seed", c.bench.seed)}),
  };
}

void read_section(const YAML::Node& node, const std::vector<Field>& fields,
                  const std::string& path) {
  if (!node.IsMap()) fail_at(node, "'" + (path.empty() ? "<root>" : path) + "' must be a mapping");
  for (const auto& entry : node) {
    const auto key = entry.first.as<std::string>();
    const std::string full = path.empty() ? key : path + "." + key;
    const Field* match = nullptr;
    for (const Field& f : fields) {
      if (f.key == key) match = &f;
    }
    if (!match) fail_at(entry.first, "unknown key '" + full + "'");
    if (match->is_section()) {
      read_section(entry.second, match->children, full);
    } else {
      if (entry.second.IsNull()) fail_at(entry.first, "'" + full + "' has no value");
      match->read(entry.second);
    }
  }
}

void write_section(std::ostringstream& out, const std::vector<Field>& fields, int indent) {
  for (const Field& f : fields) {
    out << std::string(static_cast<std::size_t>(indent), ' ') << f.key << ':';
    if (f.is_section()) {
      out << '\n';
      write_section(out, f.children, indent + 2);
    } else {
      out << ' ' << f.write() << '\n';
    }
  }
}

YAML::Node load_yaml(std::string_view text) {
  try {
    return YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1, e.mark.column + 1);
  }
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::optional<std::string>& preset_override) {
  const YAML::Node root = load_yaml(text);
  if (!root.IsNull() && !root.IsMap()) fail_at(root, "configuration must be a mapping");

  std::string preset_name = "baseline";
  if (preset_override) {
    preset_name = *preset_override;
  } else if (root.IsMap() && root["preset"]) {
    preset_name = scalar<std::string>(root["preset"], "preset", "a string");
  }
  RunConfig cfg;
  try {
    cfg = preset(preset_name);
  } catch (const ConfigError& e) {
    if (!preset_override && root.IsMap() && root["preset"]) fail_at(root["preset"], e.what());
    throw;
  }
  if (root.IsMap()) read_section(root, schema(cfg), "");
  cfg.preset = preset_name;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path, const std::optional<std::string>& preset_override) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_config(text, preset_override);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string emit_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::ostringstream out;
  out << "# rowlab run configuration\n";
  write_section(out, schema(copy), 0);
  return out.str();
}

}  // namespace rowlab::config
