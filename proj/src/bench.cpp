#include "rowlab/bench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "rowlab/geometry.hpp"
#include "rowlab/parallel.hpp"
#include "rowlab/text_io.hpp"

namespace rowlab::bench {

Summary summarize(std::span<const TrialResult> results) {
  if (results.empty()) throw std::invalid_argument("summarize: no trial results");
  const double n = static_cast<double>(results.size());
  Summary s;
  s.trials = static_cast<int>(results.size());
  int successes = 0;
  for (const TrialResult& r : results) {
    s.avg_distance += r.distance;
    s.avg_time += r.time;
    successes += r.success ? 1 : 0;
  }
  s.avg_distance /= n;
  s.avg_time /= n;
  for (const TrialResult& r : results) {
    s.std_distance += (r.distance - s.avg_distance) * (r.distance - s.avg_distance);
    s.std_time += (r.time - s.avg_time) * (r.time - s.avg_time);
  }
  s.std_distance = std::sqrt(s.std_distance / n);
  s.std_time = std::sqrt(s.std_time / n);
  s.success_rate = successes / n;
  return s;
}

double PolicyAgent::act(const env::Observation& observation, std::mt19937_64& rng) const {
  const Eigen::Map<const Eigen::VectorXf> x(observation.data.data(),
                                            static_cast<Eigen::Index>(observation.data.size()));
  const double mean = policy_.actor.forward_one(x)[0];
  if (deterministic_) return policy_.squash(mean);
  std::normal_distribution<double> normal(0.0, 1.0);
  return policy_.squash(mean + std::exp(static_cast<double>(policy_.log_std)) * normal(rng));
}

std::vector<std::uint64_t> trial_seeds(std::uint64_t base, int count) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(mix_seed(base, static_cast<std::uint64_t>(i)));
  return seeds;
}

TrialRun run_trials(const Agent& agent, const env::Scenario& scenario,
                    std::span<const std::uint64_t> seeds, const TrialOptions& options) {
  env::Scenario trial_scenario = scenario;
  if (!agent.uses_start_jitter()) {
    trial_scenario.env.start_lateral_jitter = 0.0;
    trial_scenario.env.start_heading_jitter_deg = 0.0;
  }
  trial_scenario.validate();
  if (agent.observation_size() != 0 &&
      agent.observation_size() != trial_scenario.observation_size()) {
    throw std::invalid_argument(
        "policy expects " + std::to_string(agent.observation_size()) +
        " observation values but the scenario produces " +
        std::to_string(trial_scenario.observation_size()));
  }

  TrialRun run;
  run.results.resize(seeds.size());
  if (options.record_trajectories) run.trajectories.resize(seeds.size());

  parallel_for(static_cast<int>(seeds.size()), options.threads, [&](int i) {
    const std::uint64_t seed = seeds[static_cast<std::size_t>(i)];
    env::CropRowEnv env(trial_scenario);
    env.reset({mix_seed(seed, 0), mix_seed(seed, 1), mix_seed(seed, 2)});
    std::mt19937_64 rng(mix_seed(seed, 3));
    env::TrajectoryLog log;
    if (options.record_trajectories) {
      log.record(0, 0.0, env.state(), 0.0, 0.0, env.progress(), false);
    }
    TrialResult& result = run.results[static_cast<std::size_t>(i)];
    while (!env.terminated()) {
      const double omega = agent.act(env.observation(), rng);
      const env::StepResult step = env.step(omega);
      if (options.record_trajectories) {
        log.record(env.step_count(), step.info.elapsed, env.state(), omega, step.reward,
                   step.info.progress, step.info.collided);
      }
      if (step.info.collided) result.collision_pose = env.state().position;
      result.success = step.info.success;
    }
    result.distance = env.progress();
    result.steps = env.step_count();
    result.time = env.elapsed();
    if (options.record_trajectories) run.trajectories[static_cast<std::size_t>(i)] = log.csv();
  });
  return run;
}

void SweepSpec::validate() const {
  if (configs.empty()) throw std::invalid_argument("sweep needs at least one configuration");
  if (trials < 1) throw std::invalid_argument("sweep needs at least one trial per configuration");
  if (!(row_length > 0.0)) throw std::invalid_argument("sweep row length must be > 0");
}

SweepSpec SweepSpec::paper() {
  SweepSpec spec;
  spec.configs = {{0.0, 0.0},  {1.8, 0.20}, {2.0, 0.20}, {2.2, 0.20}, {2.4, 0.20},
                  {2.6, 0.20}, {1.8, 0.21}, {1.8, 0.22}, {1.8, 0.23}, {1.8, 0.24}};
  spec.trials = 15;
  spec.row_length = 100.0;
  return spec;
}

world::RowSpec row_for(double frequency, double amplitude, double length,
                       const world::RowSpec& base) {
  world::RowSpec row = base;
  row.row_length = length;
  if (frequency == 0.0 || amplitude == 0.0) {
    row.pattern = world::RowPattern::kStraight;
  } else {
    row.pattern = world::RowPattern::kSinusoidal;
    row.frequency = frequency;
    row.amplitude = amplitude;
  }
  return row;
}

std::vector<SweepRow> sweep(const Agent& agent, const env::Scenario& base, const SweepSpec& spec) {
  spec.validate();
  const std::vector<std::uint64_t> seeds = trial_seeds(spec.seed, spec.trials);
  std::vector<SweepRow> rows;
  for (const auto& [frequency, amplitude] : spec.configs) {
    SweepRow row;
    row.frequency = frequency;
    row.amplitude = amplitude;
    try {
      env::Scenario scenario = base;
      scenario.row = row_for(frequency, amplitude, spec.row_length, base.row);
      TrialRun run = run_trials(agent, scenario, seeds, spec.options);
      row.results = std::move(run.results);
      row.trajectories = std::move(run.trajectories);
      row.summary = summarize(row.results);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted += '"';
    quoted += c == '\n' ? ' ' : c;
  }
  return quoted + '"';
}

double quantile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string label_of(const SweepRow& row) {
  std::ostringstream out;
  out << format_double(row.frequency) << " Hz / " << format_double(row.amplitude) << " m";
  return out.str();
}

}  // namespace

std::string table_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "frequency_hz,amplitude_m,avg_distance_m,std_distance_m,avg_time_s,std_time_s,"
         "success_rate,trials,error\n";
  for (const SweepRow& row : rows) {
    out << format_double(row.frequency) << ',' << format_double(row.amplitude) << ',';
    if (row.summary) {
      const Summary& s = *row.summary;
      out << format_double(s.avg_distance) << ',' << format_double(s.std_distance) << ','
          << format_double(s.avg_time) << ',' << format_double(s.std_time) << ','
          << format_double(s.success_rate) << ',' << s.trials << ',';
    } else {
      out << ",,,,,0,";
    }
    out << csv_field(row.error) << '\n';
  }
  return out.str();
}

std::string distances_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "frequency_hz,amplitude_m,trial,distance_m,time_s,success\n";
  for (const SweepRow& row : rows) {
    for (std::size_t i = 0; i < row.results.size(); ++i) {
      const TrialResult& r = row.results[i];
      out << format_double(row.frequency) << ',' << format_double(row.amplitude) << ',' << i
          << ',' << format_double(r.distance) << ',' << format_double(r.time) << ','
          << (r.success ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

std::string distance_boxplot_svg(std::span<const SweepRow> rows, const std::string& title) {
  constexpr double kWidthPerBox = 90.0, kLeft = 60.0, kTop = 40.0, kPlotHeight = 300.0;
  double y_max = 1.0;
  for (const SweepRow& row : rows) {
    for (const TrialResult& r : row.results) y_max = std::max(y_max, r.distance);
  }
  y_max *= 1.05;
  const double width = kLeft + kWidthPerBox * static_cast<double>(std::max<std::size_t>(rows.size(), 1)) + 20.0;
  const double height = kTop + kPlotHeight + 60.0;
  auto y_of = [&](double d) { return kTop + kPlotHeight * (1.0 - d / y_max); };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kTop + kPlotHeight << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double d = y_max * t / 4.0;
    svg << "<text x=\"" << kLeft - 5 << "\" y=\"" << y_of(d) + 4
        << "\" text-anchor=\"end\">" << format_double(std::round(d * 10.0) / 10.0)
        << "</text>\n";
  }
  svg << "<text x=\"15\" y=\"" << kTop + kPlotHeight / 2
      << "\" transform=\"rotate(-90 15 " << kTop + kPlotHeight / 2
      << ")\" text-anchor=\"middle\">distance (m)</text>\n";

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SweepRow& row = rows[i];
    const double cx = kLeft + kWidthPerBox * (static_cast<double>(i) + 0.5);
    svg << "<text x=\"" << cx << "\" y=\"" << kTop + kPlotHeight + 20
        << "\" text-anchor=\"middle\">" << label_of(row) << "</text>\n";
    if (row.results.empty()) {
      svg << "<text x=\"" << cx << "\" y=\"" << kTop + kPlotHeight / 2
          << "\" text-anchor=\"middle\" fill=\"red\">error</text>\n";
      continue;
    }
    std::vector<double> d;
    for (const TrialResult& r : row.results) d.push_back(r.distance);
    const double lo = quantile(d, 0.0), q1 = quantile(d, 0.25), med = quantile(d, 0.5),
                 q3 = quantile(d, 0.75), hi = quantile(d, 1.0);
    const double half = kWidthPerBox * 0.3;
    svg << "<line x1=\"" << cx << "\" y1=\"" << y_of(hi) << "\" x2=\"" << cx << "\" y2=\""
        << y_of(lo) << "\" stroke=\"black\"/>\n";
    svg << "<rect x=\"" << cx - half << "\" y=\"" << y_of(q3) << "\" width=\"" << 2 * half
        << "\" height=\"" << std::max(y_of(q1) - y_of(q3), 1.0)
        << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << cx - half << "\" y1=\"" << y_of(med) << "\" x2=\"" << cx + half
        << "\" y2=\"" << y_of(med) << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string line_plot_svg(std::span<const Series> series, const std::string& title,
                          const std::string& x_label, const std::string& y_label) {
  constexpr double kLeft = 70.0, kTop = 40.0, kWidth = 520.0, kHeight = 300.0;
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
  bool first = true;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (first) {
        x_lo = x_hi = s.x[i];
        y_lo = y_hi = s.y[i];
        first = false;
      }
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  auto px = [&](double x) { return kLeft + kWidth * (x - x_lo) / (x_hi - x_lo); };
  auto py = [&](double y) { return kTop + kHeight * (1.0 - (y - y_lo) / (y_hi - y_lo)); };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLeft + kWidth + 160
      << "\" height=\"" << kTop + kHeight + 60
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft + kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-size=\"14\">" << title << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x_lo + (x_hi - x_lo) * t / 4.0;
    const double yv = y_lo + (y_hi - y_lo) * t / 4.0;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << kTop + kHeight + 15
        << "\" text-anchor=\"middle\">" << xv << "</text>\n";
    svg << "<text x=\"" << kLeft - 5 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + kWidth / 2 << "\" y=\"" << kTop + kHeight + 35
      << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  svg << "<text x=\"15\" y=\"" << kTop + kHeight / 2 << "\" transform=\"rotate(-90 15 "
      << kTop + kHeight / 2 << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* color = kColors[k % 5];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) svg << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << kLeft + kWidth + 10 << "\" y=\"" << kTop + 15 + 15.0 * static_cast<double>(k)
        << "\" fill=\"" << color << "\">" << s.label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_sweep(const std::string& dir, std::span<const SweepRow> rows) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "plots");
  write_file((fs::path(dir) / "table.csv").string(), table_csv(rows));
  write_file((fs::path(dir) / "distances.csv").string(), distances_csv(rows));
  write_file((fs::path(dir) / "plots" / "distances.svg").string(),
             distance_boxplot_svg(rows, "Distance per plantation"));

  std::vector<SweepRow> by_frequency, by_amplitude;
  for (const SweepRow& row : rows) {
    if (row.amplitude == 0.20) by_frequency.push_back(row);
    if (row.frequency == 1.8) by_amplitude.push_back(row);
  }
  if (!by_frequency.empty()) {
    write_file((fs::path(dir) / "plots" / "distance_vs_frequency.svg").string(),
               distance_boxplot_svg(by_frequency, "Fixed amplitude 0.2 m, varying frequency"));
  }
  if (!by_amplitude.empty()) {
    write_file((fs::path(dir) / "plots" / "distance_vs_amplitude.svg").string(),
               distance_boxplot_svg(by_amplitude, "Fixed frequency 1.8 Hz, varying amplitude"));
  }

  bool any_trajectory = false;
  for (const SweepRow& row : rows) any_trajectory |= !row.trajectories.empty();
  if (!any_trajectory) return;
  fs::create_directories(fs::path(dir) / "trajectories");
  for (const SweepRow& row : rows) {
    for (std::size_t i = 0; i < row.trajectories.size(); ++i) {
      std::ostringstream name;
      name << "f" << format_double(row.frequency) << "_a" << format_double(row.amplitude)
           << "_trial" << i << ".csv";
      write_file((fs::path(dir) / "trajectories" / name.str()).string(), row.trajectories[i]);
    }
  }
}

}  // namespace rowlab::bench
