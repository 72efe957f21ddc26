#include "rowlab/world.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rowlab/text_io.hpp"

namespace rowlab::world {

namespace {

constexpr double kArcTableStep = 0.005;
constexpr double kOffsetTableStep = 0.001;
constexpr double kCountSlack = 1e-9;

double truncated_normal(std::mt19937_64& rng, double sigma, double truncation) {
  if (sigma <= 0.0) return 0.0;
  std::normal_distribution<double> normal(0.0, sigma);
  for (;;) {
    const double value = normal(rng);
    if (std::abs(value) <= truncation * sigma) return value;
  }
}

}  // namespace

std::string_view to_string(RowPattern pattern) {
  return pattern == RowPattern::kStraight ? "straight" : "sinusoidal";
}

RowPattern parse_row_pattern(std::string_view text) {
  if (text == "straight") return RowPattern::kStraight;
  if (text == "sinusoidal") return RowPattern::kSinusoidal;
  throw std::invalid_argument("unknown row pattern '" + std::string(text) +
                              "' (expected straight or sinusoidal)");
}

void RowSpec::validate() const {
  if (!(amplitude >= 0.0)) throw std::invalid_argument("row amplitude must be >= 0");
  if (!(frequency >= 0.0)) throw std::invalid_argument("row frequency must be >= 0");
  if (!(row_length > 0.0)) throw std::invalid_argument("row length must be > 0");
  if (!(row_spacing > 0.0)) throw std::invalid_argument("row spacing must be > 0");
  if (!(reference_length > 0.0)) throw std::invalid_argument("reference length must be > 0");
}

RowSpec RowSpec::straight(double length, std::uint64_t seed) {
  RowSpec spec;
  spec.pattern = RowPattern::kStraight;
  spec.frequency = 0.0;
  spec.amplitude = 0.0;
  spec.row_length = length;
  spec.seed = seed;
  return spec;
}

RowSpec RowSpec::sinusoidal(double frequency, double amplitude, double length,
                            std::uint64_t seed) {
  RowSpec spec;
  spec.pattern = RowPattern::kSinusoidal;
  spec.frequency = frequency;
  spec.amplitude = amplitude;
  spec.row_length = length;
  spec.seed = seed;
  return spec;
}

void PlantModel::validate() const {
  if (!(radius > 0.0)) throw std::invalid_argument("plant radius must be > 0");
  if (!(height > 0.0)) throw std::invalid_argument("plant height must be > 0");
  if (!(spacing > 0.0)) throw std::invalid_argument("plant spacing must be > 0");
  if (!(lateral_jitter_sigma >= 0.0) || !(radius_jitter_sigma >= 0.0) || !(truncation >= 0.0)) {
    throw std::invalid_argument("plant jitter parameters must be >= 0");
  }
  if (jitter && radius - truncation * radius_jitter_sigma <= 0.0) {
    throw std::invalid_argument("radius jitter can produce non-positive plant radii");
  }
}

double centerline_y(double x, const RowSpec& spec) {
  const double amplitude = spec.effective_amplitude();
  if (amplitude == 0.0) return 0.0;
  return amplitude * std::sin(2.0 * std::numbers::pi * spec.frequency * x / spec.reference_length);
}

// ---------------------------------------------------------------------------

Centerline::Centerline(const RowSpec& spec)
    : amplitude_(spec.effective_amplitude()),
      wavenumber_(2.0 * std::numbers::pi * spec.frequency / spec.reference_length),
      row_length_(spec.row_length),
      x_end_(spec.row_length) {
  if (amplitude_ == 0.0 || wavenumber_ == 0.0) {
    amplitude_ = 0.0;
    return;
  }
  // Arc length is tabulated over [0, L]; since arc length >= x, x_end <= L.
  const auto intervals =
      static_cast<std::size_t>(std::ceil(row_length_ / kArcTableStep));
  table_step_ = row_length_ / static_cast<double>(intervals);
  arc_table_.resize(intervals + 1);
  arc_table_[0] = 0.0;
  for (std::size_t i = 0; i < intervals; ++i) {
    const double a = static_cast<double>(i) * table_step_;
    const double b = a + table_step_;
    const double simpson =
        table_step_ / 6.0 * (arc_rate(a) + 4.0 * arc_rate(0.5 * (a + b)) + arc_rate(b));
    arc_table_[i + 1] = arc_table_[i] + simpson;
  }
  x_end_ = x_at_arc_length(row_length_);
}

double Centerline::y(double x) const {
  if (amplitude_ == 0.0) return 0.0;
  return amplitude_ * std::sin(wavenumber_ * x);
}

double Centerline::slope(double x) const {
  if (amplitude_ == 0.0) return 0.0;
  return amplitude_ * wavenumber_ * std::cos(wavenumber_ * x);
}

Eigen::Vector2d Centerline::normal(double x) const {
  const double s = slope(x);
  return Eigen::Vector2d(-s, 1.0) / std::sqrt(1.0 + s * s);
}

double Centerline::arc_rate(double x) const {
  const double s = slope(x);
  return std::sqrt(1.0 + s * s);
}

double Centerline::arc_length(double x) const {
  if (arc_table_.empty()) return x;
  x = std::clamp(x, 0.0, row_length_);
  const std::size_t last = arc_table_.size() - 2;
  const auto i = std::min(static_cast<std::size_t>(x / table_step_), last);
  const double h = table_step_;
  const double u = (x - static_cast<double>(i) * h) / h;
  const double x0 = static_cast<double>(i) * h;
  // Cubic Hermite with exact derivatives at the table nodes.
  const double u2 = u * u;
  const double u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * arc_table_[i] + (u3 - 2 * u2 + u) * h * arc_rate(x0) +
         (-2 * u3 + 3 * u2) * arc_table_[i + 1] + (u3 - u2) * h * arc_rate(x0 + h);
}

double Centerline::x_at_arc_length(double arc) const {
  if (arc_table_.empty()) return arc;
  if (arc <= 0.0) return 0.0;
  if (arc >= arc_table_.back()) return row_length_;
  const auto upper = std::upper_bound(arc_table_.begin(), arc_table_.end(), arc);
  const auto i = static_cast<std::size_t>(upper - arc_table_.begin()) - 1;
  double x = (static_cast<double>(i) +
              (arc - arc_table_[i]) / (arc_table_[i + 1] - arc_table_[i])) *
             table_step_;
  for (int iter = 0; iter < 4; ++iter) {
    x -= (arc_length(x) - arc) / arc_rate(x);
  }
  return std::clamp(x, 0.0, row_length_);
}

double Centerline::closest_x(const Eigen::Vector2d& p) const {
  if (amplitude_ == 0.0) return std::clamp(p.x(), 0.0, x_end_);

  auto dist2 = [&](double x) { return (point(x) - p).squaredNorm(); };
  // The closest point is no farther than the point directly "below" p.
  const double anchor = std::clamp(p.x(), 0.0, x_end_);
  const double radius = std::sqrt(dist2(anchor)) + 1e-9;
  const double lo = std::max(0.0, p.x() - radius);
  const double hi = std::min(x_end_, p.x() + radius);
  if (hi <= lo) return anchor;

  const auto samples = static_cast<int>(std::ceil((hi - lo) / 0.02)) + 1;
  const double step = (hi - lo) / static_cast<double>(samples - 1);
  double best_x = lo;
  double best_d = dist2(lo);
  for (int i = 1; i < samples; ++i) {
    const double x = lo + step * i;
    const double d = dist2(x);
    if (d < best_d) {
      best_d = d;
      best_x = x;
    }
  }

  // Golden-section refinement on the bracketing sample interval.
  constexpr double kInvPhi = 0.6180339887498949;
  double a = std::max(lo, best_x - step);
  double b = std::min(hi, best_x + step);
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = dist2(c);
  double fd = dist2(d);
  while (b - a > 1e-10) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = dist2(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = dist2(d);
    }
  }
  const double refined = 0.5 * (a + b);
  return dist2(refined) <= best_d ? refined : best_x;
}

// ---------------------------------------------------------------------------

PlantationMap::PlantationMap(RowSpec spec, std::vector<Plant> left, std::vector<Plant> right)
    : spec_(spec), centerline_(spec), left_count_(left.size()) {
  plants_ = std::move(left);
  plants_.insert(plants_.end(), right.begin(), right.end());
  for (const Plant& plant : plants_) {
    if (!(plant.radius > 0.0) || !(plant.height > 0.0)) {
      throw std::invalid_argument("plant radius and height must be > 0");
    }
    max_radius_ = std::max(max_radius_, plant.radius);
  }
  sorted_index_.resize(plants_.size());
  std::iota(sorted_index_.begin(), sorted_index_.end(), 0U);
  std::stable_sort(sorted_index_.begin(), sorted_index_.end(), [&](auto a, auto b) {
    return plants_[a].center.x() < plants_[b].center.x();
  });
  sorted_x_.reserve(plants_.size());
  for (auto index : sorted_index_) sorted_x_.push_back(plants_[index].center.x());
}

PlantationMap generate(const RowSpec& spec, const PlantModel& model) {
  spec.validate();
  model.validate();
  if (spec.row_spacing <= 2.0 * model.max_radius()) {
    throw std::invalid_argument("row spacing " + format_double(spec.row_spacing) +
                                " m would seal the corridor (max plant radius " +
                                format_double(model.max_radius()) + " m)");
  }

  const Centerline centerline(spec);
  const double half_spacing = 0.5 * spec.row_spacing;

  auto place_row = [&](double side, std::uint64_t stream) {
    std::mt19937_64 rng(mix_seed(spec.seed, stream));
    std::vector<double> xs;

    if (spec.effective_amplitude() == 0.0 || spec.frequency == 0.0) {
      for (std::size_t k = 0;; ++k) {
        const double x = static_cast<double>(k) * model.spacing;
        if (x > spec.row_length + kCountSlack) break;
        xs.push_back(x);
      }
    } else {
      // Chord-length table of the offset curve, then uniform arc-length stations on it.
      const double x_end = centerline.x_end();
      const auto steps = static_cast<std::size_t>(std::ceil(x_end / kOffsetTableStep));
      const double dx = x_end / static_cast<double>(steps);
      std::vector<double> cumulative(steps + 1, 0.0);
      Eigen::Vector2d prev = centerline.point(0.0) + side * half_spacing * centerline.normal(0.0);
      for (std::size_t j = 1; j <= steps; ++j) {
        const double x = dx * static_cast<double>(j);
        const Eigen::Vector2d q = centerline.point(x) + side * half_spacing * centerline.normal(x);
        cumulative[j] = cumulative[j - 1] + (q - prev).norm();
        prev = q;
      }
      std::size_t j = 0;
      for (std::size_t k = 0;; ++k) {
        const double target = static_cast<double>(k) * model.spacing;
        if (target > cumulative.back() + kCountSlack) break;
        while (j + 1 < steps && cumulative[j + 1] < target) ++j;
        const double span = cumulative[j + 1] - cumulative[j];
        const double t = span > 0.0 ? std::clamp((target - cumulative[j]) / span, 0.0, 1.0) : 0.0;
        xs.push_back(dx * (static_cast<double>(j) + t));
      }
    }

    std::vector<Plant> row;
    row.reserve(xs.size());
    for (double x : xs) {
      double lateral = 0.0;
      double radius = model.radius;
      if (model.jitter) {
        lateral = truncated_normal(rng, model.lateral_jitter_sigma, model.truncation);
        radius += truncated_normal(rng, model.radius_jitter_sigma, model.truncation);
      }
      Plant plant;
      plant.center = centerline.point(x) + side * (half_spacing + lateral) * centerline.normal(x);
      plant.radius = radius;
      plant.height = model.height;
      row.push_back(plant);
    }
    return row;
  };

  auto left = place_row(+1.0, 0);
  auto right = place_row(-1.0, 1);
  return PlantationMap(spec, std::move(left), std::move(right));
}

// ---------------------------------------------------------------------------

bool footprint_hits(const Pose2& pose, const Footprint& footprint, const Plant& plant) {
  const Eigen::Vector2d local = to_local(pose, plant.center);
  const double hx = 0.5 * footprint.length;
  const double hy = 0.5 * footprint.width;
  const Eigen::Vector2d nearest(std::clamp(local.x(), -hx, hx), std::clamp(local.y(), -hy, hy));
  return (local - nearest).squaredNorm() < plant.radius * plant.radius;
}

bool collides(const Pose2& pose, const Footprint& footprint, const PlantationMap& map) {
  bool hit = false;
  map.for_each_near(pose.position, footprint.half_diagonal() + map.max_radius(),
                    [&](const Plant& plant) {
                      if (!hit && footprint_hits(pose, footprint, plant)) hit = true;
                    });
  return hit;
}

double progress(const Eigen::Vector2d& position, const PlantationMap& map) {
  const Centerline& centerline = map.centerline();
  const double arc = centerline.arc_length(centerline.closest_x(position));
  return std::clamp(arc, 0.0, map.spec().row_length);
}

// ---------------------------------------------------------------------------
// Text format, one record per line:
//   rowlab-plantation 1
//   pattern <straight|sinusoidal>
//   frequency <f>  amplitude <A>  row_length <L>  row_spacing <W>  reference_length <Lref>
//   seed <u64>
//   left <n>   followed by n lines "x y radius height"
//   right <n>  followed by n lines "x y radius height"
// Numbers are written in shortest round-trip form.

namespace {
constexpr std::string_view kMagic = "rowlab-plantation";
constexpr std::uint64_t kVersion = 1;
}  // namespace

std::string serialize(const PlantationMap& map) {
  const RowSpec& spec = map.spec();
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  out << "pattern " << to_string(spec.pattern) << '\n';
  out << "frequency " << format_double(spec.frequency) << '\n';
  out << "amplitude " << format_double(spec.amplitude) << '\n';
  out << "row_length " << format_double(spec.row_length) << '\n';
  out << "row_spacing " << format_double(spec.row_spacing) << '\n';
  out << "reference_length " << format_double(spec.reference_length) << '\n';
  out << "seed " << spec.seed << '\n';
  auto write_row = [&](std::string_view name, std::span<const Plant> row) {
    out << name << ' ' << row.size() << '\n';
    for (const Plant& p : row) {
      out << format_double(p.center.x()) << ' ' << format_double(p.center.y()) << ' '
          << format_double(p.radius) << ' ' << format_double(p.height) << '\n';
    }
  };
  write_row("left", map.left_plants());
  write_row("right", map.right_plants());
  return out.str();
}

PlantationMap deserialize(std::string_view text) {
  TokenReader in(text);
  in.expect(kMagic);
  const std::size_t version_at = in.offset();
  if (in.next_u64("version") != kVersion) {
    throw ParseError("unsupported plantation file version", version_at);
  }
  RowSpec spec;
  in.expect("pattern");
  const std::size_t pattern_at = in.offset();
  try {
    spec.pattern = parse_row_pattern(in.next_token("pattern"));
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), pattern_at);
  }
  in.expect("frequency");
  spec.frequency = in.next_double("frequency");
  in.expect("amplitude");
  spec.amplitude = in.next_double("amplitude");
  in.expect("row_length");
  spec.row_length = in.next_double("row_length");
  in.expect("row_spacing");
  spec.row_spacing = in.next_double("row_spacing");
  in.expect("reference_length");
  spec.reference_length = in.next_double("reference_length");
  in.expect("seed");
  spec.seed = in.next_u64("seed");
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), in.offset());
  }

  auto read_row = [&](std::string_view name) {
    in.expect(name);
    const std::size_t count = in.next_count("plant count");
    std::vector<Plant> row;
    row.reserve(std::min<std::size_t>(count, 1 << 20));
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t at = in.offset();
      Plant p;
      p.center.x() = in.next_double("plant x");
      p.center.y() = in.next_double("plant y");
      p.radius = in.next_double("plant radius");
      p.height = in.next_double("plant height");
      if (!(p.radius > 0.0) || !(p.height > 0.0)) {
        throw ParseError("plant radius and height must be > 0", at);
      }
      row.push_back(p);
    }
    return row;
  };
  auto left = read_row("left");
  auto right = read_row("right");
  if (!in.at_end()) throw ParseError("trailing data after plant lists", in.offset());
  return PlantationMap(spec, std::move(left), std::move(right));
}

}  // namespace rowlab::world
