#include "lepus/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lepus/error.hpp"

namespace lepus::sim {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kAxisBlend = 2.0;  // m

double Cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

bool SegmentsIntersect(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2, const Eigen::Vector2d& q1,
                       const Eigen::Vector2d& q2) {
  const Eigen::Vector2d r = p2 - p1;
  const Eigen::Vector2d s = q2 - q1;
  const double denom = Cross(r, s);
  if (std::abs(denom) < 1e-12) return false;  // parallel; dense samplings never overlap collinearly
  const double t = Cross(q1 - p1, s) / denom;
  const double u = Cross(q1 - p1, r) / denom;
  return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

}  // namespace

double WrapAngle(double angle) {
  double a = std::fmod(angle + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  a -= kPi;
  return a == -kPi ? kPi : a;  // (-pi, pi]
}

std::string TerminationName(Termination t) {
  switch (t) {
    case Termination::kNone:
      return "none";
    case Termination::kOffTrack:
      return "off_track";
    case Termination::kReverse:
      return "reverse";
    case Termination::kSlow:
      return "slow";
    case Termination::kTimeLimit:
      return "time_limit";
    case Termination::kLapComplete:
      return "lap_complete";
  }
  return "none";
}

Track Track::FromControlPoints(std::vector<Eigen::Vector2d> points, double half_width, std::string id) {
  if (points.size() >= 2 && (points.front() - points.back()).norm() < 1e-9) points.pop_back();
  if (points.size() < 3) throw ValueError("track needs at least 3 distinct control points");
  if (!(half_width > 0.0)) throw ValueError("track half_width must be positive");
  for (const auto& p : points)
    if (!p.allFinite()) throw ValueError("track control points must be finite");
  const std::size_t n = points.size();
  for (std::size_t i = 0; i < n; ++i)
    if ((points[(i + 1) % n] - points[i]).norm() < 1e-9)
      throw ValueError("track has repeated consecutive control points");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the closing segment
      if (SegmentsIntersect(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n]))
        throw ValueError("track centerline self-intersects");
    }
  }
  Track t;
  t.id_ = std::move(id);
  t.half_width_ = half_width;
  t.points_ = std::move(points);
  t.Build();
  return t;
}

Track Track::Oval(double lap_length, double half_width, double radius, double spacing) {
  const double straight = 0.5 * (lap_length - 2.0 * kPi * radius);
  if (!(radius > half_width) || !(straight > 0.0) || !(spacing > 0.0))
    throw ValueError("oval: lap_length too short for the requested radius");
  // Arc 0 sits in the middle of the bottom straight, heading +x.
  auto at = [&](double s) -> Eigen::Vector2d {
    const double half = 0.5 * straight;
    const double curve = kPi * radius;
    s = std::fmod(s, lap_length);
    if (s < half) return {s, -radius};
    s -= half;
    if (s < curve) {
      const double a = -kPi / 2 + s / radius;
      return {half + radius * std::cos(a), radius * std::sin(a)};
    }
    s -= curve;
    if (s < straight) return {half - s, radius};
    s -= straight;
    if (s < curve) {
      const double a = kPi / 2 + s / radius;
      return {-half + radius * std::cos(a), radius * std::sin(a)};
    }
    s -= curve;
    return {-half + s, -radius};
  };
  const auto n = static_cast<std::size_t>(std::max(8.0, std::round(lap_length / spacing)));
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(n);
  for (std::size_t k = 0; k < n; ++k) pts.push_back(at(lap_length * static_cast<double>(k) / static_cast<double>(n)));
  Track t = FromControlPoints(std::move(pts), half_width, "oval");
  return t;
}

void Track::Build() {
  const std::size_t n = points_.size();
  cumulative_.assign(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    cumulative_[k + 1] = cumulative_[k] + (points_[(k + 1) % n] - points_[k]).norm();
  lap_length_ = cumulative_[n];
  left_edge_.resize(n);
  right_edge_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector2d prev = (points_[k] - points_[(k + n - 1) % n]).normalized();
    const Eigen::Vector2d next = (points_[(k + 1) % n] - points_[k]).normalized();
    Eigen::Vector2d tangent = prev + next;
    if (tangent.norm() < 1e-9) tangent = next;
    tangent.normalize();
    const Eigen::Vector2d right(tangent.y(), -tangent.x());
    // Miter so that both adjacent edge segments stay half_width away.
    const double cos_half = std::max(0.2, right.dot(Eigen::Vector2d(next.y(), -next.x())));
    const double offset = half_width_ / cos_half;
    right_edge_[k] = points_[k] + offset * right;
    left_edge_[k] = points_[k] - offset * right;
  }
}

Track::Projection Track::Project(const Eigen::Vector2d& p) const {
  const std::size_t n = points_.size();
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  double best_t = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector2d& a = points_[k];
    const Eigen::Vector2d ab = points_[(k + 1) % n] - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    const double d = (a + t * ab - p).squaredNorm();
    if (d < best) {
      best = d;
      best_k = k;
      best_t = t;
    }
  }
  const Eigen::Vector2d& a = points_[best_k];
  const Eigen::Vector2d ab = points_[(best_k + 1) % n] - a;
  const Eigen::Vector2d tangent = ab.normalized();
  const Eigen::Vector2d right(tangent.y(), -tangent.x());
  Projection proj;
  proj.arc = cumulative_[best_k] + best_t * ab.norm();
  proj.lateral = (p - (a + best_t * ab)).dot(right);
  // Segment direction, blended toward the vertex tangents within a short
  // window at either end so the axis is continuous across vertices.
  auto vertex_heading = [&](std::size_t k) {
    const Eigen::Vector2d in = (points_[k % n] - points_[(k + n - 1) % n]).normalized();
    const Eigen::Vector2d out = (points_[(k + 1) % n] - points_[k % n]).normalized();
    const Eigen::Vector2d avg = in + out;
    return std::atan2(avg.y(), avg.x());
  };
  const double length = ab.norm();
  const double s = best_t * length;
  const double window = std::min(0.5 * length, kAxisBlend);
  const double hs = std::atan2(ab.y(), ab.x());
  if (s < window) {
    const double h0 = vertex_heading(best_k);
    proj.axis_heading = WrapAngle(h0 + (s / window) * WrapAngle(hs - h0));
  } else if (length - s < window) {
    const double h1 = vertex_heading(best_k + 1);
    proj.axis_heading = WrapAngle(h1 + ((length - s) / window) * WrapAngle(hs - h1));
  } else {
    proj.axis_heading = hs;
  }
  return proj;
}

Eigen::Vector2d Track::PointAt(double arc) const {
  arc = std::fmod(arc, lap_length_);
  if (arc < 0.0) arc += lap_length_;
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), arc);
  std::size_t k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - cumulative_.begin()) - 1));
  k = std::min(k, points_.size() - 1);
  const Eigen::Vector2d& a = points_[k];
  const Eigen::Vector2d& b = points_[(k + 1) % points_.size()];
  const double seg = cumulative_[k + 1] - cumulative_[k];
  return a + (b - a) * ((arc - cumulative_[k]) / seg);
}

double Track::HeadingAt(double arc) const { return Project(PointAt(arc)).axis_heading; }

double Track::RayDistance(const Eigen::Vector2d& origin, double angle, double max_range) const {
  const Eigen::Vector2d dir(std::cos(angle), std::sin(angle));
  double best = max_range;
  const std::size_t n = points_.size();
  auto scan = [&](const std::vector<Eigen::Vector2d>& edge) {
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::Vector2d& a = edge[k];
      const Eigen::Vector2d& b = edge[(k + 1) % n];
      const Eigen::Vector2d s = b - a;
      const double denom = Cross(dir, s);
      if (std::abs(denom) < 1e-12) continue;
      const Eigen::Vector2d ao = a - origin;
      const double t = Cross(ao, s) / denom;
      if (t < 0.0 || t >= best) continue;
      const double u = Cross(ao, dir) / denom;
      if (u >= 0.0 && u <= 1.0) best = t;
    }
  };
  scan(left_edge_);
  scan(right_edge_);
  return best;
}

nlohmann::json Track::ToJson() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points_) pts.push_back({p.x(), p.y()});
  return {{"id", id_}, {"half_width", half_width_}, {"control_points", pts}};
}

Track Track::FromJson(const nlohmann::json& j) {
  try {
    std::vector<Eigen::Vector2d> pts;
    for (const auto& p : j.at("control_points")) {
      if (!p.is_array() || p.size() != 2) throw FormatError("control point must be [x, y]");
      pts.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    return FromControlPoints(std::move(pts), j.at("half_width").get<double>(), j.value("id", std::string("custom")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed track document: ") + e.what());
  }
}

void SimConfig::Validate() const {
  if (n_agents < 1) throw ConfigError("n_agents must be >= 1");
  if (edge_rays < 1) throw ConfigError("edge_rays must be >= 1");
  if (obs_dim < RequiredObsDim())
    throw ConfigError("obs_dim " + std::to_string(obs_dim) + " is smaller than the " +
                      std::to_string(RequiredObsDim()) + " sensor channels");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(collision_radius > 0.0)) throw ConfigError("collision_radius must be positive");
  if (!(sensor_range > 0.0)) throw ConfigError("sensor_range must be positive");
  if (spacing < 0.0) throw ConfigError("spacing must be non-negative");
  if (rules.reverse_window < 1 || rules.slow_window < 1 || rules.grace_ticks < 0 || rules.max_ticks < 1)
    throw ConfigError("invalid rule windows");
}

Eigen::VectorXd Observation::ToVector(int dim) const {
  const auto needed = static_cast<int>(3 + edges.size() + opponents.size());
  if (dim < needed)
    throw ShapeError("observation needs " + std::to_string(needed) + " channels, dim is " + std::to_string(dim));
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  v(0) = v_x;
  v(1) = alpha;
  v(2) = track_pos;
  Eigen::Index i = 3;
  for (double e : edges) v(i++) = e;
  for (double o : opponents) v(i++) = o;
  return v;
}

Eigen::VectorXd FeatureScale(const SimConfig& config) {
  Eigen::VectorXd s = Eigen::VectorXd::Ones(config.obs_dim);
  s(0) = 1.0 / 100.0;
  s(1) = 1.0 / kPi;
  s(2) = 1.0;
  const int sensors = config.edge_rays + config.n_agents - 1;
  for (int i = 0; i < sensors; ++i) s(3 + i) = 1.0 / config.sensor_range;
  return s;
}

double GReward(double v_x, double alpha, double track_pos) {
  return v_x * std::cos(alpha) - v_x * std::sin(alpha) - v_x * std::abs(track_pos);
}

Verdict CheckRules(std::span<const TickRecord> history, const RuleParams& rules, double lap_length) {
  if (history.empty()) return {};
  const TickRecord& last = history.back();
  const auto n_agents = static_cast<int>(last.size());
  const auto n = static_cast<int>(history.size());

  for (int i = 0; i < n_agents; ++i)
    if (std::abs(last[static_cast<std::size_t>(i)].track_pos) > 1.0) return {Termination::kOffTrack, i};

  if (n >= rules.reverse_window) {
    for (int i = 0; i < n_agents; ++i) {
      bool sustained = true;
      for (int t = n - rules.reverse_window; t < n && sustained; ++t)
        sustained = std::abs(history[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)].alpha) > kPi / 2;
      if (sustained) return {Termination::kReverse, i};
    }
  }

  // Window must lie entirely after the grace period (ticks are 1-based).
  if (n - rules.slow_window >= rules.grace_ticks && n >= rules.slow_window) {
    for (int i = 0; i < n_agents; ++i) {
      bool sustained = true;
      for (int t = n - rules.slow_window; t < n && sustained; ++t)
        sustained = history[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)].v_x < rules.slow_threshold_kmh;
      if (sustained) return {Termination::kSlow, i};
    }
  }

  bool all_done = true;
  for (const auto& a : last) all_done = all_done && a.lap_progress >= lap_length;
  if (all_done) return {Termination::kLapComplete, -1};

  if (n >= rules.max_ticks) return {Termination::kTimeLimit, -1};
  return {};
}

std::vector<std::pair<int, int>> CollisionDetector::Detect(std::span<const CarState> cars, double radius) {
  if (!(radius > 0.0)) throw ValueError("collision radius must be positive");
  std::vector<std::pair<int, int>> contact;
  std::vector<std::pair<int, int>> events;
  const double threshold = 2.0 * radius;
  for (std::size_t i = 0; i < cars.size(); ++i) {
    for (std::size_t j = i + 1; j < cars.size(); ++j) {
      if ((cars[i].position - cars[j].position).norm() < threshold) {
        std::pair<int, int> pair{static_cast<int>(i), static_cast<int>(j)};
        contact.push_back(pair);
        if (std::find(in_contact_.begin(), in_contact_.end(), pair) == in_contact_.end()) events.push_back(pair);
      }
    }
  }
  in_contact_ = std::move(contact);
  return events;
}

Simulator::Simulator(Track track, SimConfig config) : track_(std::move(track)), config_(config) {
  config_.Validate();
  if (track_.lap_length() <= 0.0) throw ValueError("simulator needs a valid track");
}

const JointState& Simulator::Reset(std::uint64_t seed) {
  const int m = config_.n_agents;
  if (config_.spacing * m > track_.lap_length())
    throw ValueError("spacing * n_agents exceeds the lap length");
  if (m > 1 && config_.spacing < 2.0 * config_.collision_radius)
    throw ValueError("spacing places cars in contact at reset");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<CarState> cars(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double arc = (m - 1 - i) * config_.spacing;
    const double lateral = config_.lateral_jitter * unit(rng);
    const double dheading = config_.heading_jitter * unit(rng);
    const double axis = track_.HeadingAt(arc);
    const Eigen::Vector2d right(std::sin(axis), -std::cos(axis));
    CarState& c = cars[static_cast<std::size_t>(i)];
    c.position = track_.PointAt(arc) + lateral * right;
    c.heading = WrapAngle(axis + dheading);
  }
  return ResetWithCars(std::move(cars));
}

const JointState& Simulator::ResetWithCars(std::vector<CarState> cars) {
  if (static_cast<int>(cars.size()) != config_.n_agents)
    throw ShapeError("ResetWithCars: expected " + std::to_string(config_.n_agents) + " cars");
  cars_ = std::move(cars);
  for (auto& c : cars_) {
    if (c.speed < 0.0) throw ValueError("car speed must be non-negative");
    c.last_arc = track_.Project(c.position).arc;
    c.alive = true;
  }
  history_.clear();
  collisions_.Reset();
  collisions_.Detect(cars_, config_.collision_radius);  // pre-existing contact does not count
  verdict_ = {};
  Observe();
  return joint_state_;
}

void Simulator::Observe() {
  const int m = config_.n_agents;
  observations_.assign(static_cast<std::size_t>(m), Observation{});
  joint_state_.resize(config_.obs_dim, m);
  const double hw = track_.half_width();
  for (int i = 0; i < m; ++i) {
    const CarState& c = cars_[static_cast<std::size_t>(i)];
    const auto proj = track_.Project(c.position);
    Observation& o = observations_[static_cast<std::size_t>(i)];
    o.v_x = c.v_x_kmh();
    o.alpha = WrapAngle(c.heading - proj.axis_heading);
    o.track_pos = proj.lateral / hw;
    o.edges.resize(static_cast<std::size_t>(config_.edge_rays));
    for (int k = 0; k < config_.edge_rays; ++k) {
      const double offset = config_.edge_rays == 1
                                ? 0.0
                                : -kPi / 2 + kPi * static_cast<double>(k) / (config_.edge_rays - 1);
      o.edges[static_cast<std::size_t>(k)] = track_.RayDistance(c.position, c.heading + offset, config_.sensor_range);
    }
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      const double d = (cars_[static_cast<std::size_t>(j)].position - c.position).norm();
      o.opponents.push_back(std::min(d, config_.sensor_range));
    }
    joint_state_.col(i) = o.ToVector(config_.obs_dim);
  }
}

StepOutcome Simulator::Step(const JointAction& action) {
  const int m = config_.n_agents;
  if (action.rows() != kActionDim || action.cols() != m)
    throw ShapeError("step: joint action must be 3 x " + std::to_string(m) + ", got " +
                     std::to_string(action.rows()) + " x " + std::to_string(action.cols()));
  if (!action.allFinite()) throw ValueError("step: non-finite action");

  StepOutcome out;
  if (done()) {
    out.observations = joint_state_;
    out.g_reward = Eigen::VectorXd::Zero(m);
    out.termination = verdict_;
    return out;
  }

  const auto& dyn = config_.dynamics;
  const double dt = config_.dt;
  const double lap = track_.lap_length();
  for (int i = 0; i < m; ++i) {
    CarState& c = cars_[static_cast<std::size_t>(i)];
    const double steer = std::clamp(action(0, i), -1.0, 1.0);
    const double accel = std::clamp(action(1, i), 0.0, 1.0);
    const double brake = std::clamp(action(2, i), 0.0, 1.0);
    c.speed = std::max(0.0, c.speed + (dyn.accel_gain * accel - dyn.brake_gain * brake - dyn.drag * c.speed) * dt);
    c.heading = WrapAngle(c.heading - dyn.steer_gain * steer * c.speed * dt);
    c.position += c.speed * dt * Eigen::Vector2d(std::cos(c.heading), std::sin(c.heading));
    const double arc = track_.Project(c.position).arc;
    double delta = arc - c.last_arc;
    if (delta > lap / 2) delta -= lap;
    if (delta < -lap / 2) delta += lap;
    c.raw_progress += delta;
    c.lap_progress = std::max(c.lap_progress, c.raw_progress);
    c.last_arc = arc;
  }
  Observe();

  out.g_reward.resize(m);
  TickRecord record(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const Observation& o = observations_[static_cast<std::size_t>(i)];
    out.g_reward(i) = GReward(o.v_x, o.alpha, o.track_pos);
    record[static_cast<std::size_t>(i)] = {o.v_x, o.alpha, o.track_pos, cars_[static_cast<std::size_t>(i)].lap_progress};
  }
  out.collisions = collisions_.Detect(cars_, config_.collision_radius);
  history_.push_back(std::move(record));
  verdict_ = CheckRules(history_, config_.rules, lap);
  if (verdict_.terminal())
    for (auto& c : cars_) c.alive = false;
  out.observations = joint_state_;
  out.termination = verdict_;
  return out;
}

}  // namespace lepus::sim
