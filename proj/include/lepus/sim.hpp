#pragma once

// Deterministic 2D multi-car closed-track simulator.
//
// Sign conventions:
//   heading / alpha   counter-clockwise positive, alpha = heading - track axis
//   trackPos          positive to the right of the centerline, +-1 at the edges
//   steering          positive turns clockwise (toward decreasing heading)
//
// Joint states are D x M matrices (one column per agent) and joint actions are
// 3 x M matrices with rows [steering, acceleration, braking].

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lepus::sim {

using JointState = Eigen::MatrixXd;   // D x M
using JointAction = Eigen::MatrixXd;  // 3 x M

inline constexpr int kActionDim = 3;
inline constexpr double kMpsToKmh = 3.6;

class Track {
 public:
  Track() = default;
  // Closed polyline through the control points (last point joins the first).
  static Track FromControlPoints(std::vector<Eigen::Vector2d> points, double half_width,
                                 std::string id = "custom");
  // Two straights joined by semicircles; counter-clockwise.
  static Track Oval(double lap_length, double half_width, double radius, double spacing = 1.0);
  static Track FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;

  double lap_length() const { return lap_length_; }
  double half_width() const { return half_width_; }
  const std::string& id() const { return id_; }
  const std::vector<Eigen::Vector2d>& points() const { return points_; }

  struct Projection {
    double arc = 0.0;      // arc length of the closest centerline point
    double lateral = 0.0;  // signed distance, positive to the right
    double axis_heading = 0.0;
  };
  Projection Project(const Eigen::Vector2d& p) const;
  Eigen::Vector2d PointAt(double arc) const;
  double HeadingAt(double arc) const;
  // Distance along the ray to the nearest track edge, capped at max_range.
  double RayDistance(const Eigen::Vector2d& origin, double angle, double max_range) const;

 private:
  void Build();

  std::string id_;
  double half_width_ = 0.0;
  double lap_length_ = 0.0;
  std::vector<Eigen::Vector2d> points_;
  std::vector<double> cumulative_;  // arc at vertex k; size n + 1
  std::vector<Eigen::Vector2d> left_edge_;
  std::vector<Eigen::Vector2d> right_edge_;
};

struct DynamicsParams {
  double steer_gain = 0.1;  // curvature (1/m) at full steering
  double accel_gain = 3.0;  // m/s^2 at full throttle
  double brake_gain = 6.0;  // m/s^2 at full brake
  double drag = 0.1;        // 1/s
};

struct RuleParams {
  int reverse_window = 20;
  int slow_window = 50;
  int grace_ticks = 50;
  int max_ticks = 3000;
  double slow_threshold_kmh = 1.0;
};

struct SimConfig {
  int n_agents = 3;
  int obs_dim = 65;
  double dt = 0.1;
  double spacing = 20.0;
  double collision_radius = 1.0;
  int edge_rays = 19;
  double sensor_range = 100.0;
  double lateral_jitter = 0.0;  // m, uniform at reset
  double heading_jitter = 0.0;  // rad, uniform at reset
  DynamicsParams dynamics;
  RuleParams rules;

  int RequiredObsDim() const { return 3 + edge_rays + (n_agents - 1); }
  void Validate() const;
};

struct CarState {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double heading = 0.0;
  double speed = 0.0;         // m/s, >= 0
  double lap_progress = 0.0;  // best signed arc progress this round, m
  double raw_progress = 0.0;  // signed accumulated arc progress, m
  double last_arc = 0.0;
  bool alive = true;

  double v_x_kmh() const { return speed * kMpsToKmh; }
};

struct Observation {
  double v_x = 0.0;        // km/h
  double alpha = 0.0;      // rad in (-pi, pi]
  double track_pos = 0.0;  // lateral offset / half width
  std::vector<double> edges;
  std::vector<double> opponents;

  // Layout: [v_x, alpha, trackPos, edges..., opponents..., 0-padding].
  Eigen::VectorXd ToVector(int dim) const;
};

enum class Termination { kNone, kOffTrack, kReverse, kSlow, kTimeLimit, kLapComplete };
std::string TerminationName(Termination t);

struct Verdict {
  Termination kind = Termination::kNone;
  int agent = -1;  // violating agent, -1 when not agent-specific
  bool terminal() const { return kind != Termination::kNone; }
  bool violation() const { return terminal() && kind != Termination::kLapComplete; }
};

// Per-agent snapshot used by the driving rules.
struct AgentTick {
  double v_x = 0.0;
  double alpha = 0.0;
  double track_pos = 0.0;
  double lap_progress = 0.0;
};
using TickRecord = std::vector<AgentTick>;

// Driving rules over a round history (one record per completed tick).
Verdict CheckRules(std::span<const TickRecord> history, const RuleParams& rules, double lap_length);

double GReward(double v_x, double alpha, double track_pos);

// Edge-triggered contact detection: a pair is reported on the tick its centre
// distance first drops below 2 * radius and not again until it separates.
class CollisionDetector {
 public:
  std::vector<std::pair<int, int>> Detect(std::span<const CarState> cars, double radius);
  void Reset() { in_contact_.clear(); }

 private:
  std::vector<std::pair<int, int>> in_contact_;
};

struct StepOutcome {
  JointState observations;  // D x M
  Eigen::VectorXd g_reward;
  std::vector<std::pair<int, int>> collisions;
  Verdict termination;
};

// Per-dimension multipliers mapping raw observations to O(1) network inputs.
Eigen::VectorXd FeatureScale(const SimConfig& config);

double WrapAngle(double angle);

class Simulator {
 public:
  Simulator(Track track, SimConfig config);

  // Cars on the centerline at equal arc spacing (car 0 leads), V_x = 0, with
  // optional seeded lateral / heading jitter.
  const JointState& Reset(std::uint64_t seed);
  const JointState& ResetWithCars(std::vector<CarState> cars);

  StepOutcome Step(const JointAction& action);

  const Track& track() const { return track_; }
  const SimConfig& config() const { return config_; }
  const std::vector<CarState>& cars() const { return cars_; }
  const std::vector<Observation>& observations() const { return observations_; }
  const JointState& joint_state() const { return joint_state_; }
  const Verdict& verdict() const { return verdict_; }
  int tick() const { return static_cast<int>(history_.size()); }
  bool done() const { return verdict_.terminal(); }

 private:
  void Observe();

  Track track_;
  SimConfig config_;
  std::vector<CarState> cars_;
  std::vector<Observation> observations_;
  JointState joint_state_;
  std::vector<TickRecord> history_;
  CollisionDetector collisions_;
  Verdict verdict_;
};

}  // namespace lepus::sim
