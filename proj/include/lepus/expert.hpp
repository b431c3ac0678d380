#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "lepus/dataset.hpp"
#include "lepus/sim.hpp"

namespace lepus::expert {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
};

struct PidState {
  PidGains gains;
  double integral = 0.0;  // error * s
  double previous_error = 0.0;
  bool has_previous = false;

  void Reset() {
    integral = 0.0;
    previous_error = 0.0;
    has_previous = false;
  }
};

// u = kp*e + ki*sum(e*dt) + kd*(e - e_prev)/dt. The derivative term is zero on
// the first call after a reset.
double PidUpdate(PidState& state, double error, double dt);

struct ExpertConfig {
  PidGains speed{0.3, 0.005, 0.0};
  PidGains angle{3.0, 0.5, 0.2};
  double target_speed_kmh = 50.0;
};

double SpeedError(double v_x, double target_kmh = 50.0);
double AngleError(double track_pos, double alpha);

// [steering, acceleration, braking]; braking is 1 (and acceleration 0) when the
// raw speed-loop output is negative.
Eigen::Vector3d ExpertAction(const sim::Observation& obs, PidState& speed_pid, PidState& angle_pid, double dt,
                             double target_kmh = 50.0);

// One pair of PID loops per car.
class JointPidDriver {
 public:
  JointPidDriver(int n_agents, const ExpertConfig& config);
  void Reset();
  sim::JointAction Act(const std::vector<sim::Observation>& observations, double dt);

 private:
  ExpertConfig config_;
  std::vector<PidState> speed_;
  std::vector<PidState> angle_;
};

struct GenerateConfig {
  int n_rounds = 100;
  int max_steps_keep = 360;
  double min_keep_fraction = 0.5;
  std::uint64_t seed = 0;
  ExpertConfig expert;
};

struct GenerationSummary {
  int rounds_total = 0;
  int rounds_kept = 0;
  double mean_lap_steps = 0.0;  // over kept rounds
  long collisions_total = 0;    // over all generated rounds
  int rejected_incomplete = 0;
  int rejected_too_slow = 0;
  int rejected_collision = 0;
  std::vector<int> kept_steps;

  nlohmann::json ToJson() const;
};

struct GenerationResult {
  JointTrajectoryDataset dataset;
  GenerationSummary summary;
};

// Keep threshold for the desk-scale filter: factor * ideal lap ticks at the
// target speed.
int KeepThresholdSteps(double lap_length, double dt, double target_kmh = 50.0, double factor = 1.25);

// Runs n_rounds PID-driven rounds (round r seeded from seed and r) and keeps
// those that complete the lap in fewer than max_steps_keep ticks with zero
// collisions.
GenerationResult GenerateDataset(const sim::Track& track, const sim::SimConfig& sim_config,
                                 const GenerateConfig& config);

}  // namespace lepus::expert
