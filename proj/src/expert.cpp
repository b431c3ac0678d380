#include "lepus/expert.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lepus/error.hpp"
#include "lepus/random.hpp"

namespace lepus::expert {

double PidUpdate(PidState& state, double error, double dt) {
  if (!std::isfinite(error)) throw ValueError("PID error must be finite");
  if (!(dt > 0.0)) throw ValueError("PID dt must be positive");
  state.integral += error * dt;
  const double derivative = state.has_previous ? (error - state.previous_error) / dt : 0.0;
  state.previous_error = error;
  state.has_previous = true;
  return state.gains.kp * error + state.gains.ki * state.integral + state.gains.kd * derivative;
}

double SpeedError(double v_x, double target_kmh) { return target_kmh - v_x; }

double AngleError(double track_pos, double alpha) { return -track_pos / 10.0 + alpha; }

Eigen::Vector3d ExpertAction(const sim::Observation& obs, PidState& speed_pid, PidState& angle_pid, double dt,
                             double target_kmh) {
  const double accel = PidUpdate(speed_pid, SpeedError(obs.v_x, target_kmh), dt);
  const double steer = PidUpdate(angle_pid, AngleError(obs.track_pos, obs.alpha), dt);
  Eigen::Vector3d action;
  action(0) = std::clamp(steer, -1.0, 1.0);
  if (accel < 0.0) {
    action(1) = 0.0;
    action(2) = 1.0;
  } else {
    action(1) = std::min(accel, 1.0);
    action(2) = 0.0;
  }
  return action;
}

JointPidDriver::JointPidDriver(int n_agents, const ExpertConfig& config)
    : config_(config),
      speed_(static_cast<std::size_t>(n_agents), PidState{config.speed}),
      angle_(static_cast<std::size_t>(n_agents), PidState{config.angle}) {}

void JointPidDriver::Reset() {
  for (auto& p : speed_) p.Reset();
  for (auto& p : angle_) p.Reset();
}

sim::JointAction JointPidDriver::Act(const std::vector<sim::Observation>& observations, double dt) {
  if (observations.size() != speed_.size()) throw ShapeError("PID driver: observation count mismatch");
  sim::JointAction action(3, static_cast<Eigen::Index>(observations.size()));
  for (std::size_t i = 0; i < observations.size(); ++i)
    action.col(static_cast<Eigen::Index>(i)) =
        ExpertAction(observations[i], speed_[i], angle_[i], dt, config_.target_speed_kmh);
  return action;
}

nlohmann::json GenerationSummary::ToJson() const {
  return {{"rounds_total", rounds_total},
          {"rounds_kept", rounds_kept},
          {"mean_lap_steps", mean_lap_steps},
          {"collision_count", collisions_total},
          {"rejected_incomplete", rejected_incomplete},
          {"rejected_too_slow", rejected_too_slow},
          {"rejected_collision", rejected_collision},
          {"kept_steps", kept_steps}};
}

int KeepThresholdSteps(double lap_length, double dt, double target_kmh, double factor) {
  const double ideal = lap_length / (target_kmh / sim::kMpsToKmh) / dt;
  return static_cast<int>(std::ceil(factor * ideal));
}

GenerationResult GenerateDataset(const sim::Track& track, const sim::SimConfig& sim_config,
                                 const GenerateConfig& config) {
  if (config.n_rounds < 0) throw ValueError("n_rounds must be non-negative");
  const int m = sim_config.n_agents;
  const int d = sim_config.obs_dim;
  GenerationResult result{JointTrajectoryDataset(m, d, track.id()), {}};
  GenerationSummary& summary = result.summary;

  sim::Simulator simulator(track, sim_config);
  JointPidDriver driver(m, config.expert);
  std::vector<double> states;
  std::vector<double> actions;
  for (int r = 0; r < config.n_rounds; ++r) {
    simulator.Reset(DeriveSeed(config.seed, "expert_round", static_cast<std::uint64_t>(r)));
    driver.Reset();
    states.clear();
    actions.clear();
    long collisions = 0;
    while (!simulator.done()) {
      const sim::JointState& s = simulator.joint_state();
      const sim::JointAction a = driver.Act(simulator.observations(), sim_config.dt);
      states.insert(states.end(), s.data(), s.data() + s.size());
      actions.insert(actions.end(), a.data(), a.data() + a.size());
      collisions += static_cast<long>(simulator.Step(a).collisions.size());
    }
    ++summary.rounds_total;
    summary.collisions_total += collisions;
    const int steps = simulator.tick();
    if (simulator.verdict().kind != sim::Termination::kLapComplete) {
      ++summary.rejected_incomplete;
    } else if (steps >= config.max_steps_keep) {
      ++summary.rejected_too_slow;
    } else if (collisions > 0) {
      ++summary.rejected_collision;
    } else {
      result.dataset.AddRound(states, actions);
      summary.kept_steps.push_back(steps);
    }
  }
  summary.rounds_kept = static_cast<int>(summary.kept_steps.size());
  if (summary.rounds_kept > 0)
    summary.mean_lap_steps =
        std::accumulate(summary.kept_steps.begin(), summary.kept_steps.end(), 0.0) / summary.rounds_kept;
  if (summary.rounds_kept < config.min_keep_fraction * config.n_rounds) {
    std::string why = summary.rejected_incomplete >= summary.rejected_too_slow &&
                              summary.rejected_incomplete >= summary.rejected_collision
                          ? "lap completion"
                          : (summary.rejected_too_slow >= summary.rejected_collision ? "step bound" : "zero collisions");
    throw Error("expert_filter", "only " + std::to_string(summary.rounds_kept) + " of " +
                                     std::to_string(summary.rounds_total) +
                                     " expert rounds passed the keep filter; most rejections failed the " + why +
                                     " criterion (check PID gains)");
  }
  return result;
}

}  // namespace lepus::expert
