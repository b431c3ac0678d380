#pragma once

// Round-based evaluation: distance and collision accounting, the stability
// metric and report tables.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "lepus/expert.hpp"
#include "lepus/sim.hpp"
#include "lepus/trainer.hpp"

namespace lepus::eval {

class Controller {
 public:
  virtual ~Controller() = default;
  virtual void Reset() {}
  virtual sim::JointAction Act(const sim::Simulator& simulator) = 0;
};

// Deterministic shared policy (no exploration noise).
class PolicyController : public Controller {
 public:
  explicit PolicyController(const trainer::AgentEnsemble& ensemble) : ensemble_(ensemble) {}
  sim::JointAction Act(const sim::Simulator& simulator) override;

 private:
  const trainer::AgentEnsemble& ensemble_;
};

class PidController : public Controller {
 public:
  PidController(int n_agents, const expert::ExpertConfig& config) : driver_(n_agents, config) {}
  void Reset() override { driver_.Reset(); }
  sim::JointAction Act(const sim::Simulator& simulator) override;

 private:
  expert::JointPidDriver driver_;
};

struct RoundStats {
  std::vector<double> distance;  // m, per agent
  std::vector<int> collisions;   // per agent; each contact counts for both cars
  sim::Termination termination = sim::Termination::kNone;
  int steps = 0;
};

// Round r starts from a reset seeded by (seed, r) and runs to termination.
std::vector<RoundStats> RunRounds(Controller& controller, const sim::Track& track, const sim::SimConfig& sim_config,
                                  int rounds, std::uint64_t seed);

double Stability(double avg_distance, double avg_collisions);

struct EvalReport {
  int n_agents = 0;
  int rounds = 0;
  std::vector<double> agent_distance;    // totals over rounds
  std::vector<double> agent_collisions;  // totals over rounds
  double avg_distance = 0.0;             // total distance / (M * R)
  double avg_max_distance = 0.0;         // mean over rounds of the best agent's distance
  double avg_collisions = 0.0;           // total collision increments / R
  double stability = 0.0;

  nlohmann::json ToJson() const;
  static EvalReport FromJson(const nlohmann::json& j);
  bool operator==(const EvalReport&) const = default;
};

EvalReport Aggregate(std::span<const RoundStats> stats, int n_agents);
// Report from per-agent totals (avg_max_distance supplied by the caller).
EvalReport ReportFromTotals(std::vector<double> agent_distance, std::vector<double> agent_collisions, int rounds,
                            double avg_max_distance = 0.0);

std::string RomanNumeral(int n);
// Header plus 2M + 4 labeled rows.
std::string ReportCsv(const EvalReport& report);
// Writes <stem>.json and <stem>.csv.
void EmitReport(const EvalReport& report, const std::filesystem::path& stem);
void WriteRoundsCsv(std::span<const RoundStats> stats, const std::filesystem::path& path);

}  // namespace lepus::eval
