#include "lepus/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lepus/error.hpp"
#include "lepus/random.hpp"

namespace lepus::eval {
namespace {

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io_error", "failed writing " + path.string());
}

}  // namespace

sim::JointAction PolicyController::Act(const sim::Simulator& simulator) {
  return trainer::SelectActions(ensemble_, simulator.joint_state(), nullptr, false);
}

sim::JointAction PidController::Act(const sim::Simulator& simulator) {
  return driver_.Act(simulator.observations(), simulator.config().dt);
}

std::vector<RoundStats> RunRounds(Controller& controller, const sim::Track& track, const sim::SimConfig& sim_config,
                                  int rounds, std::uint64_t seed) {
  if (rounds < 1) throw ValueError("evaluation needs at least one round");
  sim::Simulator simulator(track, sim_config);
  std::vector<RoundStats> out;
  out.reserve(static_cast<std::size_t>(rounds));
  for (int r = 0; r < rounds; ++r) {
    simulator.Reset(DeriveSeed(seed, "eval_round", static_cast<std::uint64_t>(r)));
    controller.Reset();
    RoundStats rs;
    rs.collisions.assign(static_cast<std::size_t>(sim_config.n_agents), 0);
    while (!simulator.done()) {
      const sim::StepOutcome step = simulator.Step(controller.Act(simulator));
      for (const auto& [a, b] : step.collisions) {
        ++rs.collisions[static_cast<std::size_t>(a)];
        ++rs.collisions[static_cast<std::size_t>(b)];
      }
      ++rs.steps;
    }
    for (const auto& car : simulator.cars()) rs.distance.push_back(std::max(0.0, car.lap_progress));
    rs.termination = simulator.verdict().kind;
    out.push_back(std::move(rs));
  }
  return out;
}

double Stability(double avg_distance, double avg_collisions) {
  if (!(avg_distance >= 0.0) || !(avg_collisions >= 0.0))
    throw ValueError("stability needs non-negative distance and collisions");
  return avg_distance / (1.0 + avg_collisions);
}

EvalReport ReportFromTotals(std::vector<double> agent_distance, std::vector<double> agent_collisions, int rounds,
                            double avg_max_distance) {
  if (rounds < 1 || agent_distance.empty() || agent_distance.size() != agent_collisions.size())
    throw ValueError("report needs R >= 1 and matching per-agent totals");
  EvalReport r;
  r.n_agents = static_cast<int>(agent_distance.size());
  r.rounds = rounds;
  double d = 0.0, c = 0.0;
  for (double x : agent_distance) d += x;
  for (double x : agent_collisions) c += x;
  r.agent_distance = std::move(agent_distance);
  r.agent_collisions = std::move(agent_collisions);
  r.avg_distance = d / (static_cast<double>(r.n_agents) * rounds);
  r.avg_collisions = c / rounds;
  r.avg_max_distance = avg_max_distance;
  r.stability = Stability(r.avg_distance, r.avg_collisions);
  return r;
}

EvalReport Aggregate(std::span<const RoundStats> stats, int n_agents) {
  if (stats.empty()) throw ValueError("cannot aggregate zero rounds");
  std::vector<double> dist(static_cast<std::size_t>(n_agents), 0.0);
  std::vector<double> coll(static_cast<std::size_t>(n_agents), 0.0);
  double max_sum = 0.0;
  for (const auto& rs : stats) {
    if (rs.distance.size() != dist.size() || rs.collisions.size() != coll.size())
      throw ShapeError("round stats do not match the agent count");
    for (std::size_t i = 0; i < dist.size(); ++i) {
      dist[i] += rs.distance[i];
      coll[i] += rs.collisions[i];
    }
    max_sum += *std::max_element(rs.distance.begin(), rs.distance.end());
  }
  const auto rounds = static_cast<int>(stats.size());
  return ReportFromTotals(std::move(dist), std::move(coll), rounds, max_sum / rounds);
}

nlohmann::json EvalReport::ToJson() const {
  return {{"format", "lepus.eval_report"},
          {"version", 1},
          {"n_agents", n_agents},
          {"rounds", rounds},
          {"agent_distance", agent_distance},
          {"agent_collisions", agent_collisions},
          {"avg_distance", avg_distance},
          {"avg_max_distance", avg_max_distance},
          {"avg_collisions", avg_collisions},
          {"stability", stability}};
}

EvalReport EvalReport::FromJson(const nlohmann::json& j) {
  try {
    if (j.at("format") != "lepus.eval_report") throw FormatError("not an evaluation report");
    EvalReport r;
    r.n_agents = j.at("n_agents").get<int>();
    r.rounds = j.at("rounds").get<int>();
    r.agent_distance = j.at("agent_distance").get<std::vector<double>>();
    r.agent_collisions = j.at("agent_collisions").get<std::vector<double>>();
    r.avg_distance = j.at("avg_distance").get<double>();
    r.avg_max_distance = j.at("avg_max_distance").get<double>();
    r.avg_collisions = j.at("avg_collisions").get<double>();
    r.stability = j.at("stability").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed evaluation report: ") + e.what());
  }
}

std::string RomanNumeral(int n) {
  if (n < 1 || n > 3999) throw ValueError("roman numerals cover 1..3999");
  static const std::pair<int, const char*> kTable[] = {{1000, "M"}, {900, "CM"}, {500, "D"}, {400, "CD"},
                                                       {100, "C"},  {90, "XC"},  {50, "L"},  {40, "XL"},
                                                       {10, "X"},   {9, "IX"},   {5, "V"},   {4, "IV"},
                                                       {1, "I"}};
  std::string out;
  for (const auto& [value, glyph] : kTable)
    while (n >= value) {
      out += glyph;
      n -= value;
    }
  return out;
}

std::string ReportCsv(const EvalReport& report) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "metric,value\n";
  for (int i = 0; i < report.n_agents; ++i)
    out << "Agent-" << RomanNumeral(i + 1) << " Distance," << report.agent_distance[static_cast<std::size_t>(i)]
        << '\n'
        << "Agent-" << RomanNumeral(i + 1) << " Collision," << report.agent_collisions[static_cast<std::size_t>(i)]
        << '\n';
  out << "Avg. Distance," << report.avg_distance << '\n'
      << "Avg. Max. Distance," << report.avg_max_distance << '\n'
      << "Avg. Collision No.," << report.avg_collisions << '\n'
      << "Stability," << report.stability << '\n';
  return out.str();
}

void EmitReport(const EvalReport& report, const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  auto csv_path = stem;
  csv_path += ".csv";
  WriteText(json_path, report.ToJson().dump(2) + "\n");
  WriteText(csv_path, ReportCsv(report));
}

void WriteRoundsCsv(std::span<const RoundStats> stats, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(17) << "round,agent,distance,collisions,steps,termination\n";
  for (std::size_t r = 0; r < stats.size(); ++r)
    for (std::size_t i = 0; i < stats[r].distance.size(); ++i)
      out << r << ',' << i << ',' << stats[r].distance[i] << ',' << stats[r].collisions[i] << ',' << stats[r].steps
          << ',' << sim::TerminationName(stats[r].termination) << '\n';
  WriteText(path, out.str());
}

}  // namespace lepus::eval
