#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "lepus/config.hpp"
#include "lepus/error.hpp"
#include "lepus/eval.hpp"

using namespace lepus;

namespace {

class Idle : public eval::Controller {
 public:
  sim::JointAction Act(const sim::Simulator& s) override { return sim::JointAction::Zero(3, s.config().n_agents); }
};

class HardLeft : public eval::Controller {
 public:
  sim::JointAction Act(const sim::Simulator& s) override {
    sim::JointAction a = sim::JointAction::Zero(3, s.config().n_agents);
    a.row(0).setConstant(-1.0);
    a.row(1).setConstant(1.0);
    return a;
  }
};

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("stability fixtures") {
  CHECK(std::abs(eval::Stability(2036.56, 195.00) - 10.39) <= 0.01);
  CHECK(std::abs(eval::Stability(1813.42, 1.00) - 906.71) <= 0.01);
  CHECK(eval::Stability(123.4, 0.0) == 123.4);
  CHECK_THROWS_AS(eval::Stability(-1.0, 0.0), ValueError);
  CHECK_THROWS_AS(eval::Stability(1.0, -1.0), ValueError);
}

TEST_CASE("three-agent totals aggregation") {
  const auto r = eval::ReportFromTotals({41151.20, 41151.20, 39891.00}, {1480, 860, 1560}, 20);
  CHECK(std::abs(r.avg_distance - 2036.56) <= 0.005);
  CHECK(std::abs(r.avg_collisions - 195.00) <= 0.005);
  CHECK(std::abs(r.stability - 10.39) <= 0.01);
}

TEST_CASE("four-agent totals aggregation") {
  const auto r = eval::ReportFromTotals({41151.20, 38716.80, 34600.00, 30605.60}, {20, 0, 0, 0}, 20);
  CHECK(std::abs(r.avg_distance - 1813.42) <= 0.005);
  CHECK(std::abs(r.avg_collisions - 1.00) <= 0.005);
  CHECK(std::abs(r.stability - 906.71) <= 0.01);
}

TEST_CASE("aggregate over rounds") {
  std::vector<eval::RoundStats> one{{{100.0}, {0}, sim::Termination::kLapComplete, 10}};
  const auto a = eval::Aggregate(one, 1);
  CHECK(a.avg_distance == 100.0);
  CHECK(a.stability == 100.0);
  CHECK(a.avg_max_distance == 100.0);

  std::vector<eval::RoundStats> two{{{10.0, 30.0}, {1, 1}, sim::Termination::kOffTrack, 5},
                                    {{50.0, 20.0}, {0, 0}, sim::Termination::kSlow, 9}};
  const auto b = eval::Aggregate(two, 2);
  CHECK(b.agent_distance == std::vector<double>{60.0, 50.0});
  CHECK(b.avg_distance == doctest::Approx(110.0 / 4));
  CHECK(b.avg_max_distance == doctest::Approx(40.0));
  CHECK(b.avg_collisions == doctest::Approx(1.0));
  CHECK(b.stability == b.avg_distance / (1.0 + b.avg_collisions));
  CHECK_THROWS_AS(eval::Aggregate(std::vector<eval::RoundStats>{}, 2), ValueError);
}

TEST_CASE("idle controller travels nowhere") {
  const auto preset = config::Preset("desk3");
  Idle idle;
  const auto stats = eval::RunRounds(idle, preset.scenario.track.Build(), preset.scenario.sim, 1, 0);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].termination == sim::Termination::kSlow);
  for (double d : stats[0].distance) CHECK(d == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("violating controller ends the round early") {
  const auto preset = config::Preset("desk3");
  HardLeft left;
  const auto stats = eval::RunRounds(left, preset.scenario.track.Build(), preset.scenario.sim, 2, 0);
  CHECK(stats.size() == 2);
  for (const auto& s : stats) {
    CHECK(s.termination == sim::Termination::kOffTrack);
    CHECK(s.steps < 200);
  }
}

TEST_CASE("expert controller drives collision-free and deterministically") {
  const auto preset = config::Preset("desk3");
  const sim::Track track = preset.scenario.track.Build();
  eval::PidController pid(3, preset.expert.generate.expert);
  const auto a = eval::RunRounds(pid, track, preset.scenario.sim, 3, 4);
  const auto b = eval::RunRounds(pid, track, preset.scenario.sim, 3, 4);
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a[r].termination == sim::Termination::kLapComplete);
    for (int c : a[r].collisions) CHECK(c == 0);
    CHECK(a[r].distance == b[r].distance);
  }
  CHECK(eval::Aggregate(a, 3) == eval::Aggregate(b, 3));
}

TEST_CASE("roman numerals") {
  CHECK(eval::RomanNumeral(1) == "I");
  CHECK(eval::RomanNumeral(4) == "IV");
  CHECK(eval::RomanNumeral(9) == "IX");
  CHECK(eval::RomanNumeral(14) == "XIV");
}

TEST_CASE("report rendering and round trip") {
  const auto r = eval::ReportFromTotals({41151.20, 38716.80, 34600.00, 30605.60}, {20, 0, 0, 0}, 20, 2057.56);
  const std::string csv = eval::ReportCsv(r);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "metric,value");
  std::vector<std::string> labels;
  std::map<std::string, double> values;
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    labels.push_back(line.substr(0, comma));
    values[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  CHECK(labels.size() == 2 * 4 + 4);
  CHECK(labels[0] == "Agent-I Distance");
  CHECK(labels[7] == "Agent-IV Collision");
  CHECK(labels.back() == "Stability");
  const double recomputed = values["Avg. Distance"] / (1.0 + values["Avg. Collision No."]);
  CHECK(std::round(recomputed * 100) == std::round(values["Stability"] * 100));

  const auto back = eval::EvalReport::FromJson(nlohmann::json::parse(r.ToJson().dump()));
  CHECK(back == r);

  const auto stem = std::filesystem::temp_directory_path() / "lepus_test_report";
  eval::EmitReport(r, stem);
  CHECK(Slurp(stem.string() + ".csv") == csv);
  CHECK(eval::EvalReport::FromJson(nlohmann::json::parse(Slurp(stem.string() + ".json"))) == r);
}
