#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lepus/config.hpp"
#include "lepus/error.hpp"
#include "lepus/random.hpp"
#include "lepus/sim.hpp"

using namespace lepus;
using sim::Termination;

namespace {

constexpr double kPi = std::numbers::pi;

sim::SimConfig Desk(int agents) {
  sim::SimConfig c = config::Preset("desk3").scenario.sim;
  c.n_agents = agents;
  c.lateral_jitter = 0.0;
  c.heading_jitter = 0.0;
  return c;
}

sim::Track DeskTrack() { return config::Preset("desk3").scenario.track.Build(); }

sim::JointAction Zero(int m) { return sim::JointAction::Zero(3, m); }

sim::TickRecord Tick(std::initializer_list<sim::AgentTick> agents) { return sim::TickRecord(agents); }

}  // namespace

TEST_CASE("g reward fixtures") {
  CHECK(sim::GReward(0.0, 0.3, 0.4) == 0.0);
  CHECK(sim::GReward(10.0, 0.0, 0.0) == 10.0);
  CHECK(sim::GReward(10.0, 0.0, 0.5) == 5.0);
  CHECK(sim::GReward(10.0, 0.0, -0.5) == 5.0);
}

TEST_CASE("g reward peaks at alpha = -pi/4 on the centerline") {
  double best = -1e9, best_alpha = 0.0;
  for (int k = -2000; k <= 2000; ++k) {
    const double a = kPi * k / 2000.0;
    const double g = sim::GReward(20.0, a, 0.0);
    if (g > best) best = g, best_alpha = a;
  }
  CHECK(best_alpha == doctest::Approx(-kPi / 4).epsilon(2e-3));
  CHECK(best == doctest::Approx(20.0 * std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("oval track geometry") {
  const sim::Track t = sim::Track::Oval(400.0, 6.0, 30.0);
  CHECK(t.lap_length() == doctest::Approx(400.0).epsilon(1e-3));
  for (double arc : {0.0, 57.0, 150.0, 333.3}) {
    const auto p = t.Project(t.PointAt(arc));
    CHECK(p.lateral == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::abs(p.arc - arc) < 1e-6);
  }
  const auto p = t.Project(t.PointAt(10.0));
  const double h = p.axis_heading;
  const Eigen::Vector2d right(std::sin(h), -std::cos(h));
  CHECK(t.Project(t.PointAt(10.0) + 3.0 * right).lateral == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(t.RayDistance(t.PointAt(10.0), h - kPi / 2, 100.0) == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("track validation and JSON round trip") {
  CHECK_THROWS_AS(sim::Track::FromControlPoints({{0, 0}, {1, 0}}, 1.0), ValueError);
  CHECK_THROWS_AS(sim::Track::FromControlPoints({{0, 0}, {10, 0}, {10, 10}, {0, 10}}, 0.0), ValueError);
  CHECK_THROWS_AS(sim::Track::FromControlPoints({{0, 0}, {10, 10}, {10, 0}, {0, 10}}, 1.0), ValueError);
  const sim::Track sq = sim::Track::FromControlPoints({{0, 0}, {10, 0}, {10, 10}, {0, 10}}, 1.0, "square");
  CHECK(sq.lap_length() == doctest::Approx(40.0));
  const sim::Track back = sim::Track::FromJson(nlohmann::json::parse(sq.ToJson().dump()));
  CHECK(back.lap_length() == sq.lap_length());
  CHECK(back.id() == "square");
  CHECK_THROWS_AS(sim::Track::FromJson(nlohmann::json{{"points", 3}}), FormatError);
}

TEST_CASE("reset places a single car on axis") {
  sim::Simulator s(DeskTrack(), Desk(1));
  s.Reset(0);
  CHECK(s.observations()[0].track_pos == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.observations()[0].alpha == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.observations()[0].v_x == 0.0);
}

TEST_CASE("reset spaces cars evenly along the arc") {
  sim::SimConfig c = Desk(3);
  c.spacing = 20.0;
  sim::Simulator s(DeskTrack(), c);
  s.Reset(0);
  std::vector<double> arcs;
  for (const auto& car : s.cars()) arcs.push_back(s.track().Project(car.position).arc);
  CHECK(arcs[0] - arcs[1] == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(arcs[1] - arcs[2] == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("four agents observe full-width vectors") {
  sim::Simulator s(DeskTrack(), Desk(4));
  const auto& js = s.Reset(3);
  CHECK(js.rows() == 65);
  CHECK(js.cols() == 4);
  CHECK(s.observations()[0].opponents.size() == 3);
}

TEST_CASE("reset and step reject bad inputs") {
  sim::SimConfig c = Desk(3);
  c.spacing = 200.0;
  sim::Simulator far(DeskTrack(), c);
  CHECK_THROWS_AS(far.Reset(0), ValueError);
  sim::Simulator s(DeskTrack(), Desk(3));
  s.Reset(0);
  CHECK_THROWS_AS(s.Step(Zero(2)), ShapeError);
  sim::JointAction bad = Zero(3);
  bad(0, 0) = NAN;
  CHECK_THROWS_AS(s.Step(bad), ValueError);
  sim::SimConfig small = Desk(3);
  small.obs_dim = 10;
  CHECK_THROWS_AS(sim::Simulator(DeskTrack(), small), ConfigError);
}

TEST_CASE("zero action from rest stays put") {
  sim::Simulator s(DeskTrack(), Desk(1));
  s.Reset(0);
  const Eigen::Vector2d p0 = s.cars()[0].position;
  const auto out = s.Step(Zero(1));
  CHECK(s.observations()[0].v_x == 0.0);
  CHECK(out.g_reward(0) == 0.0);
  CHECK(s.cars()[0].position == p0);
}

TEST_CASE("full brake at speed strictly slows the car") {
  sim::Simulator s(DeskTrack(), Desk(1));
  s.Reset(0);
  sim::JointAction go = Zero(1);
  go(1, 0) = 1.0;
  for (int i = 0; i < 30; ++i) s.Step(go);
  double v = s.observations()[0].v_x;
  CHECK(v > 0.0);
  sim::JointAction brake = Zero(1);
  brake(2, 0) = 1.0;
  for (int i = 0; i < 5; ++i) {
    s.Step(brake);
    const double nv = s.observations()[0].v_x;
    CHECK(nv < v);
    v = nv;
  }
}

TEST_CASE("coasting never increases speed") {
  sim::Simulator s(DeskTrack(), Desk(1));
  s.Reset(0);
  sim::JointAction go = Zero(1);
  go(1, 0) = 1.0;
  for (int i = 0; i < 40; ++i) s.Step(go);
  Rng rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double v = s.observations()[0].v_x;
  for (int i = 0; i < 100 && !s.done(); ++i) {
    sim::JointAction a = Zero(1);
    a(0, 0) = 0.05 * u(rng);
    s.Step(a);
    CHECK(s.observations()[0].v_x <= v);
    v = s.observations()[0].v_x;
  }
}

TEST_CASE("collision detection is edge triggered") {
  sim::CollisionDetector d;
  std::vector<sim::CarState> cars(3);
  cars[0].position = {0, 0};
  cars[1].position = {50, 0};
  cars[2].position = {100, 0};
  CHECK(d.Detect(cars, 1.0).empty());
  cars[1].position = {2.0 - 1e-9, 0};
  auto ev = d.Detect(cars, 1.0);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0] == std::pair<int, int>{0, 1});
  int count = 0;
  for (int t = 0; t < 10; ++t) count += static_cast<int>(d.Detect(cars, 1.0).size());
  CHECK(count == 0);
  cars[1].position = {5, 0};
  CHECK(d.Detect(cars, 1.0).empty());
  cars[1].position = {1, 0};
  CHECK(d.Detect(cars, 1.0).size() == 1);
  cars[1].position = {2.0, 0};
  d.Reset();
  CHECK(d.Detect(cars, 1.0).empty());
}

TEST_CASE("simulator counts a closing contact once") {
  sim::Simulator s(DeskTrack(), Desk(2));
  s.Reset(0);
  auto cars = s.cars();
  const double arc = s.track().Project(cars[0].position).arc;
  cars[1].position = s.track().PointAt(arc - 3.0);
  cars[1].heading = cars[0].heading;
  cars[1].speed = 5.0;
  s.ResetWithCars(cars);
  sim::JointAction a = Zero(2);
  int events = 0;
  for (int t = 0; t < 20; ++t) {
    for (const auto& e : s.Step(a).collisions) {
      CHECK(e == std::pair<int, int>{0, 1});
      ++events;
    }
  }
  CHECK(events == 1);

  auto overlap = s.cars();
  overlap[1].position = overlap[0].position;
  overlap[1].speed = overlap[0].speed = 0.0;
  s.ResetWithCars(overlap);
  CHECK(s.Step(Zero(2)).collisions.empty());
}

TEST_CASE("rule: off track") {
  const sim::RuleParams r;
  std::vector<sim::TickRecord> h{Tick({{10, 0, 0.2, 1}, {10, 0, 1.2, 1}})};
  const auto v = sim::CheckRules(h, r, 400.0);
  CHECK(v.kind == Termination::kOffTrack);
  CHECK(v.agent == 1);
  CHECK(v.violation());
}

TEST_CASE("rule: sustained reverse") {
  sim::RuleParams r;
  std::vector<sim::TickRecord> h;
  for (int t = 0; t < r.reverse_window - 1; ++t) h.push_back(Tick({{10, 2.0, 0, 1}}));
  CHECK(!sim::CheckRules(h, r, 400.0).terminal());
  h.push_back(Tick({{10, 2.0, 0, 1}}));
  CHECK(sim::CheckRules(h, r, 400.0).kind == Termination::kReverse);
}

TEST_CASE("rule: slow after grace") {
  sim::RuleParams r;
  std::vector<sim::TickRecord> h;
  for (int t = 0; t < r.grace_ticks + r.slow_window - 1; ++t) h.push_back(Tick({{0.5, 0, 0, 1}}));
  CHECK(!sim::CheckRules(h, r, 400.0).terminal());
  h.push_back(Tick({{0.5, 0, 0, 1}}));
  const auto v = sim::CheckRules(h, r, 400.0);
  CHECK(v.kind == Termination::kSlow);
  CHECK(v.agent == 0);

  std::vector<sim::TickRecord> fast;
  for (int t = 0; t < 200; ++t) fast.push_back(Tick({{1.0, 0, 0, 1}}));
  CHECK(!sim::CheckRules(fast, r, 400.0).terminal());
}

TEST_CASE("rule: lap complete needs every agent") {
  const sim::RuleParams r;
  std::vector<sim::TickRecord> h{Tick({{10, 0, 0, 400}, {10, 0, 0, 399}})};
  CHECK(!sim::CheckRules(h, r, 400.0).terminal());
  h.push_back(Tick({{10, 0, 0, 401}, {10, 0, 0, 400}}));
  const auto v = sim::CheckRules(h, r, 400.0);
  CHECK(v.kind == Termination::kLapComplete);
  CHECK(!v.violation());
}

TEST_CASE("rule: time limit") {
  sim::RuleParams r;
  r.max_ticks = 5;
  std::vector<sim::TickRecord> h(5, Tick({{10, 0, 0, 1}}));
  CHECK(sim::CheckRules(h, r, 400.0).kind == Termination::kTimeLimit);
}

TEST_CASE("terminated round returns unchanged state") {
  sim::SimConfig c = Desk(1);
  c.rules.max_ticks = 3;
  sim::Simulator s(DeskTrack(), c);
  s.Reset(0);
  sim::JointAction go = Zero(1);
  go(1, 0) = 1.0;
  for (int i = 0; i < 3; ++i) s.Step(go);
  REQUIRE(s.done());
  const auto before = s.joint_state();
  const auto out = s.Step(go);
  CHECK(out.observations == before);
  CHECK(out.termination.kind == Termination::kTimeLimit);
  CHECK(s.tick() == 3);
}

TEST_CASE("observation bounds under random actions") {
  sim::SimConfig c = Desk(3);
  c.lateral_jitter = 0.5;
  c.heading_jitter = 0.05;
  sim::Simulator s(DeskTrack(), c);
  Rng rng(17);
  std::uniform_real_distribution<double> steer(-0.3, 0.3), unit(0.0, 1.0);
  int ticks = 0;
  for (int round = 0; round < 20; ++round) {
    s.Reset(DeriveSeed(5, "round", round));
    while (!s.done()) {
      sim::JointAction a(3, 3);
      for (int i = 0; i < 3; ++i) a.col(i) << steer(rng), unit(rng), 0.2 * unit(rng);
      s.Step(a);
      ++ticks;
      for (const auto& o : s.observations()) {
        CHECK(o.v_x >= 0.0);
        CHECK(o.alpha > -kPi);
        CHECK(o.alpha <= kPi);
        if (!s.verdict().violation()) CHECK(std::abs(o.track_pos) <= 1.0);
        for (double e : o.edges) CHECK((e >= 0.0 && e <= c.sensor_range));
      }
      CHECK(s.joint_state().rows() == c.obs_dim);
      CHECK(s.joint_state().allFinite());
    }
  }
  CHECK(ticks > 100);
}

TEST_CASE("rollouts are bitwise deterministic") {
  sim::SimConfig c = Desk(3);
  c.lateral_jitter = 0.5;
  c.heading_jitter = 0.05;
  auto run = [&] {
    sim::Simulator s(DeskTrack(), c);
    s.Reset(99);
    Rng rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> trace;
    for (int t = 0; t < 200 && !s.done(); ++t) {
      sim::JointAction a(3, 3);
      for (int i = 0; i < 3; ++i) a.col(i) << 0.2 * (u(rng) - 0.5), u(rng), 0.0;
      const auto out = s.Step(a);
      trace.insert(trace.end(), out.observations.data(), out.observations.data() + out.observations.size());
    }
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("feature scale maps sensors to unit range") {
  const sim::SimConfig c = Desk(3);
  const Eigen::VectorXd s = sim::FeatureScale(c);
  CHECK(s.size() == c.obs_dim);
  CHECK(s(0) == doctest::Approx(0.01));
  CHECK(s(3) * c.sensor_range == doctest::Approx(1.0));
}
