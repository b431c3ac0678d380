// lepus_calibrate [--preset NAME] [--rounds N] [--seed S]
//
// Sweeps the PID gains around the preset values and prints, per candidate, the
// fraction of rounds passing the keep filter and the mean lap length. Output is
// CSV on stdout, best candidate last.

#include <CLI11.hpp>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "lepus/config.hpp"
#include "lepus/error.hpp"
#include "lepus/expert.hpp"

using namespace lepus;

int main(int argc, char** argv) {
  CLI::App app{"PID gain sweep for the expert driver"};
  std::string preset = "desk3";
  int rounds = 20;
  std::uint64_t seed = 0;
  std::vector<double> speed_kp{0.1, 0.3, 0.6};
  std::vector<double> angle_kp{1.5, 3.0, 5.0};
  std::vector<double> angle_kd{0.0, 0.2, 0.5};
  app.add_option("--preset", preset, "Base preset");
  app.add_option("--rounds", rounds, "Rounds per candidate");
  app.add_option("--seed", seed, "Seed");
  app.add_option("--speed-kp", speed_kp, "Speed loop proportional gains")->delimiter(',');
  app.add_option("--angle-kp", angle_kp, "Angle loop proportional gains")->delimiter(',');
  app.add_option("--angle-kd", angle_kd, "Angle loop derivative gains")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  try {
    const config::RunConfig base = config::Preset(preset);
    const sim::Track track = base.scenario.track.Build();
    expert::GenerateConfig g = base.expert.generate;
    g.n_rounds = rounds;
    g.min_keep_fraction = 0.0;
    g.seed = seed;

    std::cout << "speed_kp,angle_kp,angle_kd,keep_fraction,mean_lap_steps,collisions\n" << std::setprecision(6);
    double best_keep = -1.0;
    double best_steps = 0.0;
    expert::ExpertConfig best;
    for (double sk : speed_kp) {
      for (double ak : angle_kp) {
        for (double ad : angle_kd) {
          g.expert = base.expert.generate.expert;
          g.expert.speed.kp = sk;
          g.expert.angle.kp = ak;
          g.expert.angle.kd = ad;
          const auto s = expert::GenerateDataset(track, base.scenario.sim, g).summary;
          const double keep = static_cast<double>(s.rounds_kept) / rounds;
          std::cout << sk << ',' << ak << ',' << ad << ',' << keep << ',' << s.mean_lap_steps << ','
                    << s.collisions_total << '\n';
          if (keep > best_keep || (keep == best_keep && s.mean_lap_steps < best_steps)) {
            best_keep = keep;
            best_steps = s.mean_lap_steps;
            best = g.expert;
          }
        }
      }
    }
    std::cout << "best," << best.speed.kp << ',' << best.angle.kp << ',' << best.angle.kd << ',' << best_keep << ','
              << best_steps << '\n';
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump() << std::endl;
    return 1;
  }
  return 0;
}
