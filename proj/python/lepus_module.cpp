#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>

#include "lepus/ablation.hpp"
#include "lepus/config.hpp"
#include "lepus/error.hpp"
#include "lepus/eval.hpp"
#include "lepus/expert.hpp"
#include "lepus/nn.hpp"
#include "lepus/pipeline.hpp"
#include "lepus/rnd_reward.hpp"
#include "lepus/sim.hpp"

namespace py = pybind11;
using namespace lepus;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python package wraps it with json.loads / json.dumps.
config::RunConfig ParseConfig(const std::string& text, const std::string& preset,
                              const std::vector<std::string>& overrides) {
  return config::Load(text.empty() ? json::object() : json::parse(text), preset, overrides);
}

using Stage = json (*)(const config::RunConfig&, const pipeline::StageOptions&);

std::string RunStage(Stage stage, const std::string& config_text, const std::string& out, bool no_pretrain,
                     bool force) {
  config::RunConfig c = ParseConfig(config_text, "", {});
  if (!out.empty()) c.output_dir = out;
  c.Validate();
  json summary;
  {
    py::gil_scoped_release release;
    summary = stage(c, {c.output_dir, no_pretrain, force});
  }
  return summary.dump();
}

}  // namespace

PYBIND11_MODULE(_lepus, m) {
  m.doc() = "Multi-agent cooperative driving core";

  static py::exception<Error> error(m, "LepusError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple(e.code(), e.what()).ptr());
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("stability", &eval::Stability, py::arg("avg_distance"), py::arg("avg_collisions"));
  m.def("g_reward", &sim::GReward, py::arg("v_x"), py::arg("alpha"), py::arg("track_pos"));
  m.def("angle_error", &expert::AngleError, py::arg("track_pos"), py::arg("alpha"));
  m.def("speed_error", &expert::SpeedError, py::arg("v_x"), py::arg("target_kmh") = 50.0);
  m.def("reward_from_disagreement", &rnd::RewardFromDisagreement, py::arg("sharpness"), py::arg("disagreement"));
  m.def("combined_reward", &rnd::CombinedReward, py::arg("g_reward"), py::arg("rd"));
  m.def(
      "report_from_totals",
      [](std::vector<double> distance, std::vector<double> collisions, int rounds) {
        return eval::ReportFromTotals(std::move(distance), std::move(collisions), rounds).ToJson().dump();
      },
      py::arg("agent_distance"), py::arg("agent_collisions"), py::arg("rounds"));
  m.def(
      "soft_update_scalar",
      [](double target, double source, double mix) {
        const nn::LayerSpec spec[] = {{1, nn::Activation::kIdentity}};
        nn::Mlp t = nn::Mlp::Zeros(1, spec);
        t.SetLayer(0, Eigen::MatrixXd::Constant(1, 1, target), Eigen::VectorXd::Zero(1));
        nn::Mlp s = nn::Mlp::Zeros(1, spec);
        s.SetLayer(0, Eigen::MatrixXd::Constant(1, 1, source), Eigen::VectorXd::Zero(1));
        nn::SoftUpdate(t, s, mix);
        return t.layer(0).weight(0, 0);
      },
      py::arg("target"), py::arg("source"), py::arg("mix"));

  m.def("preset_names", &config::PresetNames);
  m.def(
      "resolve_config",
      [](const std::string& text, const std::string& preset, const std::vector<std::string>& overrides) {
        return config::ToJson(ParseConfig(text, preset, overrides)).dump();
      },
      py::arg("config") = "", py::arg("preset") = "", py::arg("overrides") = std::vector<std::string>{});

  py::class_<sim::Simulator>(m, "Simulator")
      .def(py::init([](const std::string& text, const std::string& preset) {
             const config::RunConfig c = ParseConfig(text, preset, {});
             return sim::Simulator(c.scenario.track.Build(), c.scenario.sim);
           }),
           py::arg("config") = "", py::arg("preset") = "")
      .def("reset", &sim::Simulator::Reset, py::arg("seed"), py::return_value_policy::copy)
      .def(
          "step",
          [](sim::Simulator& s, const Eigen::MatrixXd& action) {
            const auto o = s.Step(action);
            py::list collisions;
            for (const auto& [a, b] : o.collisions) collisions.append(py::make_tuple(a, b));
            return py::make_tuple(o.observations, o.g_reward, collisions, sim::TerminationName(o.termination.kind));
          },
          py::arg("action"))
      .def_property_readonly("n_agents", [](const sim::Simulator& s) { return s.config().n_agents; })
      .def_property_readonly("obs_dim", [](const sim::Simulator& s) { return s.config().obs_dim; })
      .def_property_readonly("lap_length", [](const sim::Simulator& s) { return s.track().lap_length(); })
      .def_property_readonly("tick", &sim::Simulator::tick)
      .def_property_readonly("done", &sim::Simulator::done)
      .def_property_readonly("state", &sim::Simulator::joint_state, py::return_value_policy::copy);

  m.def(
      "gen_experts",
      [](const std::string& c, const std::string& out) { return RunStage(&pipeline::GenExperts, c, out, false, false); },
      py::arg("config") = "", py::arg("out") = "");
  m.def(
      "train_rnd",
      [](const std::string& c, const std::string& out) { return RunStage(&pipeline::TrainRnd, c, out, false, false); },
      py::arg("config") = "", py::arg("out") = "");
  m.def(
      "pretrain",
      [](const std::string& c, const std::string& out) { return RunStage(&pipeline::Pretrain, c, out, false, false); },
      py::arg("config") = "", py::arg("out") = "");
  m.def(
      "train",
      [](const std::string& c, const std::string& out, bool no_pretrain) {
        return RunStage(&pipeline::Train, c, out, no_pretrain, false);
      },
      py::arg("config") = "", py::arg("out") = "", py::arg("no_pretrain") = false);
  m.def(
      "evaluate",
      [](const std::string& c, const std::string& out, bool no_pretrain) {
        return RunStage(&pipeline::Evaluate, c, out, no_pretrain, false);
      },
      py::arg("config") = "", py::arg("out") = "", py::arg("no_pretrain") = false);
  m.def(
      "ablate",
      [](const std::string& text, const std::string& out) {
        const config::RunConfig c = ParseConfig(text, "", {});
        py::gil_scoped_release release;
        return ablation::RunAblation(c, std::filesystem::path(out.empty() ? c.output_dir : out)).ToJson().dump();
      },
      py::arg("config") = "", py::arg("out") = "");
}
