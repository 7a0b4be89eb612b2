#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spn/config_io.hpp"
#include "spn/error.hpp"
#include "spn/run.hpp"
#include "spn/verify.hpp"

namespace py = pybind11;
using namespace spn;

namespace {

// An instance plus the generator spec it came from, if any.
struct Network {
  RunFile run;
};

Network network_from(const std::string& config, const std::string& scenario) {
  return {resolve_run(config, scenario)};
}

Network network_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.what());
  }
  return {run_file_from_json(doc)};
}

const ScenarioSpec* spec_of(const Network& n) { return n.run.scenario ? &*n.run.scenario : nullptr; }

py::dict solve(const Network& n, double tol, int workers) {
  const auto& inst = n.run.instance;
  SolveResult orig, atomic, pl;
  int num_states = 0;
  {
    py::gil_scoped_release release;
    EnumerateOptions eo;
    eo.roots = {initial_state(inst.config)};
    eo.workers = workers;
    const auto idx = enumerate_states(inst.config, inst.extra, eo);
    KernelOptions ko;
    ko.workers = workers;
    const auto k = build_kernels(inst.config, idx, inst.extra, ko);
    const auto r = build_rewards(inst.config, idx, k);
    SolveOptions so;
    so.tol = tol;
    so.workers = workers;
    orig = solve_original_rvi(k, r, so);
    atomic = solve_atomic_step_dependent(k, r, inst.config.num_servers, so);
    pl = solve_passing_last(k, r, orig.gain, orig.h);
    num_states = idx.size();
  }
  py::dict out;
  out["num_states"] = num_states;
  out["gain"] = orig.gain;
  out["h"] = orig.h;
  out["atomic_gain"] = atomic.gain;
  out["atomic_h"] = atomic.h;
  out["passing_last_h"] = pl.h;
  out["passing_last_policy"] = pl.policy;
  out["iterations"] = orig.iterations;
  return out;
}

std::string evaluate(const Network& n, const std::vector<std::string>& policies, const std::string& mode, int M,
                     int T, std::uint64_t seed, bool greedy, bool exact, int workers) {
  EvalSettings es;
  es.mode = rollout_mode_from_string(mode);
  es.M = M;
  es.T = T;
  es.seed = seed;
  es.greedy = greedy;
  es.workers = workers;
  std::vector<PolicySource> sources;
  for (const auto& p : policies) sources.push_back(parse_policy_source(p));
  std::optional<ExactModel> model;
  if (exact) model = build_exact_model(n.run.instance, true, workers);
  const auto rows = evaluate_sources(n.run.instance, sources, es, model ? &*model : nullptr, spec_of(n));
  return evaluation_csv(rows, es, config_hash(n.run.instance), model ? model->optimal_gain : std::nullopt);
}

py::dict train_run(const Network& n, const std::string& config_json, std::uint64_t seed, int workers) {
  TrainConfig tc = n.run.train.value_or(TrainConfig{});
  if (!config_json.empty()) {
    auto doc = train_config_to_json(tc);
    try {
      doc.merge_patch(nlohmann::json::parse(config_json));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(e.what());
    }
    tc = train_config_from_json(doc);
  }
  tc.seed = seed;
  tc.workers = workers;
  TrainResult res;
  {
    py::gil_scoped_release release;
    res = train(n.run.instance, tc);
  }
  const auto hash = config_hash(n.run.instance);
  const auto bytes = checkpoint_bytes(res.checkpoint);
  py::dict out;
  out["reports_csv"] = reports_csv(res.reports, hash, seed);
  out["checkpoint"] = py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  out["manifest"] = checkpoint_manifest(res.checkpoint);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Exact solvers, simulation and atomic PPO for stochastic processing networks";

  // Later registrations are tried first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ResourceLimitError>(m, "ResourceLimitError", PyExc_MemoryError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<Network>(m, "Network")
      .def_property_readonly("config_hash", [](const Network& n) { return hash_hex(config_hash(n.run.instance)); })
      .def_property_readonly("num_servers", [](const Network& n) { return n.run.instance.config.num_servers; })
      .def_property_readonly("num_types", [](const Network& n) { return n.run.instance.config.num_types; })
      .def_property_readonly("num_classes", [](const Network& n) { return n.run.instance.config.num_classes; })
      .def("to_json", [](const Network& n) { return instance_to_text(n.run.instance); });

  m.def("scenario_names", &scenario_preset_names);
  m.def("load", &network_from, py::arg("config") = "", py::arg("scenario") = "",
        "Network from a run file path or a built-in scenario name.");
  m.def("from_json", &network_from_json, py::arg("text"));
  m.def(
      "validate",
      [](const Network& n) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& v : validate_instance(n.run.instance)) out.emplace_back(v.constraint, v.detail);
        return out;
      },
      py::arg("network"), "List of (constraint, detail) violations; empty when valid.");
  m.def("solve", &solve, py::arg("network"), py::arg("tol") = 1e-9, py::arg("workers") = 1);
  m.def(
      "verify",
      [](const Network& n, double tol, std::uint64_t seed, int workers) {
        VerifyOptions vo;
        vo.tol = tol;
        vo.seed = seed;
        vo.workers = workers;
        return verify_theorems(n.run.instance, vo).text();
      },
      py::arg("network"), py::arg("tol") = 1e-6, py::arg("seed") = 0, py::arg("workers") = 1,
      py::call_guard<py::gil_scoped_release>(), "Certificate text.");
  m.def("evaluate", &evaluate, py::arg("network"), py::arg("policies"), py::arg("mode") = "k-step",
        py::arg("M") = 16, py::arg("T") = 2048, py::arg("seed") = 0, py::arg("greedy") = true,
        py::arg("exact") = false, py::arg("workers") = 1, "Comparison CSV.");
  m.def("train", &train_run, py::arg("network"), py::arg("config_json") = "", py::arg("seed") = 0,
        py::arg("workers") = 1);
}
