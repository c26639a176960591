#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <random>

#include "strac/env/dialogue_env.hpp"
#include "strac/errors.hpp"
#include "strac/harness/config.hpp"
#include "strac/harness/experiment.hpp"
#include "strac/policy/graph_policy.hpp"
#include "strac/rl/vtrace.hpp"

namespace py = pybind11;
using namespace strac;

namespace {

py::dict features_dict(const BeliefFeatures& f) {
  nn::Tensor slots(kSlotFeatureDim, f.slot_count());
  for (int i = 0; i < f.slot_count(); ++i) slots.col(i) = f.slots[i];
  py::dict d;
  d["global"] = f.global;
  d["slots"] = nn::Tensor(slots.transpose());  // one row per slot
  return d;
}

BeliefFeatures features_from(const py::dict& d) {
  BeliefFeatures f;
  f.global = d["global"].cast<nn::Vector>();
  auto slots = d["slots"].cast<nn::Tensor>();
  for (Eigen::Index i = 0; i < slots.rows(); ++i) f.slots.push_back(slots.row(i).transpose());
  return f;
}

// Env plus its own rng so Python callers don't juggle generator state.
struct PyEnv {
  env::DialogueEnv env;
  std::mt19937_64 rng;

  PyEnv(env::DomainSpec d, env::EnvProfile p, std::uint64_t seed)
      : env(std::move(d), std::move(p)), rng(seed) {}

  py::dict reset() {
    auto obs = env.reset(rng);
    py::dict d;
    d["features"] = features_dict(obs.features);
    d["mask"] = std::vector<int>(obs.mask.begin(), obs.mask.end());
    return d;
  }

  py::dict step(int flat) {
    auto r = env.step(from_flat(flat, env.slot_count()), rng);
    py::dict d;
    d["features"] = features_dict(r.features);
    d["mask"] = std::vector<int>(r.mask.begin(), r.mask.end());
    d["reward"] = r.reward;
    d["done"] = r.done;
    d["success"] = r.success;
    return d;
  }
};

policy::PolicyConfig policy_config(bool hierarchical, bool noisy) {
  policy::PolicyConfig c;
  c.hierarchical = hierarchical;
  c.noisy = noisy;
  return c;
}

rl::VTraceConfig vtrace_config(double gamma, int n, double rho_bar, double c_bar) {
  rl::VTraceConfig c;
  c.gamma = gamma;
  c.n = n;
  c.rho_bar = rho_bar;
  c.c_bar = c_bar;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_strac, m) {
  m.doc() = "STRAC structured actor-critic core";

  // Python exception hierarchy mirrors the C++ one.
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.attr("SLOT_FEATURE_DIM") = kSlotFeatureDim;
  m.attr("GLOBAL_FEATURE_DIM") = kGlobalFeatureDim;
  m.def("flat_action_count", &flat_action_count);
  m.def("to_flat", [](int node, int prim, int slots) { return to_flat({node, prim}, slots); });
  m.def("from_flat", [](int flat, int slots) {
    auto a = from_flat(flat, slots);
    return py::make_tuple(a.node, a.primitive);
  });

  py::class_<env::DomainSpec>(m, "DomainSpec")
      .def_readonly("name", &env::DomainSpec::name)
      .def_readonly("database", &env::DomainSpec::database)
      .def_readonly("max_turns", &env::DomainSpec::max_turns)
      .def_property_readonly("slot_count", &env::DomainSpec::slot_count)
      .def_property_readonly("slots", [](const env::DomainSpec& d) {
        py::list out;
        for (const auto& s : d.slots) out.append(py::make_tuple(s.name, s.values));
        return out;
      });

  py::class_<env::EnvProfile>(m, "EnvProfile")
      .def_readonly("name", &env::EnvProfile::name)
      .def_readonly("semantic_error_rate", &env::EnvProfile::semantic_error_rate)
      .def_readonly("masks_on", &env::EnvProfile::masks_on)
      .def_property_readonly("style", [](const env::EnvProfile& p) {
        return std::string(env::to_string(p.style));
      });

  m.def("bundled_domain", [](const std::string& n) { return env::bundled_domain(n); });
  m.def("bundled_profile", [](const std::string& n) { return env::bundled_profile(n); });
  m.def("bundled_domain_names", &env::bundled_domain_names);
  m.def("bundled_profile_names", &env::bundled_profile_names);
  m.def("domain_from_json", &harness::domain_from_json);
  m.def("profile_from_json", &harness::profile_from_json);

  py::class_<PyEnv>(m, "DialogueEnv")
      .def(py::init<env::DomainSpec, env::EnvProfile, std::uint64_t>(), py::arg("domain"),
           py::arg("profile"), py::arg("seed") = 0)
      .def("reset", &PyEnv::reset)
      .def("step", &PyEnv::step, py::arg("action"))
      .def_property_readonly("active", [](const PyEnv& e) { return e.env.active(); })
      .def_property_readonly("turn", [](const PyEnv& e) { return e.env.belief().turn; })
      .def_property_readonly("slot_count", [](const PyEnv& e) { return e.env.slot_count(); });

  py::class_<nn::ParameterSet>(m, "ParameterSet")
      .def("__len__", &nn::ParameterSet::size)
      .def("names", [](const nn::ParameterSet& p) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < p.size(); ++i) out.push_back(p.name(i));
        return out;
      })
      .def("get", [](const nn::ParameterSet& p, const std::string& name) {
        auto id = p.find(name);
        if (!id) throw py::key_error(name);
        return nn::Tensor(p[*id]);
      })
      .def("set", [](nn::ParameterSet& p, const std::string& name, const nn::Tensor& v) {
        auto id = p.find(name);
        if (!id) throw py::key_error(name);
        if (v.rows() != p[*id].rows() || v.cols() != p[*id].cols())
          throw DimensionError("shape mismatch for " + name);
        p[*id] = v;
      })
      .def_property_readonly("scalar_count", &nn::ParameterSet::scalar_count)
      .def_property_readonly("serialized_size", &nn::ParameterSet::serialized_size)
      .def("save", [](const nn::ParameterSet& p, const std::string& path) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open " + path);
        p.save(out);
        if (!out) throw IoError("write failed: " + path);
      })
      .def_static("load", [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path);
        return nn::ParameterSet::load(in);
      });

  py::class_<policy::GraphPolicy>(m, "GraphPolicy")
      .def(py::init([](bool h, bool n) { return policy::GraphPolicy(policy_config(h, n)); }),
           py::arg("hierarchical") = true, py::arg("noisy") = true)
      .def("init_parameters", [](const policy::GraphPolicy& p, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        return p.init_parameters(rng);
      }, py::arg("seed") = 0)
      .def("check_layout", &policy::GraphPolicy::check_layout)
      // Noise-free forward pass for one state.
      .def("evaluate", [](const policy::GraphPolicy& p, const nn::ParameterSet& params,
                          const py::dict& features) {
        auto out = p.evaluate(params, features_from(features), nullptr);
        py::dict d;
        d["logits"] = out.logits;
        d["pi"] = out.pi;
        d["p_slot"] = out.p_slot;
        d["node_pref"] = out.node_pref;
        d["node_value"] = out.node_value;
        d["value"] = out.value;
        return d;
      });

  m.def("truncated_weights",
        [](const std::vector<double>& pi, const std::vector<double>& mu, double rho_bar,
           double c_bar) {
          rl::VTraceConfig cfg;
          cfg.rho_bar = rho_bar;
          cfg.c_bar = c_bar;
          auto w = rl::truncated_weights(pi, mu, cfg);
          return py::make_tuple(w.rho, w.c);
        },
        py::arg("pi"), py::arg("mu"), py::arg("rho_bar") = 1.0, py::arg("c_bar") = 5.0);

  m.def("vtrace_targets",
        [](const std::vector<double>& rewards, const std::vector<double>& values,
           const std::vector<double>& rho, const std::vector<double>& c, bool ends_episode,
           double gamma, int n, double rho_bar, double c_bar) {
          auto r = rl::vtrace_targets(rewards, values, rho, c, ends_episode,
                                      vtrace_config(gamma, n, rho_bar, c_bar));
          return py::make_tuple(r.targets, r.advantages);
        },
        py::arg("rewards"), py::arg("values"), py::arg("rho"), py::arg("c"),
        py::arg("ends_episode"), py::arg("gamma") = 0.99, py::arg("n") = 5,
        py::arg("rho_bar") = 1.0, py::arg("c_bar") = 5.0);

  m.def("evaluate_policy",
        [](const policy::GraphPolicy& p, const nn::ParameterSet& params,
           const env::DomainSpec& d, const env::EnvProfile& prof, int count, std::uint64_t seed) {
          py::gil_scoped_release nogil;
          auto r = harness::evaluate_policy(p, params, d, prof, count, seed);
          return std::make_pair(r.success_rate(), r.mean_reward());
        },
        py::arg("policy"), py::arg("params"), py::arg("domain"), py::arg("profile"),
        py::arg("count") = 500, py::arg("seed") = 0);

  m.def("evaluate_random",
        [](const env::DomainSpec& d, const env::EnvProfile& prof, int count, std::uint64_t seed) {
          auto r = harness::evaluate_random(d, prof, count, seed);
          return std::make_pair(r.success_rate(), r.mean_reward());
        },
        py::arg("domain"), py::arg("profile"), py::arg("count") = 500, py::arg("seed") = 0);

  // Takes the same JSON text as the CLI --config file. Returns the mean
  // curve and the per-seed records as lists of dicts.
  m.def("run_experiment_json", [](const std::string& text) {
    auto cfg = harness::config_from_json(text);
    harness::ExperimentResult res;
    {
      py::gil_scoped_release nogil;
      res = harness::run_experiment(cfg);
    }
    auto rows = [](const std::vector<harness::MilestoneRecord>& recs) {
      py::list out;
      for (const auto& r : recs) {
        py::dict d;
        d["seed"] = r.seed;
        d["dialogues"] = r.dialogues;
        d["domain"] = r.domain;
        d["success_rate"] = r.success_rate;
        d["mean_reward"] = r.mean_reward;
        out.append(d);
      }
      return out;
    };
    py::dict d;
    d["records"] = rows(res.records);
    d["mean"] = rows(res.mean);
    return d;
  });
}
