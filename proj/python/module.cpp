#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vlora/config.hpp"
#include "vlora/cost_model.hpp"
#include "vlora/model.hpp"
#include "vlora/verify.hpp"

namespace py = pybind11;
using namespace vlora;

namespace {

// Flops are 128-bit; hand them to Python as exact ints.
py::int_ exact(Flops value) { return py::int_(py::module_::import("builtins").attr("int")(to_decimal(value))); }

CostParams cost_params(std::uint64_t d_blocks, std::uint64_t h, std::uint64_t C, std::uint64_t L, std::uint64_t k,
                       std::uint64_t r) {
  CostParams p{d_blocks, h, C, L, k, r};
  p.validate();
  return p;
}

py::array_t<double> to_numpy(const Tensor<double>& t) {
  py::array_t<double> out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

ApplyMode parse_mode(const std::string& mode) {
  if (mode == "branch") return ApplyMode::Branch;
  if (mode == "merged") return ApplyMode::Merged;
  if (mode == "blind") return ApplyMode::Blind;
  throw py::value_error("mode must be 'branch', 'merged' or 'blind'");
}

struct PyModel {
  VloraModel<double> model;

  SyntheticImage image(const std::vector<std::uint32_t>& cells) const {
    SyntheticImage img{model.config.vision.grid, cells};
    validate_image(img, model.config.vision);
    return img;
  }
};

template <Flops (*Fn)(const CostParams&)>
void def_cost(py::module_& m, const char* name, const char* doc) {
  m.def(
      name,
      [](std::uint64_t d_blocks, std::uint64_t h, std::uint64_t C, std::uint64_t L, std::uint64_t k, std::uint64_t r) {
        return exact(Fn(cost_params(d_blocks, h, C, L, k, r)));
      },
      py::arg("d_blocks") = 32, py::arg("h") = 4096, py::arg("C") = 32, py::arg("L") = 0, py::arg("k") = 8,
      py::arg("r") = 64, doc);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Toy perceptual-weights model (C++ core)";

  py::register_exception<Error>(m, "VloraError", PyExc_RuntimeError);

  def_cost<flops_baseline>(m, "flops_baseline", "LLM FLOPs with L visual tokens prepended to C text tokens.");
  def_cost<flops_vlora_train>(m, "flops_vlora_train", "FLOPs with branch-form perceptual weights (L is ignored).");
  def_cost<flops_vlora_infer>(m, "flops_vlora_infer", "FLOPs with merged perceptual weights (L is ignored).");
  m.def(
      "to_gflops", [](py::int_ flops) { return flops.cast<double>() / 1e9; }, py::arg("flops"));

  m.def("reference_table", [] {
    py::list rows;
    for (const auto& r : reference_table()) {
      py::dict row;
      row["model"] = r.model;
      row["visual_tokens"] = r.visual_tokens;
      row["printed_gflops"] = r.printed_gflops;
      row["computed_gflops"] = r.computed_gflops;
      row["relative_error"] = r.relative_error();
      rows.append(row);
    }
    return rows;
  });

  m.def("kind_set_labels", &kind_set_labels);
  m.def(
      "kind_set",
      [](const std::string& label) {
        std::vector<std::string> names;
        for (auto k : parse_kind_set(label)) names.emplace_back(kind_name(k));
        return names;
      },
      py::arg("label"));

  m.def(
      "check",
      [](std::uint64_t seed, bool fp64, bool inject_fault) {
        VerifyOptions opt;
        opt.seed = seed;
        opt.fp64 = fp64;
        opt.inject_fault = inject_fault;
        std::vector<std::tuple<std::string, bool, std::string>> out;
        for (const auto& c : run_verify(opt).checks) out.emplace_back(c.name, c.passed, c.detail);
        return out;
      },
      py::arg("seed") = 0, py::arg("fp64") = false, py::arg("inject_fault") = false,
      "Run the bundled self-checks; returns (name, passed, detail) tuples.");

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const std::string& config_json, std::uint64_t seed) {
             return PyModel{init_model<double>(parse_run_config(config_json).model, seed)};
           }),
           py::arg("config_json") = "{}", py::arg("seed") = 0)
      .def_static(
          "load", [](const std::filesystem::path& dir) { return PyModel{load_model<double>(dir)}; }, py::arg("path"))
      .def(
          "save", [](const PyModel& self, const std::filesystem::path& dir) { save_model(self.model, dir); },
          py::arg("path"))
      .def_property_readonly("config_json", [](const PyModel& self) { return model_config_to_json(self.model.config); })
      .def_property_readonly("deltas_per_image", [](const PyModel& self) { return self.model.plan.deltas_per_image(); })
      .def_property_readonly("target_blocks", [](const PyModel& self) { return self.model.plan.target_blocks; })
      .def_property_readonly("kinds",
                             [](const PyModel& self) {
                               std::vector<std::string> names;
                               for (auto k : self.model.plan.kinds) names.emplace_back(kind_name(k));
                               return names;
                             })
      .def(
          "randomize_up_factors",
          [](PyModel& self, double stddev, std::uint64_t seed) {
            Rng rng(seed);
            for (auto& g : self.model.generators)
              for (auto& w : g.w_s)
                for (auto& v : w.mutable_data()) v = stddev * rng.normal();
          },
          py::arg("stddev"), py::arg("seed") = 0, "Replace the zero-initialized up factors with Gaussian values.")
      .def(
          "logits",
          [](const PyModel& self, const std::vector<std::uint32_t>& cells, const std::vector<TokenId>& tokens,
             const std::string& mode) {
            NoGradGuard no_grad;
            return to_numpy(vlora_logits(self.model, self.image(cells), tokens, parse_mode(mode)));
          },
          py::arg("cells"), py::arg("tokens"), py::arg("mode") = "branch")
      .def(
          "deltas",
          [](const PyModel& self, const std::vector<std::uint32_t>& cells) {
            NoGradGuard no_grad;
            py::list out;
            for (const auto& d : perceive(self.model, self.image(cells))) {
              py::dict row;
              row["kind"] = std::string(kind_name(d.target));
              row["block"] = d.block_index;
              row["down"] = to_numpy(d.down);
              row["up"] = to_numpy(d.up);
              out.append(row);
            }
            return out;
          },
          py::arg("cells"), "Generated low-rank factors for one image.");
}
