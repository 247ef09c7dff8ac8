// Copyright 2026 The KGS-GCN Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "kgs/commands.hpp"
#include "kgs/errors.hpp"
#include "kgs/network.hpp"
#include "kgs/skeleton.hpp"
#include "kgs/splat.hpp"
#include "kgs/synth.hpp"
#include "kgs/topology.hpp"

namespace py = pybind11;
using namespace kgs;

namespace {

py::array_t<double> to_array(const std::vector<double>& values, std::vector<py::ssize_t> shape) {
  py::array_t<double> out(shape);
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

Cov2 to_cov(const py::array_t<double, py::array::c_style | py::array::forcecast>& m) {
  if (m.ndim() != 2 || m.shape(0) != 2 || m.shape(1) != 2) throw DimensionError("covariance must be 2x2");
  const auto r = m.unchecked<2>();
  if (r(0, 1) != r(1, 0)) throw MatrixError("covariance must be symmetric");
  return {r(0, 0), r(0, 1), r(1, 1)};
}

Vec2 to_vec(const std::array<double, 2>& v) { return {v[0], v[1]}; }

RenderConfig render_config(std::size_t size, const std::string& aggregation, double log_scale, double alpha,
                           bool isotropic) {
  RenderConfig cfg;
  cfg.height = cfg.width = size;
  cfg.aggregation = parse_aggregation(aggregation);
  cfg.log_scale = log_scale;
  cfg.alpha = alpha;
  cfg.isotropic = isotropic;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_kgs, m) {
  m.doc() = "Kinematic Gaussian splatting graph convolution toolkit";

  auto base = py::register_exception<Error>(m, "KgsError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<MatrixError>(m, "MatrixError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());

  py::class_<SkeletonSequence>(m, "SkeletonSequence")
      .def_readonly("frames", &SkeletonSequence::frames)
      .def_readonly("joints", &SkeletonSequence::joints)
      .def_readonly("channels", &SkeletonSequence::channels)
      .def_readonly("label", &SkeletonSequence::label)
      .def_readonly("source", &SkeletonSequence::source)
      .def_property_readonly("positions",
                             [](const SkeletonSequence& s) {
                               return to_array(s.positions, {static_cast<py::ssize_t>(s.frames),
                                                             static_cast<py::ssize_t>(s.joints),
                                                             static_cast<py::ssize_t>(s.channels)});
                             })
      .def("to_json", &serialize_sequence)
      .def("__repr__", [](const SkeletonSequence& s) {
        std::ostringstream os;
        os << "SkeletonSequence(T=" << s.frames << ", V=" << s.joints << ", C=" << s.channels << ")";
        return os.str();
      });

  m.def(
      "sequence_from_array",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a, std::optional<int> label) {
        if (a.ndim() != 3) throw DimensionError("expected a T x V x C array");
        SkeletonSequence s;
        s.frames = static_cast<std::size_t>(a.shape(0));
        s.joints = static_cast<std::size_t>(a.shape(1));
        s.channels = static_cast<std::size_t>(a.shape(2));
        s.positions.assign(a.data(), a.data() + a.size());
        s.label = label;
        s.source = "<array>";
        s.validate();
        return s;
      },
      py::arg("positions"), py::arg("label") = py::none());
  m.def("load_sequence", &load_sequence, py::arg("path"));
  m.def("parse_sequence", [](const std::string& text) { return parse_sequence(text); }, py::arg("text"));

  m.def(
      "render",
      [](const SkeletonSequence& seq, std::size_t size, const std::string& aggregation, double log_scale,
         double alpha, bool isotropic) {
        const auto cfg = render_config(size, aggregation, log_scale, alpha, isotropic);
        const auto hm = render_sequence(prepare_kinematics(seq), cfg).heatmaps;
        return to_array(hm.values, {static_cast<py::ssize_t>(hm.views), static_cast<py::ssize_t>(hm.frames),
                                    static_cast<py::ssize_t>(hm.height), static_cast<py::ssize_t>(hm.width)});
      },
      py::arg("sequence"), py::arg("size") = 32, py::arg("aggregation") = "max", py::arg("log_scale") = -2.0,
      py::arg("alpha") = 2.0, py::arg("isotropic") = false,
      "Heatmaps of shape (views, T, size, size).");

  m.def(
      "covariance",
      [](std::array<double, 2> velocity, double log_scale, double alpha) {
        RenderConfig cfg;
        cfg.log_scale = log_scale;
        cfg.alpha = alpha;
        const auto p = build_covariance(to_vec(velocity), cfg);
        return to_array({p.sigma.xx, p.sigma.xy, p.sigma.xy, p.sigma.yy}, {2, 2});
      },
      py::arg("velocity"), py::arg("log_scale") = -2.0, py::arg("alpha") = 2.0);

  m.def(
      "bhattacharyya_distance",
      [](std::array<double, 2> mu_i, const py::array_t<double, py::array::c_style | py::array::forcecast>& sigma_i,
         std::array<double, 2> mu_j, const py::array_t<double, py::array::c_style | py::array::forcecast>& sigma_j) {
        return bhattacharyya_distance(to_vec(mu_i), to_cov(sigma_i), to_vec(mu_j), to_cov(sigma_j));
      },
      py::arg("mu_i"), py::arg("sigma_i"), py::arg("mu_j"), py::arg("sigma_j"));

  m.def(
      "prior_adjacency",
      [](const SkeletonSequence& seq, std::size_t size, double log_scale) {
        const auto cfg = render_config(size, "max", log_scale, 2.0, false);
        const auto prior = build_prior_adjacency(build_primitive_grids(prepare_kinematics(seq), cfg));
        const auto v = static_cast<py::ssize_t>(prior.joints);
        return to_array(prior.matrix, {v, v});
      },
      py::arg("sequence"), py::arg("size") = 32, py::arg("log_scale") = -2.0);

  m.def(
      "generate_task",
      [](const std::string& task, std::size_t samples_per_class, std::uint64_t seed, double noise_std,
         std::size_t joints, std::size_t frames) {
        SyntheticTaskSpec spec;
        spec.task = parse_task(task);
        spec.samples_per_class = samples_per_class;
        spec.seed = seed;
        spec.noise_std = noise_std;
        spec.joints = joints;
        spec.frames = frames;
        return generate_task(spec);
      },
      py::arg("task"), py::arg("samples_per_class") = 50, py::arg("seed") = 0, py::arg("noise_std") = 0.0,
      py::arg("joints") = 5, py::arg("frames") = 16);

  m.def("lambda_schedule", [](int epoch) { return lambda_schedule(epoch); }, py::arg("epoch"));
  m.def("lr_schedule", [](int epoch) { return lr_schedule(epoch); }, py::arg("epoch"));

  m.def(
      "gradient_check",
      [](std::uint64_t seed, std::size_t max_entries) {
        GradCheckOptions options;
        options.seed = seed;
        options.max_entries = max_entries;
        const auto report = gradient_check_toy(ExperimentConfig{}, options);
        py::dict errors;
        for (const auto& e : report.entries) errors[py::str(e.name)] = e.max_rel_error;
        return py::make_tuple(report.passed, report.worst, errors);
      },
      py::arg("seed") = 0, py::arg("max_entries") = 6,
      "Runs the toy finite-difference check; returns (passed, worst, per-parameter errors).");

  m.def("default_config", [] { return serialize_config(ExperimentConfig{}); },
        "The default experiment configuration as JSON text.");
  m.def(
      "train",
      [](const std::filesystem::path& config, const std::filesystem::path& data, const std::filesystem::path& out,
         const std::string& ablate) {
        std::ostringstream log;
        const Model model = cmd_train({config, data, out, ablate}, log);
        return model.epoch;
      },
      py::arg("config"), py::arg("data"), py::arg("out"), py::arg("ablate") = "");
  m.def("evaluate", &cmd_eval, py::arg("checkpoint"), py::arg("data"));
  m.def(
      "synth",
      [](const std::string& task, const std::filesystem::path& out, std::optional<std::filesystem::path> spec) {
        return cmd_synth(task, out, spec);
      },
      py::arg("task"), py::arg("out"), py::arg("spec") = py::none());
}
