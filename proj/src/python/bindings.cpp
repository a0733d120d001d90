#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <string>
#include <vector>

#include "sinessl/datagen/dataset.hpp"
#include "sinessl/diffusion/ddpm.hpp"
#include "sinessl/errors.hpp"
#include "sinessl/harness/cli.hpp"
#include "sinessl/harness/config.hpp"
#include "sinessl/harness/experiment.hpp"
#include "sinessl/numerics/tnsr.hpp"
#include "sinessl/schedulers/threshold.hpp"
#include "sinessl/ssl/trainer.hpp"

namespace py = pybind11;
using namespace sinessl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::string dumps(const py::object& o) { return py::module_::import("json").attr("dumps")(o).cast<std::string>(); }

ThresholdSchedule parse_schedule(const py::dict& d) { return schedule_from_json(nlohmann::json::parse(dumps(d))); }

py::object loads(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Semi-supervised toolkit: threshold schedules, pseudo-labels, DDPM algebra, procedural data, harness";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);

  m.def(
      "threshold_at",
      [](const py::dict& schedule, std::size_t i, std::size_t i_max) {
        return threshold_at(parse_schedule(schedule), IterationClock(i, i_max));
      },
      py::arg("schedule"), py::arg("i"), py::arg("i_max"),
      "Threshold of a fixed, linear_decay or sinusoidal_decay schedule at iteration i.");
  m.def(
      "threshold_curve",
      [](const py::dict& schedule, std::size_t i_max) {
        const ThresholdSchedule s = parse_schedule(schedule);
        std::vector<double> out(i_max + 1);
        for (std::size_t i = 0; i <= i_max; ++i) out[i] = threshold_at(s, IterationClock(i, i_max));
        return out;
      },
      py::arg("schedule"), py::arg("i_max"));
  m.def(
      "envelope",
      [](double t_f, double alpha, double beta, double omega, std::size_t i, std::size_t i_max) {
        return envelope(schedule::SinusoidalDecay{t_f, alpha, beta, omega}, IterationClock(i, i_max));
      },
      py::arg("t_f"), py::arg("alpha"), py::arg("beta"), py::arg("omega"), py::arg("i"), py::arg("i_max"));

  m.def(
      "pseudo_label",
      [](const std::vector<double>& probs, double threshold) {
        const auto d = pseudo_label(probs, threshold);
        return py::make_tuple(d.argmax_class, d.max_prob, d.accepted);
      },
      py::arg("probs"), py::arg("threshold"), "Returns (argmax_class, max_prob, accepted).");

  py::class_<DiffusionSchedule>(m, "DiffusionSchedule")
      .def(py::init<std::size_t, double, double>(), py::arg("steps") = 400, py::arg("beta_1") = 1e-4,
           py::arg("beta_T") = 0.02)
      .def_property_readonly("steps", &DiffusionSchedule::steps)
      .def("beta", &DiffusionSchedule::beta)
      .def("alpha", &DiffusionSchedule::alpha)
      .def("alpha_bar", &DiffusionSchedule::alpha_bar);
  m.def(
      "q_sample",
      [](const Array& x0, std::size_t t, const Array& eps, const DiffusionSchedule& s) {
        return to_array(q_sample(to_tensor(x0), t, to_tensor(eps), s));
      },
      py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));
  m.def(
      "invert_with_oracle",
      [](const Array& xt, std::size_t t, const Array& eps, const DiffusionSchedule& s) {
        return to_array(invert_with_oracle(to_tensor(xt), t, to_tensor(eps), s));
      },
      py::arg("x_t"), py::arg("t"), py::arg("eps"), py::arg("schedule"));

  m.def(
      "make_bundle",
      [](const py::dict& spec) {
        const DatasetBundle b = make_bundle(bundle_spec_from_json(nlohmann::json::parse(dumps(spec))));
        py::dict out;
        out["labeled_images"] = to_array(b.labeled.images);
        out["labeled_classes"] = b.labeled.labels;
        out["unlabeled_images"] = to_array(b.unlabeled.images);
        out["test_images"] = to_array(b.test.images);
        out["test_classes"] = b.test.labels;
        out["pool_kind"] = pool_kind_name(b.unlabeled.kind);
        out["labeled_ids"] = b.labeled.ids;
        out["unlabeled_ids"] = b.unlabeled.ids;
        out["test_ids"] = b.test.ids;
        return out;
      },
      py::arg("spec") = py::dict(), "Renders a dataset bundle; spec keys follow the data config section.");
  m.def(
      "render_sample",
      [](std::size_t class_id, std::uint64_t seed) {
        Rng rng(seed, 0);
        const CorticalParams p = draw_params(class_id, rng);
        return to_array(render_sample(p, rng));
      },
      py::arg("class_id"), py::arg("seed") = 0);
  m.def(
      "hand_classify",
      [](const Array& images) {
        const Tensor t = to_tensor(images);
        std::vector<std::size_t> out(t.shape().at(0));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = hand_classify(estimate_thickness(t, i));
        return out;
      },
      py::arg("images"), "Band-thickness rule applied to [N,1,32,32] images.");

  m.def("load_tnsr", [](const std::string& path) { return to_array(load_tnsr(path)); }, py::arg("path"));
  m.def(
      "save_tnsr", [](const std::string& path, const Array& a) { save_tnsr(path, to_tensor(a)); }, py::arg("path"),
      py::arg("array"));

  m.def(
      "default_config", [] { return loads(to_json(ToolConfig{})); }, "Full tool configuration with defaults.");
  m.def(
      "train_ssl",
      [](const py::dict& config, const std::string& out_dir) {
        ToolConfig cfg;
        apply_json(cfg, nlohmann::json::parse(dumps(config)));
        {
          py::gil_scoped_release release;
          execute_run(cfg, out_dir);
        }
        return final_accuracy(std::filesystem::path(out_dir) / "metrics.csv");
      },
      py::arg("config"), py::arg("out_dir"), "Runs one training run into out_dir and returns its final accuracy.");
  m.def(
      "cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "sinessl");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        py::gil_scoped_release release;
        return cli_main(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Runs the command line tool in-process and returns its exit code.");
}
