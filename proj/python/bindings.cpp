// Python bindings for the core operations: schedules, projections, quality
// metrics, ensemble aggregation, PGD steps and the run drivers.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "iddm/config.hpp"
#include "iddm/dataset.hpp"
#include "iddm/eval.hpp"
#include "iddm/fr.hpp"
#include "iddm/pgd.hpp"
#include "iddm/pipeline.hpp"
#include "iddm/png_io.hpp"
#include "iddm/project.hpp"
#include "iddm/quality.hpp"
#include "iddm/runio.hpp"
#include "iddm/schedule.hpp"

namespace py = pybind11;

namespace {

iddm::Tensor tensor_from_array(const py::array_t<double, py::array::c_style>& arr) {
  if (arr.ndim() != 3) {
    throw std::invalid_argument("expected an array of shape (h, w, c)");
  }
  iddm::Tensor t(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                 static_cast<int>(arr.shape(2)));
  std::memcpy(t.data.data(), arr.data(), t.data.size() * sizeof(double));
  return t;
}

py::array_t<double> array_from_tensor(const iddm::Tensor& t) {
  py::array_t<double> arr({t.height, t.width, t.channels});
  std::memcpy(arr.mutable_data(), t.data.data(), t.data.size() * sizeof(double));
  return arr;
}

py::array_t<double> vec_to_array(const std::vector<double>& v) {
  py::array_t<double> arr(static_cast<py::ssize_t>(v.size()));
  std::memcpy(arr.mutable_data(), v.data(), v.size() * sizeof(double));
  return arr;
}

iddm::RunConfig config_with_overrides(const std::string& path,
                                      std::optional<std::uint64_t> seed,
                                      std::optional<std::string> run_id) {
  iddm::RunConfig cfg = iddm::load_run_config(path);
  if (seed) cfg.protection.seed = *seed;
  if (run_id) cfg.run_id = *run_id;
  iddm::validate(cfg);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "identity-decoupled diffusion personalization: core operations";

  py::class_<iddm::NoiseSchedule>(m, "NoiseSchedule")
      .def_property_readonly("steps", &iddm::NoiseSchedule::steps)
      .def("beta", &iddm::NoiseSchedule::beta, py::arg("t"))
      .def("alpha", &iddm::NoiseSchedule::alpha, py::arg("t"))
      .def("alpha_bar", &iddm::NoiseSchedule::alpha_bar, py::arg("t"))
      .def_property_readonly("alpha_bars",
                             [](const iddm::NoiseSchedule& s) { return vec_to_array(s.alpha_bars); });

  m.def("make_schedule", &iddm::make_schedule, py::arg("steps"), py::arg("beta_start"),
        py::arg("beta_end"));

  m.def(
      "forward_noise",
      [](const py::array_t<double, py::array::c_style>& x0, int t,
         const py::array_t<double, py::array::c_style>& eps, const iddm::NoiseSchedule& sched) {
        return array_from_tensor(
            iddm::forward_noise(tensor_from_array(x0), t, tensor_from_array(eps), sched));
      },
      py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("sched"));

  m.def(
      "project_linf_and_box",
      [](const py::array_t<double, py::array::c_style>& x,
         const py::array_t<double, py::array::c_style>& delta, double eta) {
        return array_from_tensor(
            iddm::project_linf_and_box(tensor_from_array(x), tensor_from_array(delta), eta));
      },
      py::arg("x"), py::arg("delta"), py::arg("eta"));

  m.def(
      "psnr",
      [](const py::array_t<double, py::array::c_style>& a,
         const py::array_t<double, py::array::c_style>& b) {
        return iddm::psnr(tensor_from_array(a), tensor_from_array(b));
      },
      py::arg("a"), py::arg("b"), "10*log10(1/MSE); +inf for identical inputs");

  m.def(
      "ssim",
      [](const py::array_t<double, py::array::c_style>& a,
         const py::array_t<double, py::array::c_style>& b) {
        return iddm::ssim(tensor_from_array(a), tensor_from_array(b));
      },
      py::arg("a"), py::arg("b"));

  m.def("ensemble_weights", [](const std::vector<double>& sims,
                               double tau) { return vec_to_array(iddm::ensemble_weights(sims, tau)); },
        py::arg("sims"), py::arg("tau"));
  m.def("ensemble_aggregate", &iddm::ensemble_aggregate, py::arg("sims"), py::arg("tau"));

  m.def("stage_split", &iddm::stage_split, py::arg("total_steps"), py::arg("rho"));

  m.def(
      "pgd_step",
      [](const py::array_t<double, py::array::c_style>& x_orig,
         const py::array_t<double, py::array::c_style>& x_cur,
         const py::array_t<double, py::array::c_style>& grad, double eta, double alpha_step) {
        return array_from_tensor(iddm::pgd_step(tensor_from_array(x_orig),
                                                tensor_from_array(x_cur),
                                                tensor_from_array(grad), eta, alpha_step));
      },
      py::arg("x_orig"), py::arg("x_cur"), py::arg("grad"), py::arg("eta"),
      py::arg("alpha_step"));

  m.def(
      "generate_dataset",
      [](const std::string& out_dir, int n_ids, int imgs_per_id, int size, std::uint64_t seed) {
        iddm::SyntheticDataOptions opt;
        opt.n_ids = n_ids;
        opt.imgs_per_id = imgs_per_id;
        opt.height = size;
        opt.width = size;
        iddm::write_dataset(iddm::make_synthetic_identities(opt, seed), out_dir);
      },
      py::arg("out_dir"), py::arg("n_ids") = 6, py::arg("imgs_per_id") = 16,
      py::arg("size") = 32, py::arg("seed") = 1);

  m.def(
      "train_encoders",
      [](const std::string& data_dir, const std::string& out_file, int steps,
         std::uint64_t seed) {
        auto data = iddm::load_dataset(data_dir);
        std::vector<std::vector<iddm::Tensor>> groups;
        for (const auto& [name, images] : data) groups.push_back(images);
        iddm::EncoderRegistry reg = iddm::make_default_registry(seed);
        iddm::AlignerSpec aspec;
        iddm::ContrastiveConfig ccfg;
        ccfg.steps = steps;
        std::uint64_t i = 0;
        for (auto& enc : reg.encoders) {
          iddm::Rng rng = iddm::Rng::derive(seed, {0x74726eULL, i++});
          iddm::train_encoder_contrastive(*enc, groups, aspec, ccfg, rng);
        }
        iddm::save_registry(reg, out_file);
      },
      py::arg("data_dir"), py::arg("out_file"), py::arg("steps") = 4000, py::arg("seed") = 2);

  m.def(
      "protect",
      [](const std::string& config_path, std::optional<std::uint64_t> seed,
         std::optional<std::string> run_id) {
        return iddm::run_protect(config_with_overrides(config_path, seed, run_id));
      },
      py::arg("config_path"), py::arg("seed") = std::nullopt, py::arg("run_id") = std::nullopt,
      "full protection run; returns the run directory");

  m.def(
      "personalize",
      [](const std::string& config_path, std::optional<std::uint64_t> seed,
         std::optional<std::string> run_id) {
        return iddm::run_personalize(config_with_overrides(config_path, seed, run_id));
      },
      py::arg("config_path"), py::arg("seed") = std::nullopt, py::arg("run_id") = std::nullopt,
      "no-defense baseline run; returns the run directory");

  m.def("evaluate", &iddm::evaluate_run, py::arg("run_dir"),
        "recompute metrics; returns the report JSON text");

  m.def(
      "read_png",
      [](const std::string& path) { return array_from_tensor(iddm::read_png(path)); },
      py::arg("path"));
  m.def(
      "write_png",
      [](const py::array_t<double, py::array::c_style>& img, const std::string& path) {
        iddm::write_png(tensor_from_array(img), path);
      },
      py::arg("img"), py::arg("path"));
}
