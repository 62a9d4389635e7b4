// Python bindings: numpy in, numpy out. Images are float64 arrays shaped
// C x H x W with values in [0, 1].
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <sstream>
#include <string>

#include "advinn/attack.hpp"
#include "advinn/classifier.hpp"
#include "advinn/commands.hpp"
#include "advinn/coupling.hpp"
#include "advinn/dataset.hpp"
#include "advinn/error.hpp"
#include "advinn/io.hpp"
#include "advinn/metrics.hpp"
#include "advinn/run_config.hpp"
#include "advinn/tape.hpp"
#include "advinn/wavelet.hpp"

namespace py = pybind11;
using namespace advinn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Array stack(const std::vector<Tensor>& images) { return to_array(stack_images(images)); }

std::vector<std::size_t> labels_of(const LabelledImages& split) { return split.labels; }

RunConfig run_config(const py::dict& settings) {
  RunConfig cfg;
  for (const auto& [k, v] : settings) apply_setting(cfg, py::str(k).cast<std::string>(), py::str(v).cast<std::string>());
  return cfg;
}

AttackConfig attack_config(const py::dict& settings) {
  RunConfig cfg = run_config(settings);
  cfg.attack.validate();
  return cfg.attack;
}

py::dict attack_dict(const AttackResult& r) {
  py::dict d;
  d["target_class"] = r.target_class;
  d["success"] = r.success;
  d["iterations"] = r.iterations;
  d["final_target_prob"] = r.final_target_prob;
  d["x_adv"] = to_array(r.x_adv);
  d["x_r"] = to_array(r.x_r);
  d["l2"] = r.metrics.l2;
  d["linf"] = r.metrics.linf;
  d["ssim"] = r.metrics.ssim;
  return d;
}

py::dict summary_dict(const MetricSummary& s) {
  py::dict d;
  d["count"] = s.count;
  d["successes"] = s.successes;
  d["asr"] = s.asr;
  d["mean_l2"] = s.mean_l2 ? py::cast(*s.mean_l2) : py::none();
  d["mean_linf"] = s.mean_linf ? py::cast(*s.mean_linf) : py::none();
  d["mean_ssim"] = s.mean_ssim ? py::cast(*s.mean_ssim) : py::none();
  d["mean_iterations"] = s.mean_iterations;
  d["median_iterations"] = s.median_iterations;
  return d;
}

}  // namespace

PYBIND11_MODULE(_advinn, m) {
  m.doc() = "Invertible-network adversarial attacks on a synthetic texture classifier";
  tune_allocator();

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<CorruptionError>(m, "CorruptionError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ArithmeticError);
  py::register_exception<LookupError>(m, "LookupError", PyExc_LookupError);

  m.def("dwt", [](const Array& x, std::size_t levels) { return to_array(dwt(to_tensor(x), levels).data); },
        py::arg("x"), py::arg("levels") = 1, "Orthonormal Haar packet transform.");
  m.def("idwt", [](const Array& c, std::size_t levels) { return to_array(idwt(SubbandStack{to_tensor(c), levels})); },
        py::arg("coefficients"), py::arg("levels") = 1);
  m.def("band_channels", &band_channels, py::arg("source_channels"), py::arg("levels"), py::arg("band"));
  py::enum_<Band>(m, "Band").value("LL", Band::LL).value("LH", Band::LH).value("HL", Band::HL).value("HH", Band::HH);

  m.def("l2_distance", [](const Array& a, const Array& b) { return l2_distance(to_tensor(a), to_tensor(b)); });
  m.def("linf_distance", [](const Array& a, const Array& b) { return linf_distance(to_tensor(a), to_tensor(b)); });
  m.def("ssim", [](const Array& a, const Array& b, std::size_t window, double sigma) {
    return ssim(to_tensor(a), to_tensor(b), SsimOptions{.window = window, .sigma = sigma});
  }, py::arg("a"), py::arg("b"), py::arg("window") = 11, py::arg("sigma") = 1.5);

  py::class_<Iiem>(m, "Iiem")
      .def(py::init([](std::size_t channels, std::size_t dwt_levels, std::size_t num_blocks, std::uint64_t seed) {
             IiemConfig config;
             config.channels = channels;
             config.dwt_levels = dwt_levels;
             config.num_blocks = num_blocks;
             return Iiem(config, seed);
           }),
           py::arg("channels") = 3, py::arg("dwt_levels") = 1, py::arg("num_blocks") = 2, py::arg("seed") = 0)
      .def("forward", [](const Iiem& self, const Array& x_cln, const Array& x_tgt) {
        TapeScope no_tape(nullptr);
        const auto [adv, res] = self.forward(to_tensor(x_cln), to_tensor(x_tgt));
        return py::make_tuple(to_array(adv), to_array(res));
      })
      .def("inverse", [](const Iiem& self, const Array& x_adv, const Array& x_r) {
        TapeScope no_tape(nullptr);
        const auto [c, t] = self.inverse(to_tensor(x_adv), to_tensor(x_r));
        return py::make_tuple(to_array(c), to_array(t));
      })
      .def("perturb_parameters", &Iiem::perturb_parameters, py::arg("seed"), py::arg("scale"))
      .def_property_readonly("parameter_count", &Iiem::parameter_count)
      .def("save", [](const Iiem& self, const std::string& path) { save_iiem(path, self); })
      .def_static("load", [](const std::string& path) { return load_iiem(path); });

  m.def("shapes_dataset", [](std::uint64_t seed, std::size_t n_train, std::size_t n_test, std::size_t size) {
    const Dataset d = make_shapes_dataset(ShapesOptions{seed, n_train, n_test, size});
    py::dict out;
    out["train_images"] = stack(d.train.images);
    out["train_labels"] = labels_of(d.train);
    out["test_images"] = stack(d.test.images);
    out["test_labels"] = labels_of(d.test);
    return out;
  }, py::arg("seed") = 1, py::arg("n_train") = 512, py::arg("n_test") = 256, py::arg("size") = 32);

  py::class_<Classifier>(m, "Classifier")
      .def_static("load", [](const std::string& path) { return load_classifier(path); })
      .def("classify", [](const Classifier& self, const Array& image) {
        const Prediction p = self.classify(to_tensor(image));
        return py::make_tuple(p.predicted_class, p.probabilities);
      })
      .def("logits", [](const Classifier& self, const Array& x) {
        TapeScope no_tape(nullptr);
        return to_array(self.logits(to_tensor(x)));
      })
      .def_property_readonly("parameter_count", &Classifier::parameter_count);

  m.def("run_attack", [](const Classifier& model, const Array& image, const py::dict& settings) {
    const AttackConfig cfg = attack_config(settings);
    if (cfg.target_mode == TargetMode::CGT) return attack_dict(run_attack(model, to_tensor(image), cfg));
    throw ContractError("run_attack: only the cgt target mode is available without a reference set");
  }, py::arg("model"), py::arg("image"), py::arg("settings") = py::dict(),
     "Attacks one image; settings use the command-line keys, e.g. {'lambda-adv': 10}.");

  m.def("config_keys", [] {
    std::vector<std::string> keys;
    for (auto k : run_config_keys()) keys.emplace_back(k);
    return keys;
  });
  m.def("gen_data", [](const py::dict& settings) {
    std::ostringstream log;
    cmd_gen_data(run_config(settings), log);
    return log.str();
  }, py::arg("settings") = py::dict());
  m.def("train", [](const py::dict& settings) {
    std::ostringstream log;
    const TrainReport r = cmd_train(run_config(settings), log);
    return py::make_tuple(r.train_accuracy, r.test_accuracy);
  }, py::arg("settings") = py::dict());
  m.def("attack", [](const py::dict& settings) {
    std::ostringstream log;
    return summary_dict(cmd_attack(run_config(settings), log));
  }, py::arg("settings") = py::dict());
}
