#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "cli.hpp"
#include "xaieval/cam.hpp"
#include "xaieval/errors.hpp"
#include "xaieval/metrics.hpp"
#include "xaieval/phantom.hpp"
#include "xaieval/provider.hpp"
#include "xaieval/version.hpp"

namespace py = pybind11;
using namespace xai;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using RoiTuple = std::tuple<int, int, int, int>;

Image to_image(const FloatArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  return Image(w, h, std::vector<float>(a.data(), a.data() + a.size()));
}

// Arrays passed as heatmaps are taken as they are; callers normalize if needed.
Heatmap to_heatmap(const FloatArray& a) {
  const Image img = to_image(a);
  return Heatmap(img.width, img.height, img.pixels, true);
}

py::array_t<float> to_array(int width, int height, const std::vector<float>& values) {
  py::array_t<float> out({height, width});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

py::array_t<bool> to_bool_array(const Mask& m) {
  py::array_t<bool> out({m.height, m.width});
  auto* p = out.mutable_data();
  for (std::size_t i = 0; i < m.bits.size(); ++i) p[i] = m.bits[i] != 0;
  return out;
}

Mask to_mask(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D mask");
  Mask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.size(); ++i) m.bits[static_cast<std::size_t>(i)] = a.data()[i] ? 1 : 0;
  return m;
}

Roi to_roi(const RoiTuple& t) { return Roi{std::get<0>(t), std::get<1>(t), std::get<2>(t), std::get<3>(t)}; }
RoiTuple from_roi(const Roi& r) { return {r.row0, r.col0, r.row1, r.col1}; }

MetricParams metric_params(int window, double sigma, double k1, double k2, double dynamic_range) {
  MetricParams p;
  p.ssim_window = window;
  p.ssim_sigma = sigma;
  p.ssim_k1 = k1;
  p.ssim_k2 = k2;
  p.dynamic_range = dynamic_range;
  p.validate();
  return p;
}

py::dict prediction_dict(const Prediction& p) {
  py::dict d;
  d["score"] = p.score;
  d["present"] = p.present;
  d["box"] = p.box ? py::cast(from_roi(*p.box)) : py::none();
  d["peak"] = py::make_tuple(p.peak_row, p.peak_col);
  return d;
}

// The builtin reference detector, optionally with a custom linear head.
class Detector {
 public:
  Detector() = default;
  Detector(std::vector<double> weights, double bias, double threshold)
      : provider_(RefModel(default_filter_bank(), HeadWeights{std::move(weights), bias, threshold})) {}

  py::dict predict(const FloatArray& image) { return prediction_dict(provider_.predict(to_image(image))); }

  py::array_t<float> features(const FloatArray& image) {
    const FeatureStack f = provider_.features(to_image(image));
    py::array_t<float> out({f.channels, f.height, f.width});
    std::copy(f.data.begin(), f.data.end(), out.mutable_data());
    return out;
  }

  py::array_t<float> explain(const FloatArray& image, const std::string& method) {
    const Heatmap h = xai::explain(parse_cam_method(method), provider_, to_image(image));
    return to_array(h.width, h.height, h.values);
  }

  std::string model_id() { return provider_.model_id(); }
  std::vector<double> weights() const { return provider_.model().head().w; }
  double bias() const { return provider_.model().head().bias; }
  double threshold() const { return provider_.model().head().threshold; }

 private:
  RefModelProvider provider_;
};

}  // namespace

PYBIND11_MODULE(_xaieval, m) {
  m.doc() = "Explainability evaluation: phantoms, reference detector, CAM heatmaps, metrics and the run driver";
  m.attr("__version__") = kVersion;

  // Library errors surface as Python exceptions carrying the error kind.
  static py::exception<Error> base_error(m, "XaiError", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base_error.ptr());
  static py::exception<ShapeError> shape_error(m, "ShapeError", base_error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(config_error.ptr(), e.what());
    } catch (const ShapeError& e) {
      PyErr_SetString(shape_error.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(base_error.ptr(), e.what());
    }
  });

  m.def("ssim", [](const FloatArray& a, const FloatArray& b, int window, double sigma, double k1, double k2,
                   double dynamic_range) {
          return ssim(to_heatmap(a), to_heatmap(b), metric_params(window, sigma, k1, k2, dynamic_range));
        },
        py::arg("a"), py::arg("b"), py::arg("window") = 11, py::arg("sigma") = 1.5, py::arg("k1") = 0.01,
        py::arg("k2") = 0.03, py::arg("dynamic_range") = 1.0,
        "Mean local SSIM with a Gaussian window over valid positions.");
  m.def("mse", [](const FloatArray& a, const FloatArray& b) { return mse(to_heatmap(a), to_heatmap(b)); });
  m.def("iou_box", [](const RoiTuple& a, const RoiTuple& b) { return iou_box(to_roi(a), to_roi(b)); },
        "Boxes are (row0, col0, row1, col1) with exclusive ends.");
  m.def("iou_mask", [](const py::array_t<bool, py::array::c_style | py::array::forcecast>& a,
                       const py::array_t<bool, py::array::c_style | py::array::forcecast>& b) {
    return iou_mask(to_mask(a), to_mask(b));
  });
  m.def("spearman", [](const FloatArray& a, const FloatArray& b) -> std::optional<double> {
    if (a.size() != b.size()) throw ShapeError("spearman inputs differ in size");
    return spearman(std::span<const float>(a.data(), a.size()), std::span<const float>(b.data(), b.size()));
  }, "Rank correlation, or None when either input is constant.");

  m.def("normalize", [](const FloatArray& h) {
    const Image img = to_image(h);
    const Heatmap n = normalize_heatmap(Heatmap(img.width, img.height, img.pixels));
    return to_array(n.width, n.height, n.values);
  });
  m.def("peak_roi", [](const FloatArray& h, int box_height, int box_width) {
    return from_roi(extract_peak_roi(to_heatmap(h), box_height, box_width));
  }, py::arg("heatmap"), py::arg("box_height"), py::arg("box_width"));
  m.def("binarize", [](const FloatArray& h, double q) { return to_bool_array(binarize_top_quantile(to_heatmap(h), q)); },
        py::arg("heatmap"), py::arg("quantile") = 0.95);

  m.def("generate_case", [](int index, bool lesion, std::uint64_t seed, int width, int height) {
          PhantomConfig cfg;
          cfg.seed = seed;
          cfg.width = width;
          cfg.height = height;
          const Case c = generate_case(cfg, lesion, index);
          py::dict d;
          d["id"] = c.id;
          d["image"] = to_array(c.image.width, c.image.height, c.image.pixels);
          d["clean"] = to_array(c.clean.width, c.clean.height, c.clean.pixels);
          d["has_lesion"] = c.has_lesion;
          if (c.truth) {
            d["box"] = from_roi(c.truth->box);
            d["mask"] = to_array(c.image.width, c.image.height, c.truth->mask);
            d["center"] = py::make_tuple(c.truth->center_row, c.truth->center_col);
          } else {
            d["box"] = py::none();
            d["mask"] = py::none();
            d["center"] = py::none();
          }
          return d;
        },
        py::arg("index"), py::arg("lesion"), py::arg("seed") = 0, py::arg("width") = 128, py::arg("height") = 128);

  py::class_<Detector>(m, "Detector", "Builtin matched-filter reference detector.")
      .def(py::init<>())
      .def(py::init<std::vector<double>, double, double>(), py::arg("weights"), py::arg("bias"), py::arg("threshold"))
      .def("predict", &Detector::predict)
      .def("features", &Detector::features, "Channel maps as a (channels, height, width) array.")
      .def("explain", &Detector::explain, py::arg("image"), py::arg("method") = "ablation",
           "Heatmap from 'eigen', 'ablation' or 'whitebox'.")
      .def_property_readonly("model_id", &Detector::model_id)
      .def_property_readonly("weights", &Detector::weights)
      .def_property_readonly("bias", &Detector::bias)
      .def_property_readonly("threshold", &Detector::threshold);

  m.def("run_cli", [](const std::vector<std::string>& args) {
          std::vector<std::string> full{"xaieval"};
          full.insert(full.end(), args.begin(), args.end());
          std::vector<const char*> argv;
          for (const auto& a : full) argv.push_back(a.c_str());
          py::gil_scoped_release release;
          return cli::run_cli(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"), "Runs a command-line invocation in-process and returns its exit code.");
}
