#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "matfuse/crf.hpp"
#include "matfuse/error.hpp"
#include "matfuse/fusion.hpp"
#include "matfuse/io.hpp"
#include "matfuse/metrics.hpp"
#include "matfuse/pipeline.hpp"
#include "matfuse/synthetic.hpp"

namespace py = pybind11;
using namespace matfuse;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template <typename ImageT>
ImageT from_hwc(const DoubleArray& a) {
  if (a.ndim() != 3) throw InvalidInput("expected an (H, W, L) array");
  ImageT img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), img.data().begin());
  return img;
}

py::array_t<double> to_hwc(const Image<double>& img) {
  py::array_t<double> out({img.height(), img.width(), img.channels()});
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

RgbImage rgb_from(const ByteArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw InvalidInput("expected an (H, W, 3) uint8 array");
  RgbImage img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.data().begin());
  return img;
}

LabelImage labels_from(const ByteArray& a) {
  if (a.ndim() != 2) throw InvalidInput("expected an (H, W) uint8 array");
  LabelImage img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.data().begin());
  return img;
}

py::array_t<std::uint8_t> to_array(const LabelImage& img) {
  py::array_t<std::uint8_t> out({img.height(), img.width()});
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const SegmentationMetrics& m, const ConfusionMatrix& cm) {
  py::dict d;
  d["pixel_accuracy"] = m.pixel_accuracy;
  d["mean_accuracy"] = m.mean_accuracy;
  d["mean_iu"] = m.mean_iu;
  d["frequency_weighted_iu"] = m.frequency_weighted_iu;
  d["present_classes"] = m.present_classes;
  d["coverage"] = cm.coverage();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dense CRF refinement and Bayesian voxel fusion of material labels";

  auto base = py::register_exception<Error>(m, "MatfuseError", PyExc_RuntimeError);
  py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<SizeError>(m, "SizeError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.attr("IGNORE_LABEL") = kIgnoreLabel;

  py::enum_<FilterBackend>(m, "Backend")
      .value("exact", FilterBackend::kExact)
      .value("lattice", FilterBackend::kLattice);
  py::enum_<Precision>(m, "Precision").value("double", Precision::kDouble).value("single", Precision::kSingle);

  py::class_<CrfParams>(m, "CrfParams")
      .def(py::init([](int labels) { return CrfParams::potts(labels); }), py::arg("labels"))
      .def_readwrite("kernel_weights", &CrfParams::kernel_weights)
      .def_readwrite("compatibility", &CrfParams::compatibility)
      .def_readwrite("theta_alpha", &CrfParams::theta_alpha)
      .def_readwrite("theta_beta", &CrfParams::theta_beta)
      .def_readwrite("theta_gamma", &CrfParams::theta_gamma)
      .def_readwrite("iterations", &CrfParams::iterations)
      .def_property_readonly("labels", &CrfParams::labels)
      .def("validate", &CrfParams::validate);

  m.def(
      "unary_from_probabilities",
      [](const DoubleArray& probs) { return to_hwc(unary_from_probabilities(from_hwc<LabelDistributionImage>(probs))); },
      py::arg("probs"));
  m.def(
      "softmax", [](const DoubleArray& unary) { return to_hwc(softmax(from_hwc<UnaryField>(unary))); },
      py::arg("unary"));
  m.def(
      "mean_field_infer",
      [](const DoubleArray& unary, const ByteArray& rgb, const CrfParams& params, FilterBackend backend,
         Precision precision) {
        const auto u = from_hwc<UnaryField>(unary);
        const auto features = build_features(rgb_from(rgb), params);
        LabelDistributionImage q;
        {
          py::gil_scoped_release release;
          q = mean_field_infer(u, features, params, {backend, precision}).q;
        }
        return to_hwc(q);
      },
      py::arg("unary"), py::arg("rgb"), py::arg("params"), py::arg("backend") = FilterBackend::kLattice,
      py::arg("precision") = Precision::kDouble);
  m.def(
      "map_labeling", [](const DoubleArray& q) { return to_array(map_labeling(from_hwc<LabelDistributionImage>(q))); },
      py::arg("q"));
  m.def(
      "crf_energy",
      [](const ByteArray& labeling, const DoubleArray& unary, const ByteArray& rgb, const CrfParams& params) {
        return crf_energy(labels_from(labeling), from_hwc<UnaryField>(unary), build_features(rgb_from(rgb), params),
                          params);
      },
      py::arg("labeling"), py::arg("unary"), py::arg("rgb"), py::arg("params"));

  m.def(
      "filter",
      [](const DoubleArray& features, const DoubleArray& values, FilterBackend backend) {
        if (features.ndim() != 2 || values.ndim() != 2 || features.shape(0) != values.shape(0)) {
          throw InvalidInput("expected features (N, d) and values (N, C)");
        }
        const auto dim = static_cast<int>(features.shape(1));
        const auto channels = static_cast<int>(values.shape(1));
        FilterPlan plan(std::span<const double>(features.data(), features.size()), dim, backend);
        const auto out = plan.apply(std::span<const double>(values.data(), values.size()), channels);
        py::array_t<double> result({values.shape(0), values.shape(1)});
        std::copy(out.begin(), out.end(), result.mutable_data());
        return result;
      },
      py::arg("features"), py::arg("values"), py::arg("backend") = FilterBackend::kLattice,
      "Self-excluded, normalized Gaussian filtering of per-point values.");

  m.def(
      "bayes_update",
      [](const std::vector<double>& prior, const std::vector<double>& likelihood) {
        return bayes_update(prior, likelihood);
      },
      py::arg("prior"), py::arg("likelihood"));

  m.def(
      "segmentation_metrics",
      [](const ByteArray& predicted, const ByteArray& truth, int labels) {
        ConfusionMatrix cm(labels);
        cm.accumulate(labels_from(predicted), labels_from(truth));
        return metrics_dict(compute_metrics(cm), cm);
      },
      py::arg("predicted"), py::arg("truth"), py::arg("labels"));

  m.def(
      "load_unary", [](const std::filesystem::path& p) { return to_hwc(load_unary(p)); }, py::arg("path"));
  m.def(
      "save_unary",
      [](const std::filesystem::path& p, const DoubleArray& q) { save_unary(p, from_hwc<LabelDistributionImage>(q)); },
      py::arg("path"), py::arg("probs"));

  m.def(
      "generate_synthetic",
      [](const std::filesystem::path& out_dir, std::uint64_t seed, double noise, double confidence, int frames) {
        auto spec = SyntheticSceneSpec::desk_scene();
        spec.seed = seed;
        spec.noise = noise;
        spec.confidence = confidence;
        spec.frames = frames;
        return generate_synthetic(spec, out_dir);
      },
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("noise") = 0.3, py::arg("confidence") = 0.6,
      py::arg("frames") = 20);

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& manifest_path, std::optional<std::filesystem::path> out_dir,
         std::map<std::string, std::string> overrides) {
        auto manifest = load_manifest(manifest_path);
        for (const auto& [k, v] : overrides) manifest.config.set(k, v);
        manifest.config.validate();
        if (out_dir) manifest.config.output_dir = *out_dir;
        RunOptions opts;
        opts.write_outputs = out_dir.has_value();
        std::optional<PipelineResult> run;
        {
          py::gil_scoped_release release;
          run.emplace(run_pipeline(manifest, opts));
        }
        const auto& result = *run;
        py::dict d;
        d["voxels"] = result.map.size();
        d["exported"] = result.exported.size();
        if (result.metrics) d["metrics"] = metrics_dict(*result.metrics, *result.confusion);
        py::list frames;
        for (const auto& f : result.frames) {
          py::dict fd;
          fd["frame_id"] = f.frame_id;
          fd["points"] = f.points;
          if (f.pixel_accuracy) fd["pixel_accuracy"] = *f.pixel_accuracy;
          frames.append(fd);
        }
        d["frames"] = frames;
        return d;
      },
      py::arg("manifest"), py::arg("out_dir") = py::none(),
      py::arg("overrides") = std::map<std::string, std::string>{});
}
