// matfuse command-line driver.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "matfuse/crf.hpp"
#include "matfuse/error.hpp"
#include "matfuse/io.hpp"
#include "matfuse/metrics.hpp"
#include "matfuse/pipeline.hpp"
#include "matfuse/synthetic.hpp"

namespace fs = std::filesystem;
using namespace matfuse;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Flags shared by the subcommands that run the CRF or the pipeline.
struct CommonFlags {
  std::string config;
  std::optional<std::string> backend;
  std::optional<int> iterations;
  std::optional<double> voxel_res;
  std::optional<long> min_obs;
  std::optional<double> min_conf;
  std::string out;

  void add_crf(CLI::App* app) {
    app->add_option("--config", config, "key=value configuration file");
    app->add_option("--backend", backend, "filtering backend")->check(CLI::IsMember({"exact", "lattice"}));
    app->add_option("--iterations", iterations, "mean-field iterations (>= 1)");
  }
  void add_fusion(CLI::App* app) {
    app->add_option("--voxel-res", voxel_res, "voxel edge length in meters");
    app->add_option("--min-obs", min_obs, "minimum observations per exported voxel");
    app->add_option("--min-conf", min_conf, "minimum confidence per exported voxel");
  }
  void apply(PipelineConfig& cfg) const {
    if (!config.empty()) load_config_file(config, cfg);
    if (backend) cfg.set("backend", *backend);
    if (iterations) cfg.set("iterations", std::to_string(*iterations));
    if (voxel_res) cfg.voxel_resolution = *voxel_res;
    if (min_obs) cfg.set("min_obs", std::to_string(*min_obs));
    if (min_conf) cfg.min_confidence = *min_conf;
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
  }
};

std::vector<fs::path> expand_pgms(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.path().extension() == ".pgm") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(in);
    }
  }
  return out;
}

void print_metrics(const SegmentationMetrics& m, const ConfusionMatrix& cm) {
  std::cout << std::setprecision(6) << "pixel_accuracy=" << m.pixel_accuracy << "\n"
            << "mean_accuracy=" << m.mean_accuracy << "\n"
            << "mean_iu=" << m.mean_iu << "\n"
            << "frequency_weighted_iu=" << m.frequency_weighted_iu << "\n"
            << "coverage=" << cm.coverage() << "\n";
}

int run_segment(const std::string& rgb_path, const std::string& unary_path, const CommonFlags& flags,
                const std::string& q_out, bool energy) {
  const RgbImage rgb = read_ppm(rgb_path);
  LabelDistributionImage probs = load_unary(unary_path);
  if (!probs.same_shape(rgb)) probs = resize_bilinear(probs, rgb.height(), rgb.width());

  PipelineConfig cfg;
  cfg.set("labels", std::to_string(probs.labels()));
  flags.apply(cfg);

  const auto t0 = Clock::now();
  const UnaryField unary = unary_from_probabilities(probs);
  const FeatureField features = build_features(rgb, cfg.crf);
  const auto result = mean_field_infer(unary, features, cfg.crf, {cfg.backend, cfg.precision});
  const LabelImage labels = map_labeling(result.q);
  const double seconds = elapsed(t0);

  const fs::path out = flags.out.empty() ? fs::path("labels.pgm") : fs::path(flags.out);
  write_label_pgm(out, labels);
  if (!q_out.empty()) save_unary(q_out, result.q);
  std::cout << "labels_written=" << out.string() << "\n"
            << "size=" << rgb.width() << "x" << rgb.height() << "\n"
            << "labels=" << probs.labels() << "\n"
            << "iterations=" << cfg.crf.iterations << "\n"
            << "backend=" << to_string(cfg.backend) << "\n"
            << "seconds=" << seconds << "\n";
  if (energy) {
    std::cout << std::setprecision(12)
              << "energy_unary_argmax=" << crf_energy(map_labeling(softmax(unary)), unary, features, cfg.crf)
              << "\n"
              << "energy_crf=" << crf_energy(labels, unary, features, cfg.crf) << "\n";
  }
  return 0;
}

int run_fuse(const std::string& manifest_path, const CommonFlags& flags, bool frame_plys) {
  Manifest manifest = load_manifest(manifest_path);
  flags.apply(manifest.config);
  const auto t0 = Clock::now();
  const PipelineResult result = run_pipeline(manifest, {true, frame_plys});
  std::cout << "frames=" << result.frames.size() << "\n"
            << "voxels=" << result.map.size() << "\n"
            << "exported_points=" << result.exported.size() << "\n"
            << "output_dir=" << manifest.config.output_dir.string() << "\n"
            << "seconds=" << elapsed(t0) << "\n";
  if (result.metrics) print_metrics(*result.metrics, *result.confusion);
  return 0;
}

int run_metrics(const std::vector<std::string>& pred_in, const std::vector<std::string>& truth_in,
                int labels, const std::string& config, const std::string& out) {
  const auto preds = expand_pgms(pred_in);
  const auto truths = expand_pgms(truth_in);
  if (preds.empty() || preds.size() != truths.size()) {
    throw InvalidInput("need the same non-zero number of prediction and truth images, got " +
                       std::to_string(preds.size()) + " and " + std::to_string(truths.size()));
  }
  PipelineConfig cfg;
  if (labels) cfg.set("labels", std::to_string(labels));
  if (!config.empty()) load_config_file(config, cfg);
  ConfusionMatrix cm(cfg.labels);
  for (std::size_t k = 0; k < preds.size(); ++k) {
    try {
      cm.accumulate(read_label_pgm(preds[k]), read_label_pgm(truths[k]));
    } catch (const Error& e) {
      throw Error(preds[k].string() + " vs " + truths[k].string() + ": " + e.what());
    }
  }
  const SegmentationMetrics m = compute_metrics(cm);
  print_metrics(m, cm);
  if (!out.empty()) {
    fs::create_directories(out);
    write_metrics_report(fs::path(out) / "metrics.txt", m, cm);
    write_class_csv(fs::path(out) / "metrics_per_class.csv", m, cfg.label_names());
  }
  return 0;
}

int run_train(const std::string& manifest_path, const CommonFlags& flags, TrainingOptions options) {
  Manifest manifest = load_manifest(manifest_path);
  flags.apply(manifest.config);
  options.backend = manifest.config.backend;
  std::vector<TrainingExample> data;
  for (const auto& rec : manifest.frames) {
    if (!rec.truth_path) throw ConfigError("frame " + rec.frame_id + " has no truth image");
    TrainingExample ex{read_ppm(rec.rgb_path), load_unary(rec.unary_path), read_label_pgm(*rec.truth_path)};
    if (!ex.unary_probs.same_shape(ex.rgb)) {
      ex.unary_probs = resize_bilinear(ex.unary_probs, ex.rgb.height(), ex.rgb.width());
    }
    if (!ex.truth.same_shape(ex.rgb)) ex.truth = resize_nearest(ex.truth, ex.rgb.height(), ex.rgb.width());
    data.push_back(std::move(ex));
  }
  const TrainingResult r = train_crf_params(data, manifest.config.crf, options);
  std::cout << std::setprecision(8) << "initial_loss=" << r.initial_loss << "\n";
  for (std::size_t e = 0; e < r.epoch_losses.size(); ++e) {
    std::cout << "epoch " << e + 1 << " loss=" << r.epoch_losses[e] << " best=" << r.best_losses[e] << "\n";
  }
  std::cout << "final_loss=" << r.final_loss << "\n"
            << "w_bilateral=" << r.params.kernel_weights[0] << "\n"
            << "w_spatial=" << r.params.kernel_weights[1] << "\n";
  PipelineConfig learned = manifest.config;
  learned.crf = r.params;
  const fs::path out = flags.out.empty() ? fs::path("crf_params.cfg") : fs::path(flags.out);
  std::ofstream f(out);
  f << learned.to_text();
  if (!f) throw IoError("cannot write " + out.string());
  std::cout << "params_written=" << out.string() << "\n";
  return 0;
}

RgbImage bench_image(int size, std::uint64_t seed) {
  PiecewiseSceneSpec spec;
  spec.height = spec.width = size;
  spec.labels = 8;
  spec.rectangles = 10;
  spec.seed = seed;
  return make_piecewise_scene(spec).rgb;
}

// Builds the bilateral plan and runs one message pass over `labels` channels.
double time_filter(const RgbImage& rgb, int labels, FilterBackend backend) {
  const CrfParams params = CrfParams::potts(labels);
  const FeatureField f = build_features(rgb, params);
  std::vector<double> values(f.pixel_count() * labels, 1.0 / labels);
  const auto t0 = Clock::now();
  const FilterPlan plan(f.bilateral, kBilateralDim, backend);
  const auto msg = plan.apply(values, labels);
  const double secs = elapsed(t0);
  if (msg.size() != values.size()) throw NumericalError("message size mismatch");
  return secs;
}

int run_bench(const std::vector<int>& sizes, int labels, int exact_max, bool budget, std::uint64_t seed) {
  std::cout << std::setprecision(4) << std::fixed;
  std::cout << "size labels exact_s lattice_s speedup\n";
  std::optional<std::pair<int, double>> prev_exact;
  for (int s : sizes) {
    if (s < 2) throw ConfigError("bench sizes must be >= 2");
    const RgbImage rgb = bench_image(s, seed);
    const double lat = time_filter(rgb, labels, FilterBackend::kLattice);
    std::optional<double> ex;
    if (s <= exact_max) ex = time_filter(rgb, labels, FilterBackend::kExact);
    std::cout << s << " " << labels << " " << (ex ? std::to_string(*ex) : "skipped") << " " << lat << " "
              << (ex ? std::to_string(*ex / lat) : "-") << "\n";
    if (ex && prev_exact) {
      const double ratio = *ex / prev_exact->second;
      const double n_ratio = double(s) * s / (double(prev_exact->first) * prev_exact->first);
      std::cout << "exact_ratio " << prev_exact->first << "->" << s << " measured=" << ratio
                << " quadratic_model=" << n_ratio * n_ratio << "\n";
    }
    if (ex) prev_exact = {s, *ex};
  }
  if (budget) {
    const int l = 23;
    const RgbImage rgb = bench_image(224, seed);
    const auto t0 = Clock::now();
    CrfParams params = CrfParams::potts(l);
    LabelDistributionImage probs(224, 224, l, 1.0 / l);
    for (std::size_t i = 0; i < probs.pixel_count(); ++i) {
      auto p = probs.pixel(i);
      p[(i / 7) % l] += 0.5;
      for (auto& v : p) v /= 1.5;
    }
    const UnaryField unary = unary_from_probabilities(probs);
    const FeatureField features = build_features(rgb, params);
    const auto r = mean_field_infer(unary, features, params, {FilterBackend::kLattice, Precision::kDouble});
    const double secs = elapsed(t0);
    r.q.validate();
    std::cout << "budget 224x224 L=23 T=5 lattice seconds=" << secs << " limit=2.0 "
              << (secs <= 2.0 ? "within" : "over") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"matfuse: dense-CRF material segmentation and 3D label fusion"};
  app.failure_message(CLI::FailureMessage::help);
  app.require_subcommand(1);

  CommonFlags flags;

  auto* segment = app.add_subcommand("segment", "refine one frame's unaries with the dense CRF");
  std::string seg_rgb, seg_unary, seg_q;
  bool seg_energy = false;
  segment->add_option("--rgb", seg_rgb, "colour image (P6 PPM)")->required()->check(CLI::ExistingFile);
  segment->add_option("--unary", seg_unary, "unary probabilities (UNRY)")->required()->check(CLI::ExistingFile);
  segment->add_option("--q-out", seg_q, "write final marginals as UNRY");
  segment->add_flag("--energy", seg_energy, "report Gibbs energies (quadratic cost)");
  segment->add_option("--out", flags.out, "output label image (PGM)");
  flags.add_crf(segment);

  auto* fuse = app.add_subcommand("fuse", "run the full pipeline on a manifest");
  std::string manifest;
  bool frame_plys = false;
  fuse->add_option("manifest", manifest, "manifest file")->required()->check(CLI::ExistingFile);
  fuse->add_flag("--frame-plys", frame_plys, "also write one PLY per frame");
  fuse->add_option("--out", flags.out, "output directory");
  flags.add_crf(fuse);
  flags.add_fusion(fuse);

  auto* metrics = app.add_subcommand("metrics", "score predicted label images against truth");
  std::vector<std::string> preds, truths;
  int metric_labels = 0;
  metrics->add_option("--pred", preds, "predicted label PGMs or directories")->required();
  metrics->add_option("--truth", truths, "truth label PGMs or directories")->required();
  metrics->add_option("--labels", metric_labels, "label count (default 23)");
  metrics->add_option("--config", flags.config, "configuration file with label names");
  metrics->add_option("--out", flags.out, "directory for metrics.txt and metrics_per_class.csv");

  auto* synth = app.add_subcommand("synth", "generate a synthetic RGB-D desk scene");
  SyntheticSceneSpec scene = SyntheticSceneSpec::desk_scene();
  std::string synth_out = "synthetic";
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", scene.seed, "random seed");
  synth->add_option("--noise", scene.noise, "probability of a wrong unary label");
  synth->add_option("--confidence", scene.confidence, "probability on the unary label");
  synth->add_option("--frames", scene.frames, "number of orbit frames");
  synth->add_option("--voxel-res", scene.voxel_resolution, "voxel size written to the manifest");

  auto* train = app.add_subcommand("train-crf", "learn CRF weights and compatibility from a labelled manifest");
  TrainingOptions topts;
  train->add_option("manifest", manifest, "manifest with truth images")->required()->check(CLI::ExistingFile);
  train->add_option("--epochs", topts.epochs, "training epochs");
  train->add_option("--learning-rate", topts.learning_rate, "gradient step size");
  train->add_option("--seed", topts.seed, "shuffle seed");
  train->add_option("--out", flags.out, "output parameter file");
  flags.add_crf(train);

  auto* bench = app.add_subcommand("bench", "time exact and lattice filtering");
  std::vector<int> sizes{32, 64};
  int bench_labels = 3, exact_max = 128;
  bool budget = false;
  std::uint64_t bench_seed = 0;
  bench->add_option("--sizes", sizes, "square image sizes")->delimiter(',');
  bench->add_option("--labels", bench_labels, "channels per message pass");
  bench->add_option("--exact-max", exact_max, "largest size timed with the exact backend");
  bench->add_flag("--budget", budget, "also time 224x224, L=23, T=5 lattice inference");
  bench->add_option("--seed", bench_seed, "image seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*segment) return run_segment(seg_rgb, seg_unary, flags, seg_q, seg_energy);
    if (*fuse) return run_fuse(manifest, flags, frame_plys);
    if (*metrics) return run_metrics(preds, truths, metric_labels, flags.config, flags.out);
    if (*synth) {
      const auto path = generate_synthetic(scene, synth_out);
      std::cout << "manifest=" << path.string() << "\n";
      return 0;
    }
    if (*train) return run_train(manifest, flags, topts);
    if (*bench) return run_bench(sizes, bench_labels, exact_max, budget, bench_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
