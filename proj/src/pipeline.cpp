#include "matfuse/pipeline.hpp"

#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "matfuse/error.hpp"
#include "matfuse/io.hpp"

namespace matfuse {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError("invalid number '" + std::string(text) + "' for " + std::string(what));
  }
  return v;
}

long parse_int(std::string_view text, std::string_view what) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("invalid integer '" + std::string(text) + "' for " + std::string(what));
  }
  return v;
}

std::string_view strip_comment(std::string_view line) {
  const auto pos = line.find('#');
  return trim(pos == std::string_view::npos ? line : line.substr(0, pos));
}

std::filesystem::path resolve(const std::filesystem::path& base, std::string_view p) {
  std::filesystem::path path{std::string(p)};
  return path.is_absolute() ? path : base / path;
}

}  // namespace

const std::vector<LabelInfo>& material_labels() {
  static const std::vector<LabelInfo> table = {
      {"brick", {178, 34, 34}},        {"carpet", {128, 0, 128}},     {"ceramic", {240, 230, 140}},
      {"fabric", {255, 105, 180}},     {"foliage", {34, 139, 34}},    {"food", {255, 140, 0}},
      {"glass", {135, 206, 235}},      {"hair", {90, 60, 20}},        {"leather", {160, 82, 45}},
      {"metal", {112, 128, 144}},      {"mirror", {220, 220, 255}},   {"other", {0, 0, 0}},
      {"painted", {245, 245, 220}},    {"paper", {255, 255, 255}},    {"plastic", {0, 191, 255}},
      {"polishedstone", {47, 79, 79}}, {"skin", {255, 218, 185}},     {"sky", {70, 130, 255}},
      {"stone", {128, 128, 128}},      {"tile", {0, 128, 128}},       {"wallpaper", {189, 183, 107}},
      {"water", {0, 0, 205}},          {"wood", {205, 133, 63}}};
  return table;
}

std::vector<LabelInfo> default_label_table(int labels) {
  if (labels == static_cast<int>(material_labels().size())) return material_labels();
  std::vector<LabelInfo> out;
  out.reserve(labels);
  for (int l = 0; l < labels; ++l) {
    // Golden-angle hue walk for distinct colours.
    const double h = std::fmod(l * 137.508, 360.0) / 60.0;
    const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h)) {
      case 0: r = 1, g = x; break;
      case 1: r = x, g = 1; break;
      case 2: g = 1, b = x; break;
      case 3: g = x, b = 1; break;
      case 4: r = x, b = 1; break;
      default: r = 1, b = x; break;
    }
    const double v = l % 2 ? 200.0 : 255.0;
    out.push_back({"label_" + std::to_string(l),
                   {static_cast<std::uint8_t>(r * v), static_cast<std::uint8_t>(g * v),
                    static_cast<std::uint8_t>(b * v)}});
  }
  return out;
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "fx") {
    intrinsics.fx = parse_double(value, key);
  } else if (key == "fy") {
    intrinsics.fy = parse_double(value, key);
  } else if (key == "cx") {
    intrinsics.cx = parse_double(value, key);
  } else if (key == "cy") {
    intrinsics.cy = parse_double(value, key);
  } else if (key == "depth_scale") {
    intrinsics.depth_scale = parse_double(value, key);
  } else if (key == "labels") {
    const long l = parse_int(value, key);
    if (l < 2 || l > 254) throw ConfigError("labels must be in [2, 254]");
    labels = static_cast<int>(l);
    label_table = default_label_table(labels);
    crf.compatibility = CrfParams::potts(labels).compatibility;
  } else if (key == "label_names") {
    const auto names = split(value, ',');
    if (static_cast<int>(names.size()) != labels) {
      throw ConfigError("label_names lists " + std::to_string(names.size()) + " names for " +
                        std::to_string(labels) + " labels");
    }
    for (int l = 0; l < labels; ++l) label_table[l].name = std::string(names[l]);
  } else if (key == "label_colors") {
    const auto colors = split(value, ';');
    if (static_cast<int>(colors.size()) != labels) {
      throw ConfigError("label_colors lists " + std::to_string(colors.size()) + " colours for " +
                        std::to_string(labels) + " labels");
    }
    for (int l = 0; l < labels; ++l) {
      const auto parts = split(colors[l], ',');
      if (parts.size() != 3) throw ConfigError("label colour must be r,g,b");
      for (int c = 0; c < 3; ++c) {
        const long v = parse_int(parts[c], key);
        if (v < 0 || v > 255) throw ConfigError("label colour component out of range");
        label_table[l].color[c] = static_cast<std::uint8_t>(v);
      }
    }
  } else if (key == "w_bilateral") {
    crf.kernel_weights[0] = parse_double(value, key);
  } else if (key == "w_spatial") {
    crf.kernel_weights[1] = parse_double(value, key);
  } else if (key == "theta_alpha") {
    crf.theta_alpha = parse_double(value, key);
  } else if (key == "theta_beta") {
    crf.theta_beta = parse_double(value, key);
  } else if (key == "theta_gamma") {
    crf.theta_gamma = parse_double(value, key);
  } else if (key == "iterations") {
    crf.iterations = static_cast<int>(parse_int(value, key));
    if (crf.iterations < 1) throw ConfigError("iterations must be >= 1");
  } else if (key == "compatibility") {
    if (value == "potts") {
      crf.compatibility = CrfParams::potts(labels).compatibility;
    } else {
      const auto entries = split(value, ',');
      if (entries.size() != static_cast<std::size_t>(labels) * labels) {
        throw ConfigError("compatibility needs " + std::to_string(labels * labels) + " entries, got " +
                          std::to_string(entries.size()));
      }
      crf.compatibility.clear();
      for (auto e : entries) crf.compatibility.push_back(parse_double(e, key));
    }
  } else if (key == "voxel_res") {
    voxel_resolution = parse_double(value, key);
  } else if (key == "backend") {
    backend = parse_backend(value);
  } else if (key == "precision") {
    if (value == "double") {
      precision = Precision::kDouble;
    } else if (value == "single") {
      precision = Precision::kSingle;
    } else {
      throw ConfigError("precision must be double or single");
    }
  } else if (key == "min_obs") {
    const long v = parse_int(value, key);
    if (v < 0) throw ConfigError("min_obs must be >= 0");
    min_observations = static_cast<std::uint32_t>(v);
  } else if (key == "min_conf") {
    min_confidence = parse_double(value, key);
  } else if (key == "out") {
    output_dir = std::string(value);
  } else {
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  }
}

void PipelineConfig::validate() const {
  if (labels < 2) throw ConfigError("label count must be >= 2");
  if (static_cast<int>(label_table.size()) != labels) {
    throw ConfigError("label table must have exactly one entry per label");
  }
  intrinsics.validate();
  crf.validate();
  if (crf.labels() != labels) throw ConfigError("compatibility matrix does not match label count");
  if (!(voxel_resolution > 0.0)) throw ConfigError("voxel_res must be positive");
  if (!(min_confidence >= 0.0) || min_confidence > 1.0) throw ConfigError("min_conf must be in [0, 1]");
}

std::vector<std::string> PipelineConfig::label_names() const {
  std::vector<std::string> out;
  for (const auto& l : label_table) out.push_back(l.name);
  return out;
}

std::string PipelineConfig::to_text() const {
  std::ostringstream s;
  s << std::setprecision(17);
  s << "fx=" << intrinsics.fx << "\nfy=" << intrinsics.fy << "\ncx=" << intrinsics.cx
    << "\ncy=" << intrinsics.cy << "\ndepth_scale=" << intrinsics.depth_scale << "\n";
  s << "labels=" << labels << "\nlabel_names=";
  for (int l = 0; l < labels; ++l) s << (l ? "," : "") << label_table[l].name;
  s << "\nlabel_colors=";
  for (int l = 0; l < labels; ++l) {
    const auto& c = label_table[l].color;
    s << (l ? ";" : "") << int(c[0]) << "," << int(c[1]) << "," << int(c[2]);
  }
  s << "\nw_bilateral=" << crf.kernel_weights[0] << "\nw_spatial=" << crf.kernel_weights[1]
    << "\ntheta_alpha=" << crf.theta_alpha << "\ntheta_beta=" << crf.theta_beta
    << "\ntheta_gamma=" << crf.theta_gamma << "\niterations=" << crf.iterations << "\n";
  if (crf.compatibility == CrfParams::potts(labels).compatibility) {
    s << "compatibility=potts\n";
  } else {
    s << "compatibility=";
    for (std::size_t k = 0; k < crf.compatibility.size(); ++k) s << (k ? "," : "") << crf.compatibility[k];
    s << "\n";
  }
  s << "voxel_res=" << voxel_resolution << "\nbackend=" << to_string(backend)
    << "\nprecision=" << (precision == Precision::kDouble ? "double" : "single")
    << "\nmin_obs=" << min_observations << "\nmin_conf=" << min_confidence << "\n";
  return s.str();
}

void load_config_file(const std::filesystem::path& path, PipelineConfig& config) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = strip_comment(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      config.set(body.substr(0, eq), body.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        bool check_files) {
  Manifest manifest;
  manifest.config.output_dir = base_dir / "out";
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    const auto body = strip_comment(line);
    if (body.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";

    if (const auto eq = body.find('='); eq != std::string_view::npos) {
      if (!manifest.frames.empty()) throw FormatError(where + "configuration after frame lines");
      try {
        const auto key = trim(body.substr(0, eq));
        const auto value = trim(body.substr(eq + 1));
        manifest.config.set(key, value);
        if (key == "out") manifest.config.output_dir = resolve(base_dir, value);
      } catch (const ConfigError& e) {
        throw FormatError(where + e.what());
      }
      continue;
    }

    const auto fields = tokens(body);
    if (fields.size() != 20 && fields.size() != 21) {
      throw FormatError(where + "expected frame_id rgb depth unary [truth] and 16 pose values, got " +
                        std::to_string(fields.size()) + " fields");
    }
    FrameRecord rec;
    rec.frame_id = std::string(fields[0]);
    rec.rgb_path = resolve(base_dir, fields[1]);
    rec.depth_path = resolve(base_dir, fields[2]);
    rec.unary_path = resolve(base_dir, fields[3]);
    const std::size_t pose_start = fields.size() - 16;
    if (fields.size() == 21) rec.truth_path = resolve(base_dir, fields[4]);
    std::vector<double> pose(16);
    for (int k = 0; k < 16; ++k) {
      const auto f = fields[pose_start + k];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), pose[k]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw FormatError(where + "invalid pose value '" + std::string(f) + "'");
      }
    }
    try {
      rec.pose = Pose::from_row_major(pose);
    } catch (const InvalidInput& e) {
      throw FormatError(where + e.what());
    }
    if (check_files) {
      for (const auto* p : {&rec.rgb_path, &rec.depth_path, &rec.unary_path}) {
        if (!std::filesystem::exists(*p)) throw IoError(where + "missing file " + p->string());
      }
      if (rec.truth_path && !std::filesystem::exists(*rec.truth_path)) {
        throw IoError(where + "missing file " + rec.truth_path->string());
      }
    }
    manifest.frames.push_back(std::move(rec));
  }
  try {
    manifest.config.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("manifest configuration: ") + e.what());
  }
  return manifest;
}

Manifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_manifest(buf.str(), path.parent_path(), check_files);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest.config.to_text();
  out << std::setprecision(17);
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) { return p.lexically_relative(base).generic_string(); };
  for (const auto& f : manifest.frames) {
    out << f.frame_id << " " << rel(f.rgb_path) << " " << rel(f.depth_path) << " " << rel(f.unary_path);
    if (f.truth_path) out << " " << rel(*f.truth_path);
    for (double v : f.pose.row_major()) out << " " << v;
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

FrameResult run_frame(const FrameRecord& record, const PipelineConfig& config) {
  try {
    FrameResult result;
    auto t0 = Clock::now();
    const RgbImage rgb = read_ppm(record.rgb_path);
    const DepthImage depth = read_depth_pgm(record.depth_path);
    LabelDistributionImage probs = load_unary(record.unary_path);
    if (!rgb.same_shape(depth)) throw InvalidInput("colour and depth images differ in size");
    if (probs.labels() != config.labels) {
      throw InvalidInput("unary file has " + std::to_string(probs.labels()) + " labels, config expects " +
                         std::to_string(config.labels));
    }
    if (!probs.same_shape(depth)) probs = resize_bilinear(probs, depth.height(), depth.width());
    result.timings.load = seconds_since(t0);

    t0 = Clock::now();
    const UnaryField unary = unary_from_probabilities(probs);
    const FeatureField features = build_features(rgb, config.crf);
    auto mf = mean_field_infer(unary, features, config.crf, {config.backend, config.precision});
    result.q = std::move(mf.q);
    result.labels = map_labeling(result.q);
    result.timings.crf = seconds_since(t0);

    t0 = Clock::now();
    const PointGrid grid = back_project(depth, config.intrinsics);
    result.cloud = transform_cloud(make_semantic_cloud(grid, result.q, rgb, record.frame_id), record.pose);
    result.timings.projection = seconds_since(t0);
    return result;
  } catch (const Error& e) {
    throw Error("frame " + record.frame_id + ": " + e.what());
  }
}

PipelineResult run_pipeline(const Manifest& manifest, const RunOptions& options) {
  const PipelineConfig& config = manifest.config;
  config.validate();
  if (manifest.frames.empty()) throw ConfigError("manifest lists no frames");

  const auto& out_dir = config.output_dir;
  if (options.write_outputs) {
    std::filesystem::create_directories(out_dir);
    if (options.frame_plys) std::filesystem::create_directories(out_dir / "frames");
  }

  PipelineResult result{VoxelMap(config.labels, config.voxel_resolution), {}, {}, {}, {}, 0.0, 0.0, 0.0};
  bool all_truth = true;
  for (const auto& rec : manifest.frames) {
    FrameResult fr = run_frame(rec, config);
    FrameSummary summary{rec.frame_id, fr.cloud.size(), std::nullopt, fr.timings};
    if (rec.truth_path) {
      LabelImage truth = read_label_pgm(*rec.truth_path);
      if (!truth.same_shape(fr.labels)) truth = resize_nearest(truth, fr.labels.height(), fr.labels.width());
      ConfusionMatrix cm(config.labels);
      cm.accumulate(fr.labels, truth);
      if (cm.total() > 0) summary.pixel_accuracy = compute_metrics(cm).pixel_accuracy;
    } else {
      all_truth = false;
    }
    const auto t0 = Clock::now();
    result.map.integrate(fr.cloud);
    result.fusion_seconds += seconds_since(t0);
    if (options.write_outputs && options.frame_plys) {
      write_cloud_ply(out_dir / "frames" / (rec.frame_id + ".ply"), fr.cloud);
    }
    result.frames.push_back(std::move(summary));
  }

  auto t0 = Clock::now();
  result.exported = extract_map(result.map, config.min_observations, config.min_confidence);
  if (options.write_outputs) write_ply(out_dir / "map.ply", result.exported);
  result.export_seconds = seconds_since(t0);

  if (all_truth) {
    t0 = Clock::now();
    if (options.write_outputs) std::filesystem::create_directories(out_dir / "fused_labels");
    ConfusionMatrix cm(config.labels);
    for (const auto& rec : manifest.frames) {
      EvaluationFrame frame{read_label_pgm(*rec.truth_path), read_depth_pgm(rec.depth_path),
                            config.intrinsics, rec.pose};
      if (!frame.truth.same_shape(frame.depth)) {
        frame.truth = resize_nearest(frame.truth, frame.depth.height(), frame.depth.width());
      }
      cm.merge(evaluate_fused_map(result.map, std::span(&frame, 1)));
      if (options.write_outputs) {
        write_label_pgm(out_dir / "fused_labels" / (rec.frame_id + ".pgm"),
                        render_map_labels(result.map, frame.depth, frame.intrinsics, frame.pose));
      }
    }
    result.confusion = cm;
    if (cm.total() > 0) {
      result.metrics = compute_metrics(cm);
      if (options.write_outputs) {
        write_metrics_report(out_dir / "metrics.txt", *result.metrics, cm);
        write_class_csv(out_dir / "metrics_per_class.csv", *result.metrics, config.label_names());
      }
    }
    result.evaluation_seconds = seconds_since(t0);
  }

  if (options.write_outputs) {
    std::ofstream s(out_dir / "summary.txt");
    if (!s) throw IoError("cannot write " + (out_dir / "summary.txt").string());
    s << std::setprecision(6);
    FrameTimings total;
    double acc_sum = 0.0;
    int acc_count = 0;
    for (const auto& f : result.frames) {
      total.load += f.timings.load;
      total.crf += f.timings.crf;
      total.projection += f.timings.projection;
      if (f.pixel_accuracy) {
        acc_sum += *f.pixel_accuracy;
        ++acc_count;
      }
    }
    s << "frames=" << result.frames.size() << "\n"
      << "voxels=" << result.map.size() << "\n"
      << "exported_points=" << result.exported.size() << "\n"
      << "backend=" << to_string(config.backend) << "\n"
      << "seconds_load=" << total.load << "\n"
      << "seconds_crf=" << total.crf << "\n"
      << "seconds_projection=" << total.projection << "\n"
      << "seconds_fusion=" << result.fusion_seconds << "\n"
      << "seconds_export=" << result.export_seconds << "\n"
      << "seconds_evaluation=" << result.evaluation_seconds << "\n";
    if (acc_count) s << "mean_frame_pixel_accuracy=" << acc_sum / acc_count << "\n";
    if (result.metrics) {
      s << "fused_pixel_accuracy=" << result.metrics->pixel_accuracy << "\n"
        << "fused_coverage=" << result.confusion->coverage() << "\n";
    }
  }
  return result;
}

}  // namespace matfuse
