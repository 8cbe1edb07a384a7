#include "matfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "matfuse/error.hpp"
#include "matfuse/io.hpp"

namespace matfuse {
namespace {

constexpr double kSlabThickness = 0.05;

// Nearest positive hit of the ray o + t d with an axis-aligned box, or +inf.
double intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const SceneBox& box) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < box.min[a] || o[a] > box.max[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double ta = (box.min[a] - o[a]) / d[a];
    double tb = (box.max[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::numeric_limits<double>::infinity();
  }
  return t0 > 0.0 ? t0 : std::numeric_limits<double>::infinity();
}

std::uint8_t jittered(std::uint8_t base, int jitter, std::mt19937_64& rng) {
  if (jitter == 0) return base;
  std::uniform_int_distribution<int> dist(-jitter, jitter);
  return static_cast<std::uint8_t>(std::clamp(int(base) + dist(rng), 0, 255));
}

void fill_unary(std::span<double> p, int chosen, double confidence) {
  const double rest = (1.0 - confidence) / static_cast<double>(p.size() - 1);
  std::fill(p.begin(), p.end(), rest);
  p[chosen] = confidence;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SyntheticSceneSpec SyntheticSceneSpec::desk_scene() {
  SyntheticSceneSpec s;
  using V = Eigen::Vector3d;
  s.boxes = {
      {V(-0.5, -0.35, 0.45), V(0.5, 0.35, 0.5), 22},    // wood desk top
      {V(-0.35, -0.2, 0.6), V(-0.15, 0.0, 0.8), 9},     // metal
      {V(0.1, -0.25, 0.6), V(0.35, 0.0, 0.7), 3},       // fabric
      {V(-0.2, 0.1, 0.6), V(0.1, 0.3, 0.75), 14},       // plastic
      {V(0.6, 0.5, 0.1), V(0.9, 0.8, 0.6), 6},          // glass
      {V(-0.9, -0.8, 0.1), V(-0.6, -0.5, 0.4), 2},      // ceramic
  };
  return s;
}

void SyntheticSceneSpec::validate() const {
  auto label_ok = [&](int l) { return l >= 0 && l < labels; };
  if (labels < 2 || labels > 254) throw ConfigError("synthetic scene needs 2..254 labels");
  if (frames < 1) throw ConfigError("synthetic scene needs at least one frame");
  if (image_width < 1 || image_height < 1) throw ConfigError("synthetic image size must be positive");
  if (!(focal > 0.0)) throw ConfigError("focal length must be positive");
  if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("noise must be in [0, 1)");
  if (!(confidence > 1.0 / labels && confidence <= 1.0)) {
    throw ConfigError("confidence must be in (1/L, 1]");
  }
  if (color_jitter < 0 || color_jitter > 127) throw ConfigError("colour jitter must be in [0, 127]");
  if (!(voxel_resolution > 0.0)) throw ConfigError("voxel resolution must be positive");
  if (!(surface_gap >= 0.0)) throw ConfigError("surface gap must be non-negative");
  if (!label_ok(floor_label) || !label_ok(wall_label)) throw ConfigError("room label out of range");
  for (int a = 0; a < 3; ++a) {
    if (!(room_min[a] + 2 * surface_gap < room_max[a])) throw ConfigError("room extents are empty");
  }
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const auto& b = boxes[k];
    if (!label_ok(b.label)) throw ConfigError("box " + std::to_string(k) + " label out of range");
    for (int a = 0; a < 3; ++a) {
      if (!(b.min[a] < b.max[a]) || b.min[a] < room_min[a] || b.max[a] > room_max[a]) {
        throw ConfigError("box " + std::to_string(k) + " is empty or not inside the room");
      }
    }
  }
}

CameraIntrinsics SyntheticSceneSpec::intrinsics() const {
  return {focal, focal, (image_width - 1) / 2.0, (image_height - 1) / 2.0, 0.001};
}

Pose SyntheticSceneSpec::camera_pose(int frame) const {
  const double a = 2.0 * std::numbers::pi * frame / frames;
  const Eigen::Vector3d position(orbit_radius * std::cos(a), orbit_radius * std::sin(a), orbit_height);
  const Eigen::Vector3d forward = (look_at - position).normalized();
  const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return Pose::from_rotation_translation(r, position);
}

std::vector<SceneBox> SyntheticSceneSpec::surfaces() const {
  using V = Eigen::Vector3d;
  const V& lo = room_min;
  const V& hi = room_max;
  const double g = surface_gap;
  const double t = kSlabThickness;
  std::vector<SceneBox> out = {
      {V(lo.x() + g, lo.y() + g, lo.z() - t), V(hi.x() - g, hi.y() - g, lo.z()), floor_label},
      {V(lo.x() - t, lo.y() + g, lo.z() + g), V(lo.x(), hi.y() - g, hi.z()), wall_label},
      {V(hi.x(), lo.y() + g, lo.z() + g), V(hi.x() + t, hi.y() - g, hi.z()), wall_label},
      {V(lo.x() + g, lo.y() - t, lo.z() + g), V(hi.x() - g, lo.y(), hi.z()), wall_label},
      {V(lo.x() + g, hi.y(), lo.z() + g), V(hi.x() - g, hi.y() + t, hi.z()), wall_label},
  };
  out.insert(out.end(), boxes.begin(), boxes.end());
  return out;
}

LabelDistributionImage corrupt_unaries(const LabelImage& truth, int labels, double noise,
                                       double confidence, std::uint64_t seed) {
  if (labels < 2) throw InvalidInput("corruption needs at least two labels");
  if (!(noise >= 0.0 && noise < 1.0)) throw InvalidInput("noise must be in [0, 1)");
  if (!(confidence > 1.0 / labels && confidence <= 1.0)) throw InvalidInput("confidence must be in (1/L, 1]");
  truth.validate(labels);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> wrong(0, labels - 2);
  LabelDistributionImage out(truth.height(), truth.width(), labels, 1.0 / labels);
  for (std::size_t i = 0; i < truth.pixel_count(); ++i) {
    const int t = truth.data()[i];
    if (t == kIgnoreLabel) continue;
    int chosen = t;
    if (coin(rng) < noise) {
      chosen = wrong(rng);
      if (chosen >= t) ++chosen;
    }
    fill_unary(out.pixel(i), chosen, confidence);
  }
  return out;
}

SyntheticFrame render_synthetic_frame(const SyntheticSceneSpec& spec, int frame) {
  spec.validate();
  if (frame < 0 || frame >= spec.frames) throw InvalidInput("frame index out of range");
  const auto surfaces = spec.surfaces();
  const auto intr = spec.intrinsics();
  const auto palette = default_label_table(spec.labels);

  SyntheticFrame f;
  f.pose = spec.camera_pose(frame);
  f.rgb = RgbImage(spec.image_height, spec.image_width);
  f.depth = DepthImage(spec.image_height, spec.image_width);
  f.truth = LabelImage(spec.image_height, spec.image_width, kIgnoreLabel);
  std::mt19937_64 color_rng(mix_seed(spec.seed, 2 * static_cast<std::uint64_t>(frame)));

  const Eigen::Matrix3d r = f.pose.rotation();
  const Eigen::Vector3d origin = f.pose.translation();
  for (int v = 0; v < spec.image_height; ++v) {
    for (int u = 0; u < spec.image_width; ++u) {
      // Camera-frame direction with unit z, so the hit parameter is the depth.
      const Eigen::Vector3d dir = r * Eigen::Vector3d((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      int label = kIgnoreLabel;
      for (const auto& s : surfaces) {
        const double t = intersect(origin, dir, s);
        if (t < best) {
          best = t;
          label = s.label;
        }
      }
      const double raw = std::round(best / intr.depth_scale);
      if (label == kIgnoreLabel || raw < 1.0 || raw > 65535.0) continue;
      f.depth(v, u) = static_cast<std::uint16_t>(raw);
      f.truth(v, u) = static_cast<std::uint8_t>(label);
      for (int c = 0; c < 3; ++c) f.rgb(v, u, c) = jittered(palette[label].color[c], spec.color_jitter, color_rng);
    }
  }
  f.unary = corrupt_unaries(f.truth, spec.labels, spec.noise, spec.confidence,
                            mix_seed(spec.seed, 2 * static_cast<std::uint64_t>(frame) + 1));
  return f;
}

std::filesystem::path generate_synthetic(const SyntheticSceneSpec& spec,
                                         const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  for (const char* sub : {"rgb", "depth", "truth", "unary"}) {
    std::filesystem::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  Manifest manifest;
  manifest.config.set("labels", std::to_string(spec.labels));
  manifest.config.intrinsics = spec.intrinsics();
  manifest.config.voxel_resolution = spec.voxel_resolution;
  for (int k = 0; k < spec.frames; ++k) {
    const SyntheticFrame f = render_synthetic_frame(spec, k);
    char id[32];
    std::snprintf(id, sizeof id, "frame_%03d", k);
    FrameRecord rec;
    rec.frame_id = id;
    rec.rgb_path = out_dir / "rgb" / (rec.frame_id + ".ppm");
    rec.depth_path = out_dir / "depth" / (rec.frame_id + ".pgm");
    rec.truth_path = out_dir / "truth" / (rec.frame_id + ".pgm");
    rec.unary_path = out_dir / "unary" / (rec.frame_id + ".unry");
    rec.pose = f.pose;
    write_ppm(rec.rgb_path, f.rgb);
    write_depth_pgm(rec.depth_path, f.depth);
    write_label_pgm(*rec.truth_path, f.truth);
    save_unary(rec.unary_path, f.unary);
    manifest.frames.push_back(std::move(rec));
  }
  const auto path = out_dir / "manifest.txt";
  write_manifest(path, manifest);
  return path;
}

PiecewiseScene make_piecewise_scene(const PiecewiseSceneSpec& spec) {
  if (spec.height < 1 || spec.width < 1 || spec.labels < 2 || spec.labels > 254 || spec.rectangles < 0) {
    throw InvalidInput("invalid piecewise scene size");
  }
  std::mt19937_64 rng(mix_seed(spec.seed, 0));
  const auto palette = default_label_table(spec.labels);
  std::uniform_int_distribution<int> label_dist(0, spec.labels - 1);
  PiecewiseScene s;
  s.truth = LabelImage(spec.height, spec.width, static_cast<std::uint8_t>(label_dist(rng)));
  for (int k = 0; k < spec.rectangles; ++k) {
    std::uniform_int_distribution<int> row(0, spec.height - 1), col(0, spec.width - 1);
    int r0 = row(rng), r1 = row(rng), c0 = col(rng), c1 = col(rng);
    if (r0 > r1) std::swap(r0, r1);
    if (c0 > c1) std::swap(c0, c1);
    const auto l = static_cast<std::uint8_t>(label_dist(rng));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) s.truth(r, c) = l;
    }
  }
  s.rgb = RgbImage(spec.height, spec.width);
  for (std::size_t i = 0; i < s.truth.pixel_count(); ++i) {
    const auto& base = palette[s.truth.data()[i]].color;
    for (int c = 0; c < 3; ++c) s.rgb.data()[3 * i + c] = jittered(base[c], spec.color_jitter, rng);
  }
  s.unary = corrupt_unaries(s.truth, spec.labels, spec.noise, spec.confidence, mix_seed(spec.seed, 1));
  return s;
}

}  // namespace matfuse
