#include "matfuse/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

#include "matfuse/error.hpp"

namespace matfuse {

ConfusionMatrix::ConfusionMatrix(int labels) : labels_(labels) {
  if (labels < 1 || labels > 255) throw InvalidInput("confusion matrix needs 1..255 labels");
  counts_.assign(static_cast<std::size_t>(labels) * labels, 0);
}

void ConfusionMatrix::add(int truth, int predicted, std::uint64_t n) {
  if (truth < 0 || truth >= labels_ || predicted < 0 || predicted >= labels_) {
    throw InvalidInput("label pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                       ") out of range for " + std::to_string(labels_) + " labels");
  }
  counts_[static_cast<std::size_t>(truth) * labels_ + predicted] += n;
}

void ConfusionMatrix::accumulate(const LabelImage& predicted, const LabelImage& truth) {
  if (!predicted.same_shape(truth)) throw InvalidInput("prediction and truth dimensions differ");
  predicted.validate(labels_);
  truth.validate(labels_);
  const auto p = predicted.data();
  const auto t = truth.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == kIgnoreLabel) continue;
    if (p[i] == kIgnoreLabel) {
      ++missing_;
    } else {
      ++counts_[static_cast<std::size_t>(t[i]) * labels_ + p[i]];
    }
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.labels_ != labels_) throw InvalidInput("cannot merge confusion matrices of different size");
  for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
  missing_ += other.missing_;
}

std::uint64_t ConfusionMatrix::truth_total(int label) const {
  std::uint64_t s = 0;
  for (int j = 0; j < labels_; ++j) s += count(label, j);
  return s;
}

std::uint64_t ConfusionMatrix::predicted_total(int label) const {
  std::uint64_t s = 0;
  for (int i = 0; i < labels_; ++i) s += count(i, label);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

double ConfusionMatrix::coverage() const {
  const std::uint64_t matched = total();
  const std::uint64_t evaluated = matched + missing_;
  return evaluated ? static_cast<double>(matched) / static_cast<double>(evaluated) : 0.0;
}

SegmentationMetrics compute_metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw InvalidInput("confusion matrix is empty");

  SegmentationMetrics m;
  m.per_class.resize(cm.labels());
  double correct = 0.0, acc_sum = 0.0, iu_sum = 0.0, fw_sum = 0.0;
  for (int i = 0; i < cm.labels(); ++i) {
    ClassScores& s = m.per_class[i];
    s.truth_count = cm.truth_total(i);
    s.predicted_count = cm.predicted_total(i);
    s.true_positives = cm.count(i, i);
    s.present = s.truth_count > 0;
    if (!s.present) continue;
    const double tp = static_cast<double>(s.true_positives);
    const double t = static_cast<double>(s.truth_count);
    const double uni = t + static_cast<double>(s.predicted_count) - tp;
    s.accuracy = tp / t;
    s.iu = tp / uni;
    ++m.present_classes;
    correct += tp;
    acc_sum += s.accuracy;
    iu_sum += s.iu;
    fw_sum += t * s.iu;
  }
  const double n = static_cast<double>(total);
  m.pixel_accuracy = correct / n;
  m.mean_accuracy = acc_sum / m.present_classes;
  m.mean_iu = iu_sum / m.present_classes;
  m.frequency_weighted_iu = fw_sum / n;
  return m;
}

LabelImage render_map_labels(const VoxelMap& map, const DepthImage& depth,
                             const CameraIntrinsics& intrinsics, const Pose& pose) {
  const PointGrid grid = back_project(depth, intrinsics);
  LabelImage out(depth.height(), depth.width(), kIgnoreLabel);
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    if (!grid.valid[i]) continue;
    const VoxelCell* cell = map.find(pose.apply(grid.points[i]));
    if (!cell) continue;
    const auto& lp = cell->log_posterior;
    out.data()[i] = static_cast<std::uint8_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
  }
  return out;
}

ConfusionMatrix evaluate_fused_map(const VoxelMap& map, std::span<const EvaluationFrame> frames) {
  ConfusionMatrix cm(map.labels());
  for (const auto& frame : frames) {
    if (!frame.truth.same_shape(frame.depth)) {
      throw InvalidInput("ground truth and depth dimensions differ");
    }
    frame.truth.validate(map.labels());
    const LabelImage predicted = render_map_labels(map, frame.depth, frame.intrinsics, frame.pose);
    for (std::size_t i = 0; i < predicted.data().size(); ++i) {
      const auto t = frame.truth.data()[i];
      if (t == kIgnoreLabel || frame.depth.data()[i] == 0) continue;
      const auto p = predicted.data()[i];
      if (p == kIgnoreLabel) {
        cm.add_missing();
      } else {
        cm.add(t, p);
      }
    }
  }
  return cm;
}

void write_metrics_report(const std::filesystem::path& path, const SegmentationMetrics& metrics,
                          const ConfusionMatrix& cm) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10);
  out << "pixel_accuracy=" << metrics.pixel_accuracy << "\n"
      << "mean_accuracy=" << metrics.mean_accuracy << "\n"
      << "mean_iu=" << metrics.mean_iu << "\n"
      << "frequency_weighted_iu=" << metrics.frequency_weighted_iu << "\n"
      << "present_classes=" << metrics.present_classes << "\n"
      << "evaluated_pixels=" << cm.total() << "\n"
      << "missing_pixels=" << cm.missing() << "\n"
      << "coverage=" << cm.coverage() << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

void write_class_csv(const std::filesystem::path& path, const SegmentationMetrics& metrics,
                     std::span<const std::string> names) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10);
  out << "label,name,truth_count,predicted_count,true_positives,accuracy,iu\n";
  for (std::size_t i = 0; i < metrics.per_class.size(); ++i) {
    const auto& s = metrics.per_class[i];
    out << i << "," << (i < names.size() ? names[i] : std::string("label_") + std::to_string(i)) << ","
        << s.truth_count << "," << s.predicted_count << "," << s.true_positives << ",";
    if (s.present) {
      out << s.accuracy << "," << s.iu << "\n";
    } else {
      out << ",\n";
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace matfuse
