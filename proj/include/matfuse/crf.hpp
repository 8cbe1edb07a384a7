#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "matfuse/filtering.hpp"
#include "matfuse/image.hpp"

namespace matfuse {

/// Probability floor applied before taking logs of unary probabilities.
inline constexpr double kProbabilityFloor = 1e-8;

/// Number of Gaussian kernels: index 0 is bilateral (position + colour), 1 is spatial.
inline constexpr int kKernelCount = 2;
inline constexpr int kBilateralDim = 5;
inline constexpr int kSpatialDim = 2;

/// Dense CRF parameters. Kernels are unweighted Gaussians; the weights are
/// applied in a separate stage so they stay trainable.
struct CrfParams {
  std::vector<double> kernel_weights{10.0, 3.0};
  /// Row-major L x L label compatibility mu(l, l'); penalty added for Q mass on l'.
  std::vector<double> compatibility;
  double theta_alpha = 61.0;  ///< bilateral positional scale, pixels
  double theta_beta = 11.0;   ///< bilateral colour scale, 0-255 intensity units
  double theta_gamma = 3.0;   ///< spatial scale, pixels
  int iterations = 5;

  /// Default parameters with a Potts compatibility for `labels` classes.
  static CrfParams potts(int labels);

  int labels() const;
  double mu(int l, int lp) const { return compatibility[static_cast<std::size_t>(l) * labels() + lp]; }

  /// Throws ConfigError when any invariant is violated.
  void validate() const;
};

/// Per-pixel kernel features, already divided by their theta scales.
struct FeatureField {
  int height = 0;
  int width = 0;
  std::vector<double> bilateral;  ///< N x 5: x/ta, y/ta, R/tb, G/tb, B/tb
  std::vector<double> spatial;    ///< N x 2: x/tg, y/tg

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  std::span<const double> kernel(int m) const { return m == 0 ? bilateral : spatial; }
  static int kernel_dim(int m) { return m == 0 ? kBilateralDim : kSpatialDim; }
};

struct InferenceOptions {
  FilterBackend backend = FilterBackend::kLattice;
  Precision precision = Precision::kDouble;
};

/// Filter plans for the two kernels of one image; reusable across iterations.
class KernelPlans {
 public:
  KernelPlans(const FeatureField& features, FilterBackend backend);
  const FilterPlan& operator[](int m) const { return plans_[m]; }
  int height() const { return height_; }
  int width() const { return width_; }

 private:
  int height_;
  int width_;
  std::vector<FilterPlan> plans_;
};

/// Cached state of an unrolled inference, sufficient for reverse-mode gradients.
struct MeanFieldTrace {
  std::shared_ptr<const KernelPlans> plans;
  CrfParams params;
  Precision precision = Precision::kDouble;
  /// q[0] = softmax(U), q[t] = output of iteration t.
  std::vector<LabelDistributionImage> q;
  /// messages[t][m]: normalized kernel-m message computed from q[t].
  std::vector<std::vector<std::vector<double>>> messages;
  /// weighted[t]: sum_m w_m * messages[t][m].
  std::vector<std::vector<double>> weighted;
};

struct MeanFieldResult {
  LabelDistributionImage q;
  MeanFieldTrace trace;
};

struct CrfGradients {
  UnaryField d_unary;
  std::vector<double> d_weights;        ///< per kernel
  std::vector<double> d_compatibility;  ///< row-major L x L
};

/// U_i(l) = log(max(p_i(l), 1e-8)).
UnaryField unary_from_probabilities(const LabelDistributionImage& probs);

/// Per-pixel softmax over labels.
LabelDistributionImage softmax(const UnaryField& unary);

FeatureField build_features(const RgbImage& rgb, const CrfParams& params);

/// One mean-field update: message passing, weighting, compatibility
/// transform, unary addition and softmax normalization.
LabelDistributionImage mean_field_step(const LabelDistributionImage& q, const UnaryField& unary,
                                       const KernelPlans& plans, const CrfParams& params,
                                       Precision precision = Precision::kDouble);
LabelDistributionImage mean_field_step(const LabelDistributionImage& q, const UnaryField& unary,
                                       const FeatureField& features, const CrfParams& params,
                                       const InferenceOptions& options = {});

/// Runs params.iterations mean-field steps from softmax(U).
MeanFieldResult mean_field_infer(const UnaryField& unary, const FeatureField& features,
                                 const CrfParams& params, const InferenceOptions& options = {});
MeanFieldResult mean_field_infer(const UnaryField& unary, std::shared_ptr<const KernelPlans> plans,
                                 const CrfParams& params, Precision precision = Precision::kDouble);

/// Reverse-mode gradients of a scalar loss through every unrolled iteration.
CrfGradients mean_field_backward(const MeanFieldTrace& trace,
                                 const LabelDistributionImage& d_loss_d_q);

/// Exact Gibbs energy: sum_i -U_i(x_i) + sum_{i<j} mu(x_i,x_j) sum_m w_m k_m(f_i,f_j).
double crf_energy(const LabelImage& labeling, const UnaryField& unary, const FeatureField& features,
                  const CrfParams& params);

/// Exhaustive minimum-energy labeling; requires L^N <= 2^20.
LabelImage brute_force_map(const UnaryField& unary, const FeatureField& features,
                           const CrfParams& params);

/// Per-pixel argmax, ties resolved to the smallest label id.
LabelImage map_labeling(const LabelDistributionImage& q);

// ---------------------------------------------------------------------------
// Parameter learning

struct TrainingExample {
  RgbImage rgb;
  LabelDistributionImage unary_probs;
  LabelImage truth;
};

struct TrainingOptions {
  double learning_rate = 0.01;
  int epochs = 10;
  std::uint64_t seed = 0;
  FilterBackend backend = FilterBackend::kLattice;
};

struct TrainingResult {
  CrfParams params;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// Mean training loss after each epoch.
  std::vector<double> epoch_losses;
  /// Best loss seen so far after each epoch (non-increasing).
  std::vector<double> best_losses;
};

/// Mean per-pixel cross-entropy of Q against the truth, IGNORE pixels excluded.
double cross_entropy_loss(const LabelDistributionImage& q, const LabelImage& truth);

/// Gradient descent on kernel weights and compatibility (thetas stay fixed).
/// Returns the parameters with the lowest training loss seen, which is never
/// above the loss of `initial`.
TrainingResult train_crf_params(std::span<const TrainingExample> dataset, const CrfParams& initial,
                                const TrainingOptions& options);

}  // namespace matfuse
