#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "matfuse/crf.hpp"
#include "matfuse/error.hpp"

namespace matfuse {
namespace {

constexpr double kLossFloor = 1e-12;

struct PreparedExample {
  UnaryField unary;
  std::shared_ptr<const KernelPlans> plans;
  const LabelImage* truth;
};

double dataset_loss(const std::vector<PreparedExample>& data, const CrfParams& params) {
  double total = 0.0;
  for (const auto& ex : data) {
    const auto result = mean_field_infer(ex.unary, ex.plans, params);
    total += cross_entropy_loss(result.q, *ex.truth);
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

double cross_entropy_loss(const LabelDistributionImage& q, const LabelImage& truth) {
  if (!truth.same_shape(q)) throw InvalidInput("truth and prediction dimensions differ");
  double loss = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < q.pixel_count(); ++i) {
    const auto t = truth.data()[i];
    if (t == kIgnoreLabel) continue;
    loss -= std::log(std::max(q.pixel(i)[t], kLossFloor));
    ++counted;
  }
  return counted ? loss / static_cast<double>(counted) : 0.0;
}

TrainingResult train_crf_params(std::span<const TrainingExample> dataset, const CrfParams& initial,
                                const TrainingOptions& options) {
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  if (!(options.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (options.epochs < 0) throw ConfigError("epoch count must be >= 0");
  initial.validate();

  const int labels = initial.labels();
  std::vector<PreparedExample> data;
  data.reserve(dataset.size());
  for (const auto& ex : dataset) {
    if (ex.unary_probs.labels() != labels) {
      throw ConfigError("all training images must share the label count of the parameters");
    }
    if (!ex.truth.same_shape(ex.unary_probs) || !ex.rgb.same_shape(ex.unary_probs)) {
      throw InvalidInput("training example images have mismatched dimensions");
    }
    ex.truth.validate(labels);
    data.push_back({unary_from_probabilities(ex.unary_probs),
                    std::make_shared<const KernelPlans>(build_features(ex.rgb, initial), options.backend),
                    &ex.truth});
  }

  TrainingResult result;
  result.params = initial;
  result.initial_loss = dataset_loss(data, initial);
  result.final_loss = result.initial_loss;

  CrfParams params = initial;
  double best = result.initial_loss;
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const auto& ex = data[idx];
      const auto forward = mean_field_infer(ex.unary, ex.plans, params);

      // d(mean CE)/dQ at the truth label, zero where the floor is active.
      LabelDistributionImage grad(forward.q.height(), forward.q.width(), labels, 0.0);
      std::size_t counted = 0;
      for (auto t : ex.truth->data()) counted += t != kIgnoreLabel;
      if (counted == 0) continue;
      for (std::size_t i = 0; i < forward.q.pixel_count(); ++i) {
        const auto t = ex.truth->data()[i];
        if (t == kIgnoreLabel) continue;
        const double q = forward.q.pixel(i)[t];
        if (q > kLossFloor) grad.pixel(i)[t] = -1.0 / (q * static_cast<double>(counted));
      }

      const CrfGradients g = mean_field_backward(forward.trace, grad);
      for (int m = 0; m < kKernelCount; ++m) {
        params.kernel_weights[m] =
            std::max(0.0, params.kernel_weights[m] - options.learning_rate * g.d_weights[m]);
      }
      for (std::size_t k = 0; k < params.compatibility.size(); ++k) {
        params.compatibility[k] -= options.learning_rate * g.d_compatibility[k];
      }
    }

    const double loss = dataset_loss(data, params);
    result.epoch_losses.push_back(loss);
    if (loss < best) {
      best = loss;
      result.params = params;
    }
    result.best_losses.push_back(best);
  }
  result.final_loss = best;
  return result;
}

}  // namespace matfuse
