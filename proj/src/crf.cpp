#include "matfuse/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "matfuse/error.hpp"

namespace matfuse {
namespace {

void check_dims(const Image<double>& a, const Image<double>& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
    std::ostringstream msg;
    msg << what << ": dimension mismatch (" << a.height() << "x" << a.width() << "x" << a.channels()
        << " vs " << b.height() << "x" << b.width() << "x" << b.channels() << ")";
    throw InvalidInput(msg.str());
  }
}

void check_plans(const KernelPlans& plans, const Image<double>& image) {
  if (plans.height() != image.height() || plans.width() != image.width()) {
    throw InvalidInput("feature dimensions " + std::to_string(plans.height()) + "x" +
                       std::to_string(plans.width()) + " do not match image " +
                       std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
}

/// In-place softmax over each pixel's labels.
void normalize_exp(std::span<double> values, int labels) {
  const std::size_t n = values.size() / labels;
  for (std::size_t i = 0; i < n; ++i) {
    double* v = values.data() + i * labels;
    const double top = *std::max_element(v, v + labels);
    double z = 0.0;
    for (int l = 0; l < labels; ++l) {
      v[l] = std::exp(v[l] - top);
      z += v[l];
    }
    for (int l = 0; l < labels; ++l) v[l] /= z;
  }
}

/// Softmax Jacobian-vector product: g_z = q * (g - <g, q>) per pixel.
void softmax_backward(const LabelDistributionImage& q, std::span<const double> g,
                      std::span<double> out) {
  const int labels = q.labels();
  for (std::size_t i = 0; i < q.pixel_count(); ++i) {
    const auto qi = q.pixel(i);
    const double* gi = g.data() + i * labels;
    double dot = 0.0;
    for (int l = 0; l < labels; ++l) dot += qi[l] * gi[l];
    for (int l = 0; l < labels; ++l) out[i * labels + l] = qi[l] * (gi[l] - dot);
  }
}

struct StepCache {
  std::vector<std::vector<double>>* messages = nullptr;
  std::vector<double>* weighted = nullptr;
};

LabelDistributionImage step_impl(const LabelDistributionImage& q, const UnaryField& unary,
                                 const KernelPlans& plans, const CrfParams& params,
                                 Precision precision, int iteration, StepCache cache) {
  const int labels = q.labels();
  const std::size_t count = q.data().size();

  std::vector<std::vector<double>> messages(kKernelCount);
  std::vector<double> weighted(count, 0.0);
  for (int m = 0; m < kKernelCount; ++m) {
    messages[m].resize(count);
    plans[m].apply(q.data(), labels, messages[m], precision);
    const double w = params.kernel_weights[m];
    for (std::size_t k = 0; k < count; ++k) weighted[k] += w * messages[m][k];
  }

  LabelDistributionImage next(q.height(), q.width(), labels);
  auto out = next.data();
  for (std::size_t i = 0; i < q.pixel_count(); ++i) {
    const double* wi = weighted.data() + i * labels;
    for (int l = 0; l < labels; ++l) {
      double penalty = 0.0;
      for (int lp = 0; lp < labels; ++lp) penalty += params.mu(l, lp) * wi[lp];
      const double v = unary.data()[i * labels + l] - penalty;
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "non-finite potential at row " << i / q.width() << ", col " << i % q.width()
            << ", label " << l << " in iteration " << iteration;
        throw NumericalError(msg.str());
      }
      out[i * labels + l] = v;
    }
  }
  normalize_exp(out, labels);

  if (cache.messages) *cache.messages = std::move(messages);
  if (cache.weighted) *cache.weighted = std::move(weighted);
  return next;
}

}  // namespace

// ---------------------------------------------------------------------------

CrfParams CrfParams::potts(int labels) {
  if (labels < 1) throw ConfigError("label count must be positive");
  CrfParams p;
  p.compatibility.assign(static_cast<std::size_t>(labels) * labels, 1.0);
  for (int l = 0; l < labels; ++l) p.compatibility[static_cast<std::size_t>(l) * labels + l] = 0.0;
  return p;
}

int CrfParams::labels() const {
  return static_cast<int>(std::lround(std::sqrt(static_cast<double>(compatibility.size()))));
}

void CrfParams::validate() const {
  if (kernel_weights.size() != kKernelCount) {
    throw ConfigError("expected " + std::to_string(kKernelCount) + " kernel weights");
  }
  for (double w : kernel_weights) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("kernel weights must be finite and >= 0");
  }
  const int l = labels();
  if (l < 1 || static_cast<std::size_t>(l) * l != compatibility.size()) {
    throw ConfigError("compatibility matrix must be square");
  }
  for (double v : compatibility) {
    if (!std::isfinite(v)) throw ConfigError("compatibility entries must be finite");
  }
  for (double t : {theta_alpha, theta_beta, theta_gamma}) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("kernel scales theta must be positive");
  }
  if (iterations < 1) throw ConfigError("iteration count must be >= 1");
}

KernelPlans::KernelPlans(const FeatureField& features, FilterBackend backend)
    : height_(features.height), width_(features.width) {
  plans_.reserve(kKernelCount);
  for (int m = 0; m < kKernelCount; ++m) {
    plans_.emplace_back(features.kernel(m), FeatureField::kernel_dim(m), backend);
  }
}

UnaryField unary_from_probabilities(const LabelDistributionImage& probs) {
  if (probs.empty()) throw InvalidInput("unary probabilities have a zero dimension");
  UnaryField unary(probs.height(), probs.width(), probs.labels());
  auto out = unary.data();
  auto in = probs.data();
  for (std::size_t k = 0; k < in.size(); ++k) out[k] = std::log(std::max(in[k], kProbabilityFloor));
  return unary;
}

LabelDistributionImage softmax(const UnaryField& unary) {
  LabelDistributionImage q(unary.height(), unary.width(), unary.labels());
  std::copy(unary.data().begin(), unary.data().end(), q.data().begin());
  normalize_exp(q.data(), unary.labels());
  return q;
}

FeatureField build_features(const RgbImage& rgb, const CrfParams& params) {
  if (rgb.empty()) throw InvalidInput("colour image is empty");
  FeatureField f;
  f.height = rgb.height();
  f.width = rgb.width();
  f.bilateral.resize(f.pixel_count() * kBilateralDim);
  f.spatial.resize(f.pixel_count() * kSpatialDim);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * f.width + x;
      double* b = f.bilateral.data() + i * kBilateralDim;
      b[0] = x / params.theta_alpha;
      b[1] = y / params.theta_alpha;
      for (int c = 0; c < 3; ++c) b[2 + c] = rgb(y, x, c) / params.theta_beta;
      double* s = f.spatial.data() + i * kSpatialDim;
      s[0] = x / params.theta_gamma;
      s[1] = y / params.theta_gamma;
    }
  }
  return f;
}

LabelDistributionImage mean_field_step(const LabelDistributionImage& q, const UnaryField& unary,
                                       const KernelPlans& plans, const CrfParams& params,
                                       Precision precision) {
  params.validate();
  check_dims(q, unary, "mean_field_step");
  check_plans(plans, q);
  if (params.labels() != q.labels()) throw InvalidInput("compatibility size does not match labels");
  return step_impl(q, unary, plans, params, precision, 1, {});
}

LabelDistributionImage mean_field_step(const LabelDistributionImage& q, const UnaryField& unary,
                                       const FeatureField& features, const CrfParams& params,
                                       const InferenceOptions& options) {
  const KernelPlans plans(features, options.backend);
  return mean_field_step(q, unary, plans, params, options.precision);
}

MeanFieldResult mean_field_infer(const UnaryField& unary, const FeatureField& features,
                                 const CrfParams& params, const InferenceOptions& options) {
  params.validate();
  auto plans = std::make_shared<const KernelPlans>(features, options.backend);
  return mean_field_infer(unary, std::move(plans), params, options.precision);
}

MeanFieldResult mean_field_infer(const UnaryField& unary, std::shared_ptr<const KernelPlans> plans,
                                 const CrfParams& params, Precision precision) {
  params.validate();
  if (unary.empty()) throw InvalidInput("unary field is empty");
  check_plans(*plans, unary);
  if (params.labels() != unary.labels()) {
    throw InvalidInput("compatibility is " + std::to_string(params.labels()) + "x" +
                       std::to_string(params.labels()) + " but unaries have " +
                       std::to_string(unary.labels()) + " labels");
  }

  MeanFieldResult result;
  MeanFieldTrace& trace = result.trace;
  trace.plans = std::move(plans);
  trace.params = params;
  trace.precision = precision;
  trace.q.reserve(params.iterations + 1);
  trace.messages.resize(params.iterations);
  trace.weighted.resize(params.iterations);

  trace.q.push_back(softmax(unary));
  for (int t = 0; t < params.iterations; ++t) {
    StepCache cache{&trace.messages[t], &trace.weighted[t]};
    trace.q.push_back(step_impl(trace.q.back(), unary, *trace.plans, params, precision, t + 1, cache));
  }
  result.q = trace.q.back();
  return result;
}

CrfGradients mean_field_backward(const MeanFieldTrace& trace,
                                 const LabelDistributionImage& d_loss_d_q) {
  if (trace.q.empty() || !trace.plans) throw InvalidInput("empty mean-field trace");
  const LabelDistributionImage& last = trace.q.back();
  check_dims(last, d_loss_d_q, "mean_field_backward");

  const int labels = last.labels();
  const std::size_t count = last.data().size();
  const std::size_t pixels = last.pixel_count();
  const CrfParams& params = trace.params;
  const int iterations = static_cast<int>(trace.q.size()) - 1;

  CrfGradients grads;
  grads.d_unary = UnaryField(last.height(), last.width(), labels, 0.0);
  grads.d_weights.assign(kKernelCount, 0.0);
  grads.d_compatibility.assign(static_cast<std::size_t>(labels) * labels, 0.0);

  std::vector<double> g(d_loss_d_q.data().begin(), d_loss_d_q.data().end());
  std::vector<double> gz(count), g_check(count), transposed(count);
  auto d_unary = grads.d_unary.data();

  for (int t = iterations; t >= 1; --t) {
    softmax_backward(trace.q[t], g, gz);
    for (std::size_t k = 0; k < count; ++k) d_unary[k] += gz[k];

    // Penalty stage: hat = mu * weighted, breve = U - hat.
    const std::vector<double>& weighted = trace.weighted[t - 1];
    for (std::size_t i = 0; i < pixels; ++i) {
      const double* gzi = gz.data() + i * labels;
      const double* wi = weighted.data() + i * labels;
      double* gci = g_check.data() + i * labels;
      for (int lp = 0; lp < labels; ++lp) gci[lp] = 0.0;
      for (int l = 0; l < labels; ++l) {
        const double g_hat = -gzi[l];
        double* row = grads.d_compatibility.data() + static_cast<std::size_t>(l) * labels;
        for (int lp = 0; lp < labels; ++lp) {
          row[lp] += g_hat * wi[lp];
          gci[lp] += params.mu(l, lp) * g_hat;
        }
      }
    }

    std::fill(g.begin(), g.end(), 0.0);
    for (int m = 0; m < kKernelCount; ++m) {
      const std::vector<double>& msg = trace.messages[t - 1][m];
      double dw = 0.0;
      for (std::size_t k = 0; k < count; ++k) dw += g_check[k] * msg[k];
      grads.d_weights[m] += dw;

      const double w = params.kernel_weights[m];
      if (w == 0.0) continue;
      (*trace.plans)[m].apply_transpose(g_check, labels, transposed, trace.precision);
      for (std::size_t k = 0; k < count; ++k) g[k] += w * transposed[k];
    }
  }

  softmax_backward(trace.q[0], g, gz);
  for (std::size_t k = 0; k < count; ++k) d_unary[k] += gz[k];
  return grads;
}

namespace {

/// Pairwise coupling sum_m w_m k_m(f_i, f_j) for every pair, row-major N x N.
std::vector<double> pairwise_weights(const FeatureField& features, const CrfParams& params) {
  const std::size_t n = features.pixel_count();
  std::vector<double> coupling(n * n, 0.0);
  for (int m = 0; m < kKernelCount; ++m) {
    const int dim = FeatureField::kernel_dim(m);
    const auto f = features.kernel(m);
    const double w = params.kernel_weights[m];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double k = gaussian_kernel(f.subspan(i * dim, dim), f.subspan(j * dim, dim));
        coupling[i * n + j] += w * k;
        coupling[j * n + i] += w * k;
      }
    }
  }
  return coupling;
}

void check_energy_inputs(const UnaryField& unary, const FeatureField& features,
                         const CrfParams& params) {
  params.validate();
  if (unary.empty()) throw InvalidInput("unary field is empty");
  if (features.height != unary.height() || features.width != unary.width()) {
    throw InvalidInput("feature and unary dimensions differ");
  }
  if (params.labels() != unary.labels()) throw InvalidInput("compatibility size does not match labels");
}

}  // namespace

double crf_energy(const LabelImage& labeling, const UnaryField& unary, const FeatureField& features,
                  const CrfParams& params) {
  check_energy_inputs(unary, features, params);
  if (!labeling.same_shape(unary)) throw InvalidInput("labeling and unary dimensions differ");
  if (labeling.has_ignore()) throw InvalidInput("energy is undefined for IGNORE pixels");
  labeling.validate(unary.labels());

  const std::size_t n = unary.pixel_count();
  const auto x = labeling.data();
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) energy -= unary.pixel(i)[x[i]];
  for (int m = 0; m < kKernelCount; ++m) {
    const double w = params.kernel_weights[m];
    if (w == 0.0) continue;
    const int dim = FeatureField::kernel_dim(m);
    const auto f = features.kernel(m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double mu = params.mu(x[i], x[j]);
        if (mu == 0.0) continue;
        energy += mu * w * gaussian_kernel(f.subspan(i * dim, dim), f.subspan(j * dim, dim));
      }
    }
  }
  return energy;
}

LabelImage brute_force_map(const UnaryField& unary, const FeatureField& features,
                           const CrfParams& params) {
  check_energy_inputs(unary, features, params);
  const std::size_t n = unary.pixel_count();
  const int labels = unary.labels();
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 20;
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < n; ++i) {
    total *= static_cast<std::uint64_t>(labels);
    if (total > kLimit) {
      throw SizeError("brute-force MAP needs L^N <= 2^20; got L=" + std::to_string(labels) +
                      ", N=" + std::to_string(n));
    }
  }

  const std::vector<double> coupling = pairwise_weights(features, params);
  // Pixel 0 is the most significant digit, so enumeration order is
  // lexicographic and the first strict minimum wins ties.
  std::vector<int> x(n, 0), best(n, 0);
  double best_energy = std::numeric_limits<double>::infinity();
  for (std::uint64_t code = 0; code < total; ++code) {
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      e -= unary.pixel(i)[x[i]];
      for (std::size_t j = i + 1; j < n; ++j) e += params.mu(x[i], x[j]) * coupling[i * n + j];
    }
    if (e < best_energy) {
      best_energy = e;
      best = x;
    }
    for (std::size_t i = n; i-- > 0;) {
      if (++x[i] < labels) break;
      x[i] = 0;
    }
  }

  LabelImage out(unary.height(), unary.width());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = static_cast<std::uint8_t>(best[i]);
  return out;
}

LabelImage map_labeling(const LabelDistributionImage& q) {
  if (q.labels() > 255) throw InvalidInput("label images support at most 255 labels");
  LabelImage out(q.height(), q.width());
  for (std::size_t i = 0; i < q.pixel_count(); ++i) {
    const auto p = q.pixel(i);
    // max_element returns the first maximum, i.e. the smallest label id.
    out.data()[i] = static_cast<std::uint8_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  return out;
}

}  // namespace matfuse
