#pragma once

// Fine-tuning loop: full-batch Adam over the corpus-occurring embedding
// vectors, with inverted dropout on the word vectors during training.
//
// One iteration is one full pass over all pairs. Retention masks are built
// once from the initial embeddings before the first step and never
// rebuilt. Dropout perturbs the vectors seen by the loss and gradient
// evaluation only; the stored parameters are the unperturbed ones, updated
// by Adam with the dropout-chained gradient.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "tinyalign/core.hpp"
#include "tinyalign/corpus.hpp"
#include "tinyalign/embeddings.hpp"
#include "tinyalign/objective.hpp"

namespace tinyalign {

struct TrainConfig {
  std::size_t iterations = 500;
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
  ObjectiveConfig objective;
};

inline void validate(const TrainConfig& config) {
  validate(config.objective);
  if (!(config.learning_rate > 0.0)) {
    throw UsageError("learning rate must be positive");
  }
  if (config.dropout_rate < 0.0 || config.dropout_rate >= 1.0) {
    throw UsageError("dropout rate must be in [0, 1)");
  }
}

struct TraceRow {
  std::size_t iteration = 0;  // 1-based
  double l_bi = 0.0;
  double l_ret = 0.0;
  double total = 0.0;
  double seconds = 0.0;
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
  EmbeddingSnapshot final_params;
};

// Thrown when the loss stops being finite. The store is left at the last
// finite parameter state.
class NonFiniteLossError : public NumericError {
 public:
  NonFiniteLossError(std::size_t iteration, double value)
      : NumericError("non-finite loss " + std::to_string(value) +
                     " at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_ = 0;
};

namespace detail {

// Multiplier per component: 0 with probability `rate`, 1/(1-rate)
// otherwise. One stream per (seed, iteration), consumed in slot order.
inline std::vector<std::vector<double>> dropout_factors(
    const std::vector<std::size_t>& sizes, double rate, std::uint64_t seed,
    std::uint64_t iteration) {
  std::vector<std::vector<double>> factors(sizes.size());
  if (rate == 0.0) {
    for (std::size_t s = 0; s < sizes.size(); ++s) {
      factors[s].assign(sizes[s], 1.0);
    }
    return factors;
  }
  SplitMix64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (iteration + 1)));
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    factors[s].resize(sizes[s]);
    for (double& f : factors[s]) {
      f = rng.uniform01() < rate ? 0.0 : keep_scale;
    }
  }
  return factors;
}

}  // namespace detail

// Inverted dropout over a list of vectors. Identity when rate is 0; the
// same (seed, iteration) always produces the same masks.
inline std::vector<std::vector<double>> apply_dropout(
    const std::vector<std::vector<double>>& vectors, double rate,
    std::uint64_t seed, std::uint64_t iteration) {
  if (rate < 0.0 || rate >= 1.0) {
    throw UsageError("dropout rate must be in [0, 1)");
  }
  std::vector<std::size_t> sizes(vectors.size());
  for (std::size_t s = 0; s < vectors.size(); ++s) sizes[s] = vectors[s].size();
  const std::vector<std::vector<double>> factors =
      detail::dropout_factors(sizes, rate, seed, iteration);
  std::vector<std::vector<double>> out(vectors.size());
  for (std::size_t s = 0; s < vectors.size(); ++s) {
    out[s].resize(vectors[s].size());
    for (std::size_t k = 0; k < vectors[s].size(); ++k) {
      out[s][k] = vectors[s][k] * factors[s][k];
    }
  }
  return out;
}

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update. `step_index` is 1-based.
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamMoments& moments, std::size_t step_index,
                      const TrainConfig& config) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam step shape mismatch");
  }
  if (moments.m.size() != params.size()) {
    moments.m.assign(params.size(), 0.0);
    moments.v.assign(params.size(), 0.0);
  }
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_index));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_index));
  for (std::size_t k = 0; k < params.size(); ++k) {
    moments.m[k] = b1 * moments.m[k] + (1.0 - b1) * grads[k];
    moments.v[k] = b2 * moments.v[k] + (1.0 - b2) * grads[k] * grads[k];
    const double m_hat = moments.m[k] / bias1;
    const double v_hat = moments.v[k] / bias2;
    params[k] -= config.learning_rate * m_hat /
                 (std::sqrt(v_hat) + config.adam_epsilon);
  }
}

// Fine-tunes the corpus-occurring embedding vectors in place and returns
// the per-iteration trace. Deterministic given the seed.
inline TrainingTrace finetune(
    EmbeddingStore& store, const ParallelCorpus& corpus,
    const TrainConfig& config,
    const std::string& source_language = std::string(kSourceLanguage),
    const std::string& target_language = std::string(kTargetLanguage)) {
  validate(config);
  TrainingTrace trace;
  if (config.iterations == 0) return trace;

  const ParameterView view = corpus_parameter_view(
      store, corpus, source_language, target_language);
  const std::vector<RetentionMask> masks = build_retention_masks(
      store, corpus, source_language, target_language);

  const std::size_t dim = store.dim();
  std::vector<AdamMoments> moments(view.slots.size());
  std::vector<std::size_t> sizes(view.slots.size(), dim);
  std::vector<std::vector<double>> originals(view.slots.size());

  for (std::size_t step = 1; step <= config.iterations; ++step) {
    const auto started = std::chrono::steady_clock::now();
    const std::vector<std::vector<double>> factors = detail::dropout_factors(
        sizes, config.dropout_rate, config.seed, step - 1);

    // Evaluate loss and gradients on the dropout-perturbed vectors.
    const bool perturbed = config.dropout_rate > 0.0;
    if (perturbed) {
      for (std::size_t s = 0; s < view.slots.size(); ++s) {
        std::vector<double>& vec = store.mutable_vector(
            view.slots[s].language, view.slots[s].surface);
        originals[s] = vec;
        for (std::size_t k = 0; k < dim; ++k) vec[k] *= factors[s][k];
      }
    }
    const LossReport report =
        corpus_loss(store, corpus, masks, config.objective, source_language,
                    target_language);
    GradientTable grads;
    if (std::isfinite(report.total)) {
      grads = loss_gradients(store, corpus, masks, config.objective,
                             source_language, target_language);
    }
    if (perturbed) {
      for (std::size_t s = 0; s < view.slots.size(); ++s) {
        store.mutable_vector(view.slots[s].language, view.slots[s].surface) =
            originals[s];
      }
    }
    if (!std::isfinite(report.total)) {
      throw NonFiniteLossError(step, report.total);
    }

    for (std::size_t s = 0; s < view.slots.size(); ++s) {
      const ParameterSlot& slot = view.slots[s];
      std::vector<double> grad(dim, 0.0);
      if (const std::vector<double>* g =
              grads.find(slot.language, slot.surface)) {
        grad = *g;
        // Chain through the dropout multiplier.
        for (std::size_t k = 0; k < dim; ++k) grad[k] *= factors[s][k];
      }
      adam_step(store.mutable_vector(slot.language, slot.surface), grad,
                moments[s], step, config);
    }

    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - started;
    trace.rows.push_back({step, report.mean_bi, report.mean_ret, report.total,
                          elapsed.count()});
  }
  trace.final_params = snapshot_trainable(store);
  return trace;
}

// Trace file: one line per iteration, tab-separated
// `iteration  L_bi  L_ret  total  seconds`. Timings are written as 0.000
// unless `with_timings` is set, so that repeated runs with the same seed
// produce byte-identical files.
inline void write_trace(std::ostream& out, const TrainingTrace& trace,
                        bool with_timings = false) {
  char buf[128];
  for (const TraceRow& row : trace.rows) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.12g\t%.12g\t%.12g\t%.3f\n",
                  row.iteration, row.l_bi, row.l_ret, row.total,
                  with_timings ? row.seconds : 0.0);
    out << buf;
  }
}

}  // namespace tinyalign
