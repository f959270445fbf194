#pragma once

// The fine-tuning objective: sentence-normalized translation probabilities,
// the two-step round-trip walker, the monogamy loss, the alignment
// retention loss, and exact analytic gradients of the corpus loss with
// respect to every trainable embedding vector.
//
// Per sentence pair (s, t) with lengths m, n:
//
//   c[i][j]   = cos(u_i, v_j), u_i = clwe(s_i) + a(i), v_j = clwe(t_j) + a(j)
//               (the position term a(.) is added only when enabled)
//   P[i][j]   = softmax_j(c[i][j] / tau)          rows over the target
//   Q[j][i]   = softmax_i(c[i][j] / tau)          rows over the source
//   T         = trace(P Q) = sum_ij P[i][j] Q[j][i]
//   l(s,t)    = 1 - ln(T) / ln(m)   (defined for m >= 2)
//   L_bi      = (l(s,t) + l(t,s)) / 2, skipped when either side has < 2
//               tokens
//   l_ret     = -ln( sum_{(i,j) in mask} P[i][j] Q[j][i] / |mask| ), absent
//               when the mask is empty; the transposed-mask term is equal,
//               so L_ret = l_ret
//   L(D)      = mean over pairs of (L_bi + alpha * L_ret)
//
// Softmax rows subtract the row maximum before exponentiation; at the
// default tau = 0.001 the logits reach magnitude 1000, so this is required
// for the math to stay finite. Logarithm arguments are clamped below at
// 1e-30.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tinyalign/aligner.hpp"
#include "tinyalign/core.hpp"
#include "tinyalign/corpus.hpp"
#include "tinyalign/embeddings.hpp"

namespace tinyalign {

inline constexpr double kLogClamp = 1e-30;

struct ObjectiveConfig {
  double tau = 0.001;
  double alpha = 1.0;
  double position_scale = 1.0;
  bool use_positions = true;
};

inline void validate(const ObjectiveConfig& config) {
  if (!(config.tau > 0.0)) throw UsageError("tau must be positive");
  if (config.alpha < 0.0) throw UsageError("alpha must be non-negative");
  if (config.position_scale < 0.0) {
    throw UsageError("position scale must be non-negative");
  }
}

// Sinusoid position vector: component 2k is sin(pos / 10000^(2k/dim)),
// component 2k+1 is cos of the same angle, everything multiplied by
// `scale`. For odd dim the trailing cos component is truncated.
inline std::vector<double> positional_encoding(std::size_t position,
                                               std::size_t dim,
                                               double scale = 1.0) {
  std::vector<double> pe(dim, 0.0);
  for (std::size_t k = 0; 2 * k < dim; ++k) {
    const double angle =
        static_cast<double>(position) /
        std::pow(10000.0, (2.0 * static_cast<double>(k)) /
                              static_cast<double>(dim));
    pe[2 * k] = scale * std::sin(angle);
    if (2 * k + 1 < dim) pe[2 * k + 1] = scale * std::cos(angle);
  }
  return pe;
}

struct PairLoss {
  std::size_t pair_id = 0;
  std::optional<double> l_st;
  std::optional<double> l_ts;
  std::optional<double> l_bi;
  std::optional<double> l_ret;
  double total = 0.0;
};

struct LossReport {
  std::vector<PairLoss> pairs;
  double mean_bi = 0.0;   // sum of L_bi contributions / |D|
  double mean_ret = 0.0;  // sum of l_ret contributions / |D|
  double total = 0.0;     // mean of (L_bi + alpha * L_ret)
  std::size_t degenerate_pairs = 0;  // either side shorter than 2 tokens
  std::size_t empty_masks = 0;
};

// align_0 restricted to one pair: the links whose round-trip probability
// the retention loss anchors. Fixed before training starts.
struct RetentionMask {
  std::size_t pair_id = 0;
  std::set<Link> links;
};

// Holds d(corpus loss)/d(embedding vector), one row per (language, surface
// form) that received a contribution; everything else has zero gradient.
class GradientTable {
 public:
  struct Item {
    std::string language;
    std::string surface;
    std::vector<double> gradient;
  };

  explicit GradientTable(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }

  std::vector<double>& accumulate(const std::string& language,
                                  const std::string& surface) {
    const std::string key = language + '\t' + surface;
    auto it = index_.find(key);
    if (it == index_.end()) {
      it = index_.emplace(key, items_.size()).first;
      items_.push_back({language, surface, std::vector<double>(dim_, 0.0)});
    }
    return items_[it->second].gradient;
  }

  const std::vector<double>* find(const std::string& language,
                                  const std::string& surface) const {
    auto it = index_.find(language + '\t' + surface);
    return it == index_.end() ? nullptr : &items_[it->second].gradient;
  }

  const std::vector<Item>& items() const { return items_; }

  double squared_norm() const {
    double acc = 0.0;
    for (const Item& item : items_) {
      for (double g : item.gradient) acc += g * g;
    }
    return acc;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

// Softmax with row-max subtraction. Input and output may alias.
inline void row_softmax(std::span<const double> logits,
                        std::span<double> out) {
  double max_logit = logits[0];
  for (double z : logits) max_logit = std::max(max_logit, z);
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - max_logit);
    sum += out[k];
  }
  for (std::size_t k = 0; k < out.size(); ++k) out[k] /= sum;
}

// Everything computed once per pair and shared between the loss and the
// gradient path.
struct PairForward {
  std::size_t m = 0, n = 0, dim = 0;
  std::vector<std::vector<double>> u, v;  // position-augmented vectors
  std::vector<double> u_norm, v_norm;
  Matrix cosine;  // m x n
  Matrix p_st;    // m x n, rows over target
  Matrix p_ts;    // n x m, rows over source
};

inline PairForward forward_pair(const EmbeddingStore& store,
                                const SentencePair& pair,
                                const ObjectiveConfig& config,
                                const std::string& source_language,
                                const std::string& target_language) {
  PairForward fw;
  fw.m = pair.source.size();
  fw.n = pair.target.size();
  fw.dim = store.dim();
  const bool positions = config.use_positions && config.position_scale != 0.0;
  fw.u.resize(fw.m);
  fw.v.resize(fw.n);
  for (std::size_t i = 0; i < fw.m; ++i) {
    fw.u[i] = store.resolve(source_language, pair.source.tokens[i]).vector;
    if (positions) {
      const std::vector<double> pe =
          positional_encoding(i, fw.dim, config.position_scale);
      for (std::size_t k = 0; k < fw.dim; ++k) fw.u[i][k] += pe[k];
    }
  }
  for (std::size_t j = 0; j < fw.n; ++j) {
    fw.v[j] = store.resolve(target_language, pair.target.tokens[j]).vector;
    if (positions) {
      const std::vector<double> pe =
          positional_encoding(j, fw.dim, config.position_scale);
      for (std::size_t k = 0; k < fw.dim; ++k) fw.v[j][k] += pe[k];
    }
  }
  fw.u_norm.resize(fw.m);
  fw.v_norm.resize(fw.n);
  for (std::size_t i = 0; i < fw.m; ++i) fw.u_norm[i] = norm(fw.u[i]);
  for (std::size_t j = 0; j < fw.n; ++j) fw.v_norm[j] = norm(fw.v[j]);
  fw.cosine = Matrix(fw.m, fw.n);
  for (std::size_t i = 0; i < fw.m; ++i) {
    for (std::size_t j = 0; j < fw.n; ++j) {
      const double denom = fw.u_norm[i] * fw.v_norm[j];
      fw.cosine(i, j) = denom < 1e-300 ? 0.0 : dot(fw.u[i], fw.v[j]) / denom;
    }
  }
  fw.p_st = Matrix(fw.m, fw.n);
  std::vector<double> logits(std::max(fw.m, fw.n));
  for (std::size_t i = 0; i < fw.m; ++i) {
    for (std::size_t j = 0; j < fw.n; ++j) {
      logits[j] = fw.cosine(i, j) / config.tau;
    }
    row_softmax(std::span<const double>(logits.data(), fw.n), fw.p_st.row(i));
  }
  fw.p_ts = Matrix(fw.n, fw.m);
  for (std::size_t j = 0; j < fw.n; ++j) {
    for (std::size_t i = 0; i < fw.m; ++i) {
      logits[i] = fw.cosine(i, j) / config.tau;
    }
    row_softmax(std::span<const double>(logits.data(), fw.m), fw.p_ts.row(j));
  }
  return fw;
}

// trace(P_st P_ts) with the same accumulation grouping as materializing the
// product and summing its diagonal: inner sums per source position.
inline double walk_trace_sts(const Matrix& p_st, const Matrix& p_ts) {
  double total = 0.0;
  for (std::size_t i = 0; i < p_st.rows(); ++i) {
    double r_ii = 0.0;
    for (std::size_t j = 0; j < p_st.cols(); ++j) {
      r_ii += p_st(i, j) * p_ts(j, i);
    }
    total += r_ii;
  }
  return total;
}

// trace(P_ts P_st), grouped per target position.
inline double walk_trace_tst(const Matrix& p_st, const Matrix& p_ts) {
  double total = 0.0;
  for (std::size_t j = 0; j < p_ts.rows(); ++j) {
    double r_jj = 0.0;
    for (std::size_t i = 0; i < p_ts.cols(); ++i) {
      r_jj += p_ts(j, i) * p_st(i, j);
    }
    total += r_jj;
  }
  return total;
}

}  // namespace detail

inline Matrix translation_probs(
    const EmbeddingStore& store, const SentencePair& pair,
    Direction direction, const ObjectiveConfig& config,
    const std::string& source_language = std::string(kSourceLanguage),
    const std::string& target_language = std::string(kTargetLanguage)) {
  validate(config);
  detail::PairForward fw = detail::forward_pair(store, pair, config,
                                                source_language,
                                                target_language);
  return direction == Direction::SourceToTarget ? std::move(fw.p_st)
                                                : std::move(fw.p_ts);
}

// Product of the two row-stochastic matrices: entry (i, i') is the
// probability of stepping from s_i to some target word and back to s_i'.
inline Matrix round_trip_matrix(const Matrix& p_st, const Matrix& p_ts) {
  if (p_st.cols() != p_ts.rows() || p_st.rows() != p_ts.cols()) {
    throw ShapeError("round trip shape mismatch: " +
                     std::to_string(p_st.rows()) + "x" +
                     std::to_string(p_st.cols()) + " * " +
                     std::to_string(p_ts.rows()) + "x" +
                     std::to_string(p_ts.cols()));
  }
  Matrix r(p_st.rows(), p_st.rows());
  for (std::size_t i = 0; i < p_st.rows(); ++i) {
    for (std::size_t i2 = 0; i2 < p_st.rows(); ++i2) {
      double acc = 0.0;
      for (std::size_t j = 0; j < p_st.cols(); ++j) {
        acc += p_st(i, j) * p_ts(j, i2);
      }
      r(i, i2) = acc;
    }
  }
  return r;
}

// l(s,t) = 1 - log_{len(s)} trace(R). Zero when the walker always returns
// to its origin, one when the diagonal carries 1/len(s) each.
inline double monogamy_loss(const Matrix& round_trip) {
  if (round_trip.rows() != round_trip.cols()) {
    throw ShapeError("round trip matrix must be square");
  }
  const std::size_t len = round_trip.rows();
  if (len < 2) {
    throw NumericError("monogamy loss undefined for sentence length < 2");
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < len; ++i) trace += round_trip(i, i);
  return 1.0 - std::log(std::max(trace, kLogClamp)) /
                   std::log(static_cast<double>(len));
}

inline PairLoss bidirectional_loss(
    const EmbeddingStore& store, const SentencePair& pair,
    const ObjectiveConfig& config,
    const std::string& source_language = std::string(kSourceLanguage),
    const std::string& target_language = std::string(kTargetLanguage)) {
  validate(config);
  PairLoss loss;
  loss.pair_id = pair.pair_id;
  const std::size_t m = pair.source.size();
  const std::size_t n = pair.target.size();
  if (m < 2 || n < 2) return loss;
  const detail::PairForward fw = detail::forward_pair(
      store, pair, config, source_language, target_language);
  const double trace_sts = detail::walk_trace_sts(fw.p_st, fw.p_ts);
  const double trace_tst = detail::walk_trace_tst(fw.p_st, fw.p_ts);
  loss.l_st = 1.0 - std::log(std::max(trace_sts, kLogClamp)) /
                        std::log(static_cast<double>(m));
  loss.l_ts = 1.0 - std::log(std::max(trace_tst, kLogClamp)) /
                        std::log(static_cast<double>(n));
  loss.l_bi = 0.5 * (*loss.l_st + *loss.l_ts);
  loss.total = *loss.l_bi;
  return loss;
}

// align_0: per pair, the intersection of the two directional argmax
// alignments under the given store, without positions. Call once with the
// initial embeddings, before any training step.
inline std::vector<RetentionMask> build_retention_masks(
    const EmbeddingStore& store, const ParallelCorpus& corpus,
    const std::string& source_language = std::string(kSourceLanguage),
    const std::string& target_language = std::string(kTargetLanguage)) {
  std::vector<RetentionMask> masks;
  masks.reserve(corpus.size());
  for (const SentencePair& pair : corpus.pairs) {
    const SimilarityMatrix sim =
        similarity_matrix(store, pair, source_language, target_language);
    const Alignment fwd = directional_align(sim, Direction::SourceToTarget);
    const Alignment bwd = directional_align(sim, Direction::TargetToSource);
    const Alignment inter = symmetrize_intersection(fwd, bwd);
    masks.push_back({pair.pair_id, inter.links});
  }
  return masks;
}

// -log of the masked mean round-trip probability, using probabilities from
// the current store. Absent (contributes nothing) when the mask is empty.
// The target-to-source term with the transposed mask is identical, so the
// returned value is L_ret itself.
inline std::optional<double> retention_loss(const Matrix& p_st,
                                            const Matrix& p_ts,
                                            const RetentionMask& mask) {
  if (mask.links.empty()) return std::nullopt;
  if (p_st.rows() != p_ts.cols() || p_st.cols() != p_ts.rows()) {
    throw ShapeError("retention loss shape mismatch");
  }
  double sum = 0.0;
  for (const Link& link : mask.links) {
    if (link.first >= p_st.rows() || link.second >= p_st.cols()) {
      throw ShapeError("retention mask link outside matrix bounds");
    }
    sum += p_st(link.first, link.second) * p_ts(link.second, link.first);
  }
  const double mean = sum / static_cast<double>(mask.links.size());
  return -std::log(std::max(mean, kLogClamp));
}

namespace detail {

inline const RetentionMask* mask_for_pair(
    const std::vector<RetentionMask>& masks, std::size_t pair_index,
    std::size_t corpus_size) {
  if (masks.empty()) return nullptr;  // treated as all-empty masks
  if (masks.size() != corpus_size) {
    throw ShapeError("retention mask count does not match corpus size");
  }
  return &masks[pair_index];
}

}  // namespace detail

// Mean over pairs of (L_bi + alpha * L_ret). Pairs with a side shorter
// than 2 tokens contribute no L_bi; empty masks contribute no L_ret; both
// still count in the denominator |D|. With alpha = 0 the retention term is
// skipped entirely.
inline LossReport corpus_loss(
    const EmbeddingStore& store, const ParallelCorpus& corpus,
    const std::vector<RetentionMask>& masks, const ObjectiveConfig& config,
    const std::string& source_language = std::string(kSourceLanguage),
    const std::string& target_language = std::string(kTargetLanguage)) {
  validate(config);
  if (corpus.empty()) throw ShapeError("corpus is empty");
  LossReport report;
  double sum_bi = 0.0;
  double sum_ret = 0.0;
  double sum_total = 0.0;
  for (std::size_t p = 0; p < corpus.size(); ++p) {
    const SentencePair& pair = corpus.pairs[p];
    const RetentionMask* mask =
        detail::mask_for_pair(masks, p, corpus.size());
    PairLoss loss;
    loss.pair_id = pair.pair_id;
    const std::size_t m = pair.source.size();
    const std::size_t n = pair.target.size();
    const bool need_bi = m >= 2 && n >= 2;
    const bool need_ret =
        config.alpha > 0.0 && mask != nullptr && !mask->links.empty();
    if (!need_bi) ++report.degenerate_pairs;
    if (config.alpha > 0.0 && (mask == nullptr || mask->links.empty())) {
      ++report.empty_masks;
    }
    if (need_bi || need_ret) {
      const detail::PairForward fw = detail::forward_pair(
          store, pair, config, source_language, target_language);
      if (need_bi) {
        const double trace_sts = detail::walk_trace_sts(fw.p_st, fw.p_ts);
        const double trace_tst = detail::walk_trace_tst(fw.p_st, fw.p_ts);
        loss.l_st = 1.0 - std::log(std::max(trace_sts, kLogClamp)) /
                              std::log(static_cast<double>(m));
        loss.l_ts = 1.0 - std::log(std::max(trace_tst, kLogClamp)) /
                              std::log(static_cast<double>(n));
        loss.l_bi = 0.5 * (*loss.l_st + *loss.l_ts);
        loss.total += *loss.l_bi;
        sum_bi += *loss.l_bi;
      }
      if (need_ret) {
        loss.l_ret = retention_loss(fw.p_st, fw.p_ts, *mask);
        loss.total += config.alpha * *loss.l_ret;
        sum_ret += *loss.l_ret;
      }
    }
    sum_total += loss.total;
    report.pairs.push_back(std::move(loss));
  }
  const double denom = static_cast<double>(corpus.size());
  report.mean_bi = sum_bi / denom;
  report.mean_ret = sum_ret / denom;
  report.total = sum_total / denom;
  return report;
}

// Exact gradient of corpus_loss with respect to every embedding vector
// that occurs in the corpus, keyed by (language, surface form). Chains
// through the cosine, the temperature softmax, the round-trip trace, the
// logarithms and the masked average. Types absent from the corpus have
// zero gradient and no table row.
inline GradientTable loss_gradients(
    const EmbeddingStore& store, const ParallelCorpus& corpus,
    const std::vector<RetentionMask>& masks, const ObjectiveConfig& config,
    const std::string& source_language = std::string(kSourceLanguage),
    const std::string& target_language = std::string(kTargetLanguage)) {
  validate(config);
  if (corpus.empty()) throw ShapeError("corpus is empty");
  GradientTable table(store.dim());
  const double inv_corpus = 1.0 / static_cast<double>(corpus.size());
  for (std::size_t p = 0; p < corpus.size(); ++p) {
    const SentencePair& pair = corpus.pairs[p];
    const RetentionMask* mask =
        detail::mask_for_pair(masks, p, corpus.size());
    const std::size_t m = pair.source.size();
    const std::size_t n = pair.target.size();
    const bool need_bi = m >= 2 && n >= 2;
    const bool need_ret =
        config.alpha > 0.0 && mask != nullptr && !mask->links.empty();
    if (!need_bi && !need_ret) continue;
    const detail::PairForward fw = detail::forward_pair(
        store, pair, config, source_language, target_language);

    // d(corpus loss)/dT for the two walk traces, zero in a clamped region.
    double k_st = 0.0, k_ts = 0.0;
    if (need_bi) {
      const double trace_sts = detail::walk_trace_sts(fw.p_st, fw.p_ts);
      const double trace_tst = detail::walk_trace_tst(fw.p_st, fw.p_ts);
      if (trace_sts > kLogClamp) {
        k_st = -0.5 * inv_corpus /
               (trace_sts * std::log(static_cast<double>(m)));
      }
      if (trace_tst > kLogClamp) {
        k_ts = -0.5 * inv_corpus /
               (trace_tst * std::log(static_cast<double>(n)));
      }
    }
    double k_ret = 0.0;
    if (need_ret) {
      double sum = 0.0;
      for (const Link& link : mask->links) {
        if (link.first >= m || link.second >= n) {
          throw ShapeError("retention mask link outside sentence bounds");
        }
        sum += fw.p_st(link.first, link.second) *
               fw.p_ts(link.second, link.first);
      }
      const double mean = sum / static_cast<double>(mask->links.size());
      // d(-ln(sum/|mask|))/d(sum) = -1/sum
      if (mean > kLogClamp) k_ret = -config.alpha * inv_corpus / sum;
    }
    const double k_trace = k_st + k_ts;

    // dL/dP and dL/dQ. The product P[i][j] Q[j][i] appears once in each
    // walk trace and once (masked) in the retention sum, so:
    //   dL/dP[i][j] = (k_st + k_ts + k_ret * mask[i][j]) * Q[j][i]
    // and symmetrically for Q.
    Matrix g_p(fw.m, fw.n);
    Matrix g_q(fw.n, fw.m);
    for (std::size_t i = 0; i < fw.m; ++i) {
      for (std::size_t j = 0; j < fw.n; ++j) {
        double k = k_trace;
        if (k_ret != 0.0 && mask->links.count({i, j})) k += k_ret;
        g_p(i, j) = k * fw.p_ts(j, i);
        g_q(j, i) = k * fw.p_st(i, j);
      }
    }

    // Backprop through the two row softmaxes into the cosine matrix.
    Matrix g_cos(fw.m, fw.n);
    const double inv_tau = 1.0 / config.tau;
    for (std::size_t i = 0; i < fw.m; ++i) {
      double row_dot = 0.0;
      for (std::size_t j = 0; j < fw.n; ++j) {
        row_dot += g_p(i, j) * fw.p_st(i, j);
      }
      for (std::size_t j = 0; j < fw.n; ++j) {
        g_cos(i, j) = inv_tau * fw.p_st(i, j) * (g_p(i, j) - row_dot);
      }
    }
    for (std::size_t j = 0; j < fw.n; ++j) {
      double row_dot = 0.0;
      for (std::size_t i = 0; i < fw.m; ++i) {
        row_dot += g_q(j, i) * fw.p_ts(j, i);
      }
      for (std::size_t i = 0; i < fw.m; ++i) {
        g_cos(i, j) += inv_tau * fw.p_ts(j, i) * (g_q(j, i) - row_dot);
      }
    }

    // Backprop through the cosine into the (position-augmented) vectors;
    // position encodings are constants, so the word-vector gradient is the
    // same. Contributions accumulate per surface form over all positions.
    std::vector<std::vector<double>> g_u(fw.m,
                                         std::vector<double>(fw.dim, 0.0));
    std::vector<std::vector<double>> g_v(fw.n,
                                         std::vector<double>(fw.dim, 0.0));
    for (std::size_t i = 0; i < fw.m; ++i) {
      for (std::size_t j = 0; j < fw.n; ++j) {
        const double g = g_cos(i, j);
        if (g == 0.0) continue;
        const double nu = fw.u_norm[i];
        const double nv = fw.v_norm[j];
        if (nu * nv < 1e-300) continue;  // cosine pinned to 0 there
        const double c = fw.cosine(i, j);
        const double inv_uv = 1.0 / (nu * nv);
        const double cu = c / (nu * nu);
        const double cv = c / (nv * nv);
        for (std::size_t k = 0; k < fw.dim; ++k) {
          g_u[i][k] += g * (fw.v[j][k] * inv_uv - cu * fw.u[i][k]);
          g_v[j][k] += g * (fw.u[i][k] * inv_uv - cv * fw.v[j][k]);
        }
      }
    }
    for (std::size_t i = 0; i < fw.m; ++i) {
      std::vector<double>& slot =
          table.accumulate(source_language, pair.source.tokens[i]);
      for (std::size_t k = 0; k < fw.dim; ++k) slot[k] += g_u[i][k];
    }
    for (std::size_t j = 0; j < fw.n; ++j) {
      std::vector<double>& slot =
          table.accumulate(target_language, pair.target.tokens[j]);
      for (std::size_t k = 0; k < fw.dim; ++k) slot[k] += g_v[j][k];
    }
  }
  return table;
}

}  // namespace tinyalign
