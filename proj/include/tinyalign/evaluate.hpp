#pragma once

// Alignment scoring against sure/possible gold links, micro-averaged over
// the corpus:
//
//   P   = |A ∩ (S ∪ P)| / |A|        (1 when |A| = 0)
//   R   = |A ∩ S| / |S|              (1 when |S| = 0)
//   F1  = 2PR / (P + R)              (0 when P + R = 0)
//   AER = 1 - (|A ∩ S| + |A ∩ (S ∪ P)|) / (|A| + |S|)   (0 when |A|+|S|=0)
//
// Corpus-level ratios always come from summed counts, never from averaged
// per-pair ratios.

#include <cstdio>
#include <ostream>
#include <vector>

#include "tinyalign/aligner.hpp"
#include "tinyalign/core.hpp"
#include "tinyalign/corpus.hpp"

namespace tinyalign {

struct EvalCounts {
  std::size_t predicted = 0;                  // |A|
  std::size_t sure = 0;                       // |S|
  std::size_t predicted_in_sure = 0;          // |A ∩ S|
  std::size_t predicted_in_sure_or_possible = 0;  // |A ∩ (S ∪ P)|

  EvalCounts& operator+=(const EvalCounts& other) {
    predicted += other.predicted;
    sure += other.sure;
    predicted_in_sure += other.predicted_in_sure;
    predicted_in_sure_or_possible += other.predicted_in_sure_or_possible;
    return *this;
  }
};

struct EvalResult {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 0.0;
  double aer = 0.0;
  EvalCounts counts;
};

namespace detail {

inline EvalCounts count_pair(const Alignment& predicted,
                             const GoldAlignment& gold) {
  EvalCounts counts;
  counts.predicted = predicted.links.size();
  counts.sure = gold.sure.size();
  for (const Link& link : predicted.links) {
    const bool in_sure = gold.sure.count(link) > 0;
    if (in_sure) ++counts.predicted_in_sure;
    if (in_sure || gold.possible.count(link) > 0) {
      ++counts.predicted_in_sure_or_possible;
    }
  }
  return counts;
}

}  // namespace detail

inline EvalResult result_from_counts(const EvalCounts& counts) {
  EvalResult result;
  result.counts = counts;
  result.precision =
      counts.predicted == 0
          ? 1.0
          : static_cast<double>(counts.predicted_in_sure_or_possible) /
                static_cast<double>(counts.predicted);
  result.recall = counts.sure == 0
                      ? 1.0
                      : static_cast<double>(counts.predicted_in_sure) /
                            static_cast<double>(counts.sure);
  result.f1 = result.precision + result.recall > 0.0
                  ? 2.0 * result.precision * result.recall /
                        (result.precision + result.recall)
                  : 0.0;
  const std::size_t denom = counts.predicted + counts.sure;
  result.aer =
      denom == 0
          ? 0.0
          : 1.0 - static_cast<double>(counts.predicted_in_sure +
                                      counts.predicted_in_sure_or_possible) /
                      static_cast<double>(denom);
  return result;
}

inline void check_pairing(const std::vector<Alignment>& predicted,
                          const std::vector<GoldAlignment>& gold) {
  if (predicted.size() != gold.size()) {
    throw ShapeError("pair count mismatch: " +
                     std::to_string(predicted.size()) + " predicted vs " +
                     std::to_string(gold.size()) + " gold");
  }
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    if (predicted[k].pair_id != gold[k].pair_id) {
      throw ShapeError("pair id mismatch at index " + std::to_string(k));
    }
  }
}

inline EvalResult evaluate(const std::vector<Alignment>& predicted,
                           const std::vector<GoldAlignment>& gold) {
  check_pairing(predicted, gold);
  EvalCounts counts;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    counts += detail::count_pair(predicted[k], gold[k]);
  }
  return result_from_counts(counts);
}

inline std::vector<EvalResult> per_pair_breakdown(
    const std::vector<Alignment>& predicted,
    const std::vector<GoldAlignment>& gold) {
  check_pairing(predicted, gold);
  std::vector<EvalResult> results;
  results.reserve(predicted.size());
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    results.push_back(result_from_counts(detail::count_pair(predicted[k],
                                                            gold[k])));
  }
  return results;
}

inline void write_eval_report(std::ostream& out, const EvalResult& result) {
  char buf[64];
  auto line = [&](const char* key, double value) {
    std::snprintf(buf, sizeof(buf), "%s=%.6f\n", key, value);
    out << buf;
  };
  line("precision", result.precision);
  line("recall", result.recall);
  line("f1", result.f1);
  line("aer", result.aer);
  out << "links_predicted=" << result.counts.predicted << '\n';
  out << "links_sure=" << result.counts.sure << '\n';
  out << "links_predicted_in_sure=" << result.counts.predicted_in_sure
      << '\n';
  out << "links_predicted_in_sure_or_possible="
      << result.counts.predicted_in_sure_or_possible << '\n';
}

}  // namespace tinyalign
