#pragma once

// Similarity-based alignment: cosine matrices over a sentence pair,
// directional argmax alignment with diagonal tie-breaking, and the two
// symmetrization heuristics (intersection, grow-diag-final-and).
//
// Alignment links are always stored in (source index, target index)
// orientation, for both directions. Alignment never uses position
// encodings; only the plain word vectors enter the similarity matrix.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "tinyalign/core.hpp"
#include "tinyalign/corpus.hpp"
#include "tinyalign/embeddings.hpp"

namespace tinyalign {

struct SimilarityMatrix {
  std::size_t pair_id = 0;
  Matrix values;  // len(source) x len(target), cosines in [-1, 1]
};

struct Alignment {
  std::size_t pair_id = 0;
  std::set<Link> links;
};

enum class Direction { SourceToTarget, TargetToSource };
enum class Symmetrization { Intersection, Gdfa };

// Cosine of two resolved vectors; zero vectors give similarity 0.
inline double cosine_similarity(std::span<const double> a,
                                std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na * nb < 1e-300) return 0.0;
  double c = dot(a, b) / (na * nb);
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

inline SimilarityMatrix similarity_matrix(
    const EmbeddingStore& store, const SentencePair& pair,
    const std::string& source_language = std::string(kSourceLanguage),
    const std::string& target_language = std::string(kTargetLanguage)) {
  const std::size_t m = pair.source.size();
  const std::size_t n = pair.target.size();
  std::vector<std::vector<double>> src(m), tgt(n);
  for (std::size_t i = 0; i < m; ++i) {
    src[i] = store.resolve(source_language, pair.source.tokens[i]).vector;
  }
  for (std::size_t j = 0; j < n; ++j) {
    tgt[j] = store.resolve(target_language, pair.target.tokens[j]).vector;
  }
  SimilarityMatrix sim;
  sim.pair_id = pair.pair_id;
  sim.values = Matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      sim.values(i, j) = cosine_similarity(src[i], tgt[j]);
    }
  }
  return sim;
}

// Argmax alignment over one direction. Exact similarity ties are broken by
// proximity to the diagonal, |i/len(s) - j/len(t)|, compared exactly as
// |i*len(t) - j*len(s)|; a remaining tie goes to the smaller index in the
// aligned-to sentence. Every position of the aligning sentence gets exactly
// one link.
inline Alignment directional_align(const SimilarityMatrix& sim,
                                   Direction direction) {
  const std::size_t m = sim.values.rows();
  const std::size_t n = sim.values.cols();
  if (m == 0 || n == 0) throw ShapeError("empty similarity matrix");
  Alignment out;
  out.pair_id = sim.pair_id;
  auto diag_distance = [&](std::size_t i, std::size_t j) {
    const long long a = static_cast<long long>(i) * static_cast<long long>(n);
    const long long b = static_cast<long long>(j) * static_cast<long long>(m);
    return std::llabs(a - b);
  };
  if (direction == Direction::SourceToTarget) {
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t best = 0;
      double best_sim = sim.values(i, 0);
      long long best_dist = diag_distance(i, 0);
      for (std::size_t j = 1; j < n; ++j) {
        const double s = sim.values(i, j);
        const long long d = diag_distance(i, j);
        if (s > best_sim || (s == best_sim && d < best_dist)) {
          best = j;
          best_sim = s;
          best_dist = d;
        }
      }
      out.links.insert({i, best});
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t best = 0;
      double best_sim = sim.values(0, j);
      long long best_dist = diag_distance(0, j);
      for (std::size_t i = 1; i < m; ++i) {
        const double s = sim.values(i, j);
        const long long d = diag_distance(i, j);
        if (s > best_sim || (s == best_sim && d < best_dist)) {
          best = i;
          best_sim = s;
          best_dist = d;
        }
      }
      out.links.insert({best, j});
    }
  }
  return out;
}

inline Alignment symmetrize_intersection(const Alignment& fwd,
                                         const Alignment& bwd) {
  if (fwd.pair_id != bwd.pair_id) {
    throw ShapeError("pair mismatch in symmetrization");
  }
  Alignment out;
  out.pair_id = fwd.pair_id;
  for (const Link& link : fwd.links) {
    if (bwd.links.count(link)) out.links.insert(link);
  }
  return out;
}

// Grow-diag-final-and. Starts from the intersection and repeatedly sweeps
// the grid (rows outer, columns inner), growing into the 8-neighborhood
// with union links whose source or target endpoint is still unaligned;
// neighbors are tried in the order N,S,E,W,NE,NW,SE,SW with N = (i-1, j)
// and E = (i, j+1). New links take effect immediately. After the fixpoint,
// a final pass adds union links with both endpoints unaligned, in (i, j)
// order. The scan order is part of the contract: it can change the output.
inline Alignment symmetrize_gdfa(const Alignment& fwd, const Alignment& bwd,
                                 std::size_t len_s, std::size_t len_t) {
  if (fwd.pair_id != bwd.pair_id) {
    throw ShapeError("pair mismatch in symmetrization");
  }
  std::set<Link> uni = fwd.links;
  uni.insert(bwd.links.begin(), bwd.links.end());
  for (const Link& link : uni) {
    if (link.first >= len_s || link.second >= len_t) {
      throw ShapeError("alignment link outside sentence bounds");
    }
  }
  Alignment out = symmetrize_intersection(fwd, bwd);
  std::vector<char> src_aligned(len_s, 0), tgt_aligned(len_t, 0);
  for (const Link& link : out.links) {
    src_aligned[link.first] = 1;
    tgt_aligned[link.second] = 1;
  }
  static constexpr int kNeighbors[8][2] = {
      {-1, 0}, {1, 0}, {0, 1}, {0, -1}, {-1, 1}, {-1, -1}, {1, 1}, {1, -1}};
  bool added = true;
  while (added) {
    added = false;
    for (std::size_t i = 0; i < len_s; ++i) {
      for (std::size_t j = 0; j < len_t; ++j) {
        if (!out.links.count({i, j})) continue;
        for (const auto& nb : kNeighbors) {
          const long long ni = static_cast<long long>(i) + nb[0];
          const long long nj = static_cast<long long>(j) + nb[1];
          if (ni < 0 || nj < 0 || ni >= static_cast<long long>(len_s) ||
              nj >= static_cast<long long>(len_t)) {
            continue;
          }
          const Link cand{static_cast<std::size_t>(ni),
                          static_cast<std::size_t>(nj)};
          if (out.links.count(cand) || !uni.count(cand)) continue;
          if (src_aligned[cand.first] && tgt_aligned[cand.second]) continue;
          out.links.insert(cand);
          src_aligned[cand.first] = 1;
          tgt_aligned[cand.second] = 1;
          added = true;
        }
      }
    }
  }
  for (const Link& link : uni) {
    if (!out.links.count(link) && !src_aligned[link.first] &&
        !tgt_aligned[link.second]) {
      out.links.insert(link);
      src_aligned[link.first] = 1;
      tgt_aligned[link.second] = 1;
    }
  }
  return out;
}

inline Alignment symmetrize(const Alignment& fwd, const Alignment& bwd,
                            std::size_t len_s, std::size_t len_t,
                            Symmetrization method) {
  return method == Symmetrization::Intersection
             ? symmetrize_intersection(fwd, bwd)
             : symmetrize_gdfa(fwd, bwd, len_s, len_t);
}

inline std::vector<Alignment> align_corpus(
    const EmbeddingStore& store, const ParallelCorpus& corpus,
    Symmetrization method,
    const std::string& source_language = std::string(kSourceLanguage),
    const std::string& target_language = std::string(kTargetLanguage)) {
  std::vector<Alignment> out;
  out.reserve(corpus.size());
  for (const SentencePair& pair : corpus.pairs) {
    const SimilarityMatrix sim =
        similarity_matrix(store, pair, source_language, target_language);
    const Alignment fwd = directional_align(sim, Direction::SourceToTarget);
    const Alignment bwd = directional_align(sim, Direction::TargetToSource);
    out.push_back(
        symmetrize(fwd, bwd, pair.source.size(), pair.target.size(), method));
  }
  return out;
}

// Pharaoh output: one line per pair, `i-j` links sorted by (i, j).
inline void write_alignments(std::ostream& out,
                             const std::vector<Alignment>& alignments) {
  for (const Alignment& alignment : alignments) {
    bool first = true;
    for (const Link& link : alignment.links) {
      if (!first) out << ' ';
      out << link.first << '-' << link.second;
      first = false;
    }
    out << '\n';
  }
}

inline void write_alignments(const std::filesystem::path& path,
                             const std::vector<Alignment>& alignments) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_alignments(out, alignments);
}

// Reads predicted alignments (sure `i-j` links only).
inline std::vector<Alignment> parse_alignments(std::istream& in) {
  std::vector<Alignment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_line_ending(line);
    Alignment alignment;
    alignment.pair_id = out.size();
    for (const std::string& tok : detail::split_whitespace(line)) {
      const std::size_t sep = tok.find('-');
      if (sep == std::string::npos) {
        throw FormatError("malformed link '" + tok + "'", line_no);
      }
      const auto i = detail::parse_index(std::string_view(tok).substr(0, sep));
      const auto j = detail::parse_index(std::string_view(tok).substr(sep + 1));
      if (!i || !j) {
        throw FormatError("malformed link '" + tok + "'", line_no);
      }
      alignment.links.insert({*i, *j});
    }
    out.push_back(std::move(alignment));
  }
  return out;
}

inline std::vector<Alignment> read_alignments(
    const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  try {
    return parse_alignments(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.line());
  }
}

}  // namespace tinyalign
