#pragma once

// Synthetic corpora with fully controlled embedding geometry.
//
// The ambiguity fixture mirrors the answer/frage/antwort situation: ten
// parallel pairs over a ten-word vocabulary whose true alignment is the
// diagonal. Every source word shares a vector with its translation except
// "answer", whose initial vector sits 0.02 closer in cosine to the wrong
// target "frage" (the translation of "question", which co-occurs in every
// ambiguous pair) than to its true translation "antwort". The baseline
// intersection therefore never links "answer"; resolving the ambiguity
// requires the fine-tuning objective.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tinyalign/tinyalign.hpp"

namespace fixtures {

struct SyntheticFixture {
  tinyalign::EmbeddingStore store;
  tinyalign::ParallelCorpus corpus;
  std::vector<tinyalign::GoldAlignment> gold;
};

inline tinyalign::ParallelCorpus corpus_from_lines(
    const std::vector<std::pair<std::string, std::string>>& lines) {
  tinyalign::ParallelCorpus corpus;
  for (const auto& [src, tgt] : lines) {
    tinyalign::SentencePair pair;
    pair.source.tokens = tinyalign::detail::split_whitespace(src);
    pair.target.tokens = tinyalign::detail::split_whitespace(tgt);
    pair.pair_id = corpus.pairs.size();
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

// Diagonal sure links for sentence pairs whose sides run in parallel order.
inline std::vector<tinyalign::GoldAlignment> diagonal_gold(
    const tinyalign::ParallelCorpus& corpus) {
  std::vector<tinyalign::GoldAlignment> gold;
  for (const auto& pair : corpus.pairs) {
    tinyalign::GoldAlignment entry;
    entry.pair_id = pair.pair_id;
    const std::size_t len =
        std::min(pair.source.size(), pair.target.size());
    for (std::size_t k = 0; k < len; ++k) entry.sure.insert({k, k});
    gold.push_back(std::move(entry));
  }
  return gold;
}

inline SyntheticFixture make_ambiguity_fixture(std::size_t n_pairs = 10) {
  const std::size_t dim = 12;
  // Word vectors are scaled to the norm of a sinusoid position vector,
  // sqrt(dim / 2), so neither term dominates the cosine when positions are
  // enabled.
  const double scale = std::sqrt(static_cast<double>(dim) / 2.0);

  const std::vector<std::string> src_words = {
      "question", "answer", "good", "day",   "house",
      "tree",     "water",  "sky",  "stone", "bird"};
  const std::vector<std::string> tgt_words = {
      "frage",  "antwort", "gut",    "tag",   "haus",
      "baum",   "wasser",  "himmel", "stein", "vogel"};

  auto basis = [&](std::size_t axis) {
    std::vector<double> v(dim, 0.0);
    v[axis] = 1.0;
    return v;
  };
  auto scaled = [&](std::vector<double> v) {
    for (double& x : v) x *= scale;
    return v;
  };

  tinyalign::EmbeddingStore store(dim);
  const std::string src_lang(tinyalign::kSourceLanguage);
  const std::string tgt_lang(tinyalign::kTargetLanguage);

  // frage leans 0.9 toward question's axis, the rest on an aux axis.
  std::vector<double> frage(dim, 0.0);
  frage[0] = 0.9;
  frage[10] = std::sqrt(1.0 - 0.81);
  // answer: cosine 0.60 to antwort (axis 1), 0.62 to frage.
  std::vector<double> answer(dim, 0.0);
  for (std::size_t k = 0; k < dim; ++k) answer[k] = 0.62 * frage[k];
  answer[1] += 0.60;
  answer[11] = std::sqrt(1.0 - 0.60 * 0.60 - 0.62 * 0.62);

  for (std::size_t w = 0; w < src_words.size(); ++w) {
    store.add_entry(src_lang, src_words[w],
                    scaled(w == 1 ? answer : basis(w)));
    store.add_entry(tgt_lang, tgt_words[w],
                    scaled(w == 0 ? frage : basis(w)));
  }

  const std::vector<std::pair<std::string, std::string>> lines = {
      {"question answer good", "frage antwort gut"},
      {"day question answer", "tag frage antwort"},
      {"house tree water", "haus baum wasser"},
      {"answer question sky", "antwort frage himmel"},
      {"stone bird good", "stein vogel gut"},
      {"water day house", "wasser tag haus"},
      {"question answer stone", "frage antwort stein"},
      {"tree sky bird", "baum himmel vogel"},
      {"good day water", "gut tag wasser"},
      {"house stone tree", "haus stein baum"},
  };

  SyntheticFixture fixture;
  fixture.store = std::move(store);
  fixture.corpus = corpus_from_lines(std::vector(
      lines.begin(), lines.begin() + std::min(n_pairs, lines.size())));
  fixture.gold = diagonal_gold(fixture.corpus);
  return fixture;
}

inline void write_corpus_file(const std::filesystem::path& path,
                              const tinyalign::ParallelCorpus& corpus) {
  std::ofstream out(path);
  tinyalign::write_parallel_corpus(out, corpus);
}

inline void write_gold_file(const std::filesystem::path& path,
                            const std::vector<tinyalign::GoldAlignment>& gold) {
  std::ofstream out(path);
  for (const auto& entry : gold) {
    bool first = true;
    for (const auto& link : entry.sure) {
      if (!first) out << ' ';
      out << link.first << '-' << link.second;
      first = false;
    }
    for (const auto& link : entry.possible) {
      if (!first) out << ' ';
      out << link.first << '?' << link.second;
      first = false;
    }
    out << '\n';
  }
}

inline void write_fixture_files(const std::filesystem::path& dir,
                                const SyntheticFixture& fixture) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_corpus_file(dir / "corpus.txt", fixture.corpus);
  write_gold_file(dir / "gold.txt", fixture.gold);
  fixture.store.save_word2vec(dir / "src.vec",
                              std::string(tinyalign::kSourceLanguage));
  fixture.store.save_word2vec(dir / "tgt.vec",
                              std::string(tinyalign::kTargetLanguage));
}

// Small random instance for gradient checks: 1-2 pairs, lengths 2-4,
// dim 4-8, every token backed by a random vector with norm in [0.5, 2].
// Tokens repeat across and within sentences so per-type accumulation gets
// exercised.
struct RandomInstance {
  tinyalign::EmbeddingStore store;
  tinyalign::ParallelCorpus corpus;
  std::vector<tinyalign::RetentionMask> masks;
};

inline RandomInstance make_random_instance(tinyalign::SplitMix64& rng) {
  const std::size_t dim = 4 + rng.next() % 5;  // 4..8
  const std::size_t vocab = 3 + rng.next() % 3;  // 3..5 types per side
  tinyalign::EmbeddingStore store(dim);
  const std::string src_lang(tinyalign::kSourceLanguage);
  const std::string tgt_lang(tinyalign::kTargetLanguage);
  auto random_vector = [&]() {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    const double target = rng.uniform(0.5, 2.0);
    const double current = tinyalign::norm(v);
    for (double& x : v) x *= target / (current > 1e-9 ? current : 1.0);
    return v;
  };
  for (std::size_t w = 0; w < vocab; ++w) {
    store.add_entry(src_lang, "s" + std::to_string(w), random_vector());
    store.add_entry(tgt_lang, "t" + std::to_string(w), random_vector());
  }
  const std::size_t n_pairs = 1 + rng.next() % 2;
  tinyalign::ParallelCorpus corpus;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    tinyalign::SentencePair pair;
    const std::size_t m = 2 + rng.next() % 3;  // 2..4
    const std::size_t n = 2 + rng.next() % 3;
    for (std::size_t i = 0; i < m; ++i) {
      pair.source.tokens.push_back("s" + std::to_string(rng.next() % vocab));
    }
    for (std::size_t j = 0; j < n; ++j) {
      pair.target.tokens.push_back("t" + std::to_string(rng.next() % vocab));
    }
    pair.pair_id = corpus.pairs.size();
    corpus.pairs.push_back(std::move(pair));
  }
  RandomInstance instance;
  corpus_parameter_view(store, corpus);
  instance.masks = tinyalign::build_retention_masks(store, corpus);
  instance.store = std::move(store);
  instance.corpus = std::move(corpus);
  return instance;
}

}  // namespace fixtures
