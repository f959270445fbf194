#pragma once

// Cross-lingual embedding storage. Vectors for both languages live in one
// store keyed by (language tag, surface form); language tags are opaque
// caller-chosen strings ("src"/"tgt" by convention).
//
// Lookup policy: exact surface form first, then the ASCII-lowercased form,
// then a deterministic out-of-vocabulary vector. OOV vectors are drawn from
// a generator seeded by hash(surface form) XOR the store's OOV seed and are
// scaled to the mean norm of the language's known vectors, so they are
// stable across runs, distinct per surface form, and trainable.
//
// Vectors are stored as loaded, not normalized; cosine is computed at the
// point of use.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tinyalign/core.hpp"
#include "tinyalign/corpus.hpp"

namespace tinyalign {

enum class ResolveStatus { Found, FoundLowercase, Oov };

struct TokenResolution {
  std::string token;
  ResolveStatus status = ResolveStatus::Oov;
  std::vector<double> vector;
};

namespace detail {

inline std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

inline double parse_double_strict(std::string_view text, std::size_t line_no) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("cannot parse value '" + std::string(text) + "'",
                      line_no);
  }
  if (!std::isfinite(value)) {
    throw FormatError("non-finite value '" + std::string(text) + "'",
                      line_no);
  }
  return value;
}

}  // namespace detail

class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {
    if (dim_ < 2) throw UsageError("embedding dimension must be >= 2");
  }

  std::size_t dim() const { return dim_; }
  std::uint64_t oov_seed() const { return oov_seed_; }
  void set_oov_seed(std::uint64_t seed) { oov_seed_ = seed; }

  const std::vector<std::string>& languages() const { return language_order_; }

  // Inserts or overwrites one entry. New entries keep insertion order per
  // language, which fixes the row order of saved embedding files.
  void add_entry(const std::string& language, const std::string& word,
                 std::vector<double> vec) {
    if (vec.size() != dim_) {
      throw ShapeError("vector length " + std::to_string(vec.size()) +
                       " does not match store dim " + std::to_string(dim_));
    }
    for (double v : vec) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite component in vector for '" + word +
                           "'");
      }
    }
    Table& table = table_for(language);
    auto it = table.index.find(word);
    if (it == table.index.end()) {
      table.index.emplace(word, table.words.size());
      table.words.push_back(word);
      table.vectors.push_back(std::move(vec));
      table.trainable.push_back(false);
    } else {
      table.vectors[it->second] = std::move(vec);
    }
  }

  bool contains(const std::string& language, const std::string& word) const {
    const Table* table = find_table(language);
    return table && table->index.count(word) > 0;
  }

  std::size_t size(const std::string& language) const {
    const Table* table = find_table(language);
    return table ? table->words.size() : 0;
  }

  const std::vector<std::string>& words(const std::string& language) const {
    return table_at(language).words;
  }

  const std::vector<double>& vector_at(const std::string& language,
                                       const std::string& word) const {
    const Table& table = table_at(language);
    auto it = table.index.find(word);
    if (it == table.index.end()) {
      throw Error("no entry for '" + word + "' in language '" + language +
                  "'");
    }
    return table.vectors[it->second];
  }

  std::vector<double>& mutable_vector(const std::string& language,
                                      const std::string& word) {
    Table& table = table_for(language);
    auto it = table.index.find(word);
    if (it == table.index.end()) {
      throw Error("no entry for '" + word + "' in language '" + language +
                  "'");
    }
    return table.vectors[it->second];
  }

  void set_trainable(const std::string& language, const std::string& word,
                     bool flag) {
    Table& table = table_for(language);
    auto it = table.index.find(word);
    if (it == table.index.end()) {
      throw Error("no entry for '" + word + "' in language '" + language +
                  "'");
    }
    table.trainable[it->second] = flag;
  }

  bool is_trainable(const std::string& language,
                    const std::string& word) const {
    const Table* table = find_table(language);
    if (!table) return false;
    auto it = table->index.find(word);
    return it != table->index.end() && table->trainable[it->second];
  }

  // Mean norm of the language's vectors, frozen on first use so that OOV
  // synthesis is independent of later additions to the store.
  double mean_known_norm(const std::string& language) const {
    const Table* table = find_table(language);
    if (!table || table->vectors.empty()) return 1.0;
    if (!table->mean_norm) {
      double acc = 0.0;
      for (const auto& vec : table->vectors) acc += norm(vec);
      table->mean_norm = acc / static_cast<double>(table->vectors.size());
    }
    return *table->mean_norm;
  }

  TokenResolution resolve(const std::string& language,
                          const std::string& token) const {
    const Table* table = find_table(language);
    if (table) {
      auto it = table->index.find(token);
      if (it != table->index.end()) {
        return {token, ResolveStatus::Found, table->vectors[it->second]};
      }
      const std::string lowered = detail::ascii_lower(token);
      if (lowered != token) {
        it = table->index.find(lowered);
        if (it != table->index.end()) {
          return {token, ResolveStatus::FoundLowercase,
                  table->vectors[it->second]};
        }
      }
    }
    return {token, ResolveStatus::Oov, oov_vector(language, token)};
  }

  std::vector<double> oov_vector(const std::string& language,
                                 const std::string& token) const {
    SplitMix64 rng(fnv1a64(token) ^ oov_seed_);
    std::vector<double> vec(dim_);
    for (double& v : vec) v = rng.uniform(-1.0, 1.0);
    const double target = mean_known_norm(language);
    const double raw = norm(vec);
    if (raw < 1e-12) {
      vec.assign(dim_, 0.0);
      vec[0] = target;
    } else {
      for (double& v : vec) v *= target / raw;
    }
    return vec;
  }

  void save_word2vec(std::ostream& out, const std::string& language) const {
    const Table& table = table_at(language);
    out << table.words.size() << ' ' << dim_ << '\n';
    char buf[64];
    for (std::size_t k = 0; k < table.words.size(); ++k) {
      out << table.words[k];
      for (double v : table.vectors[k]) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << ' ' << buf;
      }
      out << '\n';
    }
  }

  void save_word2vec(const std::filesystem::path& path,
                     const std::string& language) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    save_word2vec(out, language);
  }

 private:
  struct Table {
    std::vector<std::string> words;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::vector<double>> vectors;
    std::vector<char> trainable;
    mutable std::optional<double> mean_norm;
  };

  Table& table_for(const std::string& language) {
    auto it = tables_.find(language);
    if (it == tables_.end()) {
      language_order_.push_back(language);
      it = tables_.emplace(language, Table{}).first;
    }
    return it->second;
  }

  const Table* find_table(const std::string& language) const {
    auto it = tables_.find(language);
    return it == tables_.end() ? nullptr : &it->second;
  }

  const Table& table_at(const std::string& language) const {
    const Table* table = find_table(language);
    if (!table) throw Error("unknown language tag '" + language + "'");
    return *table;
  }

  friend void load_embeddings_into(EmbeddingStore&,
                                   const std::filesystem::path&,
                                   const std::string&,
                                   std::optional<std::size_t>);

  std::size_t dim_ = 0;
  std::unordered_map<std::string, Table> tables_;
  std::vector<std::string> language_order_;
  std::uint64_t oov_seed_ = 0x5eedULL;
};

// Reads word2vec text format: a "count dim" header line, then one
// "word v1 ... v_dim" row per line. At most `limit` rows are kept, in file
// order. The header dimension must match the store.
inline void load_embeddings_into(EmbeddingStore& store,
                                 const std::filesystem::path& path,
                                 const std::string& language,
                                 std::optional<std::size_t> limit = {}) {
  std::ifstream in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(path.string() + ": bad header: empty file", 1);
  }
  line = detail::strip_line_ending(line);
  const std::vector<std::string> header = detail::split_whitespace(line);
  std::size_t count = 0;
  std::size_t dim = 0;
  if (header.size() != 2) {
    throw FormatError(path.string() + ": bad header '" + line + "'", 1);
  }
  const auto count_v = detail::parse_index(header[0]);
  const auto dim_v = detail::parse_index(header[1]);
  if (!count_v || !dim_v) {
    throw FormatError(path.string() + ": bad header '" + line + "'", 1);
  }
  count = *count_v;
  dim = *dim_v;
  if (dim < 2) {
    throw FormatError(path.string() + ": bad header: dim must be >= 2", 1);
  }
  if (store.dim() != 0 && store.dim() != dim) {
    throw FormatError(path.string() + ": dimension mismatch: file has dim " +
                          std::to_string(dim) + ", store has dim " +
                          std::to_string(store.dim()),
                      1);
  }
  if (store.dim() == 0) store.dim_ = dim;

  const std::size_t wanted = limit ? std::min(*limit, count) : count;
  std::size_t loaded = 0;
  std::size_t line_no = 1;
  while (loaded < wanted && std::getline(in, line)) {
    ++line_no;
    line = detail::strip_line_ending(line);
    const std::vector<std::string> fields = detail::split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != dim + 1) {
      throw FormatError(path.string() + ": dimension mismatch: expected " +
                            std::to_string(dim) + " values, got " +
                            std::to_string(fields.size() - 1),
                        line_no);
    }
    std::vector<double> vec(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      try {
        vec[k] = detail::parse_double_strict(fields[k + 1], line_no);
      } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.line());
      }
    }
    store.add_entry(language, fields[0], std::move(vec));
    ++loaded;
  }
  if (loaded < wanted) {
    throw FormatError(path.string() +
                          ": unexpected end of file: header promises " +
                          std::to_string(count) + " rows, found " +
                          std::to_string(loaded),
                      line_no + 1);
  }
  // Invalidate so the next OOV request sees the freshly loaded vocabulary.
  store.table_for(language).mean_norm.reset();
}

inline EmbeddingStore load_embeddings(const std::filesystem::path& path,
                                      const std::string& language,
                                      std::optional<std::size_t> limit = {}) {
  EmbeddingStore store;
  load_embeddings_into(store, path, language, limit);
  return store;
}

// One trainable parameter slot per distinct (language, surface form) that
// occurs in the corpus, in first-occurrence order (source side before
// target side within a pair). Building the view materializes store entries
// for lowercase-resolved and OOV surface forms so that each slot owns its
// own vector; existing vectors are never modified.
struct ParameterSlot {
  std::string language;
  std::string surface;
};

struct ParameterView {
  std::vector<ParameterSlot> slots;
  // Per pair: slot index of every source / target token position.
  std::vector<std::vector<std::size_t>> pair_source_slots;
  std::vector<std::vector<std::size_t>> pair_target_slots;
};

inline ParameterView corpus_parameter_view(
    EmbeddingStore& store, const ParallelCorpus& corpus,
    const std::string& source_language = std::string(kSourceLanguage),
    const std::string& target_language = std::string(kTargetLanguage)) {
  ParameterView view;
  std::unordered_map<std::string, std::size_t> slot_index;
  auto ensure = [&](const std::string& language,
                    const std::string& surface) -> std::size_t {
    const std::string key = language + '\t' + surface;
    auto it = slot_index.find(key);
    if (it != slot_index.end()) return it->second;
    if (!store.contains(language, surface)) {
      store.add_entry(language, surface,
                      store.resolve(language, surface).vector);
    }
    store.set_trainable(language, surface, true);
    const std::size_t id = view.slots.size();
    view.slots.push_back({language, surface});
    slot_index.emplace(key, id);
    return id;
  };
  for (const SentencePair& pair : corpus.pairs) {
    std::vector<std::size_t> src_slots;
    std::vector<std::size_t> tgt_slots;
    src_slots.reserve(pair.source.size());
    tgt_slots.reserve(pair.target.size());
    for (const std::string& tok : pair.source.tokens) {
      src_slots.push_back(ensure(source_language, tok));
    }
    for (const std::string& tok : pair.target.tokens) {
      tgt_slots.push_back(ensure(target_language, tok));
    }
    view.pair_source_slots.push_back(std::move(src_slots));
    view.pair_target_slots.push_back(std::move(tgt_slots));
  }
  return view;
}

// Deep copy of every trainable vector, in per-language insertion order.
struct EmbeddingSnapshot {
  struct Entry {
    std::string language;
    std::string word;
    std::vector<double> vector;
  };
  std::vector<Entry> entries;
};

inline EmbeddingSnapshot snapshot_trainable(const EmbeddingStore& store) {
  EmbeddingSnapshot snap;
  for (const std::string& language : store.languages()) {
    for (const std::string& word : store.words(language)) {
      if (store.is_trainable(language, word)) {
        snap.entries.push_back({language, word,
                                store.vector_at(language, word)});
      }
    }
  }
  return snap;
}

inline void restore(EmbeddingStore& store, const EmbeddingSnapshot& snap) {
  for (const auto& entry : snap.entries) {
    store.mutable_vector(entry.language, entry.word) = entry.vector;
  }
}

}  // namespace tinyalign
