#pragma once

// Parallel corpus and gold alignment file handling.
//
// Corpus files: UTF-8 text, one sentence pair per line, the two sides
// separated by " ||| " (space, three pipes, space). Tokens are split on
// runs of whitespace; the input is assumed pre-tokenized and casing is
// preserved as read.
//
// Gold files: one line per pair, whitespace-separated links, `i-j` for
// sure links and `i?j` for possible links, all indices 0-based. An empty
// line means the pair has no gold links.

#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tinyalign/core.hpp"

namespace tinyalign {

inline constexpr std::string_view kSourceLanguage = "src";
inline constexpr std::string_view kTargetLanguage = "tgt";

// (source index, target index), 0-based.
using Link = std::pair<std::size_t, std::size_t>;

struct Sentence {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
};

struct SentencePair {
  Sentence source;
  Sentence target;
  std::size_t pair_id = 0;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Sure links and possible links are kept disjoint; a link listed as both
// is stored as sure only.
struct GoldAlignment {
  std::size_t pair_id = 0;
  std::set<Link> sure;
  std::set<Link> possible;
};

namespace detail {

inline std::string strip_line_ending(std::string line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) {
    line.pop_back();
  }
  return line;
}

inline std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) tokens.push_back(std::move(tok));
  return tokens;
}

inline std::optional<std::size_t> parse_index(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::size_t value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + static_cast<std::size_t>(c - '0');
  }
  return value;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline ParallelCorpus parse_parallel_corpus(std::istream& in) {
  static constexpr std::string_view kSeparator = " ||| ";
  ParallelCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_line_ending(line);
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) {
      line.erase(0, 3);
    }
    const std::size_t pos = line.find(kSeparator);
    if (pos == std::string::npos) {
      throw FormatError("missing ' ||| ' separator", line_no);
    }
    if (line.find(kSeparator, pos + kSeparator.size()) != std::string::npos) {
      throw FormatError("more than one ' ||| ' separator", line_no);
    }
    SentencePair pair;
    pair.source.tokens = detail::split_whitespace(line.substr(0, pos));
    pair.target.tokens =
        detail::split_whitespace(line.substr(pos + kSeparator.size()));
    if (pair.source.tokens.empty()) {
      throw FormatError("empty source side", line_no);
    }
    if (pair.target.tokens.empty()) {
      throw FormatError("empty target side", line_no);
    }
    pair.pair_id = corpus.pairs.size();
    corpus.pairs.push_back(std::move(pair));
  }
  if (corpus.empty()) throw FormatError("corpus has no sentence pairs");
  return corpus;
}

inline ParallelCorpus read_parallel_corpus(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  try {
    return parse_parallel_corpus(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.line());
  }
}

inline void write_parallel_corpus(std::ostream& out,
                                  const ParallelCorpus& corpus) {
  for (const SentencePair& pair : corpus.pairs) {
    for (std::size_t i = 0; i < pair.source.tokens.size(); ++i) {
      if (i) out << ' ';
      out << pair.source.tokens[i];
    }
    out << " ||| ";
    for (std::size_t j = 0; j < pair.target.tokens.size(); ++j) {
      if (j) out << ' ';
      out << pair.target.tokens[j];
    }
    out << '\n';
  }
}

inline std::vector<GoldAlignment> parse_gold_alignments(std::istream& in) {
  std::vector<GoldAlignment> gold;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_line_ending(line);
    GoldAlignment entry;
    entry.pair_id = gold.size();
    for (const std::string& tok : detail::split_whitespace(line)) {
      const std::size_t sep = tok.find_first_of("-?");
      if (sep == std::string::npos) {
        throw FormatError("malformed link '" + tok + "'", line_no);
      }
      const auto i = detail::parse_index(std::string_view(tok).substr(0, sep));
      const auto j =
          detail::parse_index(std::string_view(tok).substr(sep + 1));
      if (!i || !j) {
        throw FormatError("malformed link '" + tok + "'", line_no);
      }
      if (tok[sep] == '-') {
        entry.sure.insert({*i, *j});
      } else {
        entry.possible.insert({*i, *j});
      }
    }
    // A link listed as both sure and possible counts as sure.
    for (const Link& link : entry.sure) entry.possible.erase(link);
    gold.push_back(std::move(entry));
  }
  return gold;
}

inline std::vector<GoldAlignment> read_gold_alignments(
    const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  try {
    return parse_gold_alignments(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.line());
  }
}

struct GoldValidationIssue {
  std::size_t pair_id = 0;
  Link link;
  bool sure = false;
  std::size_t source_length = 0;
  std::size_t target_length = 0;
};

struct GoldValidationReport {
  // (corpus pairs, gold lines) when the counts differ.
  std::optional<std::pair<std::size_t, std::size_t>> count_mismatch;
  std::vector<GoldValidationIssue> out_of_range;

  bool ok() const { return !count_mismatch && out_of_range.empty(); }
};

inline GoldValidationReport validate_gold(
    const ParallelCorpus& corpus, const std::vector<GoldAlignment>& gold) {
  GoldValidationReport report;
  if (corpus.size() != gold.size()) {
    report.count_mismatch = {corpus.size(), gold.size()};
  }
  const std::size_t overlap = std::min(corpus.size(), gold.size());
  for (std::size_t k = 0; k < overlap; ++k) {
    const SentencePair& pair = corpus.pairs[k];
    auto check = [&](const std::set<Link>& links, bool sure) {
      for (const Link& link : links) {
        if (link.first >= pair.source.size() ||
            link.second >= pair.target.size()) {
          report.out_of_range.push_back({k, link, sure, pair.source.size(),
                                         pair.target.size()});
        }
      }
    };
    check(gold[k].sure, true);
    check(gold[k].possible, false);
  }
  return report;
}

}  // namespace tinyalign
