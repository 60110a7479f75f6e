#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "helix/corpus/vocab.hpp"

namespace helix::corpus {

struct RawPair {
  std::string source;
  std::string target;
  std::size_t line = 0;
};

struct TokenizedPair {
  std::size_t id = 0;
  std::vector<TokenId> source;
  std::vector<TokenId> target;
  /// Empty for untagged corpora.
  std::vector<PosTag> source_tags;
  std::vector<PosTag> target_tags;

  friend bool operator==(const TokenizedPair&, const TokenizedPair&) = default;
};

struct Corpus {
  Vocab source_vocab;
  Vocab target_vocab;
  std::vector<TokenizedPair> pairs;
  bool tagged = false;
};

struct TokenizeOptions {
  /// Words the vocabulary builder flags as suffix tokens.
  std::vector<std::string> suffixes;
};

/// Vocabularies in order of first appearance. Throws std::invalid_argument
/// naming the pair when either side is empty.
Corpus build_vocab_and_tokenize(const std::vector<RawPair>& pairs, const TokenizeOptions& options = {});

/// Tokenizes against fixed vocabularies; tags come from the vocabularies when `tagged`.
std::vector<TokenizedPair> tokenize_with(const Vocab& source_vocab, const Vocab& target_vocab,
                                         const std::vector<RawPair>& pairs, bool tagged);

class TsvError : public std::runtime_error {
 public:
  TsvError(std::size_t line, const std::string& message);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct TsvIssue {
  std::size_t line = 0;
  std::string message;
};

struct TsvResult {
  std::vector<RawPair> pairs;
  std::vector<TsvIssue> issues;
};

/// source TAB target per line; CRLF accepted; blank lines skipped. In strict
/// mode the first malformed line throws TsvError, otherwise it is recorded
/// and skipped.
TsvResult parse_tsv(std::istream& in, bool strict = true);
TsvResult load_tsv(const std::filesystem::path& path, bool strict = true);

/// Detokenized pairs, one per line.
void write_tsv(const Corpus& corpus, const std::vector<TokenizedPair>& pairs, std::ostream& out);
/// token TAB tag for every tagged vocabulary word.
void write_tags(const Vocab& vocab, std::ostream& out);

}  // namespace helix::corpus
