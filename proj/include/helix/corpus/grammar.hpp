#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "helix/corpus/corpus.hpp"

namespace helix::corpus {

struct GrammarOptions {
  std::size_t nouns = 40;
  std::size_t verbs = 20;
  std::size_t adjectives = 15;
  std::size_t adjuvants = 10;
  std::uint64_t seed = 20240917;
};

/// Two invented languages sharing a tag-preserving bijective dictionary.
/// Templates are written in target order, where adjectives precede their
/// noun; the source language places the adjectives after the noun.
class SyntheticGrammar {
 public:
  explicit SyntheticGrammar(const GrammarOptions& options = {});

  const Vocab& source_vocab() const noexcept { return source_; }
  const Vocab& target_vocab() const noexcept { return target_; }
  /// Each template ends with the "." marker and has 4..12 tokens.
  const std::vector<std::vector<PosTag>>& templates() const noexcept { return templates_; }
  /// Target word ids per tag class (noun, verb, adjective, adjuvant).
  const std::vector<TokenId>& target_words(PosTag tag) const;

  TokenId to_source(TokenId target_word) const;
  TokenId to_target(TokenId source_word) const;

 private:
  Vocab source_;
  Vocab target_;
  std::vector<std::vector<TokenId>> target_by_tag_;
  std::vector<TokenId> t2s_;
  std::vector<TokenId> s2t_;
  std::vector<std::vector<PosTag>> templates_;
};

/// Permutation taking target order to source order: each adjective run
/// followed by a noun becomes noun then the run. order[i] is the target index
/// placed at source position i.
std::vector<std::size_t> source_order(const std::vector<PosTag>& target_tags);
/// Inverse rule on source tags: a noun followed by an adjective run becomes the
/// run then the noun. order[i] is the source index placed at target position i.
std::vector<std::size_t> target_order(const std::vector<PosTag>& source_tags);

/// n pairs, template and words chosen uniformly; tagged; deterministic in seed.
Corpus generate_corpus(const SyntheticGrammar& grammar, std::size_t n, std::uint64_t seed);

/// Pairs ids [first, first+n) from the same stream as generate_corpus.
std::vector<TokenizedPair> generate_pairs(const SyntheticGrammar& grammar, std::size_t n,
                                          std::uint64_t seed, std::size_t first_id = 0);

}  // namespace helix::corpus
