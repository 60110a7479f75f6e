#include "helix/corpus/grammar.hpp"

#include <array>
#include <set>
#include <stdexcept>
#include <string>

#include "helix/numerics/rng.hpp"

namespace helix::corpus {

namespace {

using numerics::Rng;

constexpr std::array<PosTag, 4> kWordTags = {PosTag::noun, PosTag::verb, PosTag::adjective, PosTag::adjuvant};

// D adjuvant, A adjective, N noun, V verb, . marker. Target order.
constexpr std::array<std::string_view, 12> kTemplates = {
    "DNV.",      "DANV.",      "DNVDN.",     "DANVDN.",     "DNVDAN.",      "DANVDAN.",
    "DNDNV.",    "DANDNV.",    "DNVDANDN.",  "DANVDNDAN.",  "DAANVDANDN.",  "DANVDAANDAN."};

PosTag tag_of(char c) {
  switch (c) {
    case 'D': return PosTag::adjuvant;
    case 'A': return PosTag::adjective;
    case 'N': return PosTag::noun;
    case 'V': return PosTag::verb;
    default: return PosTag::marker;
  }
}

std::size_t slot(PosTag tag) {
  for (std::size_t i = 0; i < kWordTags.size(); ++i)
    if (kWordTags[i] == tag) return i;
  throw std::invalid_argument("no word class for tag " + std::string(to_string(tag)));
}

std::string make_word(Rng& rng, std::string_view consonants, std::string_view vowels) {
  const std::size_t syllables = 2 + rng.below(2);
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w.push_back(consonants[rng.below(consonants.size())]);
    w.push_back(vowels[rng.below(vowels.size())]);
  }
  if (rng.below(3) == 0) w.push_back(consonants[rng.below(consonants.size())]);
  return w;
}

}  // namespace

SyntheticGrammar::SyntheticGrammar(const GrammarOptions& options) : target_by_tag_(kWordTags.size()) {
  const std::array<std::size_t, 4> counts = {options.nouns, options.verbs, options.adjectives, options.adjuvants};
  for (std::size_t c : counts)
    if (c == 0) throw std::invalid_argument("SyntheticGrammar: every word class needs at least one word");

  Rng rng = Rng::derive(options.seed, 0x6772616d);
  std::set<std::string> used;
  auto fresh = [&](std::string_view consonants, std::string_view vowels) {
    for (;;) {
      std::string w = make_word(rng, consonants, vowels);
      if (used.insert(w).second) return w;
    }
  };

  const TokenId t_dot = target_.add(".", PosTag::marker);
  const TokenId s_dot = source_.add(".", PosTag::marker);

  std::vector<std::pair<std::size_t, std::string>> source_entries;
  for (std::size_t k = 0; k < kWordTags.size(); ++k) {
    for (std::size_t i = 0; i < counts[k]; ++i) {
      target_by_tag_[k].push_back(target_.add(fresh("bdfgklmnprstvz", "aeiou"), kWordTags[k]));
      source_entries.emplace_back(k, fresh("bcdfjlmnprstvx", "aeiouy"));
    }
  }
  // Source ids in a different order so the dictionary is not the identity.
  std::vector<std::size_t> perm(source_entries.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<TokenId> source_id(source_entries.size());
  for (std::size_t i : perm) source_id[i] = source_.add(source_entries[i].second, kWordTags[source_entries[i].first]);

  t2s_.assign(target_.size(), kUnk);
  s2t_.assign(source_.size(), kUnk);
  for (TokenId s = 0; s < kNumSpecial; ++s) t2s_[static_cast<std::size_t>(s)] = s2t_[static_cast<std::size_t>(s)] = s;
  t2s_[static_cast<std::size_t>(t_dot)] = s_dot;
  s2t_[static_cast<std::size_t>(s_dot)] = t_dot;
  std::size_t e = 0;
  for (std::size_t k = 0; k < kWordTags.size(); ++k) {
    for (TokenId t : target_by_tag_[k]) {
      t2s_[static_cast<std::size_t>(t)] = source_id[e];
      s2t_[static_cast<std::size_t>(source_id[e])] = t;
      ++e;
    }
  }

  for (std::string_view t : kTemplates) {
    std::vector<PosTag> tags;
    for (char c : t) tags.push_back(tag_of(c));
    templates_.push_back(std::move(tags));
  }
}

const std::vector<TokenId>& SyntheticGrammar::target_words(PosTag tag) const { return target_by_tag_[slot(tag)]; }

TokenId SyntheticGrammar::to_source(TokenId target_word) const {
  if (target_word < 0 || static_cast<std::size_t>(target_word) >= t2s_.size())
    throw std::out_of_range("to_source: id outside target vocabulary");
  return t2s_[static_cast<std::size_t>(target_word)];
}

TokenId SyntheticGrammar::to_target(TokenId source_word) const {
  if (source_word < 0 || static_cast<std::size_t>(source_word) >= s2t_.size())
    throw std::out_of_range("to_target: id outside source vocabulary");
  return s2t_[static_cast<std::size_t>(source_word)];
}

std::vector<std::size_t> source_order(const std::vector<PosTag>& tags) {
  std::vector<std::size_t> order;
  order.reserve(tags.size());
  std::size_t i = 0;
  while (i < tags.size()) {
    if (tags[i] == PosTag::adjective) {
      std::size_t j = i;
      while (j < tags.size() && tags[j] == PosTag::adjective) ++j;
      if (j < tags.size() && tags[j] == PosTag::noun) {
        order.push_back(j);
        for (std::size_t k = i; k < j; ++k) order.push_back(k);
        i = j + 1;
        continue;
      }
      for (std::size_t k = i; k < j; ++k) order.push_back(k);
      i = j;
      continue;
    }
    order.push_back(i++);
  }
  return order;
}

std::vector<std::size_t> target_order(const std::vector<PosTag>& tags) {
  std::vector<std::size_t> order;
  order.reserve(tags.size());
  std::size_t i = 0;
  while (i < tags.size()) {
    if (tags[i] == PosTag::noun && i + 1 < tags.size() && tags[i + 1] == PosTag::adjective) {
      std::size_t j = i + 1;
      while (j < tags.size() && tags[j] == PosTag::adjective) ++j;
      for (std::size_t k = i + 1; k < j; ++k) order.push_back(k);
      order.push_back(i);
      i = j;
      continue;
    }
    order.push_back(i++);
  }
  return order;
}

std::vector<TokenizedPair> generate_pairs(const SyntheticGrammar& grammar, std::size_t n, std::uint64_t seed,
                                          std::size_t first_id) {
  const auto& templates = grammar.templates();
  const TokenId dot = grammar.target_vocab().id(".");
  std::vector<TokenizedPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t id = first_id + i;
    Rng rng = Rng::derive(seed, id);
    const auto& tpl = templates[rng.below(templates.size())];
    std::vector<TokenId> words;
    for (PosTag t : tpl) {
      if (t == PosTag::marker) {
        words.push_back(dot);
      } else {
        const auto& pool = grammar.target_words(t);
        words.push_back(pool[rng.below(pool.size())]);
      }
    }
    TokenizedPair p;
    p.id = id;
    p.target = {kStart};
    p.target_tags = {PosTag::marker};
    for (std::size_t k = 0; k < words.size(); ++k) {
      p.target.push_back(words[k]);
      p.target_tags.push_back(tpl[k]);
    }
    p.target.push_back(kEnd);
    p.target_tags.push_back(PosTag::marker);

    p.source = {kStart};
    p.source_tags = {PosTag::marker};
    for (std::size_t k : source_order(tpl)) {
      p.source.push_back(grammar.to_source(words[k]));
      p.source_tags.push_back(tpl[k]);
    }
    p.source.push_back(kEnd);
    p.source_tags.push_back(PosTag::marker);
    out.push_back(std::move(p));
  }
  return out;
}

Corpus generate_corpus(const SyntheticGrammar& grammar, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("generate_corpus: n must be at least 1");
  Corpus c;
  c.source_vocab = grammar.source_vocab();
  c.target_vocab = grammar.target_vocab();
  c.pairs = generate_pairs(grammar, n, seed);
  c.tagged = true;
  return c;
}

}  // namespace helix::corpus
