#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "helix/corpus/batching.hpp"
#include "helix/corpus/grammar.hpp"

using namespace helix::corpus;

namespace {

const SyntheticGrammar& grammar() {
  static const SyntheticGrammar g;
  return g;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto p = std::filesystem::temp_directory_path() / ("helix_corpus_" + name);
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

}  // namespace

TEST_CASE("tokenizer examples") {
  Corpus c = build_vocab_and_tokenize({{"ola mundo .", "hello world ."}});
  const auto& v = c.source_vocab;
  REQUIRE(c.pairs.size() == 1);
  CHECK(c.pairs[0].source == std::vector<TokenId>{kStart, v.id("ola"), v.id("mundo"), v.id("."), kEnd});
  CHECK(v.word(c.pairs[0].source[1]) == "ola");
  CHECK(tokenize_text("Ola,mundo!  Fim") == std::vector<std::string>{"ola", ",", "mundo", "!", "fim"});
  CHECK(tokenize_text("ação .") == std::vector<std::string>{"ação", "."});
  CHECK_THROWS_AS(tokenize_text("bad \xff byte"), std::invalid_argument);
}

TEST_CASE("tokenizing normalized text is idempotent") {
  Corpus c = build_vocab_and_tokenize({{"Um Gato, preto.", "A black cat."}, {"outro gato .", "another cat ."}});
  for (const auto& p : c.pairs) {
    const std::string text = decode(c.source_vocab, p.source);
    CHECK(encode(c.source_vocab, text) == p.source);
    CHECK(encode(c.source_vocab, decode(c.source_vocab, encode(c.source_vocab, text))) == p.source);
  }
}

TEST_CASE("vocabulary round trip") {
  const Vocab& v = grammar().target_vocab();
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.id(v.word(static_cast<TokenId>(i))) == static_cast<TokenId>(i));
  CHECK(v.id("never-seen") == kUnk);
  std::stringstream ss;
  write_vocab(v, ss);
  CHECK(read_vocab(ss) == v);
  CHECK_THROWS_AS(v.word(static_cast<TokenId>(v.size())), std::out_of_range);
}

TEST_CASE("empty sentences are rejected") {
  CHECK_THROWS_AS(build_vocab_and_tokenize({{"ok .", "fine ."}, {"  ", "x"}}), std::invalid_argument);
  CHECK_THROWS_AS(build_vocab_and_tokenize({{"ok .", ""}}), std::invalid_argument);
}

TEST_CASE("grammar shape") {
  const auto& g = grammar();
  CHECK(g.target_words(PosTag::noun).size() == 40);
  CHECK(g.target_words(PosTag::verb).size() == 20);
  CHECK(g.target_words(PosTag::adjective).size() == 15);
  CHECK(g.target_words(PosTag::adjuvant).size() == 10);
  CHECK(g.source_vocab().size() == g.target_vocab().size());
  for (const auto& t : g.templates()) {
    CHECK(t.size() >= 4);
    CHECK(t.size() <= 12);
    CHECK(t.back() == PosTag::marker);
  }
  for (const Vocab* v : {&g.source_vocab(), &g.target_vocab()}) {
    for (std::size_t i = kNumSpecial; i < v->size(); ++i) {
      const auto id = static_cast<TokenId>(i);
      if (v->word(id) != ".") CHECK(v->word(id).size() >= 4);
    }
  }
}

TEST_CASE("dictionary is a tag-preserving bijection") {
  const auto& g = grammar();
  const Vocab& t = g.target_vocab();
  std::vector<bool> hit(g.source_vocab().size(), false);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    const TokenId s = g.to_source(id);
    if (id == kUnk) continue;
    CHECK(!hit[static_cast<std::size_t>(s)]);
    hit[static_cast<std::size_t>(s)] = true;
    CHECK(g.to_target(s) == id);
    CHECK(g.source_vocab().tag(s) == t.tag(id));
  }
  // Ids differ between languages for at least some words.
  std::size_t moved = 0;
  for (TokenId n : g.target_words(PosTag::noun)) moved += g.to_source(n) != n;
  CHECK(moved > 0);
}

TEST_CASE("generation is reproducible") {
  const auto a = generate_corpus(grammar(), 1, 5);
  const auto b = generate_corpus(grammar(), 1, 5);
  CHECK(a.pairs == b.pairs);
  const auto c = generate_corpus(grammar(), 50, 5);
  const auto d = generate_corpus(grammar(), 50, 6);
  CHECK(c.pairs != d.pairs);
  CHECK(c.pairs[0] == a.pairs[0]);
  const auto tail = generate_pairs(grammar(), 10, 5, 40);
  for (std::size_t i = 0; i < 10; ++i) CHECK(tail[i] == c.pairs[40 + i]);
  CHECK_THROWS(generate_corpus(grammar(), 0, 1));
}

TEST_CASE("every pair satisfies the reordering rule") {
  const auto& g = grammar();
  const auto c = generate_corpus(g, 2000, 17);
  std::size_t flipped = 0;
  for (const auto& p : c.pairs) {
    REQUIRE(p.source.size() == p.target.size());
    // Undo the reorder on the source side, translate back, compare.
    const auto order = target_order(p.source_tags);
    std::vector<TokenId> back;
    std::vector<PosTag> back_tags;
    for (std::size_t k : order) {
      back.push_back(g.to_target(p.source[k]));
      back_tags.push_back(p.source_tags[k]);
    }
    CHECK(back == p.target);
    CHECK(back_tags == p.target_tags);
    for (std::size_t k = 0; k + 1 < p.target_tags.size(); ++k) {
      if (p.target_tags[k] == PosTag::adjective && p.target_tags[k + 1] == PosTag::noun) ++flipped;
      CHECK(!(p.source_tags[k] == PosTag::adjective && p.source_tags[k + 1] == PosTag::noun));
    }
    auto st = p.source_tags;
    auto tt = p.target_tags;
    std::sort(st.begin(), st.end());
    std::sort(tt.begin(), tt.end());
    CHECK(st == tt);
    CHECK(p.source.front() == kStart);
    CHECK(p.source.back() == kEnd);
    CHECK(p.target.front() == kStart);
    CHECK(p.target.back() == kEnd);
  }
  CHECK(flipped > 500);
}

TEST_CASE("reorder permutations are mutually inverse") {
  using T = PosTag;
  const std::vector<T> tags = {T::adjuvant, T::adjective, T::adjective, T::noun, T::verb, T::adjuvant, T::adjective, T::noun, T::marker};
  const auto so = source_order(tags);
  CHECK(so == std::vector<std::size_t>{0, 3, 1, 2, 4, 5, 7, 6, 8});
  std::vector<T> src;
  for (auto k : so) src.push_back(tags[k]);
  const auto to = target_order(src);
  std::vector<T> back;
  for (auto k : to) back.push_back(src[k]);
  CHECK(back == tags);
}

TEST_CASE("tag histogram matches template frequencies") {
  const auto& g = grammar();
  std::map<PosTag, double> expected;
  double mean_len = 0.0;
  for (const auto& t : g.templates()) {
    for (PosTag tag : t) expected[tag] += 1.0;
    mean_len += static_cast<double>(t.size());
  }
  for (auto& [tag, v] : expected) v /= mean_len;

  const auto c = generate_corpus(g, 10000, 99);
  std::map<PosTag, double> seen;
  double total = 0.0;
  for (const auto& p : c.pairs) {
    for (std::size_t k = 1; k + 1 < p.target_tags.size(); ++k) {
      seen[p.target_tags[k]] += 1.0;
      total += 1.0;
    }
  }
  for (const auto& [tag, share] : expected) {
    const std::string name(to_string(tag));
    CAPTURE(name);
    CHECK(std::abs(seen[tag] / total - share) < 0.02);
  }
}

TEST_CASE("batch label shift") {
  TokenizedPair p;
  p.id = 7;
  p.source = {kStart, 10, 11, kEnd};
  p.target = {kStart, 20, 21, kEnd};
  const Batch b = make_batch({&p});
  CHECK(b.target_in == std::vector<TokenId>{kStart, 20, 21});
  CHECK(b.target_out == std::vector<TokenId>{20, 21, kEnd});
  CHECK(b.pair_ids == std::vector<std::size_t>{7});
}

TEST_CASE("batches pad to the batch maximum and cover the set once") {
  const auto c = generate_corpus(grammar(), 203, 3);
  const auto batches = make_batches(c.pairs, 16, 42, 0);
  CHECK(batches.size() == 13);
  std::vector<std::size_t> ids;
  for (const auto& b : batches) {
    CHECK(b.source.size() == b.size * b.source_len);
    CHECK(b.target_in.size() == b.size * b.target_len);
    CHECK(*std::max_element(b.source_lengths.begin(), b.source_lengths.end()) == b.source_len);
    CHECK(*std::max_element(b.target_lengths.begin(), b.target_lengths.end()) == b.target_len);
    for (std::size_t r = 0; r < b.size; ++r) {
      const auto& p = c.pairs[b.pair_ids[r]];
      for (std::size_t t = p.source.size(); t < b.source_len; ++t) CHECK(b.src(r, t) == kPad);
      for (std::size_t t = b.target_lengths[r]; t < b.target_len; ++t) {
        CHECK(b.in(r, t) == kPad);
        CHECK(b.out(r, t) == kPad);
      }
      // target-in[0] followed by target-out rebuilds the target.
      std::vector<TokenId> rebuilt{b.in(r, 0)};
      for (std::size_t t = 0; t < b.target_lengths[r]; ++t) rebuilt.push_back(b.out(r, t));
      CHECK(rebuilt == p.target);
      ids.push_back(b.pair_ids[r]);
    }
  }
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i] == i);
  CHECK(ids.size() == 203);
}

TEST_CASE("batch order is deterministic per seed and epoch") {
  const auto c = generate_corpus(grammar(), 100, 3);
  auto order = [&](std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> ids;
    for (const auto& b : make_batches(c.pairs, 8, seed, epoch))
      ids.insert(ids.end(), b.pair_ids.begin(), b.pair_ids.end());
    return ids;
  };
  CHECK(order(1, 0) == order(1, 0));
  CHECK(order(1, 0) != order(1, 1));
  CHECK(order(1, 0) != order(2, 0));
  CHECK_THROWS_AS(make_batches(c.pairs, 0, 1), std::invalid_argument);
}

TEST_CASE("token filter") {
  Corpus c = build_vocab_and_tokenize({{"the house of ação são .", "x"}});
  Vocab v = c.source_vocab;
  const TokenId suffix = v.add("ment");
  v.mark_suffix(suffix);
  const auto keep = token_filter(v);
  CHECK_FALSE(keep[static_cast<std::size_t>(v.id("the"))]);
  CHECK(keep[static_cast<std::size_t>(v.id("house"))]);
  CHECK(keep[static_cast<std::size_t>(v.id("ação"))]);
  CHECK_FALSE(keep[static_cast<std::size_t>(v.id("são"))]);
  CHECK_FALSE(keep[static_cast<std::size_t>(v.id("."))]);
  CHECK_FALSE(keep[static_cast<std::size_t>(suffix)]);
  for (TokenId s = 0; s < kNumSpecial; ++s) CHECK_FALSE(keep[static_cast<std::size_t>(s)]);
}

TEST_CASE("suffix list marks vocabulary entries") {
  Corpus c = build_vocab_and_tokenize({{"casa mente .", "house ly ."}}, {{"mente", "ly"}});
  CHECK(c.source_vocab.is_suffix(c.source_vocab.id("mente")));
  CHECK(c.target_vocab.is_suffix(c.target_vocab.id("ly")));
  CHECK_FALSE(c.source_vocab.is_suffix(c.source_vocab.id("casa")));
}

TEST_CASE("tsv loading") {
  const auto good = temp_file("good.tsv", "ola mundo .\thello world .\nbom dia .\tgood morning .\n");
  const auto r = load_tsv(good);
  CHECK(r.pairs.size() == 2);
  CHECK(r.pairs[1].line == 2);

  const auto crlf = temp_file("crlf.tsv", "ola .\thello .\r\n\r\nbom .\tgood .\r\n");
  const auto rc = load_tsv(crlf);
  REQUIRE(rc.pairs.size() == 2);
  CHECK(rc.pairs[0].target == "hello .");
  CHECK(rc.pairs[1].line == 3);

  const auto bad = temp_file("bad.tsv", "ola .\thello .\nno tab here\nbom .\tgood .\n");
  try {
    load_tsv(bad);
    FAIL("expected TsvError");
  } catch (const TsvError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  const auto lenient = load_tsv(bad, false);
  CHECK(lenient.pairs.size() == 2);
  REQUIRE(lenient.issues.size() == 1);
  CHECK(lenient.issues[0].line == 2);
  CHECK_THROWS_AS(load_tsv("/nonexistent/helix.tsv"), std::runtime_error);
}

TEST_CASE("tsv export round trip") {
  const auto c = generate_corpus(grammar(), 30, 8);
  std::stringstream ss;
  write_tsv(c, c.pairs, ss);
  const auto raw = parse_tsv(ss);
  const auto back = tokenize_with(c.source_vocab, c.target_vocab, raw.pairs, true);
  REQUIRE(back.size() == c.pairs.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].source == c.pairs[i].source);
    CHECK(back[i].target == c.pairs[i].target);
    CHECK(back[i].target_tags == c.pairs[i].target_tags);
  }
  std::stringstream tags;
  write_tags(c.target_vocab, tags);
  std::string line;
  std::size_t n = 0;
  while (std::getline(tags, line)) {
    ++n;
    CHECK(std::count(line.begin(), line.end(), '\t') == 1);
  }
  CHECK(n == 40 + 20 + 15 + 10 + 1);
}
