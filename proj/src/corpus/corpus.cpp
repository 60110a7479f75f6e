#include "helix/corpus/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace helix::corpus {

namespace {

std::string pair_label(const RawPair& p, std::size_t index) {
  return "pair " + std::to_string(index) + (p.line ? " (line " + std::to_string(p.line) + ")" : std::string());
}

bool blank(std::string_view s) {
  for (char c : s)
    if (c != ' ' && c != '\t' && c != '\r' && c != '\n') return false;
  return true;
}

std::vector<PosTag> tags_of(const Vocab& v, const std::vector<TokenId>& ids) {
  std::vector<PosTag> t;
  t.reserve(ids.size());
  for (TokenId id : ids) t.push_back(v.tag(id));
  return t;
}

}  // namespace

Corpus build_vocab_and_tokenize(const std::vector<RawPair>& pairs, const TokenizeOptions& options) {
  Corpus c;
  std::vector<std::vector<std::string>> src_words;
  std::vector<std::vector<std::string>> tgt_words;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    src_words.push_back(tokenize_text(pairs[i].source));
    tgt_words.push_back(tokenize_text(pairs[i].target));
    if (src_words.back().empty()) throw std::invalid_argument(pair_label(pairs[i], i) + ": empty source sentence");
    if (tgt_words.back().empty()) throw std::invalid_argument(pair_label(pairs[i], i) + ": empty target sentence");
  }
  auto add_all = [](Vocab& v, const std::vector<std::string>& words) {
    for (const auto& w : words) {
      const TokenId id = v.add(w);
      if (v.is_punctuation(id)) v.set_tag(id, PosTag::marker);
    }
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    add_all(c.source_vocab, src_words[i]);
    add_all(c.target_vocab, tgt_words[i]);
  }
  for (const auto& s : options.suffixes) {
    if (c.source_vocab.contains(s)) c.source_vocab.mark_suffix(c.source_vocab.id(s));
    if (c.target_vocab.contains(s)) c.target_vocab.mark_suffix(c.target_vocab.id(s));
  }
  c.pairs = tokenize_with(c.source_vocab, c.target_vocab, pairs, false);
  return c;
}

std::vector<TokenizedPair> tokenize_with(const Vocab& source_vocab, const Vocab& target_vocab,
                                         const std::vector<RawPair>& pairs, bool tagged) {
  std::vector<TokenizedPair> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    TokenizedPair tp;
    tp.id = i;
    tp.source = encode(source_vocab, pairs[i].source);
    tp.target = encode(target_vocab, pairs[i].target);
    if (tp.source.size() < 3) throw std::invalid_argument(pair_label(pairs[i], i) + ": empty source sentence");
    if (tp.target.size() < 3) throw std::invalid_argument(pair_label(pairs[i], i) + ": empty target sentence");
    if (tagged) {
      tp.source_tags = tags_of(source_vocab, tp.source);
      tp.target_tags = tags_of(target_vocab, tp.target);
    }
    out.push_back(std::move(tp));
  }
  return out;
}

TsvError::TsvError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

TsvResult parse_tsv(std::istream& in, bool strict) {
  TsvResult r;
  std::string line;
  std::size_t n = 0;
  auto fail = [&](const std::string& msg) {
    if (strict) throw TsvError(n, msg);
    r.issues.push_back({n, msg});
  };
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      fail("missing tab separator");
      continue;
    }
    if (line.find('\t', tab + 1) != std::string::npos) {
      fail("more than one tab separator");
      continue;
    }
    RawPair p{line.substr(0, tab), line.substr(tab + 1), n};
    if (blank(p.source)) {
      fail("empty source sentence");
      continue;
    }
    if (blank(p.target)) {
      fail("empty target sentence");
      continue;
    }
    r.pairs.push_back(std::move(p));
  }
  return r;
}

TsvResult load_tsv(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_tsv(in, strict);
}

void write_tsv(const Corpus& corpus, const std::vector<TokenizedPair>& pairs, std::ostream& out) {
  for (const auto& p : pairs)
    out << decode(corpus.source_vocab, p.source) << '\t' << decode(corpus.target_vocab, p.target) << '\n';
}

void write_tags(const Vocab& vocab, std::ostream& out) {
  for (std::size_t i = kNumSpecial; i < vocab.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    if (vocab.tag(id) != PosTag::other) out << vocab.word(id) << '\t' << to_string(vocab.tag(id)) << '\n';
  }
}

}  // namespace helix::corpus
