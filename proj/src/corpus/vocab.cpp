#include "helix/corpus/vocab.hpp"

#include <array>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace helix::corpus {

namespace {

constexpr std::array<std::string_view, 6> kTagNames = {"noun", "verb", "adjective", "adjuvant", "marker", "other"};

bool is_ascii_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

}  // namespace

std::string_view to_string(PosTag tag) noexcept { return kTagNames[static_cast<std::size_t>(tag)]; }

PosTag parse_tag(std::string_view text) {
  for (std::size_t i = 0; i < kTagNames.size(); ++i)
    if (kTagNames[i] == text) return static_cast<PosTag>(i);
  throw std::invalid_argument("unknown tag '" + std::string(text) + "'");
}

Vocab::Vocab() {
  add("<pad>", PosTag::other);
  add("<unk>", PosTag::other);
  add("<start>", PosTag::marker);
  add("<end>", PosTag::marker);
}

TokenId Vocab::add(std::string_view word, PosTag tag) {
  if (word.empty()) throw std::invalid_argument("Vocab::add: empty word");
  const auto it = index_.find(std::string(word));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(words_.size());
  words_.emplace_back(word);
  tags_.push_back(tag);
  suffix_.push_back(false);
  index_.emplace(std::string(word), id);
  return id;
}

TokenId Vocab::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view word) const { return index_.contains(std::string(word)); }

void Vocab::check(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(words_.size()));
}

const std::string& Vocab::word(TokenId id) const {
  check(id);
  return words_[static_cast<std::size_t>(id)];
}

PosTag Vocab::tag(TokenId id) const {
  check(id);
  return tags_[static_cast<std::size_t>(id)];
}

void Vocab::set_tag(TokenId id, PosTag tag) {
  check(id);
  tags_[static_cast<std::size_t>(id)] = tag;
}

void Vocab::mark_suffix(TokenId id) {
  check(id);
  suffix_[static_cast<std::size_t>(id)] = true;
}

bool Vocab::is_suffix(TokenId id) const {
  check(id);
  return suffix_[static_cast<std::size_t>(id)];
}

bool Vocab::is_punctuation(TokenId id) const {
  const std::string& w = word(id);
  if (is_special(id)) return false;
  for (char c : w)
    if (!is_ascii_punct(static_cast<unsigned char>(c))) return false;
  return true;
}

void write_vocab(const Vocab& vocab, std::ostream& out) {
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    out << vocab.word(id) << '\t' << to_string(vocab.tag(id)) << '\t' << (vocab.is_suffix(id) ? 1 : 0) << '\n';
  }
}

Vocab read_vocab(std::istream& in) {
  Vocab v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw std::invalid_argument("vocab line " + std::to_string(n) + ": expected 3 fields");
    const std::string word = line.substr(0, t1);
    const PosTag tag = parse_tag(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    const std::string flag = line.substr(t2 + 1);
    const auto expected = static_cast<TokenId>(n - 1);
    if (expected < kNumSpecial) {
      if (v.word(expected) != word) throw std::invalid_argument("vocab line " + std::to_string(n) + ": bad special token");
      continue;
    }
    if (v.add(word, tag) != expected) throw std::invalid_argument("vocab line " + std::to_string(n) + ": duplicate word");
    if (flag == "1") v.mark_suffix(expected);
  }
  return v;
}

std::size_t utf8_length(std::string_view text) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    if (c < 0x80) len = 1;
    else if ((c >> 5) == 0x6) len = 2;
    else if ((c >> 4) == 0xE) len = 3;
    else if ((c >> 3) == 0x1E) len = 4;
    else throw std::invalid_argument("invalid UTF-8 lead byte");
    if (i + len > text.size()) throw std::invalid_argument("truncated UTF-8 sequence");
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(text[i + k]) >> 6) != 0x2) throw std::invalid_argument("invalid UTF-8 continuation byte");
    i += len;
    ++count;
  }
  return count;
}

std::vector<std::string> tokenize_text(std::string_view text) {
  utf8_length(text);
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    }
  }
  flush();
  return out;
}

std::vector<TokenId> encode(const Vocab& vocab, std::string_view text) {
  std::vector<TokenId> ids{kStart};
  for (const auto& w : tokenize_text(text)) ids.push_back(vocab.id(w));
  ids.push_back(kEnd);
  return ids;
}

std::string decode(const Vocab& vocab, const std::vector<TokenId>& ids) {
  std::string out;
  for (TokenId id : ids) {
    if (id == kPad || id == kStart || id == kEnd) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.word(id);
  }
  return out;
}

std::vector<bool> token_filter(const Vocab& vocab) {
  std::vector<bool> keep(vocab.size(), false);
  for (std::size_t i = kNumSpecial; i < vocab.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    keep[i] = !vocab.is_punctuation(id) && !vocab.is_suffix(id) && utf8_length(vocab.word(id)) >= 4;
  }
  return keep;
}

}  // namespace helix::corpus
