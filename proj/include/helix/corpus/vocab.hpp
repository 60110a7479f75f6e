#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace helix::corpus {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kStart = 2;
inline constexpr TokenId kEnd = 3;
inline constexpr TokenId kNumSpecial = 4;

enum class PosTag : std::uint8_t { noun, verb, adjective, adjuvant, marker, other };

std::string_view to_string(PosTag tag) noexcept;
/// Inverse of to_string; throws std::invalid_argument.
PosTag parse_tag(std::string_view text);

/// Word <-> id table. Ids 0..3 are <pad>, <unk>, <start>, <end>.
class Vocab {
 public:
  Vocab();

  /// Returns the existing id if the word is already present (tag unchanged).
  TokenId add(std::string_view word, PosTag tag = PosTag::other);
  /// kUnk for unknown words.
  TokenId id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word(TokenId id) const;
  PosTag tag(TokenId id) const;
  void set_tag(TokenId id, PosTag tag);
  std::size_t size() const noexcept { return words_.size(); }

  void mark_suffix(TokenId id);
  bool is_suffix(TokenId id) const;
  bool is_punctuation(TokenId id) const;
  static bool is_special(TokenId id) noexcept { return id >= 0 && id < kNumSpecial; }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.words_ == b.words_ && a.tags_ == b.tags_ && a.suffix_ == b.suffix_;
  }

 private:
  void check(TokenId id) const;

  std::vector<std::string> words_;
  std::vector<PosTag> tags_;
  std::vector<bool> suffix_;
  std::unordered_map<std::string, TokenId> index_;
};

/// One line per id: word TAB tag TAB suffix-flag.
void write_vocab(const Vocab& vocab, std::ostream& out);
Vocab read_vocab(std::istream& in);

/// Number of UTF-8 code points; throws std::invalid_argument on malformed input.
std::size_t utf8_length(std::string_view text);

/// Word-level split: whitespace separates words, every ASCII punctuation
/// character is its own token, ASCII letters are lower-cased.
std::vector<std::string> tokenize_text(std::string_view text);

/// [START, ids..., END]; unknown words map to kUnk.
std::vector<TokenId> encode(const Vocab& vocab, std::string_view text);
/// Words joined by single spaces; markers and padding dropped.
std::string decode(const Vocab& vocab, const std::vector<TokenId>& ids);

/// Analysis-eligible ids: at least four code points, not special, not
/// punctuation, not flagged as a suffix.
std::vector<bool> token_filter(const Vocab& vocab);

}  // namespace helix::corpus
