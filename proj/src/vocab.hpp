#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace mdbert {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr TokenId kMaskId = 4;
inline constexpr std::size_t kNumReserved = 5;

// Subword vocabulary with fixed reserved ids 0..4 ([PAD],[UNK],[CLS],[SEP],
// [MASK]). Continuation pieces carry a "##" prefix.
class Vocab {
 public:
  Vocab();
  explicit Vocab(const std::vector<std::string>& pieces);  // reserved prepended if absent

  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_[id]; }
  bool contains(const std::string& piece) const { return ids_.count(piece) != 0; }
  TokenId id(const std::string& piece) const;

  // Output is [CLS] followed by pieces, truncated to max_len.
  std::vector<TokenId> tokenize(const std::string& sentence, std::size_t max_len) const;

  // Ids back to piece strings (diagnostics and round-trip checks).
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;

  std::size_t max_piece_length() const { return max_piece_len_; }

 private:
  void add_piece(const std::string& piece);
  void encode_word(const std::string& word, std::vector<TokenId>& out) const;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::size_t max_piece_len_ = 1;
};

// Splits text into lowercase word-level tokens: alphanumeric runs plus
// individual punctuation characters; bracketed specials like [SEP] are kept
// whole. This is also the token definition used by the lexical ranker.
std::vector<std::string> word_tokens(const std::string& text);

// Frequency-based vocabulary: reserved pieces, every single character seen,
// then the most frequent whole words up to target_size entries.
Vocab build_vocab(const std::vector<std::string>& texts, std::size_t target_size);

}  // namespace mdbert
