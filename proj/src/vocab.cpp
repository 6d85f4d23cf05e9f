#include "vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "errors.hpp"
#include "io_util.hpp"

namespace mdbert {

namespace {

const char* const kReserved[kNumReserved] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

bool is_special_literal(const std::string& s) {
  for (const char* r : kReserved)
    if (s == r) return true;
  return false;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

Vocab::Vocab() {
  for (const char* r : kReserved) add_piece(r);
}

Vocab::Vocab(const std::vector<std::string>& pieces) {
  std::size_t start = 0;
  if (pieces.size() >= kNumReserved) {
    bool has_reserved = true;
    for (std::size_t i = 0; i < kNumReserved; ++i)
      if (pieces[i] != kReserved[i]) has_reserved = false;
    if (has_reserved) start = kNumReserved;
  }
  for (const char* r : kReserved) add_piece(r);
  for (std::size_t i = start; i < pieces.size(); ++i) {
    if (pieces[i].empty()) continue;
    if (is_special_literal(pieces[i]))
      throw DataError("vocab: reserved token '" + pieces[i] + "' out of position " +
                      std::to_string(i));
    add_piece(pieces[i]);
  }
}

void Vocab::add_piece(const std::string& piece) {
  if (ids_.count(piece)) throw DataError("vocab: duplicate piece '" + piece + "'");
  ids_[piece] = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(piece);
  const std::size_t body = piece.rfind("##", 0) == 0 ? piece.size() - 2 : piece.size();
  max_piece_len_ = std::max(max_piece_len_, body);
}

Vocab Vocab::load(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<std::string> pieces;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty()) pieces.push_back(line);
  }
  return Vocab(pieces);
}

void Vocab::save(const std::string& path) const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  write_file_atomic(path, out);
}

TokenId Vocab::id(const std::string& piece) const {
  auto it = ids_.find(piece);
  if (it == ids_.end()) throw DataError("vocab: unknown piece '" + piece + "'");
  return it->second;
}

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '[') {
      // Keep bracketed specials whole so field separators survive.
      const std::size_t close = text.find(']', i);
      if (close != std::string::npos && close - i <= 6 && is_special_literal(text.substr(i, close - i + 1))) {
        out.push_back(text.substr(i, close - i + 1));
        i = close + 1;
        continue;
      }
    }
    if (is_word_char(c)) {
      std::size_t j = i;
      while (j < n && is_word_char(text[j])) ++j;
      out.push_back(to_lower(text.substr(i, j - i)));
      i = j;
    } else {
      out.push_back(std::string(1, c));
      ++i;
    }
  }
  return out;
}

// Greedy longest-prefix match. At word-internal positions a "##"-prefixed
// continuation piece wins over a plain piece of the same length; a position
// with no match at all emits [UNK] and advances one character.
void Vocab::encode_word(const std::string& word, std::vector<TokenId>& out) const {
  std::size_t pos = 0;
  while (pos < word.size()) {
    const std::size_t remaining = word.size() - pos;
    TokenId matched = kUnkId;
    std::size_t matched_len = 0;
    for (std::size_t len = std::min(remaining, max_piece_len_); len >= 1; --len) {
      const std::string piece = word.substr(pos, len);
      if (pos > 0) {
        auto it = ids_.find("##" + piece);
        if (it != ids_.end()) {
          matched = it->second;
          matched_len = len;
          break;
        }
      }
      auto it = ids_.find(piece);
      if (it != ids_.end()) {
        matched = it->second;
        matched_len = len;
        break;
      }
    }
    if (matched_len == 0) {
      out.push_back(kUnkId);
      pos += 1;
    } else {
      out.push_back(matched);
      pos += matched_len;
    }
  }
}

std::vector<TokenId> Vocab::tokenize(const std::string& sentence, std::size_t max_len) const {
  if (max_len < 2) throw UsageError("tokenize: max_len must be at least 2");
  std::vector<TokenId> out;
  out.push_back(kClsId);
  for (const auto& word : word_tokens(sentence)) {
    if (is_special_literal(word)) {
      out.push_back(id(word));
    } else {
      encode_word(word, out);
    }
    if (out.size() >= max_len) break;
  }
  if (out.size() > max_len) out.resize(max_len);
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id >= tokens_.size()) throw DataError("decode: id out of range");
    out.push_back(tokens_[id]);
  }
  return out;
}

Vocab build_vocab(const std::vector<std::string>& texts, std::size_t target_size) {
  std::map<std::string, std::size_t> counts;  // ordered map keeps ties deterministic
  std::map<char, bool> chars;
  for (const auto& text : texts) {
    for (const auto& word : word_tokens(text)) {
      if (is_special_literal(word)) continue;
      ++counts[word];
      for (char c : word) chars[c] = true;
    }
  }
  std::vector<std::string> pieces;
  for (const auto& [c, _] : chars) pieces.push_back(std::string(1, c));
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [word, _] : ranked) {
    if (pieces.size() + kNumReserved >= target_size) break;
    if (word.size() > 1) pieces.push_back(word);
  }
  return Vocab(pieces);
}

}  // namespace mdbert
