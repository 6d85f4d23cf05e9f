#include "segment.hpp"

#include <algorithm>
#include <cctype>

#include "io_util.hpp"

namespace mdbert {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_terminator(char c) { return c == '.' || c == '?' || c == '!'; }

}  // namespace

std::vector<std::string> segment(const std::string& text) {
  std::string work = text;
  const std::size_t n = work.size();
  std::vector<std::size_t> starts;  // sentence start offsets, always contains 0

  // Pass 1: bullet markers "<digits>. " where a sentence could begin.
  // last_nonspace tracks the previous non-whitespace character.
  char last_nonspace = '\0';
  bool saw_newline_gap = false;
  std::size_t i = 0;
  while (i < n) {
    if (is_space(work[i])) {
      if (work[i] == '\n') saw_newline_gap = true;
      ++i;
      continue;
    }
    const bool at_sentence_start =
        last_nonspace == '\0' || is_terminator(last_nonspace) || saw_newline_gap;
    if (at_sentence_start && is_digit(work[i])) {
      std::size_t j = i;
      while (j < n && is_digit(work[j])) ++j;
      if (j < n && work[j] == '.' && j + 1 < n && is_space(work[j + 1])) {
        work[j] = ',';
        starts.push_back(i);
        last_nonspace = ',';
        saw_newline_gap = false;
        i = j + 1;
        continue;
      }
    }
    last_nonspace = work[i];
    saw_newline_gap = false;
    ++i;
  }

  // Pass 2: terminator followed by whitespace and an uppercase letter.
  for (std::size_t p = 0; p < n; ++p) {
    if (!is_terminator(work[p])) continue;
    std::size_t q = p + 1;
    if (q >= n || !is_space(work[q])) continue;
    while (q < n && is_space(work[q])) ++q;
    if (q < n && is_upper(work[q])) starts.push_back(q);
  }

  starts.push_back(0);
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());

  std::vector<std::string> sentences;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const std::size_t begin = starts[s];
    const std::size_t end = s + 1 < starts.size() ? starts[s + 1] : n;
    const std::string piece = trim(work.substr(begin, end - begin));
    if (!piece.empty()) sentences.push_back(piece);
  }
  return sentences;
}

}  // namespace mdbert
