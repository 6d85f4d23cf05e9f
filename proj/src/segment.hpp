#pragma once

#include <string>
#include <vector>

namespace mdbert {

// Rule-based sentence segmentation. Enumerated-list markers like "1. "
// at the start of the text, of a line, or of a sentence are rewritten to
// "1, " (and start a new sentence) so the marker does not end one; other
// splits happen at ./?/! followed by whitespace and an uppercase letter,
// or at end of text. Deterministic and idempotent.
std::vector<std::string> segment(const std::string& text);

}  // namespace mdbert
