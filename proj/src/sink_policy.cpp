#include "have/sink_policy.hpp"

namespace have {
namespace {

// Decodes one UTF-8 code point starting at `i`, advancing `i`. Malformed
// sequences decode to U+FFFD one byte at a time.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto lead = static_cast<unsigned char>(s[i]);
  int extra = 0;
  char32_t cp = 0;
  if (lead < 0x80) {
    ++i;
    return lead;
  } else if ((lead & 0xE0) == 0xC0) {
    extra = 1;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    extra = 2;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    extra = 3;
    cp = lead & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + extra >= s.size()) {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k <= extra; ++k) {
    const auto c = static_cast<unsigned char>(s[i + k]);
    if ((c & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (c & 0x3F);
  }
  i += extra + 1;
  return cp;
}

bool is_space_code_point(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
    // tokenizer glyphs for space, newline, tab
    case 0x2581: case 0x0120: case 0x010A: case 0x0109:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

}  // namespace

bool is_whitespace_surface(std::string_view surface) {
  std::size_t i = 0;
  while (i < surface.size()) {
    if (!is_space_code_point(next_code_point(surface, i))) return false;
  }
  return true;
}

bool SinkPolicy::is_sink(TokenId token_id, std::string_view surface) const {
  return special_ids.contains(token_id) || is_whitespace_surface(surface);
}

bool SinkPolicy::is_sink(const ContextToken& token) const {
  return (honor_recorded_flags && token.is_sink) || is_sink(token.token_id, token.surface);
}

std::optional<std::string> sink_policy_mismatch(const TraceHeader& header, const SinkPolicy& policy) {
  if (header.sink_policy_id == policy.id) return std::nullopt;
  return "trace records sink policy " + std::to_string(header.sink_policy_id) + ", replay uses policy " +
         std::to_string(policy.id);
}

}  // namespace have
