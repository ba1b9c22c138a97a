#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "have/snapshot.hpp"

namespace have {

// True when `surface` is empty or consists only of whitespace code points.
// Besides Unicode white space this counts the space/newline/tab glyphs that
// byte-level and SentencePiece tokenizers render in place of whitespace
// (U+2581, U+0120, U+010A, U+0109).
bool is_whitespace_surface(std::string_view surface);

// Sink classification, policy v1: a token is a sink iff its id is one of
// the declared special ids, or its surface is whitespace-only. When
// `honor_recorded_flags` is set, a token already flagged as a sink by the
// producer of the snapshot also counts; that is how special ids survive a
// round trip through a trace, whose header does not list them.
struct SinkPolicy {
  static constexpr std::uint16_t kV1 = 1;

  std::uint16_t id = kV1;
  std::set<TokenId> special_ids;
  bool honor_recorded_flags = true;

  bool is_sink(TokenId token_id, std::string_view surface) const;
  bool is_sink(const ContextToken& token) const;
};

// A warning when the policy recorded in a trace header differs from the one
// used at replay.
std::optional<std::string> sink_policy_mismatch(const TraceHeader& header, const SinkPolicy& policy);

}  // namespace have
