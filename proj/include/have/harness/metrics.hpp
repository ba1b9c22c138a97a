#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace have::harness {

// SQuAD answer normalization: lowercase, drop ASCII punctuation, drop the
// articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

std::vector<std::string> answer_tokens(std::string_view text);

// 1 iff the normalized prediction equals some normalized gold answer.
int exact_match(std::string_view prediction, std::span<const std::string> golds);

// Max over golds of the bag-of-tokens F1. Empty vs empty scores 1, empty vs
// non-empty scores 0.
double token_f1(std::string_view prediction, std::span<const std::string> golds);

}  // namespace have::harness
