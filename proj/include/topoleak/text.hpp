#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace topoleak::text {

/// Lowercased alphanumeric runs; every other byte (whitespace, punctuation)
/// separates tokens. Bytes >= 0x80 are kept so UTF-8 words stay whole.
std::vector<std::string> tokenize(std::string_view s);

/// Splits on ASCII whitespace without any normalization.
std::vector<std::string> split_whitespace(std::string_view s);

/// Collapses whitespace runs to one space and trims both ends.
std::string normalize_whitespace(std::string_view s);

std::string_view trim(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// |A ∩ B| / |A ∪ B| over whitespace-token sets; two empty texts give 1.
double token_jaccard(std::string_view a, std::string_view b);

/// Replaces every occurrence of `from` (non-empty) with `to`.
std::string replace_all(std::string_view s, std::string_view from, std::string_view to);

}  // namespace topoleak::text
