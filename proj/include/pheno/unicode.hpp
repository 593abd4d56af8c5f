#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "pheno/types.hpp"

// Thin wrappers over ICU. All offsets exposed by the library are counted in
// Unicode scalar values; these helpers convert between that view and UTF-8.
namespace pheno::unicode {

/// Decodes UTF-8; ill-formed sequences become U+FFFD.
std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view text);
bool is_valid_utf8(std::string_view utf8);

/// Length in scalar values.
std::size_t length(std::string_view utf8);
/// Scalar-value substring; throws ValidationError when out of bounds.
std::string substr(std::string_view utf8, TextSpan span);

/// Letters, digits, and marks.
bool is_word_char(char32_t c);
bool is_space(char32_t c);

/// Full lowercase mapping of one code point (may yield more than one).
std::u32string lower(char32_t c);
/// Simple 1:1 lowercase mapping; keeps offsets stable.
char32_t lower_simple(char32_t c);
std::string lower(std::string_view utf8);

/// Maximal runs of word characters, lowercased.
std::vector<std::string> word_tokens(std::string_view utf8);

}  // namespace pheno::unicode
