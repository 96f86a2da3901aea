// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ibsynth {

/// Strips leading and trailing ASCII whitespace.
std::string trim(std::string_view s);

/// Trims and collapses every internal whitespace run into a single space.
std::string collapse_whitespace(std::string_view s);

/// Unicode NFC normalization of UTF-8 text. Invalid UTF-8 is returned unchanged.
std::string nfc(std::string_view s);

/// Full Unicode lowercase of UTF-8 text (root locale).
std::string unicode_lower(std::string_view s);

/// Label matching form: lowercase, NFC, '-' and '_' become spaces,
/// whitespace runs collapsed.
std::string normalize_for_match(std::string_view s);

/// Canonical text used for content hashing: NFC(trim(s)).
std::string canonicalize(std::string_view s);

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::span<const std::uint8_t> bytes);
inline std::string base64_encode(std::string_view s) {
  return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

/// Replaces every `{name}` occurrence of each (name, value) pair.
std::string fill_template(std::string_view tmpl,
                          std::initializer_list<std::pair<std::string_view, std::string_view>> slots);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// 64-bit FNV-1a starting from `offset_basis ^ seed`.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0);

}  // namespace ibsynth
