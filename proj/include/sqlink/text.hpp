#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sqlink {

std::string to_lower(std::string_view s);
bool ci_equal(std::string_view a, std::string_view b);
bool ci_less(std::string_view a, std::string_view b);
std::string_view trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// Case-insensitive comparator for ordered containers keyed by identifiers.
struct CiLess {
  using is_transparent = void;
  bool operator()(std::string_view a, std::string_view b) const {
    return ci_less(a, b);
  }
};

// FNV-1a, used to pin template and prompt bytes in artifacts.
std::uint64_t fnv1a64(std::string_view s);
std::string fnv1a64_hex(std::string_view s);

// Collapses newlines/tabs to single spaces and trims; description sheets
// often carry embedded line breaks that must not leak into prompt lines.
std::string single_line(std::string_view s);

}  // namespace sqlink
