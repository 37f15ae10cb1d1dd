#pragma once

#include <string>
#include <string_view>

namespace kmpc {

/// Shortest round-trip decimal form, '.' separator, independent of the C locale.
std::string format_double(double v);

/// Inverse of format_double. Throws std::invalid_argument on malformed input.
double parse_double(std::string_view s);

}  // namespace kmpc
