#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace ctrkit {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
bool parse_double(std::string_view text, double& out);
bool parse_size(std::string_view text, std::size_t& out);

}  // namespace ctrkit
