#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mars {

/// Splits one CSV line; double quotes delimit fields and "" escapes a quote.
std::vector<std::string> split_csv(std::string_view line);
/// Quotes a field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);
/// Shortest text that reads back to the same double.
std::string format_double(double v);
/// Strict numeric parses: the whole field must be consumed. Throw mars::Error.
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

} // namespace mars
