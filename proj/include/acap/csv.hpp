#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace acap::csv {

/// Splits one record. Fields may be wrapped in double quotes; a doubled quote
/// inside a quoted field is a literal quote. Surrounding whitespace of unquoted
/// fields is trimmed.
std::vector<std::string> split(std::string_view line, char delimiter);

/// Quotes a field if it contains the delimiter, a quote or a line break.
std::string escape(std::string_view field, char delimiter);

/// Parses a finite double. With `decimal_comma`, a single ',' is read as the
/// decimal separator.
std::optional<double> parse_double(std::string_view text, bool decimal_comma = false);
std::optional<long long> parse_int(std::string_view text);

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

/// Reads the next line, stripping a trailing '\r'. Returns false at EOF.
bool read_line(std::istream& in, std::string& line);

/// Removes a UTF-8 byte order mark from the start of `line`.
void strip_bom(std::string& line);

}  // namespace acap::csv
