#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kfmt {

bool is_blank(std::string_view s) noexcept;
std::string_view trim_view(std::string_view s) noexcept;
std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_whitespace(std::string_view s);

// UTF-8 code points as individual byte strings. Invalid lead bytes are taken
// as single bytes so the function is total over arbitrary input.
std::vector<std::string> utf8_chars(std::string_view s);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// Current UTC time, second precision, "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

}  // namespace kfmt
