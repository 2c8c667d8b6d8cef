#pragma once

#include <json.hpp>

#include <string>
#include <string_view>

namespace objsearch {

using Json = nlohmann::ordered_json;

namespace json_field {

// Typed field access that reports the dotted path of the offending field.
double number(const Json &obj, std::string_view key, const std::string &path);
double number_or(const Json &obj, std::string_view key, double fallback,
                 const std::string &path);
long long integer(const Json &obj, std::string_view key, const std::string &path);
std::string string(const Json &obj, std::string_view key, const std::string &path);
const Json &object(const Json &obj, std::string_view key, const std::string &path);
const Json &array(const Json &obj, std::string_view key, const std::string &path);
bool boolean_or(const Json &obj, std::string_view key, bool fallback,
                const std::string &path);

} // namespace json_field

/// Parses a JSON document; syntax errors become ParseError with line/column.
Json parse_json(std::string_view text, const std::string &what);

/// Reads a whole file. Throws Error when unreadable.
std::string read_file(const std::string &path);

} // namespace objsearch
