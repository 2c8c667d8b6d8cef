#include "objsearch/json.hpp"
#include "objsearch/error.hpp"

#include <fstream>
#include <sstream>

namespace objsearch {
namespace json_field {
namespace {

std::string join(const std::string &path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

const Json &require(const Json &obj, std::string_view key, const std::string &path) {
  if (!obj.is_object()) {
    throw ParseError((path.empty() ? std::string("document") : path) + ": expected object");
  }
  auto it = obj.find(std::string(key));
  if (it == obj.end()) {
    throw ParseError(join(path, key) + ": missing field");
  }
  return *it;
}

} // namespace

double number(const Json &obj, std::string_view key, const std::string &path) {
  const Json &v = require(obj, key, path);
  if (!v.is_number()) throw ParseError(join(path, key) + ": expected number");
  return v.get<double>();
}

double number_or(const Json &obj, std::string_view key, double fallback,
                 const std::string &path) {
  if (!obj.is_object() || !obj.contains(std::string(key))) return fallback;
  return number(obj, key, path);
}

long long integer(const Json &obj, std::string_view key, const std::string &path) {
  const Json &v = require(obj, key, path);
  if (!v.is_number_integer()) throw ParseError(join(path, key) + ": expected integer");
  return v.get<long long>();
}

std::string string(const Json &obj, std::string_view key, const std::string &path) {
  const Json &v = require(obj, key, path);
  if (!v.is_string()) throw ParseError(join(path, key) + ": expected string");
  return v.get<std::string>();
}

const Json &object(const Json &obj, std::string_view key, const std::string &path) {
  const Json &v = require(obj, key, path);
  if (!v.is_object()) throw ParseError(join(path, key) + ": expected object");
  return v;
}

const Json &array(const Json &obj, std::string_view key, const std::string &path) {
  const Json &v = require(obj, key, path);
  if (!v.is_array()) throw ParseError(join(path, key) + ": expected array");
  return v;
}

bool boolean_or(const Json &obj, std::string_view key, bool fallback, const std::string &path) {
  if (!obj.is_object() || !obj.contains(std::string(key))) return fallback;
  const Json &v = obj.at(std::string(key));
  if (!v.is_boolean()) throw ParseError(join(path, key) + ": expected boolean");
  return v.get<bool>();
}

} // namespace json_field

Json parse_json(std::string_view text, const std::string &what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error &e) {
    // e.what() already carries "at line L, column C".
    throw ParseError(what + ": " + e.what());
  }
}

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace objsearch
