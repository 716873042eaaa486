#pragma once

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "spikegrad/errors.hpp"

namespace spikegrad::detail {

using Json = nlohmann::json;

inline Json parse_json(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void require_object(const Json& j, std::string_view where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + " must be a JSON object");
}

/// Rejects keys outside `allowed` so that typos in configs surface early.
inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view where) {
  require_object(j, where);
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(std::string(where) + ": unknown key '" + key + "'");
  }
}

inline void check_version(const Json& j, std::string_view where) {
  if (!j.contains("version")) throw ValidationError(std::string(where) + ": missing \"version\"");
  if (!j["version"].is_number_integer() || j["version"].get<int>() != 1) {
    throw ValidationError(std::string(where) + ": unsupported version (expected 1)");
  }
}

/// Typed read of j[key] with a readable error on type mismatch.
template <typename V>
V get(const Json& j, const char* key, std::string_view where) {
  if (!j.contains(key)) {
    throw ValidationError(std::string(where) + ": missing \"" + key + "\"");
  }
  try {
    return j.at(key).get<V>();
  } catch (const Json::exception&) {
    throw ValidationError(std::string(where) + ": \"" + key + "\" has the wrong type");
  }
}

template <typename V>
V get_or(const Json& j, const char* key, V fallback, std::string_view where) {
  return j.contains(key) ? get<V>(j, key, where) : fallback;
}

/// Reads a non-negative integer; JSON numbers like -1 would otherwise wrap.
inline std::size_t get_size(const Json& j, const char* key, std::string_view where) {
  const auto v = get<long long>(j, key, where);
  if (v < 0) throw ValidationError(std::string(where) + ": \"" + key + "\" must be non-negative");
  return static_cast<std::size_t>(v);
}

inline std::size_t get_size_or(const Json& j, const char* key, std::size_t fallback,
                               std::string_view where) {
  return j.contains(key) ? get_size(j, key, where) : fallback;
}

}  // namespace spikegrad::detail
