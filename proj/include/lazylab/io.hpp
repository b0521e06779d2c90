#pragma once

// Serialization helpers: CSV at full double precision (17 significant digits,
// so re-parsing reproduces the exact bits), FNV-1a hashing for config
// fingerprints, and a minimal JSON-schema structural validator.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace lazylab {

/// Shortest exact decimal form of a double ("%.17g" round-trips bit-exactly).
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// FNV-1a over a byte string; used to fingerprint canonicalized configs.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of a JSON value's canonical dump (nlohmann sorts object keys).
inline std::string config_hash(const nlohmann::json& j) {
  return hash_hex(fnv1a(j.dump()));
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Splits one CSV line on commas (fields here never contain quotes/commas).
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

/// Structural validation against a subset of JSON Schema: checks "type",
/// "required", "properties" and "items" recursively. Enough to pin the
/// summary-file layout without an external validator dependency.
inline bool schema_validate(const nlohmann::json& schema, const nlohmann::json& value,
                            std::string* why = nullptr) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (schema.contains("type")) {
    const std::string t = schema["type"].get<std::string>();
    const bool ok = (t == "object" && value.is_object()) ||
                    (t == "array" && value.is_array()) ||
                    (t == "string" && value.is_string()) ||
                    (t == "number" && value.is_number()) ||
                    (t == "integer" && value.is_number_integer()) ||
                    (t == "boolean" && value.is_boolean()) ||
                    (t == "null" && value.is_null());
    if (!ok) return fail("expected type " + t + ", got " + std::string(value.type_name()));
  }
  if (schema.contains("required")) {
    for (const auto& key : schema["required"]) {
      if (!value.contains(key.get<std::string>()))
        return fail("missing required key " + key.get<std::string>());
    }
  }
  if (schema.contains("properties") && value.is_object()) {
    for (const auto& [key, sub] : schema["properties"].items()) {
      if (value.contains(key)) {
        if (!schema_validate(sub, value.at(key), why)) {
          if (why) *why = key + ": " + *why;
          return false;
        }
      }
    }
  }
  if (schema.contains("items") && value.is_array()) {
    for (const auto& item : value) {
      if (!schema_validate(schema["items"], item, why)) return false;
    }
  }
  return true;
}

}  // namespace lazylab
