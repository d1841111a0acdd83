#pragma once
// Strict JSON object reading: every key must be consumed, anything left over
// is reported as an unknown key.

#include <set>
#include <string>

#include "codemix/errors.hpp"
#include "json.hpp"

namespace codemix {

using Json = nlohmann::json;

class StrictObject {
 public:
  StrictObject(const Json& j, std::string context);

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(context_ + ": missing key '" + key + "'");
    T out{};
    read(key, out);
    return out;
  }

  const Json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  // Throws ConfigError naming the first unknown key.
  void finish() const;

 private:
  const Json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

// FNV-1a 64-bit hash of a byte string, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

// Deterministic serialization used for hashing and artifacts.
std::string canonical_dump(const Json& j, int indent = -1);

}  // namespace codemix
