#include "codemix/json_util.hpp"

#include <cstdint>
#include <cstdio>

namespace codemix {

StrictObject::StrictObject(const Json& j, std::string context)
    : j_(j), context_(std::move(context)) {
  if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
}

void StrictObject::finish() const {
  for (auto it = j_.begin(); it != j_.end(); ++it) {
    if (!seen_.count(it.key()))
      throw ConfigError(context_ + ": unknown key '" + it.key() + "'");
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string canonical_dump(const Json& j, int indent) {
  // nlohmann::json objects are std::map-backed, so keys are already sorted.
  return j.dump(indent, ' ', false, nlohmann::json::error_handler_t::strict);
}

}  // namespace codemix
