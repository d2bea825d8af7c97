#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "soft_tue/error.hpp"

namespace soft_tue {

using Json = nlohmann::ordered_json;

inline std::string hex_u64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Accepts a JSON number or a "0x..." / decimal string.
inline std::uint64_t json_u64(const Json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < 0) throw Error(Errc::InvalidConfig, "negative value where unsigned expected");
    return static_cast<std::uint64_t>(v);
  }
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used, 0);
      if (used != s.size() || s.find('-') != std::string::npos) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(Errc::InvalidConfig, "not an integer: " + s);
    }
  }
  throw Error(Errc::InvalidConfig, "expected integer, got " + j.dump());
}

template <typename T>
T json_uint(const Json& j, std::uint64_t max) {
  const auto v = json_u64(j);
  if (v > max) throw Error(Errc::InvalidConfig, "value out of range: " + std::to_string(v));
  return static_cast<T>(v);
}

}  // namespace soft_tue
