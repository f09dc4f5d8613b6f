#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

namespace acmg::json_util {

using nlohmann::json;

/// Typed field access that reports problems as Error(message).
template <class Error>
struct Reader {
  std::string context;

  const json& field(const json& obj, const std::string& key) const {
    if (!obj.is_object()) throw Error(context + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw Error(context + ": missing field '" + key + "'");
    return *it;
  }

  std::uint64_t u64(const json& v, const std::string& key) const {
    if (!v.is_number_unsigned()) throw Error(context + ": '" + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  double real(const json& v, const std::string& key) const {
    if (!v.is_number()) throw Error(context + ": '" + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw Error(context + ": '" + key + "' must be finite");
    return d;
  }

  bool boolean(const json& v, const std::string& key) const {
    if (!v.is_boolean()) throw Error(context + ": '" + key + "' must be true or false");
    return v.get<bool>();
  }

  std::string str(const json& v, const std::string& key) const {
    if (!v.is_string()) throw Error(context + ": '" + key + "' must be a string");
    return v.get<std::string>();
  }

  /// Rejects keys outside `allowed`.
  void only_keys(const json& obj, const std::set<std::string>& allowed) const {
    if (!obj.is_object()) throw Error(context + ": expected an object");
    for (const auto& [k, _] : obj.items()) {
      if (!allowed.contains(k)) throw Error(context + ": unknown key '" + k + "'");
    }
  }
};

}  // namespace acmg::json_util
