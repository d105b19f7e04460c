#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "cidml/synthgen.hpp"

namespace cidml {

// Strict reader over one JSON object: typed getters with JSON-path
// diagnostics, and finish() rejects any key that was never consumed.
class JsonCursor {
 public:
  JsonCursor(const nlohmann::json& node, std::string path);

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const;

  double number(const std::string& key, double fallback);
  double require_number(const std::string& key);
  std::optional<double> optional_number(const std::string& key);  // null ok
  long long integer(const std::string& key, long long fallback);
  long long require_integer(const std::string& key);
  std::optional<long long> optional_integer(const std::string& key);
  std::uint64_t seed(const std::string& key, std::uint64_t fallback);
  bool boolean(const std::string& key, bool fallback);
  std::string str(const std::string& key, const std::string& fallback);
  std::string require_str(const std::string& key);

  // Object-valued child; missing key yields a cursor over an empty object.
  JsonCursor child(const std::string& key);
  bool has_object(const std::string& key);
  // Marks the key consumed and returns it untyped.
  const nlohmann::json& raw(const std::string& key);

  void finish() const;  // throws ConfigError on unconsumed keys

  [[noreturn]] void fail(const std::string& message) const;
  [[noreturn]] void fail_key(const std::string& key,
                             const std::string& message) const;

 private:
  static const nlohmann::json& empty_object();
  const nlohmann::json* node_;
  std::string path_;
  mutable std::set<std::string> seen_;
};

// Strict DGP spec codec shared by the synthetic data block, the generate
// subcommand, and the study runners.
DgpSpec dgp_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json dgp_to_json(const DgpSpec& spec);

}  // namespace cidml
