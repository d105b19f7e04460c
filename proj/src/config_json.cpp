#include "cidml/config_json.hpp"

#include <limits>

#include "cidml/errors.hpp"

namespace cidml {

namespace {

std::string type_name(const nlohmann::json& j) {
  return j.type_name();
}

}  // namespace

JsonCursor::JsonCursor(const nlohmann::json& node, std::string path)
    : node_(&node), path_(std::move(path)) {
  if (!node.is_object()) {
    throw ConfigError(path_ + ": expected an object, got " + type_name(node));
  }
}

const nlohmann::json& JsonCursor::empty_object() {
  static const nlohmann::json empty = nlohmann::json::object();
  return empty;
}

bool JsonCursor::has(const std::string& key) const {
  return node_->contains(key);
}

void JsonCursor::fail(const std::string& message) const {
  throw ConfigError(path_ + ": " + message);
}

void JsonCursor::fail_key(const std::string& key,
                          const std::string& message) const {
  throw ConfigError(path_ + "." + key + ": " + message);
}

double JsonCursor::number(const std::string& key, double fallback) {
  if (!has(key)) return fallback;
  return require_number(key);
}

double JsonCursor::require_number(const std::string& key) {
  if (!has(key)) fail_key(key, "missing required number");
  seen_.insert(key);
  const auto& v = (*node_)[key];
  if (!v.is_number()) fail_key(key, "expected a number, got " + type_name(v));
  return v.get<double>();
}

std::optional<double> JsonCursor::optional_number(const std::string& key) {
  if (!has(key)) return std::nullopt;
  seen_.insert(key);
  const auto& v = (*node_)[key];
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) {
    fail_key(key, "expected a number or null, got " + type_name(v));
  }
  return v.get<double>();
}

long long JsonCursor::integer(const std::string& key, long long fallback) {
  if (!has(key)) return fallback;
  return require_integer(key);
}

long long JsonCursor::require_integer(const std::string& key) {
  if (!has(key)) fail_key(key, "missing required integer");
  seen_.insert(key);
  const auto& v = (*node_)[key];
  if (!v.is_number_integer()) {
    fail_key(key, "expected an integer, got " + type_name(v));
  }
  return v.get<long long>();
}

std::optional<long long> JsonCursor::optional_integer(const std::string& key) {
  if (!has(key)) return std::nullopt;
  seen_.insert(key);
  const auto& v = (*node_)[key];
  if (v.is_null()) return std::nullopt;
  if (!v.is_number_integer()) {
    fail_key(key, "expected an integer or null, got " + type_name(v));
  }
  return v.get<long long>();
}

std::uint64_t JsonCursor::seed(const std::string& key, std::uint64_t fallback) {
  if (!has(key)) return fallback;
  seen_.insert(key);
  const auto& v = (*node_)[key];
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    const long long s = v.get<long long>();
    if (s < 0) fail_key(key, "seed must be nonnegative");
    return static_cast<std::uint64_t>(s);
  }
  fail_key(key, "expected a nonnegative integer, got " + type_name(v));
}

bool JsonCursor::boolean(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  seen_.insert(key);
  const auto& v = (*node_)[key];
  if (!v.is_boolean()) fail_key(key, "expected a boolean, got " + type_name(v));
  return v.get<bool>();
}

std::string JsonCursor::str(const std::string& key,
                            const std::string& fallback) {
  if (!has(key)) return fallback;
  return require_str(key);
}

std::string JsonCursor::require_str(const std::string& key) {
  if (!has(key)) fail_key(key, "missing required string");
  seen_.insert(key);
  const auto& v = (*node_)[key];
  if (!v.is_string()) fail_key(key, "expected a string, got " + type_name(v));
  return v.get<std::string>();
}

JsonCursor JsonCursor::child(const std::string& key) {
  if (!has(key)) return JsonCursor(empty_object(), path_ + "." + key);
  seen_.insert(key);
  const auto& v = (*node_)[key];
  if (!v.is_object()) {
    fail_key(key, "expected an object, got " + type_name(v));
  }
  return JsonCursor(v, path_ + "." + key);
}

bool JsonCursor::has_object(const std::string& key) {
  return has(key) && (*node_)[key].is_object();
}

const nlohmann::json& JsonCursor::raw(const std::string& key) {
  if (!has(key)) fail_key(key, "missing required value");
  seen_.insert(key);
  return (*node_)[key];
}

void JsonCursor::finish() const {
  for (auto it = node_->begin(); it != node_->end(); ++it) {
    if (seen_.count(it.key()) == 0) {
      throw ConfigError(path_ + "." + it.key() + ": unknown key");
    }
  }
}

DgpSpec dgp_from_json(const nlohmann::json& j, const std::string& path) {
  JsonCursor c(j, path);
  DgpSpec spec;
  const long long n = c.require_integer("n");
  const long long m = c.integer("m", 5);
  if (n < 1) c.fail_key("n", "must be >= 1");
  if (m < 1) c.fail_key("m", "must be >= 1");
  spec.n = static_cast<std::size_t>(n);
  spec.m = static_cast<std::size_t>(m);
  spec.tau = c.number("tau", 0.0);
  if (c.has("segments")) {
    JsonCursor s = c.child("segments");
    SegmentedEffect seg;
    seg.feature = static_cast<int>(s.integer("feature", 0));
    seg.threshold = s.number("threshold", 0.0);
    seg.tau_below = s.require_number("tau_below");
    seg.tau_above = s.require_number("tau_above");
    s.finish();
    spec.segmented = seg;
  }
  spec.confounding_strength = c.number("confounding_strength", 1.0);
  spec.noise_sd = c.number("noise_sd", 1.0);
  if (!(spec.noise_sd > 0.0)) c.fail_key("noise_sd", "must be > 0");
  spec.heteroscedastic = c.boolean("heteroscedastic", false);
  spec.seed = c.seed("seed", 0);
  c.finish();
  if (spec.segmented &&
      static_cast<std::size_t>(spec.segmented->feature) >= spec.m) {
    c.fail_key("segments", "feature index out of range");
  }
  return spec;
}

nlohmann::json dgp_to_json(const DgpSpec& spec) {
  nlohmann::json j{
      {"n", spec.n},
      {"m", spec.m},
      {"tau", spec.tau},
      {"confounding_strength", spec.confounding_strength},
      {"noise_sd", spec.noise_sd},
      {"heteroscedastic", spec.heteroscedastic},
      {"seed", spec.seed},
  };
  if (spec.segmented) {
    j["segments"] = {{"feature", spec.segmented->feature},
                     {"threshold", spec.segmented->threshold},
                     {"tau_below", spec.segmented->tau_below},
                     {"tau_above", spec.segmented->tau_above}};
  }
  return j;
}

}  // namespace cidml
