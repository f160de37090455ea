#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rsb/model.hpp"
#include "rsb/usbp.hpp"

namespace rsb {

// Minimal structured config format (TOML-like): [dotted.section] headers,
// key = value lines, values are numbers, booleans, "strings" or [arrays].
struct ConfigValue {
  std::variant<double, bool, std::string, std::vector<ConfigValue>> v;

  bool is_number() const { return std::holds_alternative<double>(v); }
  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_array() const { return std::holds_alternative<std::vector<ConfigValue>>(v); }
  double num() const;
  bool boolean() const;
  const std::string& str() const;
  const std::vector<ConfigValue>& array() const;
};

class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& dotted_key) const;
  const ConfigValue& get(const std::string& dotted_key) const;
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  std::string string(const std::string& key) const;
  std::string string_or(const std::string& key, const std::string& fallback) const;
  bool bool_or(const std::string& key, bool fallback) const;

  // keys directly under a section prefix (one level)
  std::vector<std::string> keys_under(const std::string& prefix) const;

  std::uint64_t content_hash() const;
  const std::string& text() const { return text_; }

 private:
  std::map<std::string, ConfigValue> entries_;
  std::string text_;
};

// [model] section -> ModelSpec (expressions over t, x1..xd and, for gamma,
// z1..zl; [params] names are inlined as constants).
ModelSpec load_model(const ConfigFile& cfg);

// [usbp] section (+ single-regime [model]) -> killing model and target.
KillingModel load_killing_model(const ConfigFile& cfg);
UsbpTarget load_usbp_target(const ConfigFile& cfg, const KillingModel& km, const Grid& grid);

Grid load_grid(const ConfigFile& cfg, const std::string& override_spec = "");

}  // namespace rsb
