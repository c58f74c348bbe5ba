#ifndef UNROLL_TOOLS_CONFIG_HPP
#define UNROLL_TOOLS_CONFIG_HPP

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class KeyType { Int, Real, Bool, Text };

struct KeyDef {
  std::string name;
  KeyType type;
  std::string fallback;
  std::string choices;  // "a|b|c" for enumerated text keys, empty otherwise
  std::string help;
};

const std::vector<KeyDef>& key_table();
std::vector<std::string> preset_names();

// Flat, typed key = value configuration. Every key has a default; values are
// stored in canonical text form so an echoed file reproduces the run exactly.
class Config {
 public:
  Config();

  void set(const std::string& key, const std::string& raw);
  // Preset values on top of the defaults. The preset name is recorded.
  void apply_preset(const std::string& name);
  // Layers a file over the current values. A `preset` entry in the file is
  // applied first unless `preset_override` is non-empty.
  void load_file(const std::string& path, const std::string& preset_override = "");
  void merge(const std::map<std::string, std::string>& values);

  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  const std::string& text(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string dump() const;
  void write(const std::string& path) const;

 private:
  const std::string& raw(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

// key = value pairs in file order; '#' starts a comment line.
std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path);

}  // namespace cli

#endif  // UNROLL_TOOLS_CONFIG_HPP
