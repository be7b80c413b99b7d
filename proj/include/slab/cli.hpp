#pragma once

// Experiment runner behind the `slab` executable. Every command reads a flat
// key=value configuration (file plus flag overrides), writes its artifacts
// into one run directory together with config.txt and metrics.json.

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace slab::cli {

struct ParamSpec {
  std::string key;
  std::string default_value;
  std::string help;
};

class Params {
 public:
  Params() = default;
  explicit Params(const std::vector<ParamSpec>& schema);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value);

  const std::string& str(const std::string& key) const;
  double real(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;  // non-negative integer
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;  // comma separated

  // Sorted key=value lines.
  std::string echo() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  bool operator==(const Params&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

// Applies key=value lines ('#' comments, blank lines allowed) on top of
// `params`. Unknown keys raise a schema error.
void apply_config_text(Params& params, std::string_view text);

// "2..12" -> 2,3,...,12; "2,4,8" -> 2,4,8; ranges and lists can be mixed.
std::vector<long long> parse_int_list(std::string_view text);

// Runs one command line (without the program name). Returns the exit code;
// failures print a single "error: code=<code> message=<text>" line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slab::cli
