#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ctrkit/analysis.h"
#include "ctrkit/metrics.h"
#include "ctrkit/models.h"
#include "ctrkit/optim.h"

namespace ctrkit::cli {

/// Flat `key = value` settings. Every key has a default; unknown keys are
/// errors so a typo never silently falls back to a default.
class Config {
 public:
  Config();

  /// Reads `key = value` lines; `#` starts a comment. `source` names the
  /// file in error messages.
  void parse(std::istream& in, const std::string& source);
  /// Accepts `key=value`.
  void apply_override(std::string_view assignment);
  void set(const std::string& key, std::string value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& text(const std::string& key) const;
  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t seed() const;
  bool flag(const std::string& key) const;
  /// Comma list of sizes; `AxB` expands to A copies of B.
  std::vector<std::size_t> sizes(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

ModelSpec model_spec(const Config& config);
OptimizerConfig optimizer_config(const Config& config);
TrainConfig train_config(const Config& config);
MapOptions map_options(const Config& config);
Poly2Options poly2_options(const Config& config);

}  // namespace ctrkit::cli
