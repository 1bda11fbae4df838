#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "catgcn/trainer.hpp"

namespace catgcn::cli {

enum ExitCode : int {
  kOk = 0,
  kVerifyFailed = 1,
  kUsage = 2,
  kDataError = 3,
  kDivergence = 4,
};

// Runs the tool on argv-style arguments (args[0] is the program name).
// Machine-readable output goes to `out`, the human summary and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Config keys accepted by --config files and mirrored by flags.
const std::vector<std::string_view>& config_keys();

// Sets one TrainConfig field from its textual value. Throws ContractError
// for unknown keys or unparsable values.
void apply_setting(TrainConfig& config, std::string_view key, std::string_view value);

// Reads a key=value file (blank lines and lines starting with '#' ignored).
std::map<std::string, std::string> read_settings_file(const std::string& path);

}  // namespace catgcn::cli
