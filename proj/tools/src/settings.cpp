#include <charconv>
#include <fstream>
#include <string>

#include "catgcn/error.hpp"
#include "catgcn_cli/commands.hpp"

namespace catgcn::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ContractError("invalid value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ContractError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

}  // namespace

const std::vector<std::string_view>& config_keys() {
  static const std::vector<std::string_view> keys = {
      "learning_rate", "eta",          "dropout",          "alpha",         "rho",
      "hops",          "n_f",          "emb_dim",          "hidden_dim",    "max_epochs",
      "patience",      "seed",         "monitor",          "dropout_site",  "final_activation",
      "local_pooling", "projection_hidden", "resample_per_epoch",
  };
  return keys;
}

void apply_setting(TrainConfig& c, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
  else if (key == "eta") c.eta = parse_number<double>(key, value);
  else if (key == "dropout") c.dropout = parse_number<double>(key, value);
  else if (key == "alpha") c.alpha = parse_number<double>(key, value);
  else if (key == "rho") c.rho = parse_number<double>(key, value);
  else if (key == "hops") c.hops = parse_number<std::size_t>(key, value);
  else if (key == "n_f") c.n_f = parse_number<std::size_t>(key, value);
  else if (key == "emb_dim") c.emb_dim = parse_number<std::size_t>(key, value);
  else if (key == "hidden_dim") c.hidden_dim = parse_number<std::size_t>(key, value);
  else if (key == "max_epochs") c.max_epochs = parse_number<std::size_t>(key, value);
  else if (key == "patience") c.patience = parse_number<std::size_t>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "monitor") c.monitor = parse_monitor(value);
  else if (key == "dropout_site") c.dropout_site = parse_dropout_site(value);
  else if (key == "final_activation") c.final_activation = parse_activation(value);
  else if (key == "local_pooling") c.local_pooling = parse_local_pooling(value);
  else if (key == "projection_hidden") c.projection_hidden = parse_bool(key, value);
  else if (key == "resample_per_epoch") c.resample_per_epoch = parse_bool(key, value);
  else throw ContractError("unknown config key '" + std::string(key) + "'");
}

std::map<std::string, std::string> read_settings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path);
  std::map<std::string, std::string> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(path, lineno, "expected key=value");
    out[std::string(trim(body.substr(0, eq)))] = std::string(trim(body.substr(eq + 1)));
  }
  return out;
}

}  // namespace catgcn::cli
