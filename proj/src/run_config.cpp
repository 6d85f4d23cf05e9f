#include "run_config.hpp"

#include <algorithm>
#include <sstream>

#include "errors.hpp"
#include "io_util.hpp"

namespace mdbert {

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      // data
      "train_path", "dev_path", "dev_fraction", "vocab_path", "labels_path", "out_dir", "fields",
      "strict_labels",
      // model
      "hidden_dim", "num_heads", "token_layers", "sentence_layers", "ffn_dim",
      "max_tokens_per_sentence", "max_sentences_per_doc", "dropout",
      "sentence_position_embeddings", "head", "head_level",
      // optimization
      "seed", "lr", "weight_decay", "beta1", "beta2", "adam_eps", "frozen_epochs", "patience",
      "max_epochs", "batch_sentence_budget",
      // loss
      "desc_augmentation", "w_doc", "w_desc",
  };
  return keys;
}

void RunConfig::set_checked(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end())
    throw UsageError("config: unknown key '" + key + "'");
  values_[key] = value;
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config " + path + " line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    cfg.set_checked(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::apply_override(const std::string& key, const std::string& value) {
  set_checked(key, value);
}

void RunConfig::apply_override_expr(const std::string& expr) {
  const std::size_t eq = expr.find('=');
  if (eq == std::string::npos) throw UsageError("override must look like key=value, got '" + expr + "'");
  set_checked(trim(expr.substr(0, eq)), trim(expr.substr(eq + 1)));
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw UsageError("config: key '" + key + "' is not a number: '" + it->second + "'");
  }
}

std::size_t RunConfig::get_size(const std::string& key, std::size_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw UsageError("config: key '" + key + "' is not an integer: '" + it->second + "'");
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  return get_size(key, static_cast<std::size_t>(fallback));
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string v = to_lower(it->second);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config: key '" + key + "' is not a boolean: '" + it->second + "'");
}

}  // namespace mdbert
