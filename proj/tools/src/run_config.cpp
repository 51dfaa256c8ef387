#include "univ_cli/run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include "univ/error.hpp"

namespace univ::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    bad_value(key, value, std::is_floating_point_v<T> ? "a number" : "a non-negative integer");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& value, const std::filesystem::path& base)>
      set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number(T RunConfig::*outer) {
  return {[outer](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
            c.*outer = parse_number<T>(k, v);
          },
          [outer](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt(c.*outer);
            else return std::to_string(c.*outer);
          }};
}

template <typename S, typename T>
Field nested(S RunConfig::*outer, T S::*inner) {
  return {[outer, inner](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
            (c.*outer).*inner = parse_number<T>(k, v);
          },
          [outer, inner](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt((c.*outer).*inner);
            else return std::to_string((c.*outer).*inner);
          }};
}

Field path_field(std::optional<std::filesystem::path> RunConfig::*member) {
  return {[member](RunConfig& c, const std::string&, const std::string& v, const std::filesystem::path& base) {
            if (v.empty()) {
              (c.*member).reset();
              return;
            }
            std::filesystem::path p(v);
            c.*member = p.is_relative() && !base.empty() ? base / p : p;
          },
          [member](const RunConfig& c) { return (c.*member) ? (c.*member)->string() : std::string(); }};
}

const std::vector<std::pair<std::string, Field>>& schema() {
  using train::TrainConfig;
  using encoder::EncoderConfig;
  using lora::LoraConfig;
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"image_size", nested(&RunConfig::encoder, &EncoderConfig::image_size)},
      {"patch_size", nested(&RunConfig::encoder, &EncoderConfig::patch_size)},
      {"channels", nested(&RunConfig::encoder, &EncoderConfig::channels)},
      {"depth", nested(&RunConfig::encoder, &EncoderConfig::depth)},
      {"dim", nested(&RunConfig::encoder, &EncoderConfig::dim)},
      {"heads", nested(&RunConfig::encoder, &EncoderConfig::heads)},
      {"mlp_ratio", nested(&RunConfig::encoder, &EncoderConfig::mlp_ratio)},
      {"epochs", nested(&RunConfig::train, &TrainConfig::epochs)},
      {"warmup_epochs", nested(&RunConfig::train, &TrainConfig::warmup_epochs)},
      {"base_lr", nested(&RunConfig::train, &TrainConfig::base_lr)},
      {"weight_decay", nested(&RunConfig::train, &TrainConfig::weight_decay)},
      {"beta1", nested(&RunConfig::train, &TrainConfig::beta1)},
      {"beta2", nested(&RunConfig::train, &TrainConfig::beta2)},
      {"adam_eps", nested(&RunConfig::train, &TrainConfig::adam_eps)},
      {"batch_size", nested(&RunConfig::train, &TrainConfig::batch_size)},
      {"tau", nested(&RunConfig::train, &TrainConfig::tau)},
      {"gamma", nested(&RunConfig::train, &TrainConfig::gamma)},
      {"alpha", nested(&RunConfig::train, &TrainConfig::alpha)},
      {"beta", nested(&RunConfig::train, &TrainConfig::beta)},
      {"loss_kind",
       {[](RunConfig& c, const std::string&, const std::string& v, const auto&) {
          c.train.loss_kind = pccl::parse_loss_kind(v);
        },
        [](const RunConfig& c) { return std::string(pccl::to_string(c.train.loss_kind)); }}},
      {"lora",
       {[](RunConfig& c, const std::string& k, const std::string& v, const auto&) { c.use_lora = parse_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.use_lora ? "true" : "false"); }}},
      {"lora_rank", nested(&RunConfig::lora, &LoraConfig::rank)},
      {"lora_alpha", nested(&RunConfig::lora, &LoraConfig::alpha)},
      {"lora_dropout", nested(&RunConfig::lora, &LoraConfig::dropout)},
      {"lora_targets",
       {[](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
          c.lora.target_modules = split_list(v);
          if (c.lora.target_modules.empty()) bad_value(k, v, "a comma-separated list");
        },
        [](const RunConfig& c) { return join(c.lora.target_modules); }}},
      {"manifest", path_field(&RunConfig::manifest)},
      {"teacher_checkpoint", path_field(&RunConfig::teacher_checkpoint)},
      {"pairs", number(&RunConfig::pairs)},
      {"night_fraction", number(&RunConfig::night_fraction)},
      {"probe_samples", number(&RunConfig::probe_samples)},
      {"probe_train_fraction", number(&RunConfig::probe_train_fraction)},
      {"probe_ridge", number(&RunConfig::probe_ridge)},
      {"forget_seeds",
       {[](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
          c.forget_seeds.clear();
          for (const auto& item : split_list(v)) c.forget_seeds.push_back(parse_number<std::uint64_t>(k, item));
          if (c.forget_seeds.empty()) bad_value(k, v, "a comma-separated list of seeds");
        },
        [](const RunConfig& c) {
          std::vector<std::string> items;
          for (auto s : c.forget_seeds) items.push_back(std::to_string(s));
          return join(items);
        }}},
      {"seed", number(&RunConfig::seed)},
  };
  return fields;
}

}  // namespace

train::TrainConfig RunConfig::resolved_train() const {
  train::TrainConfig t = train;
  t.seed = seed;
  if (use_lora) t.lora = lora;
  else t.lora.reset();
  return t;
}

data::SyntheticTask RunConfig::task() const {
  return data::synthetic_task(encoder.image_size);
}

train::ProbeOptions RunConfig::probe() const { return {probe_train_fraction, probe_ridge}; }

train::ForgettingConfig RunConfig::forgetting() const {
  train::ForgettingConfig f;
  f.encoder = encoder;
  f.train = resolved_train();
  f.train.lora.reset();
  f.lora = lora;
  f.task = task();
  f.train_pairs = pairs;
  f.night_fraction = night_fraction;
  f.probe_samples = probe_samples;
  f.probe = probe();
  f.seeds = forget_seeds;
  return f;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, field] : schema()) k.push_back(name);
    return k;
  }();
  return keys;
}

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir) {
  std::map<std::string, const Field*> lookup;
  for (const auto& [name, field] : schema()) lookup.emplace(name, &field);

  RunConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(text).substr(0, eq));
    const std::string value = trim(std::string_view(text).substr(eq + 1));
    const auto it = lookup.find(key);
    if (it == lookup.end()) throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(line_no) + ")");
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
    it->second->set(cfg, key, value, base_dir);
  }

  cfg.encoder.validate();
  cfg.resolved_train().validate();
  if (!(cfg.night_fraction >= 0.0 && cfg.night_fraction <= 1.0)) {
    throw ConfigError("config key 'night_fraction': must lie in [0, 1]");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_run_config(in, path.parent_path());
}

bool apply_seed_override(RunConfig& cfg) {
  const char* env = std::getenv("UNIV_SEED");
  if (env == nullptr || *env == '\0') return false;
  cfg.seed = parse_number<std::uint64_t>("UNIV_SEED", env);
  return true;
}

std::string describe(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : schema()) out += name + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace univ::cli
