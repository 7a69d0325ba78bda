#include "sflab/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace sflab {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view text, std::string_view key) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw Error("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "' as a number");
  }
  return value;
}

fs::path resolve(const fs::path& base, std::string_view p) {
  fs::path path{std::string(p)};
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::vector<float> parse_float_list(std::string_view text) {
  std::vector<float> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<float>(item, "list"));
  if (out.empty()) throw Error("empty number list");
  return out;
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  data.seed = s;
  train.seed = s;
}

ModelSpec RunConfig::model_spec(Variant v) const {
  ModelSpec spec{v, mix, data.num_classes, data.height, data.width, seed};
  spec.validate();
  return spec;
}

AttackConfig RunConfig::attack_config(float epsilon) const {
  AttackConfig a{attack_domain, epsilon, eta.value_or(default_eta(epsilon)), steps};
  a.validate();
  return a;
}

void RunConfig::validate() const {
  data.validate();
  train.validate();
  if (variants.empty()) throw Error("model.variant lists no models");
  if (!(mix >= 0.0f && mix <= 1.0f)) throw Error("model.mix must lie in [0,1]");
  if (checkpoint && !fs::exists(*checkpoint / "manifest.json")) {
    throw Error("model.checkpoint: no checkpoint at " + checkpoint->string());
  }
  if (epsilons.empty()) throw Error("attack.epsilons lists no budgets");
  for (float e : epsilons) attack_config(e);
  if (attack_limit < 0) throw Error("attack.limit must be >= 0");
}

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir) {
  RunConfig c;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  bool seeded = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      if (key == "experiment") c.experiment = value;
      else if (key == "seed") { c.apply_seed(parse_number<std::uint64_t>(value, key)); seeded = true; }
      else if (key == "data.source") c.data.source = parse_source(value);
      else if (key == "data.paths") {
        c.data.paths.clear();
        for (const auto& p : split_list(value)) c.data.paths.push_back(resolve(base_dir, p));
      }
      else if (key == "data.count") c.data.count = parse_number<std::int64_t>(value, key);
      else if (key == "data.height") c.data.height = parse_number<int>(value, key);
      else if (key == "data.width") c.data.width = parse_number<int>(value, key);
      else if (key == "data.classes") c.data.num_classes = parse_number<int>(value, key);
      else if (key == "data.split") {
        const auto f = parse_float_list(value);
        if (f.size() != 3) throw Error("data.split needs three fractions");
        c.data.split = {f[0], f[1], f[2]};
      }
      else if (key == "data.noise") c.data.noise = parse_number<float>(value, key);
      else if (key == "data.signal") c.data.signal = parse_number<float>(value, key);
      else if (key == "data.clutter") c.data.clutter = parse_number<float>(value, key);
      else if (key == "model.variant") {
        c.variants.clear();
        for (const auto& v : split_list(value)) c.variants.push_back(parse_variant(v));
      }
      else if (key == "model.mix") c.mix = parse_number<float>(value, key);
      else if (key == "model.checkpoint") c.checkpoint = resolve(base_dir, value);
      else if (key == "train.epochs") c.train.epochs = parse_number<int>(value, key);
      else if (key == "train.batch") c.train.batch_size = parse_number<int>(value, key);
      else if (key == "train.lr") c.train.learning_rate = parse_number<float>(value, key);
      else if (key == "train.adv_epsilon") {
        if (!c.train.adversarial) c.train.adversarial.emplace();
        c.train.adversarial->epsilon = parse_number<float>(value, key);
      }
      else if (key == "train.adv_eta") {
        if (!c.train.adversarial) c.train.adversarial.emplace();
        c.train.adversarial->eta = parse_number<float>(value, key);
      }
      else if (key == "train.adv_steps") {
        if (!c.train.adversarial) c.train.adversarial.emplace();
        c.train.adversarial->steps = parse_number<int>(value, key);
      }
      else if (key == "attack.domain") c.attack_domain = parse_domain(value);
      else if (key == "attack.epsilons") c.epsilons = parse_float_list(value);
      else if (key == "attack.eta") c.eta = parse_number<float>(value, key);
      else if (key == "attack.steps") c.steps = parse_number<int>(value, key);
      else if (key == "attack.limit") c.attack_limit = parse_number<std::int64_t>(value, key);
      else if (key == "transfer.surrogate") c.surrogate = parse_variant(value);
      else if (key == "out") c.out = resolve(base_dir, value);
      else throw Error("unknown key");
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(line_no) + " (" + std::string(key) + "): " + e.what());
    }
  }
  if (!seeded) c.apply_seed(c.seed);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.parent_path());
}

}  // namespace sflab
