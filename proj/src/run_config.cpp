#include "qean/run_config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "qean/io.hpp"

namespace qean {

Exit exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::ConfigError:
      return Exit::Usage;
    case Errc::TooFewItems:
    case Errc::TooFewFrames:
    case Errc::EmptyMotionBeats:
    case Errc::EmptyMusicBeats:
      return Exit::Metric;
    default:
      return Exit::Runtime;
  }
}

namespace {

[[noreturn]] void bad(std::string_view key, std::string_view value, const char* want) {
  throw Error(Errc::ConfigError,
              "'" + std::string(value) + "' is not " + want + " (key " + std::string(key) + ")");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_count(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "a nonnegative integer");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "a nonnegative integer");
  return out;
}

double to_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad(key, v, "a finite number");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad(key, v, "a boolean (true/false)");
}

std::vector<DecayPoint> to_decay(std::string_view key, std::string_view v) {
  std::vector<DecayPoint> out;
  std::string s(v);
  if (trim(s).empty() || trim(s) == "none") return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    const auto colon = t.find(':');
    if (colon == std::string::npos) bad(key, v, "a list of step:lr pairs");
    out.push_back({to_count(key, trim(std::string_view(t).substr(0, colon))),
                   to_real(key, trim(std::string_view(t).substr(colon + 1)))});
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = [] {
    std::map<std::string, Field, std::less<>> t;
#define COUNT(part, name)                                                                     \
  t[#name] = {[](RunConfig& c, std::string_view k, std::string_view v) { c.part.name = to_count(k, v); }, \
              [](const RunConfig& c) { return std::to_string(c.part.name); }};
#define REAL(part, name)                                                                     \
  t[#name] = {[](RunConfig& c, std::string_view k, std::string_view v) { c.part.name = to_real(k, v); }, \
              [](const RunConfig& c) { return format_double(c.part.name); }};
#define FLAG(part, name)                                                                     \
  t[#name] = {[](RunConfig& c, std::string_view k, std::string_view v) { c.part.name = to_bool(k, v); }, \
              [](const RunConfig& c) { return std::string(c.part.name ? "true" : "false"); }};
    COUNT(model, d_model)
    COUNT(model, heads)
    COUNT(model, decoder_heads)
    COUNT(model, encoder_layers)
    COUNT(model, decoder_layers)
    COUNT(model, d_ff)
    COUNT(model, periods)
    COUNT(model, seed_motion_frames)
    COUNT(model, audio_frames)
    COUNT(model, future_frames)
    COUNT(model, fps)
    FLAG(model, use_learned_abs_pos)
    FLAG(model, use_spe)
    FLAG(model, use_qra)
    FLAG(model, qra_same_axis)
    FLAG(model, readout_residual)
    REAL(model, rotary_base)
    REAL(model, dropout)
    COUNT(train, batch_size)
    REAL(train, lr_init)
    COUNT(train, total_steps)
    REAL(train, beta1)
    REAL(train, beta2)
    REAL(train, adam_eps)
    REAL(train, clip_norm)
#undef COUNT
#undef REAL
#undef FLAG
    t["rng_seed"] = {[](RunConfig& c, std::string_view k, std::string_view v) { c.train.rng_seed = to_u64(k, v); },
                     [](const RunConfig& c) { return std::to_string(c.train.rng_seed); }};
    t["decay_steps"] = {
        [](RunConfig& c, std::string_view k, std::string_view v) { c.train.decay = to_decay(k, v); },
        [](const RunConfig& c) {
          std::string s;
          for (const DecayPoint& p : c.train.decay) {
            if (!s.empty()) s += ',';
            s += std::to_string(p.step) + ":" + format_double(p.lr);
          }
          return s.empty() ? std::string("none") : s;
        }};
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  if (key == "preset") {
    if (v == "desk") *this = RunConfig{};
    else if (v == "paper") {
      model = ModelConfig::paper();
      train = TrainConfig::paper();
    } else bad(key, v, "desk or paper");
    return;
  }
  auto it = fields().find(key);
  if (it == fields().end()) throw Error(Errc::ConfigError, "unknown config key '" + std::string(key) + "'");
  it->second.set(*this, key, v);
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

std::string RunConfig::to_string() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
  return out;
}

RunConfig parse_run_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::ConfigError, "line " + std::to_string(lineno) + " is not key = value");
    entries.emplace_back(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  RunConfig c;
  for (const auto& [k, v] : entries)
    if (k == "preset") c.set(k, v);
  for (const auto& [k, v] : entries)
    if (k != "preset") c.set(k, v);
  return c;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys{"preset"};
  for (const auto& [key, field] : fields()) keys.push_back(key);
  return keys;
}

}  // namespace qean
