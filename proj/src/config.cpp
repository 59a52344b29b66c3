// SPDX-License-Identifier: Apache-2.0
#include "asmil/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "asmil/errors.hpp"

namespace asmil {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError(key + ": " + why);
}

double real(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d)) {
    bad(key, "expected a finite real, got '" + v + "'");
  }
  return d;
}

std::uint64_t count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    bad(key, "expected a non-negative integer, got '" + v + "'");
  }
  errno = 0;
  const unsigned long long n = std::strtoull(v.c_str(), nullptr, 10);
  if (errno == ERANGE) bad(key, "value out of range");
  return n;
}

bool boolean(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

std::string real_text(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

double non_negative(const std::string& key, double d) {
  if (d < 0.0) bad(key, "must be >= 0, got " + real_text(d));
  return d;
}

double unit_open(const std::string& key, double d) {
  if (!(d >= 0.0 && d < 1.0)) bad(key, "must be in [0, 1), got " + real_text(d));
  return d;
}

const char* flavor_name(Flavor f) { return f == Flavor::abmil ? "abmil" : "asmil"; }

const char* online_name(OnlineMap m) {
  switch (m) {
    case OnlineMap::softmax: return "softmax";
    case OnlineMap::nsf: return "nsf";
    case OnlineMap::mixed: return "mixed";
  }
  return "?";
}

const char* anchor_map_name(AnchorMap::Kind k) {
  switch (k) {
    case AnchorMap::Kind::nsf: return "nsf";
    case AnchorMap::Kind::softmax: return "softmax";
    case AnchorMap::Kind::entmax: return "entmax";
    case AnchorMap::Kind::mixed: return "mixed";
  }
  return "?";
}

const char* strategy_name(AnchorStrategy s) {
  switch (s) {
    case AnchorStrategy::model: return "model";
    case AnchorStrategy::temporal: return "temporal";
    case AnchorStrategy::off: return "off";
  }
  return "?";
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "flavor",        "input_dim",    "embed_dim",    "hidden_dim",   "num_tokens",
      "num_classes",   "online_map",   "beta",         "drop_rate",    "ema",
      "lr",            "epochs",       "weight_decay", "seed",         "anchor",
      "anchor_map",    "anchor_temperature", "entmax_alpha", "anchor_mix_xi",
      "temporal_rho",  "schedule",     "probe_bags",   "trace_all",    "debug_checks",
      "standardize"};
  return keys;
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& v) {
  auto& m = cfg.model;
  if (key == "flavor") {
    if (v == "abmil") m.flavor = Flavor::abmil;
    else if (v == "asmil") m.flavor = Flavor::asmil;
    else bad(key, "expected abmil or asmil, got '" + v + "'");
  } else if (key == "input_dim") {
    m.input_dim = count(key, v);
  } else if (key == "embed_dim") {
    m.embed_dim = count(key, v);
  } else if (key == "hidden_dim") {
    m.hidden_dim = count(key, v);
  } else if (key == "num_tokens") {
    m.num_tokens = count(key, v);
  } else if (key == "num_classes") {
    m.num_classes = count(key, v);
  } else if (key == "online_map") {
    if (v == "softmax") m.online_map = OnlineMap::softmax;
    else if (v == "nsf") m.online_map = OnlineMap::nsf;
    else if (v == "mixed") m.online_map = OnlineMap::mixed;
    else bad(key, "expected softmax, nsf or mixed, got '" + v + "'");
  } else if (key == "beta") {
    cfg.beta = non_negative(key, real(key, v));
  } else if (key == "drop_rate") {
    cfg.drop_rate = unit_open(key, real(key, v));
  } else if (key == "ema") {
    cfg.ema = unit_open(key, real(key, v));
  } else if (key == "lr") {
    cfg.lr = non_negative(key, real(key, v));
  } else if (key == "epochs") {
    cfg.epochs = count(key, v);
    if (cfg.epochs < 1) bad(key, "must be >= 1");
  } else if (key == "weight_decay") {
    cfg.weight_decay = non_negative(key, real(key, v));
  } else if (key == "seed") {
    cfg.seed = count(key, v);
  } else if (key == "anchor") {
    if (v == "model") cfg.strategy = AnchorStrategy::model;
    else if (v == "temporal") cfg.strategy = AnchorStrategy::temporal;
    else if (v == "off") cfg.strategy = AnchorStrategy::off;
    else bad(key, "expected model, temporal or off, got '" + v + "'");
  } else if (key == "anchor_map") {
    if (v == "nsf") cfg.anchor_map.kind = AnchorMap::Kind::nsf;
    else if (v == "softmax") cfg.anchor_map.kind = AnchorMap::Kind::softmax;
    else if (v == "entmax") cfg.anchor_map.kind = AnchorMap::Kind::entmax;
    else if (v == "mixed") cfg.anchor_map.kind = AnchorMap::Kind::mixed;
    else bad(key, "expected nsf, softmax, entmax or mixed, got '" + v + "'");
  } else if (key == "anchor_temperature") {
    cfg.anchor_map.temperature = real(key, v);
    if (!(cfg.anchor_map.temperature > 0.0)) bad(key, "must be > 0");
  } else if (key == "entmax_alpha") {
    cfg.anchor_map.entmax_alpha = real(key, v);
    if (!(cfg.anchor_map.entmax_alpha > 1.0)) bad(key, "must be > 1");
  } else if (key == "anchor_mix_xi") {
    cfg.anchor_map.mix_xi = real(key, v);
  } else if (key == "temporal_rho") {
    cfg.temporal_rho = real(key, v);
    if (!(cfg.temporal_rho > 0.0 && cfg.temporal_rho < 1.0)) bad(key, "must be in (0, 1)");
  } else if (key == "schedule") {
    if (v == "epoch") cfg.schedule = ScheduleStep::epoch;
    else if (v == "step") cfg.schedule = ScheduleStep::step;
    else bad(key, "expected epoch or step, got '" + v + "'");
  } else if (key == "probe_bags") {
    cfg.probe_bags = count(key, v);
  } else if (key == "trace_all") {
    cfg.trace_all = boolean(key, v);
  } else if (key == "debug_checks") {
    cfg.debug_checks = boolean(key, v);
  } else if (key == "standardize") {
    cfg.standardize = boolean(key, v);
  } else {
    throw ConfigError(key + ": unknown key");
  }
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
  const auto& m = cfg.model;
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  return {
      {"flavor", flavor_name(m.flavor)},
      {"input_dim", std::to_string(m.input_dim)},
      {"embed_dim", std::to_string(m.embed_dim)},
      {"hidden_dim", std::to_string(m.hidden_dim)},
      {"num_tokens", std::to_string(m.num_tokens)},
      {"num_classes", std::to_string(m.num_classes)},
      {"online_map", online_name(m.online_map)},
      {"beta", real_text(cfg.beta)},
      {"drop_rate", real_text(cfg.drop_rate)},
      {"ema", real_text(cfg.ema)},
      {"lr", real_text(cfg.lr)},
      {"epochs", std::to_string(cfg.epochs)},
      {"weight_decay", real_text(cfg.weight_decay)},
      {"seed", std::to_string(cfg.seed)},
      {"anchor", strategy_name(cfg.strategy)},
      {"anchor_map", anchor_map_name(cfg.anchor_map.kind)},
      {"anchor_temperature", real_text(cfg.anchor_map.temperature)},
      {"entmax_alpha", real_text(cfg.anchor_map.entmax_alpha)},
      {"anchor_mix_xi", real_text(cfg.anchor_map.mix_xi)},
      {"temporal_rho", real_text(cfg.temporal_rho)},
      {"schedule", cfg.schedule == ScheduleStep::epoch ? "epoch" : "step"},
      {"probe_bags", std::to_string(cfg.probe_bags)},
      {"trace_all", b(cfg.trace_all)},
      {"debug_checks", b(cfg.debug_checks)},
      {"standardize", b(cfg.standardize)},
  };
}

std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      throw ConfigError(key + ": duplicate key (line " + std::to_string(line_no) + ")");
    }
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    }
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace asmil
