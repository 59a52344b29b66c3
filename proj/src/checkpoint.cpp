// SPDX-License-Identifier: Apache-2.0
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "asmil/config.hpp"
#include "asmil/errors.hpp"
#include "asmil/trainer.hpp"

namespace asmil {

namespace {

constexpr const char* kMagic = "#asmilckpt v1";

std::string hex(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", d);
  return buf;
}

void put_values(std::string& out, std::span<const double> vals) {
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (i) out += ' ';
    out += hex(vals[i]);
  }
  out += '\n';
}

void put_matrix(std::string& out, const std::string& tag, const std::string& name, const Matrix& m) {
  if (name.find_first_of(" \t\n") != std::string::npos || name.empty()) {
    throw ContractError("checkpoint: name '" + name + "' must be non-empty without whitespace");
  }
  out += tag + " " + name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  put_values(out, m.data());
}

/// Line cursor with tokenized access and line numbers for errors.
class Reader {
 public:
  explicit Reader(const std::string& text) {
    std::istringstream in(text);
    std::string l;
    while (std::getline(in, l)) lines_.push_back(l);
  }

  std::vector<std::string> next(const char* expect) {
    if (pos_ >= lines_.size()) fail(std::string("unexpected end of file, expected ") + expect);
    std::istringstream in(lines_[pos_++]);
    std::vector<std::string> toks;
    std::string tok;
    while (in >> tok) toks.push_back(tok);
    return toks;
  }

  const std::string& raw_next(const char* expect) {
    if (pos_ >= lines_.size()) fail(std::string("unexpected end of file, expected ") + expect);
    return lines_[pos_++];
  }

  std::vector<std::string> tagged(const std::string& tag, std::size_t arity) {
    auto t = next(tag.c_str());
    if (t.empty() || t[0] != tag || t.size() != arity + 1) {
      fail("expected '" + tag + "' record with " + std::to_string(arity) + " fields");
    }
    return t;
  }

  double real(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) fail("bad real '" + s + "'");
    return d;
  }

  std::uint64_t count(const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      fail("bad count '" + s + "'");
    }
    return std::strtoull(s.c_str(), nullptr, 10);
  }

  void values(std::span<double> dst) {
    auto t = next("values");
    if (t.size() != dst.size()) {
      fail("expected " + std::to_string(dst.size()) + " values, got " + std::to_string(t.size()));
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = real(t[i]);
  }

  std::pair<std::string, Matrix> matrix(const std::string& tag) {
    auto t = tagged(tag, 3);
    Matrix m(count(t[2]), count(t[3]));
    values(m.data());
    return {t[1], std::move(m)};
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("checkpoint: " + msg, pos_);
  }

 private:
  std::vector<std::string> lines_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string format_checkpoint(const TrainState& s) {
  std::string out = std::string(kMagic) + "\n";
  const auto cfg = config_entries(s.config);
  out += "config " + std::to_string(cfg.size()) + "\n";
  for (const auto& [k, v] : cfg) out += k + " " + v + "\n";
  out += "epoch " + std::to_string(s.epoch) + "\n";
  out += "global_step " + std::to_string(s.global_step) + "\n";
  std::ostringstream rng;
  rng << s.rng;
  out += "rng " + rng.str() + "\n";

  out += "params " + std::to_string(s.params.size()) + "\n";
  for (const auto& e : s.params.entries()) put_matrix(out, "param", e.name, e.value);

  out += "anchor " + hex(s.anchor.momentum) + " " + std::to_string(s.anchor.params.size()) + "\n";
  for (const auto& e : s.anchor.params.entries()) put_matrix(out, "param", e.name, e.value);

  out += "adam " + std::to_string(s.adam.step) + " " + hex(s.adam.beta1) + " " +
         hex(s.adam.beta2) + " " + hex(s.adam.eps) + " " + std::to_string(s.adam.m.size()) + "\n";
  for (std::size_t i = 0; i < s.adam.m.size(); ++i) {
    put_matrix(out, "m", std::to_string(i), s.adam.m[i]);
    put_matrix(out, "v", std::to_string(i), s.adam.v[i]);
  }

  if (s.temporal) {
    out += "temporal 1 " + hex(s.temporal->rho()) + " " +
           std::to_string(s.temporal->entries().size()) + "\n";
    for (const auto& [id, m] : s.temporal->entries()) put_matrix(out, "entry", id, m);
  } else {
    out += "temporal 0 0 0\n";
  }

  out += "scaler " + std::to_string(s.scaler.mean.size()) + "\n";
  if (!s.scaler.empty()) {
    put_values(out, s.scaler.mean);
    put_values(out, s.scaler.inv_std);
  }

  out += "probe " + std::to_string(s.last_probe.size()) + "\n";
  for (const auto& [id, m] : s.last_probe) put_matrix(out, "entry", id, m);
  out += "end\n";
  return out;
}

TrainState parse_checkpoint(const std::string& text) {
  Reader r(text);
  if (r.raw_next("header") != kMagic) r.fail(std::string("missing '") + kMagic + "' header");
  TrainState s;

  const auto nc = r.count(r.tagged("config", 1)[1]);
  for (std::uint64_t i = 0; i < nc; ++i) {
    auto t = r.next("config entry");
    if (t.size() != 2) r.fail("config entries are '<key> <value>'");
    try {
      set_config_value(s.config, t[0], t[1]);
    } catch (const ConfigError& e) {
      r.fail(e.what());
    }
  }
  s.epoch = r.count(r.tagged("epoch", 1)[1]);
  s.global_step = r.count(r.tagged("global_step", 1)[1]);
  {
    const std::string& line = r.raw_next("rng");
    if (line.rfind("rng ", 0) != 0) r.fail("expected 'rng' record");
    std::istringstream in(line.substr(4));
    in >> s.rng;
    if (in.fail()) r.fail("bad rng state");
  }

  const auto np = r.count(r.tagged("params", 1)[1]);
  for (std::uint64_t i = 0; i < np; ++i) {
    auto [name, m] = r.matrix("param");
    s.params.add(name, std::move(m));
  }

  auto a = r.tagged("anchor", 2);
  s.anchor.momentum = r.real(a[1]);
  for (std::uint64_t i = 0, n = r.count(a[2]); i < n; ++i) {
    auto [name, m] = r.matrix("param");
    s.anchor.params.add(name, std::move(m));
  }

  auto ad = r.tagged("adam", 5);
  s.adam.step = r.count(ad[1]);
  s.adam.beta1 = r.real(ad[2]);
  s.adam.beta2 = r.real(ad[3]);
  s.adam.eps = r.real(ad[4]);
  for (std::uint64_t i = 0, n = r.count(ad[5]); i < n; ++i) {
    s.adam.m.push_back(r.matrix("m").second);
    s.adam.v.push_back(r.matrix("v").second);
  }

  auto tp = r.tagged("temporal", 3);
  if (tp[1] == "1") {
    s.temporal.emplace(r.real(tp[2]));
    std::map<std::string, Matrix> entries;
    for (std::uint64_t i = 0, n = r.count(tp[3]); i < n; ++i) {
      auto [id, m] = r.matrix("entry");
      entries.emplace(id, std::move(m));
    }
    s.temporal->restore(std::move(entries));
  }

  const auto d = r.count(r.tagged("scaler", 1)[1]);
  if (d) {
    s.scaler.mean.resize(d);
    s.scaler.inv_std.resize(d);
    r.values(s.scaler.mean);
    r.values(s.scaler.inv_std);
  }

  for (std::uint64_t i = 0, n = r.count(r.tagged("probe", 1)[1]); i < n; ++i) {
    auto [id, m] = r.matrix("entry");
    s.last_probe.emplace(id, std::move(m));
  }
  r.tagged("end", 0);

  s.params.require_same_layout(init_params(s.config.model, 0), "checkpoint");
  if (s.adam.m.size() != s.params.size()) r.fail("Adam state does not match parameters");
  return s;
}

void save_checkpoint(const std::string& path, const TrainState& state) {
  const std::string text = format_checkpoint(state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_checkpoint(ss.str());
  } catch (const ParseError& e) {
    throw e.prefixed(path + ": ");
  }
}

}  // namespace asmil
