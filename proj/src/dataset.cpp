// SPDX-License-Identifier: Apache-2.0
#include "asmil/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

#include "asmil/errors.hpp"

namespace asmil {

namespace {

std::string at_line(std::size_t line, const std::string& msg) {
  return "line " + std::to_string(line) + ": " + msg;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  if (sep == ' ') {
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
      if (i == s.size()) break;
      std::size_t j = i;
      while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
      out.push_back(s.substr(i, j - i));
      i = j;
    }
    return out;
  }
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double to_double(std::string_view s, std::size_t line) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("not a number: '" + std::string(s) + "'", line);
  }
  if (!std::isfinite(v)) throw ParseError("non-finite value", line);
  return v;
}

long long to_int(std::string_view s, std::size_t line) {
  s = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    // Accept integral floats such as "1." or "0.0" used by some distributions.
    const double d = to_double(s, line);
    if (d != std::floor(d)) {
      throw ParseError("not an integer: '" + std::string(s) + "'", line);
    }
    return static_cast<long long>(d);
  }
  return v;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l)) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    lines.push_back(std::move(l));
  }
  return lines;
}

void check_label(long long label, std::size_t k, std::size_t line) {
  if (label < 0 || static_cast<std::size_t>(label) >= k) {
    throw SchemaError(at_line(line, "label " + std::to_string(label) + " outside [0, " +
                                        std::to_string(k) + ")"));
  }
}

Dataset parse_bagds(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw ParseError("empty file, expected '#bagds v1' header", 1);
  const auto head = split(lines[0], ' ');
  if (head.size() != 4 || head[0] != "#bagds") {
    throw ParseError("expected '#bagds v1 D=<int> K=<int>'", 1);
  }
  if (head[1] != "v1") {
    throw ParseError("unsupported format version '" + std::string(head[1]) + "'", 1);
  }
  if (head[2].substr(0, 2) != "D=" || head[3].substr(0, 2) != "K=") {
    throw ParseError("expected 'D=<int> K=<int>'", 1);
  }
  Dataset ds;
  const long long d = to_int(head[2].substr(2), 1);
  const long long k = to_int(head[3].substr(2), 1);
  if (d < 1) throw SchemaError(at_line(1, "D must be >= 1"));
  if (k < 2) throw SchemaError(at_line(1, "K must be >= 2"));
  ds.dim = static_cast<std::size_t>(d);
  ds.num_classes = static_cast<std::size_t>(k);

  std::map<std::string, std::size_t> seen;
  std::size_t i = 1;
  while (i < lines.size()) {
    const std::size_t line_no = i + 1;
    const auto f = split(lines[i], ' ');
    ++i;
    if (f.empty()) continue;
    if (f[0] != "bag" || f.size() != 4) {
      throw ParseError("expected 'bag <id> <label> <M>'", line_no);
    }
    Bag bag;
    bag.id = std::string(f[1]);
    const long long label = to_int(f[2], line_no);
    check_label(label, ds.num_classes, line_no);
    bag.label = static_cast<int>(label);
    const long long m = to_int(f[3], line_no);
    if (m < 1) throw ParseError("bag must have M >= 1 instances", line_no);
    if (!seen.emplace(bag.id, line_no).second) {
      throw SchemaError(at_line(line_no, "duplicate bag id '" + bag.id + "'"));
    }
    bag.features = Matrix(static_cast<std::size_t>(m), ds.dim);
    for (std::size_t r = 0; r < static_cast<std::size_t>(m); ++r, ++i) {
      if (i >= lines.size()) {
        throw ParseError("file ended inside bag '" + bag.id + "' after " +
                                            std::to_string(r) + " of " + std::to_string(m) +
                                            " rows",
                         i + 1);
      }
      const auto vals = split(lines[i], ' ');
      if (!vals.empty() && vals[0] == "bag") {
        throw ParseError("bag '" + bag.id + "' declared " + std::to_string(m) +
                                            " rows, found " + std::to_string(r),
                         i + 1);
      }
      if (vals.size() != ds.dim) {
        throw SchemaError(at_line(i + 1, "expected D=" + std::to_string(ds.dim) + " values, got " +
                                             std::to_string(vals.size())));
      }
      for (std::size_t c = 0; c < ds.dim; ++c) bag.features(r, c) = to_double(vals[c], i + 1);
    }
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

struct PendingBag {
  std::string id;
  std::vector<std::vector<double>> rows;
  long long label = 0;
};

Dataset finish(std::vector<PendingBag> pending, std::size_t dim) {
  Dataset ds;
  ds.dim = dim;
  long long max_label = 1;
  for (const auto& p : pending) max_label = std::max(max_label, p.label);
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  for (auto& p : pending) {
    Bag b;
    b.id = std::move(p.id);
    b.label = static_cast<int>(p.label);
    b.features = Matrix(p.rows.size(), dim);
    for (std::size_t r = 0; r < p.rows.size(); ++r) {
      std::copy(p.rows[r].begin(), p.rows[r].end(), b.features.row(r).begin());
    }
    ds.bags.push_back(std::move(b));
  }
  return ds;
}

PendingBag& bag_for(std::vector<PendingBag>& pending, std::map<std::string, std::size_t>& index,
                    const std::string& id) {
  auto [it, fresh] = index.emplace(id, pending.size());
  if (fresh) pending.push_back(PendingBag{id, {}, 0});
  return pending[it->second];
}

Dataset parse_bagcsv(const std::string& text, bool c45) {
  const auto lines = lines_of(text);
  std::vector<PendingBag> pending;
  std::map<std::string, std::size_t> index;
  std::size_t dim = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto t = trim(lines[i]);
    if (t.empty() || t.front() == '#') continue;
    const auto f = split(t, ',');
    if (f.size() < 3) throw ParseError("too few columns", line_no);
    const std::size_t d = f.size() - (c45 ? 3 : 2);
    if (dim == 0) dim = d;
    if (d != dim) {
      throw SchemaError(at_line(line_no, "expected " + std::to_string(dim) + " features, got " +
                                             std::to_string(d)));
    }
    const std::string id(trim(c45 ? f[0] : f[1]));
    const long long label = to_int(c45 ? f.back() : f[0], line_no);
    if (label < 0) throw SchemaError(at_line(line_no, "negative label"));
    std::vector<double> row(dim);
    const std::size_t first = 2;
    for (std::size_t c = 0; c < dim; ++c) row[c] = to_double(f[first + c], line_no);
    auto& b = bag_for(pending, index, id);
    b.rows.push_back(std::move(row));
    b.label = std::max(b.label, label);
  }
  if (pending.empty()) throw ParseError("no instances", 1);
  return finish(std::move(pending), dim);
}

Dataset parse_svmlight_bag(const std::string& text) {
  const auto lines = lines_of(text);
  struct Inst {
    std::string bag;
    std::vector<std::pair<std::size_t, double>> entries;
  };
  std::vector<PendingBag> pending;
  std::map<std::string, std::size_t> index;
  std::vector<Inst> insts;
  std::size_t dim = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto t = trim(lines[i]);
    if (t.empty() || t.front() == '#') continue;
    const auto f = split(t, ' ');
    const auto key = split(f[0], ':');
    if (key.size() != 3) {
      throw ParseError("expected '<inst>:<bag>:<label>'", line_no);
    }
    Inst inst{std::string(key[1]), {}};
    const long long label = to_int(key[2], line_no);
    if (label < 0) throw SchemaError(at_line(line_no, "negative label"));
    for (std::size_t j = 1; j < f.size(); ++j) {
      const auto kv = split(f[j], ':');
      if (kv.size() != 2) throw ParseError("expected 'idx:val'", line_no);
      const long long idx = to_int(kv[0], line_no);
      if (idx < 1) throw ParseError("feature indices are 1-based", line_no);
      inst.entries.emplace_back(static_cast<std::size_t>(idx - 1), to_double(kv[1], line_no));
      dim = std::max(dim, static_cast<std::size_t>(idx));
    }
    auto& b = bag_for(pending, index, inst.bag);
    b.label = std::max(b.label, label);
    b.rows.emplace_back();
    insts.push_back(std::move(inst));
  }
  if (insts.empty()) throw ParseError("no instances", 1);
  std::map<std::string, std::size_t> fill;
  for (const auto& inst : insts) {
    auto& b = pending[index.at(inst.bag)];
    auto& row = b.rows[fill[inst.bag]++];
    row.assign(dim, 0.0);
    for (const auto& [c, v] : inst.entries) row[c] = v;
  }
  return finish(std::move(pending), dim);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

DatasetFormat parse_format(const std::string& name) {
  if (name == "bagds") return DatasetFormat::bagds;
  if (name == "bagcsv") return DatasetFormat::bagcsv;
  if (name == "svmlight-bag") return DatasetFormat::svmlight_bag;
  if (name == "c45-musk") return DatasetFormat::c45_musk;
  throw ConfigError("format: unknown dataset format '" + name +
                    "' (expected bagds, bagcsv, svmlight-bag or c45-musk)");
}

const char* format_name(DatasetFormat f) noexcept {
  switch (f) {
    case DatasetFormat::bagds: return "bagds";
    case DatasetFormat::bagcsv: return "bagcsv";
    case DatasetFormat::svmlight_bag: return "svmlight-bag";
    case DatasetFormat::c45_musk: return "c45-musk";
  }
  return "?";
}

Dataset parse_dataset(const std::string& text, DatasetFormat format) {
  switch (format) {
    case DatasetFormat::bagds: return parse_bagds(text);
    case DatasetFormat::bagcsv: return parse_bagcsv(text, false);
    case DatasetFormat::svmlight_bag: return parse_svmlight_bag(text);
    case DatasetFormat::c45_musk: return parse_bagcsv(text, true);
  }
  throw ContractError("unknown dataset format");
}

Dataset load_dataset(const std::string& path, DatasetFormat format) {
  try {
    return parse_dataset(read_file(path), format);
  } catch (const ParseError& e) {
    throw e.prefixed(path + ": ");
  } catch (const SchemaError& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

std::string format_bagds(const Dataset& data) {
  std::string out = "#bagds v1 D=" + std::to_string(data.dim) +
                    " K=" + std::to_string(data.num_classes) + "\n";
  char buf[32];
  for (const auto& b : data.bags) {
    if (b.features.cols() != data.dim) {
      throw SchemaError("bag '" + b.id + "' has " + std::to_string(b.features.cols()) +
                        " features, dataset D=" + std::to_string(data.dim));
    }
    if (b.id.empty() || b.id.find_first_of(" \t\n") != std::string::npos) {
      throw SchemaError("bag id '" + b.id + "' must be non-empty without whitespace");
    }
    out += "bag " + b.id + " " + std::to_string(b.label) + " " +
           std::to_string(b.features.rows()) + "\n";
    for (std::size_t r = 0; r < b.features.rows(); ++r) {
      for (std::size_t c = 0; c < data.dim; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", b.features(r, c));
        if (c) out += ' ';
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

void save_dataset(const std::string& path, const Dataset& data) {
  const std::string text = format_bagds(data);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

void SyntheticBagSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
  };
  if (n_bags < 2) fail("n_bags", "must be >= 2");
  if (min_instances < 1) fail("min_instances", "must be >= 1");
  if (max_instances < min_instances) fail("max_instances", "must be >= min_instances");
  if (dim < 1) fail("dim", "must be >= 1");
  if (!(witness_rate > 0.0 && witness_rate <= 1.0)) fail("witness_rate", "must be in (0, 1]");
  if (!(noise_scale > 0.0)) fail("noise_scale", "must be > 0");
  if (!std::isfinite(signal_shift)) fail("signal_shift", "must be finite");
}

Dataset generate_synthetic(const SyntheticBagSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> direction(spec.dim);
  double norm = 0.0;
  for (double& v : direction) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : direction) v /= norm;

  std::uniform_int_distribution<std::size_t> count(spec.min_instances, spec.max_instances);
  std::bernoulli_distribution witness(spec.witness_rate);
  Dataset ds;
  ds.dim = spec.dim;
  ds.num_classes = 2;
  char id[32];
  for (std::size_t b = 0; b < spec.n_bags; ++b) {
    Bag bag;
    std::snprintf(id, sizeof id, "syn-%04zu", b);
    bag.id = id;
    bag.label = static_cast<int>(b % 2);
    const std::size_t m = count(rng);
    bag.features = Matrix(m, spec.dim);
    bag.instance_labels.assign(m, 0);
    for (double& v : bag.features.data()) v = spec.noise_scale * normal(rng);
    if (bag.label == 1) {
      std::size_t n_wit = 0;
      for (std::size_t i = 0; i < m; ++i) {
        bag.instance_labels[i] = witness(rng) ? 1 : 0;
        n_wit += bag.instance_labels[i];
      }
      if (n_wit == 0) {
        std::uniform_int_distribution<std::size_t> pick_one(0, m - 1);
        bag.instance_labels[pick_one(rng)] = 1;
      }
      for (std::size_t i = 0; i < m; ++i) {
        if (!bag.instance_labels[i]) continue;
        for (std::size_t c = 0; c < spec.dim; ++c) {
          bag.features(i, c) += spec.signal_shift * direction[c];
        }
      }
    }
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

std::vector<std::size_t> FoldAssignment::test_indices(std::size_t k) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] == k) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> FoldAssignment::train_indices(std::size_t k) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] != k) idx.push_back(i);
  return idx;
}

FoldAssignment cv_split(std::span<const Bag> bags, std::size_t folds, std::uint64_t seed) {
  if (folds < 2 || folds > bags.size()) {
    throw DomainError("cv_split: folds must be in [2, " + std::to_string(bags.size()) + "], got " +
                      std::to_string(folds));
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < bags.size(); ++i) by_class[bags[i].label].push_back(i);
  FoldAssignment out;
  out.folds = folds;
  out.fold.assign(bags.size(), 0);
  Rng rng(seed);
  std::size_t next = 0;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() < folds) {
      out.warnings.push_back("class " + std::to_string(label) + " has " +
                             std::to_string(idx.size()) + " bags for " + std::to_string(folds) +
                             " folds; not stratified");
    }
    for (std::size_t i : idx) out.fold[i] = next++ % folds;
  }
  return out;
}

std::vector<Bag> pick(std::span<const Bag> bags, std::span<const std::size_t> idx) {
  std::vector<Bag> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(bags[i]);
  return out;
}

FeatureScaler FeatureScaler::fit(std::span<const Bag> bags) {
  if (bags.empty()) throw DomainError("FeatureScaler::fit: no bags");
  const std::size_t d = bags.front().features.cols();
  FeatureScaler s;
  s.mean.assign(d, 0.0);
  s.inv_std.assign(d, 0.0);
  double n = 0.0;
  for (const auto& b : bags) {
    if (b.features.cols() != d) throw SchemaError("FeatureScaler::fit: inconsistent D");
    for (std::size_t r = 0; r < b.features.rows(); ++r) {
      for (std::size_t c = 0; c < d; ++c) s.mean[c] += b.features(r, c);
      n += 1.0;
    }
  }
  for (double& m : s.mean) m /= n;
  for (const auto& b : bags) {
    for (std::size_t r = 0; r < b.features.rows(); ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        const double dv = b.features(r, c) - s.mean[c];
        s.inv_std[c] += dv * dv;
      }
    }
  }
  for (double& v : s.inv_std) {
    const double sd = std::sqrt(v / n);
    v = sd > 0.0 ? 1.0 / sd : 1.0;
  }
  return s;
}

Bag FeatureScaler::apply(const Bag& bag) const {
  if (empty()) return bag;
  if (bag.features.cols() != mean.size()) {
    throw ShapeError("FeatureScaler: bag has " + std::to_string(bag.features.cols()) +
                     " features, scaler " + std::to_string(mean.size()));
  }
  Bag out = bag;
  for (std::size_t r = 0; r < out.features.rows(); ++r) {
    for (std::size_t c = 0; c < mean.size(); ++c) {
      out.features(r, c) = (out.features(r, c) - mean[c]) * inv_std[c];
    }
  }
  return out;
}

std::vector<Bag> FeatureScaler::apply(std::span<const Bag> bags) const {
  std::vector<Bag> out;
  out.reserve(bags.size());
  for (const auto& b : bags) out.push_back(apply(b));
  return out;
}

}  // namespace asmil
