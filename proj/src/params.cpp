// SPDX-License-Identifier: Apache-2.0
#include "asmil/params.hpp"

#include <algorithm>

#include "asmil/errors.hpp"

namespace asmil {

void ParamSet::add(std::string name, Matrix value) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  entries_.push_back({std::move(name), std::move(value)});
}

bool ParamSet::contains(std::string_view name) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

Matrix& ParamSet::at(std::string_view name) {
  for (auto& e : entries_)
    if (e.name == name) return e.value;
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

const Matrix& ParamSet::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.value;
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ParamSet ParamSet::subset(std::span<const std::string> names) const {
  ParamSet out;
  for (const auto& e : entries_) {
    if (std::find(names.begin(), names.end(), e.name) != names.end()) out.add(e.name, e.value);
  }
  return out;
}

void ParamSet::require_same_layout(const ParamSet& other, const char* op) const {
  if (other.size() != size()) {
    throw ContractError(std::string(op) + ": parameter count " + std::to_string(size()) +
                        " vs " + std::to_string(other.size()));
  }
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || !a.value.same_shape(b.value)) {
      throw ContractError(std::string(op) + ": layout mismatch at '" + a.name + "' " +
                          a.value.shape_string() + " vs '" + b.name + "' " +
                          b.value.shape_string());
    }
  }
}

bool ParamSet::all_finite() const noexcept {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const Entry& e) { return e.value.all_finite(); });
}

BoundParams::BoundParams(ad::Tape& tape, const ParamSet& params, bool trainable) {
  for (const auto& e : params.entries()) {
    names_.push_back(e.name);
    vars_.push_back(trainable ? tape.leaf(e.value) : tape.constant(e.value));
  }
}

ad::Var BoundParams::operator[](std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return vars_[i];
  throw ContractError("unbound parameter '" + std::string(name) + "'");
}

bool BoundParams::contains(std::string_view name) const noexcept {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

}  // namespace asmil
