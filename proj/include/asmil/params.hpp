// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asmil/matrix.hpp"
#include "asmil/tape.hpp"

namespace asmil {

/// Ordered collection of named parameter matrices.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  void add(std::string name, Matrix value);
  bool contains(std::string_view name) const noexcept;
  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const noexcept;
  std::span<Entry> entries() noexcept { return entries_; }
  std::span<const Entry> entries() const noexcept { return entries_; }

  /// Copy of the named subset, in this set's order.
  ParamSet subset(std::span<const std::string> names) const;
  /// Throws ContractError unless names and shapes match entry by entry.
  void require_same_layout(const ParamSet& other, const char* op) const;
  bool all_finite() const noexcept;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<Entry> entries_;
};

/// A ParamSet loaded onto a tape: one Var per entry, looked up by name.
class BoundParams {
 public:
  /// Trainable entries become leaves; otherwise constants.
  BoundParams(ad::Tape& tape, const ParamSet& params, bool trainable);

  ad::Var operator[](std::string_view name) const;
  bool contains(std::string_view name) const noexcept;
  std::span<const ad::Var> vars() const noexcept { return vars_; }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Var> vars_;
};

}  // namespace asmil
