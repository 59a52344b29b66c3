// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "asmil/model.hpp"

namespace asmil {

struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 2;
  std::vector<Bag> bags;
};

enum class DatasetFormat {
  bagds,         // "#bagds v1 D=<int> K=<int>" header, then bag blocks
  bagcsv,        // label,bag_id,f1,...,fD per instance; bag label = max instance label
  svmlight_bag,  // "<inst>:<bag>:<label> idx:val ..." with 1-based sparse indices
  c45_musk,      // molecule,conformation,f1..fD,class (UCI distribution)
};

/// Parses "bagds", "bagcsv", "svmlight-bag" or "c45-musk". ConfigError otherwise.
DatasetFormat parse_format(const std::string& name);
const char* format_name(DatasetFormat f) noexcept;

/// Bags come back in file order. ParseError carries the 1-based line number;
/// SchemaError on inconsistent D or labels outside [0, K).
Dataset load_dataset(const std::string& path, DatasetFormat format);
Dataset parse_dataset(const std::string& text, DatasetFormat format);

/// Writes the bagds text format. Values use 17 significant digits, so a
/// reload reproduces every double exactly.
void save_dataset(const std::string& path, const Dataset& data);
std::string format_bagds(const Dataset& data);

struct SyntheticBagSpec {
  std::size_t n_bags = 60;
  std::size_t min_instances = 20;
  std::size_t max_instances = 60;
  std::size_t dim = 32;
  /// Fraction of positive-bag instances drawn from the signal distribution.
  double witness_rate = 0.1;
  double signal_shift = 2.0;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Negative bags hold pure noise; in positive bags each instance is a witness
/// with probability `witness_rate` (at least one is forced), shifted by
/// `signal_shift` along a fixed random unit direction. Labels alternate so the
/// classes are balanced within one bag.
Dataset generate_synthetic(const SyntheticBagSpec& spec);

struct FoldAssignment {
  /// fold[i] is the test fold of bag i.
  std::vector<std::size_t> fold;
  std::size_t folds = 0;
  /// One message per class too small to stratify.
  std::vector<std::string> warnings;

  std::vector<std::size_t> test_indices(std::size_t k) const;
  std::vector<std::size_t> train_indices(std::size_t k) const;
};

/// Stratified assignment: each class is shuffled with the seed and dealt
/// round-robin, continuing where the previous class stopped so fold sizes
/// differ by at most one. DomainError unless 2 <= folds <= bags.
FoldAssignment cv_split(std::span<const Bag> bags, std::size_t folds, std::uint64_t seed);

std::vector<Bag> pick(std::span<const Bag> bags, std::span<const std::size_t> idx);

/// Per-feature standardization fitted on instances of the training bags.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> inv_std;

  bool empty() const noexcept { return mean.empty(); }
  static FeatureScaler fit(std::span<const Bag> bags);
  Bag apply(const Bag& bag) const;
  std::vector<Bag> apply(std::span<const Bag> bags) const;
};

}  // namespace asmil
