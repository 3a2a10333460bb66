#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "maxup/tensor.hpp"

namespace maxup {

/// Binary examples carry y in {-1, +1}; multiclass examples a class index.
struct LabeledExample {
  Tensor x;
  int y = 1;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct Dataset {
  std::vector<LabeledExample> examples;
  std::size_t dim = 0;
  /// 0 for binary {-1, +1} labels, otherwise the number of classes.
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class DatasetKind { gaussian_mixture_halfspace, two_moons, grid_images, csv };

const char* to_string(DatasetKind k) noexcept;

/// gaussian_mixture_halfspace: y ~ Unif{-1, +1}, x | y ~ N(y theta_star, noise_sigma^2 I).
/// two_moons: the usual interleaved half circles in d = 2, plus N(0, noise_sigma^2) noise.
/// grid_images: d = s*s pixel grids holding a bright square (y = +1) or a
///   bright cross (y = -1) at a random position, plus pixel noise.
/// csv: rows read from `path`; the first n_train rows train, the rest test,
///   unless `test_path` is given.
struct DatasetSpec {
  DatasetKind kind = DatasetKind::gaussian_mixture_halfspace;
  std::size_t n_train = 500;
  std::size_t n_test = 2000;
  std::size_t d = 10;
  std::optional<Tensor> theta_star;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
  std::string path;
  std::string test_path;
};

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Deterministic given spec.seed; train and test draw from disjoint streams.
/// Throws BadSpec.
TrainTestSplit generate(const DatasetSpec& spec);

/// Expects a header "f0,...,f{d-1},label". Throws ParseError (with line
/// number), DimensionMismatch when `expected_dim` disagrees with the header,
/// UnknownLabel.
Dataset load_csv(const std::string& path, std::optional<std::size_t> expected_dim = std::nullopt);
/// 17 significant digits; load_csv(save_csv(d)) == d.
void save_csv(const Dataset& data, const std::string& path);

/// FNV-1a over dims, labels and the IEEE bit patterns of every feature.
std::uint64_t dataset_hash(const Dataset& data);

nlohmann::json to_json(const DatasetSpec& spec);
/// Throws ConfigInvalid naming the offending key.
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
/// Sidecar metadata: kind, seed, sizes, dimension and hashes.
nlohmann::json dataset_metadata(const DatasetSpec& spec, const TrainTestSplit& split);

}  // namespace maxup
