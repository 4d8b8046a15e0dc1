#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crm/nn.hpp"

namespace crm {

class Rng;

/// Labelled feature matrix stored contiguously (row-major, one row per
/// example). Examples handed out by `at` view into this storage.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, std::size_t num_classes, std::size_t feature_dim);

  const std::string& name() const noexcept { return name_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  std::span<const double> features() const noexcept { return features_; }
  std::span<const std::size_t> labels() const noexcept { return labels_; }

  Example at(std::size_t i) const;
  std::vector<Example> examples() const;
  std::vector<Example> examples(std::span<const std::size_t> indices) const;

  void push_back(std::span<const double> x, std::size_t y);
  void reserve(std::size_t n);

  Dataset subset(std::span<const std::size_t> indices, std::string name) const;
  /// Rows of `a` followed by rows of `b`.
  static Dataset concat(const Dataset& a, const Dataset& b, std::string name);

  bool operator==(const Dataset&) const = default;

 private:
  std::string name_;
  std::size_t num_classes_ = 0;
  std::size_t feature_dim_ = 0;
  std::vector<double> features_;
  std::vector<std::size_t> labels_;
};

struct GmmComponent {
  std::vector<double> mean;
  std::vector<double> variance;  // diagonal covariance
  double weight = 0.0;
};

struct GmmSpec {
  std::vector<GmmComponent> components;  // one per class
  std::size_t num_samples = 0;
  std::uint64_t seed = 0;

  /// 2-D, three classes at (0,0), (3,0), (0,3), unit covariance, equal weights.
  static GmmSpec default_spec(std::size_t num_samples = 10000, std::uint64_t seed = 0);

  std::size_t num_classes() const noexcept { return components.size(); }
  std::size_t feature_dim() const noexcept {
    return components.empty() ? 0 : components.front().mean.size();
  }
  /// Throws InvalidArgument on an inconsistent spec.
  void validate() const;
};

/// Draws labelled points from a GMM one at a time.
class GmmSampler {
 public:
  explicit GmmSampler(const GmmSpec& spec);

  /// Writes the features into `x` (feature_dim entries) and returns the label.
  std::size_t draw(Rng& rng, std::span<double> x) const;
  /// Appends `n` draws to `out`.
  void draw_into(Rng& rng, std::size_t n, Dataset& out) const;

 private:
  GmmSpec spec_;
  std::vector<double> cumulative_;
  std::vector<std::vector<double>> stddev_;
};

/// num_samples i.i.d. draws; bitwise reproducible for a fixed seed.
Dataset gen_gmm(const GmmSpec& spec);

/// MNIST-family IDX pair: pixels scaled to [0,1] then normalised with mean
/// 0.5 and standard deviation 0.5, images flattened row-major.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string name = "idx");

/// Disjoint uniformly random subsets of the given sizes.
std::array<Dataset, 3> split_dataset(const Dataset& ds, std::array<std::size_t, 3> sizes,
                                     std::uint64_t seed);

/// Dataset cache file ("CRML" container, dataset payload).
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace crm
