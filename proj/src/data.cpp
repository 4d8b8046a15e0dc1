#include "crm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "crm/error.hpp"
#include "crm/rng.hpp"

namespace crm {

Dataset::Dataset(std::string name, std::size_t num_classes, std::size_t feature_dim)
    : name_(std::move(name)), num_classes_(num_classes), feature_dim_(feature_dim) {}

Example Dataset::at(std::size_t i) const {
  if (i >= size()) throw DimensionError("dataset index", size(), i);
  return {std::span<const double>(features_).subspan(i * feature_dim_, feature_dim_), labels_[i]};
}

std::vector<Example> Dataset::examples() const {
  std::vector<Example> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i));
  return out;
}

std::vector<Example> Dataset::examples(std::span<const std::size_t> indices) const {
  std::vector<Example> out;
  out.reserve(indices.size());
  for (const auto i : indices) out.push_back(at(i));
  return out;
}

void Dataset::push_back(std::span<const double> x, std::size_t y) {
  if (x.size() != feature_dim_) throw DimensionError("example features", feature_dim_, x.size());
  if (y >= num_classes_)
    throw InvalidArgument("label " + std::to_string(y) + " out of range for " +
                          std::to_string(num_classes_) + " classes");
  features_.insert(features_.end(), x.begin(), x.end());
  labels_.push_back(y);
}

void Dataset::reserve(std::size_t n) {
  features_.reserve(n * feature_dim_);
  labels_.reserve(n);
}

Dataset Dataset::subset(std::span<const std::size_t> indices, std::string name) const {
  Dataset out(std::move(name), num_classes_, feature_dim_);
  out.reserve(indices.size());
  for (const auto i : indices) {
    const auto ex = at(i);
    out.push_back(ex.x, ex.y);
  }
  return out;
}

Dataset Dataset::concat(const Dataset& a, const Dataset& b, std::string name) {
  if (a.feature_dim_ != b.feature_dim_) throw DimensionError("concatenated features", a.feature_dim_, b.feature_dim_);
  if (a.num_classes_ != b.num_classes_) throw DimensionError("concatenated classes", a.num_classes_, b.num_classes_);
  Dataset out(std::move(name), a.num_classes_, a.feature_dim_);
  out.features_ = a.features_;
  out.features_.insert(out.features_.end(), b.features_.begin(), b.features_.end());
  out.labels_ = a.labels_;
  out.labels_.insert(out.labels_.end(), b.labels_.begin(), b.labels_.end());
  return out;
}

GmmSpec GmmSpec::default_spec(std::size_t num_samples, std::uint64_t seed) {
  GmmSpec spec;
  const double w = 1.0 / 3.0;
  spec.components = {
      {{0.0, 0.0}, {1.0, 1.0}, w},
      {{3.0, 0.0}, {1.0, 1.0}, w},
      {{0.0, 3.0}, {1.0, 1.0}, w},
  };
  spec.num_samples = num_samples;
  spec.seed = seed;
  return spec;
}

void GmmSpec::validate() const {
  if (components.empty()) throw InvalidArgument("GMM needs at least one component");
  const std::size_t d = components.front().mean.size();
  if (d == 0) throw InvalidArgument("GMM feature dimension must be positive");
  double total = 0.0;
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& c = components[k];
    const auto tag = "GMM component " + std::to_string(k);
    if (c.mean.size() != d) throw InvalidArgument(tag + ": mean has dimension " + std::to_string(c.mean.size()) + ", expected " + std::to_string(d));
    if (c.variance.size() != d) throw InvalidArgument(tag + ": variance has dimension " + std::to_string(c.variance.size()) + ", expected " + std::to_string(d));
    for (const double v : c.variance)
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(tag + ": variances must be positive");
    for (const double m : c.mean)
      if (!std::isfinite(m)) throw InvalidArgument(tag + ": mean must be finite");
    if (!(c.weight >= 0.0)) throw InvalidArgument(tag + ": weight must be nonnegative");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw InvalidArgument("GMM weights must sum to 1 (got " + std::to_string(total) + ")");
  if (!(total > 0.0)) throw InvalidArgument("GMM weights must not all be zero");
}

GmmSampler::GmmSampler(const GmmSpec& spec) : spec_(spec) {
  spec_.validate();
  double acc = 0.0;
  for (const auto& c : spec_.components) {
    acc += c.weight;
    cumulative_.push_back(acc);
    std::vector<double> sd;
    for (const double v : c.variance) sd.push_back(std::sqrt(v));
    stddev_.push_back(std::move(sd));
  }
}

std::size_t GmmSampler::draw(Rng& rng, std::span<double> x) const {
  const double u = rng.uniform() * cumulative_.back();
  std::size_t label = 0;
  // Components with zero weight occupy an empty interval and are never hit.
  while (label + 1 < cumulative_.size() && !(u < cumulative_[label])) ++label;
  const auto& c = spec_.components[label];
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = c.mean[j] + stddev_[label][j] * rng.normal();
  return label;
}

void GmmSampler::draw_into(Rng& rng, std::size_t n, Dataset& out) const {
  std::vector<double> x(spec_.feature_dim());
  out.reserve(out.size() + n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = draw(rng, x);
    out.push_back(x, y);
  }
}

Dataset gen_gmm(const GmmSpec& spec) {
  GmmSampler sampler(spec);
  Dataset ds("gmm", spec.num_classes(), spec.feature_dim());
  Rng rng = Rng(spec.seed).derive("gmm");
  sampler.draw_into(rng, spec.num_samples, ds);
  return ds;
}

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                   const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw FormatError(path.string() + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string name) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);

  if (be32(images, 0, images_path) != kIdxImages)
    throw FormatError(images_path.string() + ": bad IDX magic for an image file");
  if (be32(labels, 0, labels_path) != kIdxLabels)
    throw FormatError(labels_path.string() + ": bad IDX magic for a label file");

  const std::size_t n = be32(images, 4, images_path);
  const std::size_t rows = be32(images, 8, images_path);
  const std::size_t cols = be32(images, 12, images_path);
  const std::size_t n_labels = be32(labels, 4, labels_path);
  if (n != n_labels)
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(n_labels) + " labels");
  const std::size_t dim = rows * cols;
  if (images.size() != 16 + n * dim)
    throw FormatError(images_path.string() + ": expected " + std::to_string(16 + n * dim) +
                      " bytes, found " + std::to_string(images.size()));
  if (labels.size() != 8 + n)
    throw FormatError(labels_path.string() + ": expected " + std::to_string(8 + n) +
                      " bytes, found " + std::to_string(labels.size()));

  std::size_t num_classes = 0;
  for (std::size_t i = 0; i < n; ++i) num_classes = std::max<std::size_t>(num_classes, labels[8 + i] + 1u);
  // MNIST-family sets have ten classes; keep at least that many so a small
  // file missing some digits still yields a 10-way problem.
  num_classes = std::max<std::size_t>(num_classes, 10);

  Dataset ds(std::move(name), num_classes, dim);
  ds.reserve(n);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* px = images.data() + 16 + i * dim;
    for (std::size_t j = 0; j < dim; ++j) x[j] = (static_cast<double>(px[j]) / 255.0 - 0.5) / 0.5;
    ds.push_back(x, labels[8 + i]);
  }
  return ds;
}

std::array<Dataset, 3> split_dataset(const Dataset& ds, std::array<std::size_t, 3> sizes,
                                     std::uint64_t seed) {
  const std::size_t total = sizes[0] + sizes[1] + sizes[2];
  if (total > ds.size())
    throw InvalidArgument("split sizes sum to " + std::to_string(total) + " but dataset has " +
                          std::to_string(ds.size()) + " examples");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed).derive("dataset-split");
  rng.shuffle(std::span<std::size_t>(order));

  std::array<Dataset, 3> out;
  const std::array<const char*, 3> suffix = {"train", "cal", "test"};
  std::size_t offset = 0;
  for (std::size_t part = 0; part < 3; ++part) {
    std::span<const std::size_t> idx(order.data() + offset, sizes[part]);
    out[part] = ds.subset(idx, ds.name() + "-" + suffix[part]);
    offset += sizes[part];
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  io::Writer w(path);
  w.header(io::Payload::Dataset);
  w.u32(static_cast<std::uint32_t>(ds.name().size()));
  w.bytes(ds.name());
  w.u32(static_cast<std::uint32_t>(ds.num_classes()));
  w.u32(static_cast<std::uint32_t>(ds.feature_dim()));
  w.u64(ds.size());
  for (const auto y : ds.labels()) w.u32(static_cast<std::uint32_t>(y));
  w.f64s(ds.features());
  w.finish();
}

Dataset load_dataset(const std::filesystem::path& path) {
  io::Reader r(path);
  r.header(io::Payload::Dataset);
  const auto name_len = r.u32();
  if (name_len > 4096) throw FormatError(path.string() + ": implausible dataset name length");
  auto name = r.bytes(name_len);
  const std::size_t num_classes = r.u32();
  const std::size_t dim = r.u32();
  const std::size_t n = r.u64();
  if (num_classes == 0 || dim == 0) throw FormatError(path.string() + ": empty dataset shape");
  if (r.remaining() != n * (4 + 8 * dim))
    throw FormatError(path.string() + ": payload size does not match " + std::to_string(n) + " examples");
  std::vector<std::size_t> labels(n);
  for (auto& y : labels) {
    y = r.u32();
    if (y >= num_classes) throw FormatError(path.string() + ": label out of range");
  }
  Dataset ds(std::move(name), num_classes, dim);
  ds.reserve(n);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = r.f64();
    ds.push_back(x, labels[i]);
  }
  r.expect_end();
  return ds;
}

}  // namespace crm
