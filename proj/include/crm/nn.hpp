#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crm/conformal.hpp"

namespace crm {

class Rng;

enum class Activation : std::uint32_t { None = 0, Relu = 1 };

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::None;

  bool operator==(const LayerSpec&) const = default;
};

/// Non-owning view of one labelled example; the features live in a Dataset
/// (or any other buffer that outlives the view).
struct Example {
  std::span<const double> x;
  std::size_t y = 0;
};

/// Dense feed-forward network over a flat parameter vector.
///
/// Parameters are laid out layer by layer: the row-major weight matrix
/// (out_dim x in_dim) followed by the bias vector (out_dim). The activation of
/// a layer is applied to its affine output; the final layer produces logits.
class Model {
 public:
  Model() = default;
  /// Zero-initialised parameters. Consecutive layers must chain.
  explicit Model(std::vector<LayerSpec> layers);

  /// Single dense layer.
  static Model linear(std::size_t in_dim, std::size_t num_classes);
  /// ReLU MLP with the given hidden widths; `hidden` may be empty.
  static Model mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                   std::size_t num_classes);

  /// Uniform in +-1/sqrt(fan_in) for weights and biases of each layer.
  void init_uniform(Rng& rng);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }
  std::size_t param_count() const noexcept { return params_.size(); }
  std::size_t input_dim() const noexcept;
  std::size_t output_dim() const noexcept;

  /// Logits f(x).
  std::vector<double> forward(std::span<const double> x) const;

  /// d(cotangent . f(x)) / d params.
  std::vector<double> vjp_params(std::span<const double> x, std::span<const double> cotangent) const;

  /// grad += scale * d(cotangent . f(x)) / d params, without allocating the
  /// result vector. Used by the batch reductions.
  void accumulate_vjp(std::span<const double> x, std::span<const double> cotangent, double scale,
                      std::span<double> grad) const;

  bool operator==(const Model&) const = default;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<double> params_;
};

/// Sum over layers of in*out + out.
std::size_t param_count_for(const std::vector<LayerSpec>& layers);

/// dE(x, y)/d params for the given score kind.
std::vector<double> score_grad(const Model& model, const Example& ex, ScoreKind kind);

/// Fixed-layout binary checkpoint ("CRML" container, model payload).
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace crm
