#include "crm/nn.hpp"

#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "crm/error.hpp"
#include "crm/rng.hpp"

namespace crm {

std::size_t param_count_for(const std::vector<LayerSpec>& layers) {
  std::size_t count = 0;
  for (const auto& l : layers) count += l.in_dim * l.out_dim + l.out_dim;
  return count;
}

Model::Model(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("model needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.in_dim == 0 || l.out_dim == 0) throw InvalidArgument("layer dimensions must be positive");
    if (l.activation != Activation::None && l.activation != Activation::Relu)
      throw InvalidArgument("unknown activation code");
    if (i > 0 && layers_[i - 1].out_dim != l.in_dim)
      throw DimensionError("layer " + std::to_string(i) + " input", layers_[i - 1].out_dim, l.in_dim);
  }
  params_.assign(param_count_for(layers_), 0.0);
}

Model Model::linear(std::size_t in_dim, std::size_t num_classes) {
  return Model({LayerSpec{in_dim, num_classes, Activation::None}});
}

Model Model::mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                 std::size_t num_classes) {
  std::vector<LayerSpec> layers;
  std::size_t prev = in_dim;
  for (const auto width : hidden) {
    layers.push_back({prev, width, Activation::Relu});
    prev = width;
  }
  layers.push_back({prev, num_classes, Activation::None});
  return Model(std::move(layers));
}

void Model::init_uniform(Rng& rng) {
  std::size_t offset = 0;
  for (const auto& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
    const std::size_t n = l.in_dim * l.out_dim + l.out_dim;
    for (std::size_t i = 0; i < n; ++i) params_[offset + i] = rng.uniform(-bound, bound);
    offset += n;
  }
}

std::size_t Model::input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().in_dim; }
std::size_t Model::output_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().out_dim; }

namespace {

// Affine output of one layer: out = W in + b.
void affine(const LayerSpec& l, const double* params, std::span<const double> in,
            std::vector<double>& out) {
  out.resize(l.out_dim);
  const double* w = params;
  const double* b = params + l.in_dim * l.out_dim;
  for (std::size_t r = 0; r < l.out_dim; ++r) {
    const double* row = w + r * l.in_dim;
    double acc = b[r];
    for (std::size_t c = 0; c < l.in_dim; ++c) acc += row[c] * in[c];
    out[r] = acc;
  }
}

void activate(Activation a, std::vector<double>& v) {
  if (a == Activation::Relu)
    for (auto& z : v) z = z > 0.0 ? z : 0.0;
}

}  // namespace

std::vector<double> Model::forward(std::span<const double> x) const {
  if (x.size() != input_dim()) throw DimensionError("model input", input_dim(), x.size());
  std::vector<double> current(x.begin(), x.end());
  std::vector<double> next;
  const double* p = params_.data();
  for (const auto& l : layers_) {
    affine(l, p, current, next);
    activate(l.activation, next);
    current.swap(next);
    p += l.in_dim * l.out_dim + l.out_dim;
  }
  return current;
}

std::vector<double> Model::vjp_params(std::span<const double> x,
                                      std::span<const double> cotangent) const {
  std::vector<double> grad(params_.size(), 0.0);
  accumulate_vjp(x, cotangent, 1.0, grad);
  return grad;
}

void Model::accumulate_vjp(std::span<const double> x, std::span<const double> cotangent,
                           double scale, std::span<double> grad) const {
  if (x.size() != input_dim()) throw DimensionError("model input", input_dim(), x.size());
  if (cotangent.size() != output_dim())
    throw DimensionError("logit cotangent", output_dim(), cotangent.size());
  if (grad.size() != params_.size()) throw DimensionError("parameter gradient", params_.size(), grad.size());

  // Forward pass keeping every layer input and the post-activation outputs.
  std::vector<std::vector<double>> inputs;
  inputs.reserve(layers_.size() + 1);
  inputs.emplace_back(x.begin(), x.end());
  std::vector<std::size_t> offsets;
  offsets.reserve(layers_.size());
  std::size_t offset = 0;
  for (const auto& l : layers_) {
    offsets.push_back(offset);
    std::vector<double> out;
    affine(l, params_.data() + offset, inputs.back(), out);
    activate(l.activation, out);
    inputs.push_back(std::move(out));
    offset += l.in_dim * l.out_dim + l.out_dim;
  }

  std::vector<double> delta(cotangent.begin(), cotangent.end());
  for (auto& d : delta) d *= scale;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& l = layers_[li];
    const auto& out = inputs[li + 1];
    const auto& in = inputs[li];
    // ReLU'(0) is taken as 0; the post-activation output is 0 exactly when
    // the pre-activation was <= 0.
    if (l.activation == Activation::Relu)
      for (std::size_t r = 0; r < l.out_dim; ++r)
        if (!(out[r] > 0.0)) delta[r] = 0.0;

    double* gw = grad.data() + offsets[li];
    double* gb = gw + l.in_dim * l.out_dim;
    const double* w = params_.data() + offsets[li];
    for (std::size_t r = 0; r < l.out_dim; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      double* grow = gw + r * l.in_dim;
      for (std::size_t c = 0; c < l.in_dim; ++c) grow[c] += d * in[c];
      gb[r] += d;
    }
    if (li == 0) break;
    std::vector<double> prev(l.in_dim, 0.0);
    for (std::size_t r = 0; r < l.out_dim; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* row = w + r * l.in_dim;
      for (std::size_t c = 0; c < l.in_dim; ++c) prev[c] += d * row[c];
    }
    delta.swap(prev);
  }
}

std::vector<double> score_grad(const Model& model, const Example& ex, ScoreKind kind) {
  const auto logits = model.forward(ex.x);
  const auto cot = score_logit_grad(logits, ex.y, kind);
  return model.vjp_params(ex.x, cot);
}

void save_model(const Model& model, const std::filesystem::path& path) {
  io::Writer w(path);
  w.header(io::Payload::Model);
  w.u32(static_cast<std::uint32_t>(model.layers().size()));
  for (const auto& l : model.layers()) {
    w.u32(static_cast<std::uint32_t>(l.in_dim));
    w.u32(static_cast<std::uint32_t>(l.out_dim));
    w.u32(static_cast<std::uint32_t>(l.activation));
  }
  w.u64(model.param_count());
  w.f64s(model.params());
  w.finish();
}

Model load_model(const std::filesystem::path& path) {
  io::Reader r(path);
  r.header(io::Payload::Model);
  const auto layer_count = r.u32();
  if (layer_count == 0 || layer_count > 1024)
    throw FormatError(path.string() + ": implausible layer count " + std::to_string(layer_count));
  std::vector<LayerSpec> layers(layer_count);
  for (auto& l : layers) {
    l.in_dim = r.u32();
    l.out_dim = r.u32();
    const auto code = r.u32();
    if (code > 1) throw FormatError(path.string() + ": unknown activation code " + std::to_string(code));
    l.activation = static_cast<Activation>(code);
  }
  const auto stored_count = r.u64();
  const auto expected = param_count_for(layers);
  if (stored_count != expected)
    throw FormatError(path.string() + ": parameter count " + std::to_string(stored_count) +
                      " does not match topology (" + std::to_string(expected) + ")");
  if (r.remaining() != stored_count * 8)
    throw FormatError(path.string() + ": truncated file (parameter block incomplete)");
  Model model;
  try {
    model = Model(std::move(layers));
  } catch (const Error& e) {
    throw FormatError(path.string() + ": invalid topology: " + e.what());
  }
  for (auto& p : model.params()) p = r.f64();
  r.expect_end();
  return model;
}

}  // namespace crm
