#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cxr/autograd.hpp"
#include "cxr/ops.hpp"
#include "cxr/tensor.hpp"
#include "json.hpp"

namespace cxr {

enum class LayerKind { Conv, MaxPool, GlobalAvgPool, Dense, Relu, Softmax, Concat, Flatten };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& text);

// Name of the implicit graph source.
inline constexpr const char* kInputName = "input";

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Relu;
  // Producers by name. Empty means the previous layer (or the model input for the first layer).
  std::vector<std::string> inputs;
  std::size_t filters = 0;  // conv
  std::size_t kernel = 3;   // conv
  std::size_t stride = 1;   // conv, maxpool
  Padding padding = Padding::Same;
  std::size_t window = 2;   // maxpool
  std::size_t units = 0;    // dense

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

void to_json(nlohmann::json& j, const LayerSpec& spec);
// Unknown keys and missing required hyperparameters throw std::invalid_argument.
void from_json(const nlohmann::json& j, LayerSpec& spec);

// Four conv-conv-pool blocks (32/64/128/256 filters), a global-average tap after each
// pool, flatten of the last block concatenated with the four taps, dense 512, dense K.
std::vector<LayerSpec> default_layers(std::size_t class_count = 3);

template <typename T>
struct LayerParams {
  Tensor<T> weight;
  Tensor<T> bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <typename T>
struct ForwardPass {
  Var<T> output;
  // Weight then bias for each parameterized layer, in layer order.
  std::vector<Var<T>> parameters;
};

template <typename T>
class ModelGraph {
 public:
  // Validates names, references and shapes; parameters start at zero.
  // Throws std::invalid_argument naming the first offending layer.
  ModelGraph(std::vector<LayerSpec> layers, Shape input_shape, std::size_t class_count);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const Shape& input_shape() const { return input_shape_; }
  std::size_t class_count() const { return class_count_; }
  // Per-sample output shape of layer i (batch axis excluded).
  const Shape& output_shape(std::size_t i) const { return shapes_.at(i); }

  const std::vector<std::string>& class_names() const { return class_names_; }
  void set_class_names(std::vector<std::string> names);

  // Names of parameterized layers in layer order.
  std::vector<std::string> parameter_layers() const;
  const std::map<std::string, LayerParams<T>>& parameters() const { return params_; }
  LayerParams<T>& parameters(const std::string& layer);
  // Weight then bias per parameterized layer, in layer order.
  std::vector<Tensor<T>*> parameter_tensors();
  std::vector<const Tensor<T>*> parameter_tensors() const;

  // He-uniform weights (fan-in), zero biases.
  void initialize(std::uint64_t seed);

  ForwardPass<T> forward(Tape<T>& tape, const Tensor<T>& batch) const;

  // Softmax rows for a [N, input_shape...] batch, evaluated in chunks.
  Tensor<T> predict(const Tensor<T>& batch, std::size_t chunk = 32) const;

  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;

 private:
  std::vector<LayerSpec> layers_;
  Shape input_shape_;
  std::size_t class_count_ = 0;
  std::vector<std::string> class_names_;
  std::vector<Shape> shapes_;
  // Resolved producer indices per layer; kInputIndex denotes the model input.
  std::vector<std::vector<std::size_t>> producers_;
  std::map<std::string, LayerParams<T>> params_;
};

inline constexpr std::size_t kInputIndex = static_cast<std::size_t>(-1);

template <typename T>
ModelGraph<T> build_model(std::vector<LayerSpec> layers, Shape input_shape,
                          std::size_t class_count, std::uint64_t seed);

// conv: k*k*C_in*F + F; dense: D*M + M; everything else: 0.
template <typename T>
std::size_t count_parameters(const ModelGraph<T>& model);

// Parameters held by layer i.
template <typename T>
std::size_t layer_parameter_count(const ModelGraph<T>& model, std::size_t i);

extern template class ModelGraph<float>;
extern template class ModelGraph<double>;

}  // namespace cxr
