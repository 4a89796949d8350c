#include "cxr/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace cxr {

namespace {

[[noreturn]] void layer_error(const LayerSpec& spec, const std::string& detail) {
  throw std::invalid_argument("layer '" + spec.name + "' (" + to_string(spec.kind) + "): " + detail);
}

bool has_parameters(LayerKind kind) { return kind == LayerKind::Conv || kind == LayerKind::Dense; }

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::GlobalAvgPool: return "gap";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Concat: return "concat";
    case LayerKind::Flatten: return "flatten";
  }
  return "unknown";
}

LayerKind parse_layer_kind(const std::string& text) {
  static const std::map<std::string, LayerKind> kinds = {
      {"conv", LayerKind::Conv},       {"maxpool", LayerKind::MaxPool},
      {"gap", LayerKind::GlobalAvgPool}, {"dense", LayerKind::Dense},
      {"relu", LayerKind::Relu},       {"softmax", LayerKind::Softmax},
      {"concat", LayerKind::Concat},   {"flatten", LayerKind::Flatten}};
  auto it = kinds.find(text);
  if (it == kinds.end()) throw std::invalid_argument("unknown layer kind '" + text + "'");
  return it->second;
}

void to_json(nlohmann::json& j, const LayerSpec& spec) {
  j = nlohmann::json{{"name", spec.name}, {"kind", to_string(spec.kind)}};
  if (!spec.inputs.empty()) j["inputs"] = spec.inputs;
  switch (spec.kind) {
    case LayerKind::Conv:
      j["filters"] = spec.filters;
      j["kernel"] = spec.kernel;
      j["stride"] = spec.stride;
      j["padding"] = spec.padding == Padding::Same ? "same" : "valid";
      break;
    case LayerKind::MaxPool:
      j["window"] = spec.window;
      j["stride"] = spec.stride;
      break;
    case LayerKind::Dense:
      j["units"] = spec.units;
      break;
    default:
      break;
  }
}

void from_json(const nlohmann::json& j, LayerSpec& spec) {
  if (!j.is_object()) throw std::invalid_argument("layer spec must be an object");
  spec = LayerSpec{};
  spec.name = j.at("name").get<std::string>();
  spec.kind = parse_layer_kind(j.at("kind").get<std::string>());
  std::set<std::string> allowed = {"name", "kind", "inputs"};
  auto need = [&](const char* key) -> std::size_t {
    allowed.insert(key);
    if (!j.contains(key)) {
      throw std::invalid_argument("layer '" + spec.name + "' is missing '" + key + "'");
    }
    return j.at(key).get<std::size_t>();
  };
  auto optional = [&](const char* key, std::size_t fallback) -> std::size_t {
    allowed.insert(key);
    return j.contains(key) ? j.at(key).get<std::size_t>() : fallback;
  };
  if (j.contains("inputs")) spec.inputs = j.at("inputs").get<std::vector<std::string>>();
  switch (spec.kind) {
    case LayerKind::Conv: {
      spec.filters = need("filters");
      spec.kernel = optional("kernel", 3);
      spec.stride = optional("stride", 1);
      allowed.insert("padding");
      const std::string padding = j.value("padding", std::string("same"));
      if (padding != "same" && padding != "valid") {
        throw std::invalid_argument("layer '" + spec.name + "': padding must be same or valid");
      }
      spec.padding = padding == "same" ? Padding::Same : Padding::Valid;
      break;
    }
    case LayerKind::MaxPool:
      spec.window = optional("window", 2);
      spec.stride = optional("stride", spec.window);
      break;
    case LayerKind::Dense:
      spec.units = need("units");
      break;
    default:
      break;
  }
  for (const auto& item : j.items()) {
    if (!allowed.contains(item.key())) {
      throw std::invalid_argument("layer '" + spec.name + "': unknown key '" + item.key() + "'");
    }
  }
}

std::vector<LayerSpec> default_layers(std::size_t class_count) {
  std::vector<LayerSpec> layers;
  auto conv = [](std::string name, std::size_t filters, std::vector<std::string> inputs = {}) {
    LayerSpec s;
    s.name = std::move(name);
    s.kind = LayerKind::Conv;
    s.filters = filters;
    s.inputs = std::move(inputs);
    return s;
  };
  auto simple = [](std::string name, LayerKind kind, std::vector<std::string> inputs = {}) {
    LayerSpec s;
    s.name = std::move(name);
    s.kind = kind;
    s.inputs = std::move(inputs);
    if (kind == LayerKind::MaxPool) s.stride = 2;
    return s;
  };
  const std::size_t filters[] = {32, 64, 128, 256};
  std::string previous_pool;
  std::vector<std::string> taps;
  for (int b = 0; b < 4; ++b) {
    const std::string id = std::to_string(b + 1);
    layers.push_back(conv("block" + id + "_conv1", filters[b],
                          previous_pool.empty() ? std::vector<std::string>{}
                                                : std::vector<std::string>{previous_pool}));
    layers.push_back(simple("block" + id + "_relu1", LayerKind::Relu));
    layers.push_back(conv("block" + id + "_conv2", filters[b]));
    layers.push_back(simple("block" + id + "_relu2", LayerKind::Relu));
    previous_pool = "block" + id + "_pool";
    layers.push_back(simple(previous_pool, LayerKind::MaxPool));
    taps.push_back("block" + id + "_gap");
    layers.push_back(simple(taps.back(), LayerKind::GlobalAvgPool, {previous_pool}));
  }
  layers.push_back(simple("flatten", LayerKind::Flatten, {previous_pool}));
  std::vector<std::string> merged = {"flatten"};
  merged.insert(merged.end(), taps.begin(), taps.end());
  layers.push_back(simple("concat", LayerKind::Concat, merged));
  LayerSpec fc1 = simple("fc1", LayerKind::Dense);
  fc1.units = 512;
  layers.push_back(fc1);
  layers.push_back(simple("fc1_relu", LayerKind::Relu));
  LayerSpec head = simple("logits", LayerKind::Dense);
  head.units = class_count;
  layers.push_back(head);
  layers.push_back(simple("probabilities", LayerKind::Softmax));
  return layers;
}

template <typename T>
ModelGraph<T>::ModelGraph(std::vector<LayerSpec> layers, Shape input_shape, std::size_t class_count)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)), class_count_(class_count) {
  if (input_shape_.empty() || element_count(input_shape_) == 0) {
    throw std::invalid_argument("model input shape must be non-empty with positive extents");
  }
  if (class_count_ < 2) throw std::invalid_argument("model needs at least two classes");
  if (layers_.empty()) throw std::invalid_argument("model config is empty: no softmax head");
  for (std::size_t c = 0; c < class_count_; ++c) class_names_.push_back("class" + std::to_string(c));

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = layers_[i];
    if (spec.name.empty() || spec.name == kInputName) layer_error(spec, "invalid layer name");
    if (index.contains(spec.name)) layer_error(spec, "duplicate layer name");

    std::vector<std::size_t> producers;
    if (spec.inputs.empty()) {
      producers.push_back(i == 0 ? kInputIndex : i - 1);
    } else {
      for (const auto& ref : spec.inputs) {
        if (ref == kInputName) {
          producers.push_back(kInputIndex);
        } else if (auto it = index.find(ref); it != index.end()) {
          producers.push_back(it->second);
        } else {
          layer_error(spec, "input '" + ref + "' does not name an earlier layer");
        }
      }
    }
    if (spec.kind != LayerKind::Concat && producers.size() != 1) {
      layer_error(spec, "expects exactly one input");
    }
    std::vector<Shape> in;
    for (auto p : producers) in.push_back(p == kInputIndex ? input_shape_ : shapes_[p]);
    const Shape& x = in.front();

    Shape out;
    switch (spec.kind) {
      case LayerKind::Conv: {
        if (x.size() != 3) layer_error(spec, "expects [C,H,W] input, got " + to_string(x));
        if (spec.filters == 0 || spec.kernel == 0 || spec.stride == 0) {
          layer_error(spec, "filters, kernel and stride must be positive");
        }
        if (spec.padding == Padding::Valid && (x[1] < spec.kernel || x[2] < spec.kernel)) {
          layer_error(spec, "input " + to_string(x) + " is smaller than the kernel");
        }
        const auto g = conv_geometry(x[1], x[2], spec.kernel, {spec.stride, spec.padding});
        out = {spec.filters, g.out_h, g.out_w};
        break;
      }
      case LayerKind::MaxPool:
        if (x.size() != 3) layer_error(spec, "expects [C,H,W] input, got " + to_string(x));
        if (spec.window == 0 || spec.stride == 0) layer_error(spec, "window and stride must be positive");
        if (x[1] < spec.window || x[2] < spec.window) {
          layer_error(spec, "window exceeds spatial extent " + to_string(x));
        }
        out = {x[0], pool_extent(x[1], spec.window, spec.stride),
               pool_extent(x[2], spec.window, spec.stride)};
        break;
      case LayerKind::GlobalAvgPool:
        if (x.size() != 3) layer_error(spec, "expects [C,H,W] input, got " + to_string(x));
        out = {x[0]};
        break;
      case LayerKind::Flatten:
        out = {element_count(x)};
        break;
      case LayerKind::Dense:
        if (x.size() != 1) layer_error(spec, "expects flat input, got " + to_string(x));
        if (spec.units == 0) layer_error(spec, "units must be positive");
        out = {spec.units};
        break;
      case LayerKind::Relu:
        out = x;
        break;
      case LayerKind::Softmax:
        if (x.size() != 1) layer_error(spec, "expects flat input, got " + to_string(x));
        out = x;
        break;
      case LayerKind::Concat: {
        std::size_t width = 0;
        for (const auto& s : in) {
          if (s.size() != 1) layer_error(spec, "expects flat inputs, got " + to_string(s));
          width += s[0];
        }
        out = {width};
        break;
      }
    }
    index[spec.name] = i;
    producers_.push_back(std::move(producers));
    shapes_.push_back(std::move(out));
  }

  const auto& last = layers_.back();
  if (last.kind != LayerKind::Softmax) layer_error(last, "final layer must be softmax");
  if (shapes_.back() != Shape{class_count_}) {
    layer_error(last, "outputs " + to_string(shapes_.back()) + " but the model has " +
                          std::to_string(class_count_) + " classes");
  }

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = layers_[i];
    const Shape& x = producers_[i][0] == kInputIndex ? input_shape_ : shapes_[producers_[i][0]];
    if (spec.kind == LayerKind::Conv) {
      params_[spec.name] = {Tensor<T>(Shape{spec.filters, x[0], spec.kernel, spec.kernel}),
                            Tensor<T>(Shape{spec.filters})};
    } else if (spec.kind == LayerKind::Dense) {
      params_[spec.name] = {Tensor<T>(Shape{x[0], spec.units}), Tensor<T>(Shape{spec.units})};
    }
  }
}

template <typename T>
void ModelGraph<T>::set_class_names(std::vector<std::string> names) {
  if (names.size() != class_count_) {
    throw std::invalid_argument("model has " + std::to_string(class_count_) + " classes but " +
                                std::to_string(names.size()) + " names were given");
  }
  class_names_ = std::move(names);
}

template <typename T>
std::vector<std::string> ModelGraph<T>::parameter_layers() const {
  std::vector<std::string> names;
  for (const auto& spec : layers_) {
    if (has_parameters(spec.kind)) names.push_back(spec.name);
  }
  return names;
}

template <typename T>
LayerParams<T>& ModelGraph<T>::parameters(const std::string& layer) {
  auto it = params_.find(layer);
  if (it == params_.end()) throw std::invalid_argument("layer '" + layer + "' has no parameters");
  return it->second;
}

template <typename T>
std::vector<Tensor<T>*> ModelGraph<T>::parameter_tensors() {
  std::vector<Tensor<T>*> out;
  for (const auto& name : parameter_layers()) {
    auto& p = params_.at(name);
    out.push_back(&p.weight);
    out.push_back(&p.bias);
  }
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> ModelGraph<T>::parameter_tensors() const {
  std::vector<const Tensor<T>*> out;
  for (const auto& name : parameter_layers()) {
    const auto& p = params_.at(name);
    out.push_back(&p.weight);
    out.push_back(&p.bias);
  }
  return out;
}

template <typename T>
void ModelGraph<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& name : parameter_layers()) {
    auto& p = params_.at(name);
    const std::size_t fan_in = p.weight.size() / p.bias.size();
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& w : p.weight.data()) w = static_cast<T>(dist(rng));
    p.bias.fill(T{0});
  }
}

template <typename T>
ForwardPass<T> ModelGraph<T>::forward(Tape<T>& tape, const Tensor<T>& batch) const {
  Shape expected = input_shape_;
  expected.insert(expected.begin(), batch.rank() > 0 ? batch.dim(0) : 0);
  if (batch.shape() != expected) {
    throw std::invalid_argument("model input mismatch: batch " + to_string(batch.shape()) +
                                " vs expected [N]+" + to_string(input_shape_));
  }
  ForwardPass<T> pass;
  const Var<T> source = tape.constant(batch);
  std::vector<Var<T>> outputs;
  outputs.reserve(layers_.size());
  auto input_of = [&](std::size_t producer) {
    return producer == kInputIndex ? source : outputs[producer];
  };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = layers_[i];
    const Var<T> x = input_of(producers_[i][0]);
    Var<T> y;
    switch (spec.kind) {
      case LayerKind::Conv:
      case LayerKind::Dense: {
        const auto& p = params_.at(spec.name);
        const Var<T> w = tape.variable(p.weight);
        const Var<T> b = tape.variable(p.bias);
        pass.parameters.push_back(w);
        pass.parameters.push_back(b);
        y = spec.kind == LayerKind::Conv ? conv2d(x, w, b, {spec.stride, spec.padding})
                                         : dense(x, w, b);
        break;
      }
      case LayerKind::MaxPool: y = maxpool2d(x, spec.window, spec.stride); break;
      case LayerKind::GlobalAvgPool: y = global_avg_pool2d(x); break;
      case LayerKind::Flatten: y = flatten(x); break;
      case LayerKind::Relu: y = relu(x); break;
      case LayerKind::Softmax: y = softmax(x); break;
      case LayerKind::Concat: {
        std::vector<Var<T>> parts;
        for (auto p : producers_[i]) parts.push_back(input_of(p));
        y = concat(std::span<const Var<T>>(parts));
        break;
      }
    }
    outputs.push_back(y);
  }
  pass.output = outputs.back();
  return pass;
}

template <typename T>
Tensor<T> ModelGraph<T>::predict(const Tensor<T>& batch, std::size_t chunk) const {
  if (batch.rank() != input_shape_.size() + 1) {
    throw std::invalid_argument("predict: batch " + to_string(batch.shape()) +
                                " does not match input shape " + to_string(input_shape_));
  }
  const std::size_t n = batch.dim(0);
  const std::size_t sample = batch.size() / n;
  chunk = std::max<std::size_t>(chunk, 1);
  Tensor<T> out(Shape{n, class_count_});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    Shape shape = batch.shape();
    shape[0] = count;
    std::vector<T> slice(batch.raw() + start * sample, batch.raw() + (start + count) * sample);
    Tape<T> tape;
    const auto pass = forward(tape, Tensor<T>(shape, std::move(slice)));
    const auto& probs = pass.output.value();
    std::copy(probs.raw(), probs.raw() + probs.size(), out.raw() + start * class_count_);
  }
  return out;
}

template <typename T>
ModelGraph<T> build_model(std::vector<LayerSpec> layers, Shape input_shape,
                          std::size_t class_count, std::uint64_t seed) {
  ModelGraph<T> model(std::move(layers), std::move(input_shape), class_count);
  model.initialize(seed);
  return model;
}

template <typename T>
std::size_t layer_parameter_count(const ModelGraph<T>& model, std::size_t i) {
  const auto& spec = model.layers().at(i);
  if (!has_parameters(spec.kind)) return 0;
  const auto& p = model.parameters().at(spec.name);
  return p.weight.size() + p.bias.size();
}

template <typename T>
std::size_t count_parameters(const ModelGraph<T>& model) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) total += layer_parameter_count(model, i);
  return total;
}

template class ModelGraph<float>;
template class ModelGraph<double>;
template ModelGraph<float> build_model(std::vector<LayerSpec>, Shape, std::size_t, std::uint64_t);
template ModelGraph<double> build_model(std::vector<LayerSpec>, Shape, std::size_t, std::uint64_t);
template std::size_t count_parameters(const ModelGraph<float>&);
template std::size_t count_parameters(const ModelGraph<double>&);
template std::size_t layer_parameter_count(const ModelGraph<float>&, std::size_t);
template std::size_t layer_parameter_count(const ModelGraph<double>&, std::size_t);

}  // namespace cxr
