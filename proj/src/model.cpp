#include "prunix/model.hpp"

#include <cmath>
#include <stdexcept>

#include "prunix/errors.hpp"
#include "prunix/kernels.hpp"
#include "prunix/nn.hpp"
#include "prunix/rng.hpp"

namespace prunix {

std::vector<std::size_t> Model::param_layer_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].spec.has_params()) idx.push_back(i);
  return idx;
}

Layer& Model::param_layer(std::size_t pi) {
  return layers[param_layer_indices().at(pi)];
}

const Layer& Model::param_layer(std::size_t pi) const {
  return layers[param_layer_indices().at(pi)];
}

std::size_t Model::weight_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers)
    if (l.spec.has_params()) n += l.weight.numel();
  return n;
}

std::vector<GroupView> parameter_groups(const Model& m) {
  std::vector<GroupView> groups;
  std::size_t pi = 0;
  for (const Layer& l : m.layers) {
    if (!l.spec.has_params()) continue;
    // G = N_l for both Conv and FC; each group is one contiguous slice.
    const std::size_t n = l.spec.kind == LayerKind::Conv ? l.spec.filters
                                                         : l.spec.out_features;
    const std::size_t group_size = l.weight.numel() / n;
    for (std::size_t g = 0; g < n; ++g)
      groups.push_back({pi, g, g * group_size, group_size});
    ++pi;
  }
  return groups;
}

Model make_desk_model(std::size_t num_classes,
                      std::array<std::size_t, 3> input_shape) {
  Model m;
  m.num_classes = num_classes;
  m.input_shape = input_shape;

  const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];

  LayerSpec conv1{LayerKind::Conv, "conv1"};
  conv1.filters = 8;
  conv1.in_channels = c;
  conv1.kernel = 3;
  conv1.stride = 1;
  conv1.pad = 1;

  LayerSpec relu1{LayerKind::ReLU, "relu1"};
  LayerSpec pool1{LayerKind::MaxPool, "pool1"};
  pool1.window = 2;

  LayerSpec conv2{LayerKind::Conv, "conv2"};
  conv2.filters = 16;
  conv2.in_channels = 8;
  conv2.kernel = 3;
  conv2.stride = 1;
  conv2.pad = 1;

  LayerSpec relu2{LayerKind::ReLU, "relu2"};
  LayerSpec pool2{LayerKind::MaxPool, "pool2"};
  pool2.window = 2;

  LayerSpec fc{LayerKind::FC, "fc1"};
  fc.out_features = num_classes;
  fc.in_features = 16 * (h / 4) * (w / 4);

  for (const LayerSpec& s : {conv1, relu1, pool1, conv2, relu2, pool2, fc}) {
    Layer l;
    l.spec = s;
    if (s.kind == LayerKind::Conv) {
      l.weight = Tensor({s.filters, s.in_channels, s.kernel, s.kernel});
      l.bias = Tensor({s.filters});
    } else if (s.kind == LayerKind::FC) {
      l.weight = Tensor({s.out_features, s.in_features});
      l.bias = Tensor({s.out_features});
    }
    m.layers.push_back(std::move(l));
  }
  m.regularized_param_layers = m.param_layer_count();
  return m;
}

Model make_model(const std::string& arch, std::size_t num_classes,
                 std::array<std::size_t, 3> input_shape) {
  if (arch == "desk") return make_desk_model(num_classes, input_shape);
  throw ConfigError("unknown architecture: " + arch);
}

void init_params(Model& m, std::uint64_t seed) {
  for (Layer& l : m.layers) {
    if (!l.spec.has_params()) continue;
    Rng rng(derive_seed(seed, "init:" + l.spec.name));
    std::size_t fan_in, fan_out;
    if (l.spec.kind == LayerKind::Conv) {
      fan_in = l.spec.in_channels * l.spec.kernel * l.spec.kernel;
      fan_out = l.spec.filters * l.spec.kernel * l.spec.kernel;
    } else {
      fan_in = l.spec.in_features;
      fan_out = l.spec.out_features;
    }
    const float bound =
        std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    for (float& x : l.weight.data) x = rng.uniform_f(-bound, bound);
    for (float& x : l.bias.data) x = 0.0f;
  }
}

std::vector<std::array<std::size_t, 3>> layer_input_shapes(const Model& m) {
  std::vector<std::array<std::size_t, 3>> shapes;
  std::array<std::size_t, 3> cur = m.input_shape;
  for (const Layer& l : m.layers) {
    shapes.push_back(cur);
    switch (l.spec.kind) {
      case LayerKind::Conv: {
        const nn::ConvDims d = nn::conv_output_dims(
            cur[1], cur[2], l.spec.kernel, l.spec.stride, l.spec.pad);
        cur = {l.spec.filters, d.out_h, d.out_w};
        break;
      }
      case LayerKind::FC:
        cur = {l.spec.out_features, 1, 1};
        break;
      case LayerKind::ReLU:
        break;
      case LayerKind::MaxPool:
        cur = {cur[0], cur[1] / l.spec.window, cur[2] / l.spec.window};
        break;
    }
  }
  shapes.push_back(cur);
  return shapes;
}

Tensor forward(const Model& m, const Tensor& input, ForwardTrace* trace) {
  if (input.numel() !=
      m.input_shape[0] * m.input_shape[1] * m.input_shape[2])
    throw std::invalid_argument("forward: input shape mismatch");
  if (trace != nullptr) trace->inputs.clear();

  Tensor x = input;
  for (const Layer& l : m.layers) {
    if (trace != nullptr) trace->inputs.push_back(x);
    switch (l.spec.kind) {
      case LayerKind::Conv: {
        Tensor y = nn::conv2d(x, l.weight, l.spec.stride, l.spec.pad);
        const std::size_t hw = y.dim(1) * y.dim(2);
        for (std::size_t f = 0; f < l.spec.filters; ++f)
          kern::add_const(y.data.data() + f * hw, l.bias.data[f], hw);
        x = std::move(y);
        break;
      }
      case LayerKind::FC: {
        Tensor flat = x;
        flat.shape = {x.numel()};
        x = nn::linear(flat, l.weight, l.bias);
        break;
      }
      case LayerKind::ReLU:
        x = nn::relu(x);
        break;
      case LayerKind::MaxPool:
        x = nn::maxpool2d(x, l.spec.window);
        break;
    }
  }
  return x;
}

void backward(Model& m, const ForwardTrace& trace, const Tensor& dlogits) {
  if (trace.inputs.size() != m.layers.size())
    throw std::invalid_argument(
        "backward: trace does not match a completed forward pass");
  Tensor d = dlogits;
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    Layer& l = m.layers[li];
    const Tensor& in = trace.inputs[li];
    switch (l.spec.kind) {
      case LayerKind::Conv: {
        l.weight.ensure_grad();
        l.bias.ensure_grad();
        const std::size_t hw = d.numel() / l.spec.filters;
        for (std::size_t f = 0; f < l.spec.filters; ++f)
          l.bias.grad[f] += kern::sum(d.data.data() + f * hw, hw);
        Tensor dx(in.shape);
        nn::conv2d_backward(in, l.weight, d, l.spec.stride, l.spec.pad,
                            dx.data.data(), l.weight.grad.data());
        d = std::move(dx);
        break;
      }
      case LayerKind::FC: {
        l.weight.ensure_grad();
        l.bias.ensure_grad();
        Tensor flat = in;
        flat.shape = {in.numel()};
        Tensor dx(flat.shape);
        nn::linear_backward(flat, l.weight, d, dx.data.data(),
                            l.weight.grad.data(), l.bias.grad.data());
        dx.shape = in.shape;
        d = std::move(dx);
        break;
      }
      case LayerKind::ReLU: {
        Tensor dx(in.shape);
        nn::relu_backward(in, d, dx.data.data());
        d = std::move(dx);
        break;
      }
      case LayerKind::MaxPool: {
        Tensor dx(in.shape);
        nn::maxpool2d_backward(in, d, l.spec.window, dx.data.data());
        d = std::move(dx);
        break;
      }
    }
  }
}

void zero_gradients(Model& m) {
  for (Layer& l : m.layers) {
    l.weight.zero_grad();
    l.bias.zero_grad();
  }
}

std::size_t argmax_class(const Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.numel(); ++i)
    if (logits.data[i] > logits.data[best]) best = i;
  return best;
}

double evaluate_accuracy(const Model& m, const Dataset& ds,
                         const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const std::size_t i : indices) {
    const Tensor logits = forward(m, ds.image(i));
    if (!logits.all_finite())
      throw NumericsError("evaluate_accuracy: non-finite logits");
    if (argmax_class(logits) == static_cast<std::size_t>(ds.label(i)))
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace prunix
