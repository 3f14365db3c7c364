#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prunix/dataset.hpp"
#include "prunix/tensor.hpp"

namespace prunix {

enum class LayerKind { Conv, FC, ReLU, MaxPool };

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::string name;
  // Conv
  std::size_t filters = 0, in_channels = 0, kernel = 0, stride = 1, pad = 0;
  // FC
  std::size_t out_features = 0, in_features = 0;
  // MaxPool
  std::size_t window = 0;

  bool has_params() const {
    return kind == LayerKind::Conv || kind == LayerKind::FC;
  }
};

struct Layer {
  LayerSpec spec;
  Tensor weight;  // Conv: [N,C,K,K]; FC: [N,C]
  Tensor bias;    // [N]
};

struct Model {
  std::vector<Layer> layers;
  std::size_t num_classes = 0;
  std::array<std::size_t, 3> input_shape{};  // C,H,W
  // L_f: the first `regularized_param_layers` parameter layers carry the
  // group penalty. Defaults to all Conv and FC layers.
  std::size_t regularized_param_layers = 0;

  std::vector<std::size_t> param_layer_indices() const;
  std::size_t param_layer_count() const { return param_layer_indices().size(); }
  Layer& param_layer(std::size_t pi);
  const Layer& param_layer(std::size_t pi) const;
  std::size_t weight_count() const;  // weights only, biases excluded
};

// One filter (Conv) or one output row (FC): a contiguous slice of the layer's
// weight tensor. Groups partition each weight tensor exactly.
struct GroupView {
  std::size_t param_layer = 0;  // index among parameter layers
  std::size_t group = 0;        // g within the layer
  std::size_t offset = 0;       // flat offset into the weight tensor
  std::size_t size = 0;
};

std::vector<GroupView> parameter_groups(const Model& m);

// Reference desk-scale architecture:
// Conv(8,3x3,pad 1) - ReLU - MaxPool(2) - Conv(16,3x3,pad 1) - ReLU -
// MaxPool(2) - FC(num_classes).
Model make_desk_model(std::size_t num_classes,
                      std::array<std::size_t, 3> input_shape);
Model make_model(const std::string& arch, std::size_t num_classes,
                 std::array<std::size_t, 3> input_shape);

// Uniform init in +/- sqrt(6/(fan_in+fan_out)); biases zero.
void init_params(Model& m, std::uint64_t seed);

// Per-layer activation shapes implied by input_shape; index i is the input
// shape of layers[i], with one extra trailing entry for the logits.
std::vector<std::array<std::size_t, 3>> layer_input_shapes(const Model& m);

struct ForwardTrace {
  std::vector<Tensor> inputs;  // inputs.size() == layers.size()
};

Tensor forward(const Model& m, const Tensor& input,
               ForwardTrace* trace = nullptr);
// Accumulates into each parameter tensor's grad buffer; returns nothing.
// Requires the trace of a completed forward pass over the same model.
void backward(Model& m, const ForwardTrace& trace, const Tensor& dlogits);

void zero_gradients(Model& m);

std::size_t argmax_class(const Tensor& logits);  // ties -> lowest index

double evaluate_accuracy(const Model& m, const Dataset& ds,
                         const std::vector<std::size_t>& indices);

}  // namespace prunix
