#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sgan/ops.hpp"
#include "sgan/params.hpp"

namespace sgan::nets {

enum class LayerKind {
  FullyConnected,
  Reshape,
  Conv,
  ConvTranspose,
  BatchNorm,
  LeakyRelu,
  Tanh,
  Sigmoid,
  MaxPool,
  HighPass,  // fixed F0 filter applied per channel
  GlobalAvgPool,
  Flatten,
};

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Flatten;
  std::string name;
  std::size_t in = 0;   // input channels / features
  std::size_t out = 0;  // output channels / features
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool bias = false;
  double slope = 0.2;
  Shape reshape;  // target shape without the batch axis

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Ordered layer list with per-sample input and output shapes (batch axis omitted).
struct NetworkSpec {
  std::string role;
  Shape input_shape;
  Shape output_shape;
  std::vector<LayerSpec> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;

  /// One line per item: "network", "input", "layer ..." lines, then "output".
  std::string to_text() const;
  static NetworkSpec from_text(const std::string& text);
};

/// Symbolic forward propagation of the per-sample shape; throws ShapeError on any mismatch.
Shape audit_shapes(const NetworkSpec& spec);

/// F0 high-pass kernel, row-major 5x5, already divided by 12.
const std::array<double, 25>& f0_kernel();

/// fc(z_dim -> 8b*(s/16)^2) -> reshape -> BN -> LReLU, three stride-2
/// ConvTranspose-BN-LReLU stages, a fourth stride-2 ConvTranspose to 3 channels, tanh.
NetworkSpec build_generator(std::size_t z_dim = 100, std::size_t base_channels = 64, std::size_t out_size = 64);

enum class CriticKind { Discriminator, Steganalyser };

/// Four stride-2 Conv-BN-LReLU stages (b, 2b, 4b, 8b channels), fully connected to 1, sigmoid.
NetworkSpec build_critic(CriticKind kind, std::size_t in_size = 64, std::size_t base_channels = 64);

struct SteganalyserOptions {
  std::size_t first_channels = 8;   // first conv pair
  std::size_t second_channels = 16;  // second conv pair
  std::size_t hidden_units = 1024;
};

/// F0 -> Conv -> Conv -> MaxPool -> Conv -> Conv -> MaxPool -> global average ->
/// FC(hidden) -> FC(1) -> sigmoid. Inner convs are 3x3 stride 1 with bias, each followed by
/// a leaky ReLU; pools are 2x2 stride 2.
NetworkSpec build_independent_steganalyser(std::size_t in_size = 64, const SteganalyserOptions& options = {});

/// Dcgan: every weight ~ N(0, 0.02). He: N(0, 2 / fan_in), for deep nets without batch norm.
enum class WeightInit { Dcgan, He };

/// A spec together with its parameters.
class Network {
 public:
  Network() = default;
  /// Weights per `init`, batch-norm scale ~ N(1, 0.02), biases and shifts 0,
  /// running mean 0 and running variance 1.
  Network(NetworkSpec spec, std::uint64_t init_seed, ops::BatchNormOptions bn = {},
          WeightInit init = WeightInit::Dcgan);

  /// input [N, input_shape...] -> [N, output_shape...]. `training` selects batch statistics.
  Tensor forward(const Tensor& input, bool training);

  const NetworkSpec& spec() const { return spec_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  NetworkSpec spec_;
  ParamSet params_;
  ops::BatchNormOptions bn_;
};

}  // namespace sgan::nets
