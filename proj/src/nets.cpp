#include "sgan/nets.hpp"

#include <cmath>

#include <sstream>
#include <stdexcept>

#include "sgan/errors.hpp"
#include "sgan/random.hpp"

namespace sgan::nets {

namespace {

struct KindName {
  LayerKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::FullyConnected, "fully_connected"},
    {LayerKind::Reshape, "reshape"},
    {LayerKind::Conv, "conv2d"},
    {LayerKind::ConvTranspose, "conv_transpose2d"},
    {LayerKind::BatchNorm, "batch_norm"},
    {LayerKind::LeakyRelu, "leaky_relu"},
    {LayerKind::Tanh, "tanh"},
    {LayerKind::Sigmoid, "sigmoid"},
    {LayerKind::MaxPool, "max_pool2d"},
    {LayerKind::HighPass, "high_pass_f0"},
    {LayerKind::GlobalAvgPool, "global_avg_pool"},
    {LayerKind::Flatten, "flatten"},
};

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

void check_size(std::size_t size, const char* what) {
  if (size < 16 || size % 16 != 0 || !is_power_of_two(size / 16)) {
    throw ShapeError(std::string(what) + ": size " + std::to_string(size) +
                     " is not 16 * 2^k as four stride-2 stages require");
  }
}

LayerSpec layer(LayerKind kind, std::string name) {
  LayerSpec l;
  l.kind = kind;
  l.name = std::move(name);
  return l;
}

LayerSpec conv_like(LayerKind kind, std::string name, std::size_t in, std::size_t out, std::size_t k, std::size_t s,
                    std::size_t p, bool bias) {
  LayerSpec l = layer(kind, std::move(name));
  l.in = in;
  l.out = out;
  l.kernel = k;
  l.stride = s;
  l.pad = p;
  l.bias = bias;
  return l;
}

LayerSpec dense(std::string name, std::size_t in, std::size_t out) {
  LayerSpec l = layer(LayerKind::FullyConnected, std::move(name));
  l.in = in;
  l.out = out;
  l.bias = true;
  return l;
}

LayerSpec batch_norm(std::string name, std::size_t channels) {
  LayerSpec l = layer(LayerKind::BatchNorm, std::move(name));
  l.in = l.out = channels;
  return l;
}

LayerSpec leaky(std::string name) { return layer(LayerKind::LeakyRelu, std::move(name)); }

}  // namespace

std::string to_string(LayerKind kind) {
  for (const auto& kn : kKindNames)
    if (kn.kind == kind) return kn.name;
  throw std::logic_error("unnamed layer kind");
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (const auto& kn : kKindNames)
    if (name == kn.name) return kn.kind;
  throw std::invalid_argument("unknown layer kind '" + name + "'");
}

const std::array<double, 25>& f0_kernel() {
  static const std::array<double, 25> kernel = [] {
    constexpr int raw[25] = {-1, 2,  -2, 2,  -1,  //
                             2,  -6, 8,  -6, 2,   //
                             -2, 8,  -12, 8, -2,  //
                             2,  -6, 8,  -6, 2,   //
                             -1, 2,  -2, 2,  -1};
    std::array<double, 25> k{};
    for (int i = 0; i < 25; ++i) k[i] = raw[i] / 12.0;
    return k;
  }();
  return kernel;
}

Shape audit_shapes(const NetworkSpec& spec) {
  Shape s = spec.input_shape;
  const auto fail = [&](const LayerSpec& l, const std::string& why) {
    throw ShapeError("layer " + l.name + " (" + to_string(l.kind) + ") on " + shape_string(s) + ": " + why);
  };
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::FullyConnected:
        if (s.size() != 1 || s[0] != l.in) fail(l, "expects " + std::to_string(l.in) + " features");
        s = {l.out};
        break;
      case LayerKind::Reshape:
        if (shape_size(l.reshape) != shape_size(s)) fail(l, "element count changes");
        s = l.reshape;
        break;
      case LayerKind::HighPass:
        if (l.in != l.out || l.stride != 1 || l.kernel != 5) fail(l, "F0 is a depthwise 5x5 stride-1 filter");
        [[fallthrough]];
      case LayerKind::Conv:
        if (s.size() != 3 || s[0] != l.in) fail(l, "expects " + std::to_string(l.in) + " channels");
        if (l.kernel > s[1] + 2 * l.pad || l.kernel > s[2] + 2 * l.pad) fail(l, "kernel exceeds padded input");
        s = {l.out, (s[1] + 2 * l.pad - l.kernel) / l.stride + 1, (s[2] + 2 * l.pad - l.kernel) / l.stride + 1};
        break;
      case LayerKind::ConvTranspose: {
        if (s.size() != 3 || s[0] != l.in) fail(l, "expects " + std::to_string(l.in) + " channels");
        const long long h = static_cast<long long>((s[1] - 1) * l.stride + l.kernel) - 2 * static_cast<long long>(l.pad);
        const long long w = static_cast<long long>((s[2] - 1) * l.stride + l.kernel) - 2 * static_cast<long long>(l.pad);
        if (h <= 0 || w <= 0) fail(l, "non-positive output extent");
        s = {l.out, static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
        break;
      }
      case LayerKind::BatchNorm:
        if (s.empty() || s[0] != l.in) fail(l, "channel count mismatch");
        break;
      case LayerKind::MaxPool:
        if (s.size() != 3 || l.kernel > s[1] || l.kernel > s[2]) fail(l, "window exceeds input");
        s = {s[0], (s[1] - l.kernel) / l.stride + 1, (s[2] - l.kernel) / l.stride + 1};
        break;
      case LayerKind::GlobalAvgPool:
        if (s.size() != 3) fail(l, "expects [C,H,W]");
        s = {s[0]};
        break;
      case LayerKind::Flatten:
        s = {shape_size(s)};
        break;
      case LayerKind::LeakyRelu:
      case LayerKind::Tanh:
      case LayerKind::Sigmoid:
        break;
    }
  }
  if (!spec.output_shape.empty() && s != spec.output_shape) {
    throw ShapeError("network " + spec.role + " ends at " + shape_string(s) + ", declared " +
                     shape_string(spec.output_shape));
  }
  return s;
}

NetworkSpec build_generator(std::size_t z_dim, std::size_t base_channels, std::size_t out_size) {
  check_size(out_size, "generator");
  if (z_dim == 0 || base_channels == 0) throw ShapeError("generator: z_dim and base_channels must be positive");
  const std::size_t start = out_size / 16, b = base_channels;
  NetworkSpec spec;
  spec.role = "generator";
  spec.input_shape = {z_dim};
  spec.layers.push_back(dense("fc", z_dim, 8 * b * start * start));
  LayerSpec reshape = layer(LayerKind::Reshape, "project");
  reshape.reshape = {8 * b, start, start};
  spec.layers.push_back(reshape);
  spec.layers.push_back(batch_norm("fc_bn", 8 * b));
  spec.layers.push_back(leaky("fc_lrelu"));
  std::size_t ch = 8 * b;
  for (int stage = 1; stage <= 3; ++stage) {
    const std::string n = "up" + std::to_string(stage);
    spec.layers.push_back(conv_like(LayerKind::ConvTranspose, n, ch, ch / 2, 4, 2, 1, false));
    spec.layers.push_back(batch_norm(n + "_bn", ch / 2));
    spec.layers.push_back(leaky(n + "_lrelu"));
    ch /= 2;
  }
  spec.layers.push_back(conv_like(LayerKind::ConvTranspose, "up4", ch, 3, 4, 2, 1, false));
  spec.layers.push_back(layer(LayerKind::Tanh, "tanh"));
  spec.output_shape = {3, out_size, out_size};
  audit_shapes(spec);
  return spec;
}

NetworkSpec build_critic(CriticKind kind, std::size_t in_size, std::size_t base_channels) {
  check_size(in_size, "critic");
  if (base_channels == 0) throw ShapeError("critic: base_channels must be positive");
  NetworkSpec spec;
  spec.role = kind == CriticKind::Discriminator ? "discriminator" : "steganalyser";
  spec.input_shape = {3, in_size, in_size};
  const std::size_t end = in_size / 16;
  std::size_t ch = 3;
  for (int stage = 1; stage <= 4; ++stage) {
    const std::string n = "down" + std::to_string(stage);
    const std::size_t next = base_channels << (stage - 1);
    // No batch norm on the input stage, nor on a last stage that leaves a 1x1 map: there it
    // would standardize each feature across the batch and hide every batch-level difference
    // between real and generated inputs from the head.
    const bool bn = stage != 1 && !(stage == 4 && end == 1);
    spec.layers.push_back(conv_like(LayerKind::Conv, n, ch, next, 4, 2, 1, !bn));
    if (bn) spec.layers.push_back(batch_norm(n + "_bn", next));
    spec.layers.push_back(leaky(n + "_lrelu"));
    ch = next;
  }
  spec.layers.push_back(layer(LayerKind::Flatten, "flatten"));
  spec.layers.push_back(dense("head", ch * end * end, 1));
  spec.layers.push_back(layer(LayerKind::Sigmoid, "sigmoid"));
  spec.output_shape = {1};
  audit_shapes(spec);
  return spec;
}

NetworkSpec build_independent_steganalyser(std::size_t in_size, const SteganalyserOptions& options) {
  if (in_size < 16) throw ShapeError("independent steganalyser needs in_size >= 16");
  const std::size_t c1 = options.first_channels, c2 = options.second_channels;
  NetworkSpec spec;
  spec.role = "independent_steganalyser";
  spec.input_shape = {3, in_size, in_size};
  spec.layers.push_back(conv_like(LayerKind::HighPass, "f0", 3, 3, 5, 1, 0, false));
  spec.layers.push_back(conv_like(LayerKind::Conv, "conv1", 3, c1, 3, 1, 1, true));
  spec.layers.push_back(leaky("conv1_lrelu"));
  spec.layers.push_back(conv_like(LayerKind::Conv, "conv2", c1, c1, 3, 1, 1, true));
  spec.layers.push_back(leaky("conv2_lrelu"));
  LayerSpec pool = layer(LayerKind::MaxPool, "pool1");
  pool.kernel = 2;
  pool.stride = 2;
  spec.layers.push_back(pool);
  spec.layers.push_back(conv_like(LayerKind::Conv, "conv3", c1, c2, 3, 1, 1, true));
  spec.layers.push_back(leaky("conv3_lrelu"));
  spec.layers.push_back(conv_like(LayerKind::Conv, "conv4", c2, c2, 3, 1, 1, true));
  spec.layers.push_back(leaky("conv4_lrelu"));
  pool.name = "pool2";
  spec.layers.push_back(pool);
  spec.layers.push_back(layer(LayerKind::GlobalAvgPool, "global_avg"));
  spec.layers.push_back(dense("fc1", c2, options.hidden_units));
  spec.layers.push_back(leaky("fc1_lrelu"));
  spec.layers.push_back(dense("fc2", options.hidden_units, 1));
  spec.layers.push_back(layer(LayerKind::Sigmoid, "sigmoid"));
  spec.output_shape = {1};
  audit_shapes(spec);
  return spec;
}

std::string NetworkSpec::to_text() const {
  std::ostringstream out;
  out << "network " << role << '\n';
  out << "input";
  for (std::size_t d : input_shape) out << ' ' << d;
  out << '\n';
  for (const auto& l : layers) {
    out << "layer " << l.name << ' ' << to_string(l.kind) << " in=" << l.in << " out=" << l.out
        << " kernel=" << l.kernel << " stride=" << l.stride << " pad=" << l.pad << " bias=" << (l.bias ? 1 : 0)
        << " slope=" << l.slope << " reshape=";
    for (std::size_t i = 0; i < l.reshape.size(); ++i) out << (i ? "x" : "") << l.reshape[i];
    if (l.reshape.empty()) out << '-';
    out << '\n';
  }
  out << "output";
  for (std::size_t d : output_shape) out << ' ' << d;
  out << '\n';
  return out.str();
}

NetworkSpec NetworkSpec::from_text(const std::string& text) {
  NetworkSpec spec;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream words(line);
    std::string head;
    words >> head;
    if (head == "network") {
      words >> spec.role;
    } else if (head == "input" || head == "output") {
      Shape& s = head == "input" ? spec.input_shape : spec.output_shape;
      std::size_t d;
      while (words >> d) s.push_back(d);
    } else if (head == "layer") {
      LayerSpec l;
      std::string kind;
      words >> l.name >> kind;
      l.kind = layer_kind_from_string(kind);
      std::string kv;
      while (words >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("malformed spec field '" + kv + "'");
        const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "in") l.in = std::stoul(value);
        else if (key == "out") l.out = std::stoul(value);
        else if (key == "kernel") l.kernel = std::stoul(value);
        else if (key == "stride") l.stride = std::stoul(value);
        else if (key == "pad") l.pad = std::stoul(value);
        else if (key == "bias") l.bias = value == "1";
        else if (key == "slope") l.slope = std::stod(value);
        else if (key == "reshape") {
          if (value != "-") {
            std::istringstream dims(value);
            std::string d;
            while (std::getline(dims, d, 'x')) l.reshape.push_back(std::stoul(d));
          }
        } else {
          throw std::invalid_argument("unknown spec field '" + key + "'");
        }
      }
      spec.layers.push_back(std::move(l));
    } else {
      throw std::invalid_argument("unknown spec line '" + line + "'");
    }
  }
  audit_shapes(spec);
  return spec;
}

Network::Network(NetworkSpec spec, std::uint64_t init_seed, ops::BatchNormOptions bn, WeightInit init)
    : spec_(std::move(spec)), bn_(bn) {
  audit_shapes(spec_);
  Rng rng(init_seed);
  // He: sqrt(2 / fan_in), fan_in counted over the input channels and kernel window.
  const auto weight_std = [init](std::size_t fan_in) {
    return init == WeightInit::He ? std::sqrt(2.0 / static_cast<double>(fan_in)) : 0.02;
  };
  const auto normal = [&rng](Shape shape, double mean, double stddev) {
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = rng.normal(mean, stddev);
    return Tensor::from(std::move(shape), std::move(v));
  };
  for (const auto& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::FullyConnected:
        params_.add(l.name + ".weight", normal({l.in, l.out}, 0.0, weight_std(l.in)));
        params_.add(l.name + ".bias", Tensor::zeros({l.out}));
        break;
      case LayerKind::Conv:
        params_.add(l.name + ".weight", normal({l.out, l.in, l.kernel, l.kernel}, 0.0, weight_std(l.in * l.kernel * l.kernel)));
        if (l.bias) params_.add(l.name + ".bias", Tensor::zeros({l.out}));
        break;
      case LayerKind::ConvTranspose:
        params_.add(l.name + ".weight", normal({l.in, l.out, l.kernel, l.kernel}, 0.0, weight_std(l.in * l.kernel * l.kernel)));
        if (l.bias) params_.add(l.name + ".bias", Tensor::zeros({l.out}));
        break;
      case LayerKind::BatchNorm:
        params_.add(l.name + ".scale", normal({l.in}, 1.0, 0.02));
        params_.add(l.name + ".shift", Tensor::zeros({l.in}));
        params_.add(l.name + ".running_mean", Tensor::zeros({l.in}), false);
        params_.add(l.name + ".running_var", Tensor::full({l.in}, 1.0), false);
        break;
      case LayerKind::HighPass: {
        // Applied to each channel separately.
        const auto& f0 = f0_kernel();
        params_.add(l.name + ".kernel", Tensor::from({5, 5}, std::vector<double>(f0.begin(), f0.end())), false);
        break;
      }
      default:
        break;
    }
  }
}

Tensor Network::forward(const Tensor& input, bool training) {
  Shape expected = spec_.input_shape;
  expected.insert(expected.begin(), input.dim(0));
  if (input.shape() != expected) {
    throw ShapeError(spec_.role + " expects input " + shape_string(expected) + ", got " + shape_string(input.shape()));
  }
  const std::size_t n = input.dim(0);
  ops::BatchNormOptions bn = bn_;
  bn.training = training;
  Tensor x = input;
  for (const auto& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::FullyConnected:
        x = ops::fully_connected(x, params_.at(l.name + ".weight"), params_.at(l.name + ".bias"));
        break;
      case LayerKind::Reshape: {
        Shape s = l.reshape;
        s.insert(s.begin(), n);
        x = ops::reshape(x, std::move(s));
        break;
      }
      case LayerKind::Conv:
        x = ops::conv2d(x, params_.at(l.name + ".weight"), l.stride, l.pad);
        if (l.bias) x = ops::add_channel_bias(x, params_.at(l.name + ".bias"));
        break;
      case LayerKind::ConvTranspose:
        x = ops::conv_transpose2d(x, params_.at(l.name + ".weight"), l.stride, l.pad);
        if (l.bias) x = ops::add_channel_bias(x, params_.at(l.name + ".bias"));
        break;
      case LayerKind::HighPass:
        x = ops::zero_sum_filter(x, params_.at(l.name + ".kernel"), l.pad);
        break;
      case LayerKind::BatchNorm:
        x = ops::batch_norm(x, params_.at(l.name + ".scale"), params_.at(l.name + ".shift"),
                            params_.at(l.name + ".running_mean"), params_.at(l.name + ".running_var"), bn);
        break;
      case LayerKind::LeakyRelu:
        x = ops::leaky_relu(x, l.slope);
        break;
      case LayerKind::Tanh:
        x = ops::tanh(x);
        break;
      case LayerKind::Sigmoid:
        x = ops::sigmoid(x);
        break;
      case LayerKind::MaxPool:
        x = ops::max_pool2d(x, l.kernel, l.stride);
        break;
      case LayerKind::GlobalAvgPool:
        x = ops::global_avg_pool(x);
        break;
      case LayerKind::Flatten:
        x = ops::reshape(x, {n, x.size() / n});
        break;
    }
  }
  return x;
}

}  // namespace sgan::nets
