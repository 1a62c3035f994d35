#pragma once

#include <cstddef>

#include "sgan/tensor.hpp"

namespace sgan::ops {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;

/// Cross-correlation. input [N,C,H,W], kernel [F,C,kH,kW] -> [N,F,H',W'],
/// H' = floor((H + 2*pad - kH) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad);

/// Fractionally-strided convolution, the adjoint of conv2d with the same kernel.
/// input [N,F,H,W], kernel [F,C,kH,kW] -> [N,C,(H-1)*stride - 2*pad + kH, ...].
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad);

/// Adds bias[c] to every element of channel c. input [N,C,...].
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double eps = 1e-5;
};

/// Per-channel normalization for [N,C] or [N,C,H,W] inputs. In training mode the
/// batch statistics (biased variance) normalize the input and are folded into
/// running_mean / running_var in place; in eval mode only the running statistics are used.
Tensor batch_norm(const Tensor& input, const Tensor& scale, const Tensor& shift, Tensor& running_mean,
                  Tensor& running_var, const BatchNormOptions& options);

/// x for x > 0, slope * x otherwise (subgradient `slope` at 0).
Tensor leaky_relu(const Tensor& input, double slope);
/// Output is clamped strictly inside (-1, 1).
Tensor tanh(const Tensor& input);
/// Output is clamped strictly inside (0, 1).
Tensor sigmoid(const Tensor& input);

/// input [N,K], weight [K,M], bias [M] -> [N,M].
Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Window maximum over [N,C,H,W]; gradient goes to the first maximal element in row-major order.
Tensor max_pool2d(const Tensor& input, std::size_t window, std::size_t stride);

/// [N,C,H,W] -> [N,C] spatial mean.
Tensor global_avg_pool(const Tensor& input);

/// Depthwise stride-1 filter with a zero-sum kernel [k,k], evaluated as
/// sum_i k_i * (x_{p+i} - x_p). Equal to cross-correlation for a zero-sum kernel, but a
/// constant neighbourhood gives exactly 0 rather than a rounding residue.
Tensor zero_sum_filter(const Tensor& input, const Tensor& kernel, std::size_t pad);

Tensor reshape(const Tensor& input, Shape shape);

/// Mean binary cross-entropy; target has the same element count as prediction.
Tensor bce_loss(const Tensor& prediction, const Tensor& target);
/// bce_loss against a constant label.
Tensor bce_loss(const Tensor& prediction, double label);

Tensor sum(const Tensor& input);
Tensor mean(const Tensor& input);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, double factor);

/// Forward value `forward_value`, backward treats the op as identity on `input`.
Tensor straight_through(const Tensor& input, const Tensor& forward_value);

}  // namespace sgan::ops
