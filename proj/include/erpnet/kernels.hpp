#pragma once

// Stateless forward/adjoint kernels for the fixed layer vocabulary. Feature
// maps use (N, F, H, T) layout: batch, map, spatial (channel) row, time.
// Layer classes in layers.hpp wrap these with cached forward state.

#include "erpnet/tensor.hpp"

#include <cstdint>
#include <span>
#include <string_view>

namespace erpnet {

enum class ActivationKind { Elu, Relu, Swish, Mish };

std::string_view to_string(ActivationKind kind);
ActivationKind parse_activation(std::string_view name);

/// Batch-norm constants: epsilon inside the square root and running-stat momentum.
inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;

/// Left zero padding for "same" convolution of kernel length k; an even
/// kernel gets the extra zero on the right.
constexpr std::size_t same_pad_left(std::size_t k) noexcept { return (k - 1) / 2; }

// out[n,f,h,t] = sum_{i,k} x[n,i,h,t+k-P] * kernel[f,i,0,k], P = same_pad_left(K)
template <typename T>
Tensor<T> temporal_conv_forward(const Tensor<T>& x, const Tensor<T>& kernel);

template <typename T>
struct ConvGrads {
    Tensor<T> input;   ///< empty when the input gradient was not requested
    Tensor<T> kernel;
};

template <typename T>
ConvGrads<T> temporal_conv_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                    const Tensor<T>& upstream, bool need_input_grad = true);

// Grouped variant with one filter per map: kernel (F, 1, K).
template <typename T>
Tensor<T> per_map_conv_forward(const Tensor<T>& x, const Tensor<T>& kernel);

template <typename T>
ConvGrads<T> per_map_conv_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                   const Tensor<T>& upstream);

// x (N,F,C,T), kernel (F*D, C) -> (N, F*D, 1, T). Output map m reads input map m / D.
template <typename T>
Tensor<T> depthwise_conv_forward(const Tensor<T>& x, const Tensor<T>& kernel);

template <typename T>
ConvGrads<T> depthwise_conv_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                     const Tensor<T>& upstream);

// 1x1 map mixing: out[n,f,h,t] = sum_i x[n,i,h,t] * kernel[f,i]
template <typename T>
Tensor<T> pointwise_conv_forward(const Tensor<T>& x, const Tensor<T>& kernel);

template <typename T>
ConvGrads<T> pointwise_conv_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                     const Tensor<T>& upstream);

/// Per-map temporal filter (F_in,1,K) followed by a pointwise mix (F_out,F_in).
template <typename T>
Tensor<T> separable_conv_forward(const Tensor<T>& x, const Tensor<T>& depth_kernel,
                                 const Tensor<T>& point_kernel);

template <typename T>
T activation_value(T x, ActivationKind kind) noexcept;
template <typename T>
T activation_derivative(T x, ActivationKind kind) noexcept;

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& x, ActivationKind kind);
template <typename T>
Tensor<T> activation_backward(const Tensor<T>& x, const Tensor<T>& upstream, ActivationKind kind);

template <typename T>
Tensor<T> avg_pool_forward(const Tensor<T>& x, std::size_t width);
template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& upstream, std::size_t width);

// Logits (N,K) = x (N,M) * weights (M,K) + bias (K).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

/// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
Tensor<T> dense_softmax(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
    return softmax(dense_forward(x, weights, bias));
}

/// Probabilities are clamped at this floor inside the logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

/// Mean of -ln(p[n, label[n]]).
template <typename T>
double cross_entropy(const Tensor<T>& probs, std::span<const std::uint8_t> labels);

/// Adjoint of cross_entropy(softmax(z)) with respect to z: (probs - onehot) / N.
template <typename T>
Tensor<T> cross_entropy_logit_grad(const Tensor<T>& probs, std::span<const std::uint8_t> labels);

/// Adjoint of cross_entropy with respect to the probabilities themselves.
template <typename T>
Tensor<T> cross_entropy_prob_grad(const Tensor<T>& probs, std::span<const std::uint8_t> labels);

}  // namespace erpnet
