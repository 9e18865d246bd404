#pragma once

#include "erpnet/kernels.hpp"
#include "erpnet/random.hpp"
#include "erpnet/tensor.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace erpnet {

enum class Mode { Train, Infer };

enum class LayerKind {
    Reshape,
    TemporalConv,
    DepthwiseConv,
    SeparableConv,
    BatchNorm,
    Activation,
    AvgPool,
    Dropout,
    SpatialDropout,
    Flatten,
    Dense,
    Softmax,
};

std::string_view to_string(LayerKind kind);

/// Which 2-D slices a max-norm bound applies to.
enum class NormAxis {
    Rows,     ///< each row, e.g. one depthwise filter over the channels
    Columns,  ///< each column, e.g. the weights feeding one dense unit
};

struct MaxNorm {
    double bound = 1.0;
    NormAxis axis = NormAxis::Columns;
};

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    std::optional<MaxNorm> max_norm;
};

// A layer owns its parameters and, after a train-mode forward, the state its
// adjoint needs. Dims passed to output_dims() exclude the batch axis.
template <typename T>
class Layer {
  public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual Dims output_dims(const Dims& input) const = 0;
    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;

    /// Fills parameter gradients and returns the input gradient (empty when
    /// input gradients are disabled). Requires a prior train-mode forward.
    virtual Tensor<T> backward(const Tensor<T>& upstream) = 0;

    virtual std::vector<Param<T>*> params() { return {}; }
    /// Non-trainable persistent state (batch-norm running statistics).
    virtual std::vector<Tensor<T>*> buffers() { return {}; }

    std::string name() const { return std::string(to_string(kind())); }

    void set_needs_input_grad(bool needed) noexcept { needs_input_grad_ = needed; }
    bool needs_input_grad() const noexcept { return needs_input_grad_; }

  protected:
    void require_cache(bool present) const {
        if (!present) {
            throw UsageError(name() + ": backward called without a cached train-mode forward pass");
        }
    }

    bool needs_input_grad_ = true;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

/// (N,C,T) or (N,1,C,T) -> (N,1,C,T).
template <typename T>
class ReshapeLayer final : public Layer<T> {
  public:
    LayerKind kind() const override { return LayerKind::Reshape; }
    Dims output_dims(const Dims& in) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;

  private:
    Dims input_dims_;
    bool cached_ = false;
};

/// Bias-free "same" temporal convolution, kernel (F_out, F_in, 1, K).
template <typename T>
class TemporalConvLayer final : public Layer<T> {
  public:
    TemporalConvLayer(std::size_t in_maps, std::size_t out_maps, std::size_t kernel_length);
    LayerKind kind() const override { return LayerKind::TemporalConv; }
    Dims output_dims(const Dims& in) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;
    std::vector<Param<T>*> params() override { return {&kernel_}; }
    Param<T>& kernel() { return kernel_; }

  private:
    Param<T> kernel_;
    Tensor<T> input_;
    bool cached_ = false;
};

/// Valid convolution over the full channel axis with depth multiplier D.
template <typename T>
class DepthwiseConvLayer final : public Layer<T> {
  public:
    DepthwiseConvLayer(std::size_t in_maps, std::size_t channels, std::size_t depth,
                       std::optional<double> max_norm = 1.0);
    LayerKind kind() const override { return LayerKind::DepthwiseConv; }
    Dims output_dims(const Dims& in) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;
    std::vector<Param<T>*> params() override { return {&kernel_}; }
    Param<T>& kernel() { return kernel_; }

  private:
    Param<T> kernel_;
    Tensor<T> input_;
    bool cached_ = false;
};

/// Per-map temporal filter (multiplier 1) followed by a 1x1 map mix.
template <typename T>
class SeparableConvLayer final : public Layer<T> {
  public:
    SeparableConvLayer(std::size_t in_maps, std::size_t out_maps, std::size_t kernel_length);
    LayerKind kind() const override { return LayerKind::SeparableConv; }
    Dims output_dims(const Dims& in) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;
    std::vector<Param<T>*> params() override { return {&depth_, &point_}; }
    Param<T>& depth_kernel() { return depth_; }
    Param<T>& point_kernel() { return point_; }

  private:
    Param<T> depth_;
    Param<T> point_;
    Tensor<T> input_;
    Tensor<T> mid_;
    bool cached_ = false;
};

// Per-map normalization over (N, H, T). Train mode uses batch statistics and
// updates the running estimates; infer mode uses the running estimates.
template <typename T>
class BatchNormLayer final : public Layer<T> {
  public:
    explicit BatchNormLayer(std::size_t maps, double epsilon = kBatchNormEpsilon,
                            double momentum = kBatchNormMomentum);
    LayerKind kind() const override { return LayerKind::BatchNorm; }
    Dims output_dims(const Dims& in) const override { return in; }
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;
    std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }
    std::vector<Tensor<T>*> buffers() override { return {&running_mean_, &running_var_}; }

    Param<T>& gamma() { return gamma_; }
    Param<T>& beta() { return beta_; }
    const Tensor<T>& running_mean() const { return running_mean_; }
    const Tensor<T>& running_var() const { return running_var_; }

  private:
    double epsilon_;
    double momentum_;
    Param<T> gamma_;
    Param<T> beta_;
    Tensor<T> running_mean_;
    Tensor<T> running_var_;
    Tensor<T> normalized_;
    std::vector<T> inv_std_;
    bool cached_ = false;
};

template <typename T>
class ActivationLayer final : public Layer<T> {
  public:
    explicit ActivationLayer(ActivationKind kind) : activation_(kind) {}
    LayerKind kind() const override { return LayerKind::Activation; }
    Dims output_dims(const Dims& in) const override { return in; }
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;
    ActivationKind activation() const noexcept { return activation_; }

  private:
    ActivationKind activation_;
    Tensor<T> input_;
    bool cached_ = false;
};

/// Non-overlapping mean over `width` samples of the time axis.
template <typename T>
class AvgPoolLayer final : public Layer<T> {
  public:
    explicit AvgPoolLayer(std::size_t width);
    LayerKind kind() const override { return LayerKind::AvgPool; }
    Dims output_dims(const Dims& in) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;
    std::size_t width() const noexcept { return width_; }

  private:
    std::size_t width_;
    bool cached_ = false;
};

// Inverted dropout. The spatial variant drops whole (H,T) feature maps per
// sample; the standard variant drops single elements. Masks come from the
// layer's own seeded generator.
template <typename T>
class DropoutLayer final : public Layer<T> {
  public:
    DropoutLayer(double rate, bool spatial, std::uint64_t seed);
    LayerKind kind() const override {
        return spatial_ ? LayerKind::SpatialDropout : LayerKind::Dropout;
    }
    Dims output_dims(const Dims& in) const override { return in; }
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;

    double rate() const noexcept { return rate_; }
    void reseed(std::uint64_t seed) { rng_.reseed(seed); }
    const Tensor<T>& mask() const noexcept { return mask_; }

  private:
    double rate_;
    bool spatial_;
    Rng rng_;
    Tensor<T> mask_;  ///< already scaled by 1/(1-rate)
    bool cached_ = false;
};

template <typename T>
class FlattenLayer final : public Layer<T> {
  public:
    LayerKind kind() const override { return LayerKind::Flatten; }
    Dims output_dims(const Dims& in) const override { return {element_count(in)}; }
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;

  private:
    Dims input_dims_;
    bool cached_ = false;
};

/// Affine map producing logits; weights (M, units), bias (units).
template <typename T>
class DenseLayer final : public Layer<T> {
  public:
    DenseLayer(std::size_t width, std::size_t units, std::optional<double> max_norm);
    LayerKind kind() const override { return LayerKind::Dense; }
    Dims output_dims(const Dims& in) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;
    std::vector<Param<T>*> params() override { return {&weights_, &bias_}; }
    Param<T>& weights() { return weights_; }
    Param<T>& bias() { return bias_; }

  private:
    Param<T> weights_;
    Param<T> bias_;
    Tensor<T> input_;
    bool cached_ = false;
};

template <typename T>
class SoftmaxLayer final : public Layer<T> {
  public:
    LayerKind kind() const override { return LayerKind::Softmax; }
    Dims output_dims(const Dims& in) const override { return in; }
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& upstream) override;

  private:
    Tensor<T> output_;
    bool cached_ = false;
};

/// Glorot-uniform fill: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace erpnet
