#include "erpnet/layers.hpp"

#include <cmath>
#include <string>

namespace erpnet {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Reshape: return "reshape";
        case LayerKind::TemporalConv: return "conv2d";
        case LayerKind::DepthwiseConv: return "depthwise_conv2d";
        case LayerKind::SeparableConv: return "separable_conv2d";
        case LayerKind::BatchNorm: return "batch_norm";
        case LayerKind::Activation: return "activation";
        case LayerKind::AvgPool: return "avg_pool2d";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::SpatialDropout: return "spatial_dropout";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
        case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

template <typename T>
void glorot_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}

namespace {

template <typename T>
Param<T> make_param(std::string name, Dims dims) {
    Param<T> p;
    p.name = std::move(name);
    p.value = Tensor<T>(dims);
    p.grad = Tensor<T>(std::move(dims));
    return p;
}

void expect_input_rank(const Dims& in, std::size_t rank, const std::string& what) {
    if (in.size() != rank) {
        throw ShapeError(what + ": expected per-sample rank " + std::to_string(rank) + ", got " +
                         to_string(in));
    }
}

}  // namespace

// ---- reshape ---------------------------------------------------------------

template <typename T>
Dims ReshapeLayer<T>::output_dims(const Dims& in) const {
    if (in.size() == 2) return {1, in[0], in[1]};
    if (in.size() == 3 && in[0] == 1) return in;
    throw ShapeError("reshape: expected (C,T) or (1,C,T), got " + to_string(in));
}

template <typename T>
Tensor<T> ReshapeLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    if (x.rank() < 1) throw ShapeError("reshape: empty input");
    Dims per_sample(x.dims().begin() + 1, x.dims().end());
    Dims out = output_dims(per_sample);
    out.insert(out.begin(), x.dim(0));
    if (mode == Mode::Train) {
        input_dims_ = x.dims();
        cached_ = true;
    }
    return x.reshaped(std::move(out));
}

template <typename T>
Tensor<T> ReshapeLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    if (!this->needs_input_grad_) return {};
    return upstream.reshaped(input_dims_);
}

// ---- temporal conv ---------------------------------------------------------

template <typename T>
TemporalConvLayer<T>::TemporalConvLayer(std::size_t in_maps, std::size_t out_maps,
                                        std::size_t kernel_length)
    : kernel_(make_param<T>("kernel", {out_maps, in_maps, 1, kernel_length})) {
    if (kernel_length == 0) throw ConfigError("conv2d: kernel length must be >= 1");
}

template <typename T>
Dims TemporalConvLayer<T>::output_dims(const Dims& in) const {
    expect_input_rank(in, 3, "conv2d");
    expect_axis(in[0], kernel_.value.dim(1), 1, "conv2d input maps");
    return {kernel_.value.dim(0), in[1], in[2]};
}

template <typename T>
Tensor<T> TemporalConvLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y = temporal_conv_forward(x, kernel_.value);
    if (mode == Mode::Train) {
        input_ = x;
        cached_ = true;
    }
    return y;
}

template <typename T>
Tensor<T> TemporalConvLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    auto g = temporal_conv_backward(input_, kernel_.value, upstream, this->needs_input_grad_);
    kernel_.grad = std::move(g.kernel);
    return std::move(g.input);
}

// ---- depthwise conv --------------------------------------------------------

template <typename T>
DepthwiseConvLayer<T>::DepthwiseConvLayer(std::size_t in_maps, std::size_t channels,
                                          std::size_t depth, std::optional<double> max_norm)
    : kernel_(make_param<T>("kernel", {in_maps * depth, channels})) {
    if (depth == 0) throw ConfigError("depthwise_conv2d: depth multiplier must be >= 1");
    if (max_norm) kernel_.max_norm = MaxNorm{*max_norm, NormAxis::Rows};
}

template <typename T>
Dims DepthwiseConvLayer<T>::output_dims(const Dims& in) const {
    expect_input_rank(in, 3, "depthwise_conv2d");
    expect_axis(in[1], kernel_.value.dim(1), 2, "depthwise_conv2d channels");
    if (in[0] == 0 || kernel_.value.dim(0) % in[0] != 0) {
        throw ShapeError("depthwise_conv2d: input maps " + std::to_string(in[0]) +
                         " do not divide kernel rows " + std::to_string(kernel_.value.dim(0)));
    }
    return {kernel_.value.dim(0), 1, in[2]};
}

template <typename T>
Tensor<T> DepthwiseConvLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y = depthwise_conv_forward(x, kernel_.value);
    if (mode == Mode::Train) {
        input_ = x;
        cached_ = true;
    }
    return y;
}

template <typename T>
Tensor<T> DepthwiseConvLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    auto g = depthwise_conv_backward(input_, kernel_.value, upstream);
    kernel_.grad = std::move(g.kernel);
    if (!this->needs_input_grad_) return {};
    return std::move(g.input);
}

// ---- separable conv --------------------------------------------------------

template <typename T>
SeparableConvLayer<T>::SeparableConvLayer(std::size_t in_maps, std::size_t out_maps,
                                          std::size_t kernel_length)
    : depth_(make_param<T>("depth_kernel", {in_maps, 1, kernel_length})),
      point_(make_param<T>("point_kernel", {out_maps, in_maps})) {
    if (kernel_length == 0) throw ConfigError("separable_conv2d: kernel length must be >= 1");
}

template <typename T>
Dims SeparableConvLayer<T>::output_dims(const Dims& in) const {
    expect_input_rank(in, 3, "separable_conv2d");
    expect_axis(in[0], depth_.value.dim(0), 1, "separable_conv2d input maps");
    return {point_.value.dim(0), in[1], in[2]};
}

template <typename T>
Tensor<T> SeparableConvLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> mid = per_map_conv_forward(x, depth_.value);
    Tensor<T> y = pointwise_conv_forward(mid, point_.value);
    if (mode == Mode::Train) {
        input_ = x;
        mid_ = std::move(mid);
        cached_ = true;
    }
    return y;
}

template <typename T>
Tensor<T> SeparableConvLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    auto gp = pointwise_conv_backward(mid_, point_.value, upstream);
    point_.grad = std::move(gp.kernel);
    auto gd = per_map_conv_backward(input_, depth_.value, gp.input);
    depth_.grad = std::move(gd.kernel);
    if (!this->needs_input_grad_) return {};
    return std::move(gd.input);
}

// ---- batch norm ------------------------------------------------------------

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::size_t maps, double epsilon, double momentum)
    : epsilon_(epsilon),
      momentum_(momentum),
      gamma_(make_param<T>("gamma", {maps})),
      beta_(make_param<T>("beta", {maps})),
      running_mean_(Dims{maps}, T{0}),
      running_var_(Dims{maps}, T{1}) {
    gamma_.value.fill(T{1});
}

template <typename T>
Tensor<T> BatchNormLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    if (x.rank() != 4) throw ShapeError("batch_norm: expected (N,F,H,T), got " + to_string(x.dims()));
    const std::size_t maps = gamma_.value.dim(0);
    expect_axis(x.dim(1), maps, 1, "batch_norm maps");
    const std::size_t n_batch = x.dim(0);
    const std::size_t plane = x.dim(2) * x.dim(3);
    const std::size_t count = n_batch * plane;
    Tensor<T> y(x.dims());

    if (mode == Mode::Infer) {
        for (std::size_t f = 0; f < maps; ++f) {
            const T scale = gamma_.value[f] /
                            static_cast<T>(std::sqrt(static_cast<double>(running_var_[f]) + epsilon_));
            const T shift = beta_.value[f] - scale * running_mean_[f];
            for (std::size_t n = 0; n < n_batch; ++n) {
                const T* in = x.data() + (n * maps + f) * plane;
                T* out = y.data() + (n * maps + f) * plane;
                for (std::size_t p = 0; p < plane; ++p) out[p] = scale * in[p] + shift;
            }
        }
        return y;
    }

    if (count == 0) throw ShapeError("batch_norm: empty batch in train mode");
    normalized_ = Tensor<T>(x.dims());
    inv_std_.assign(maps, T{0});
    for (std::size_t f = 0; f < maps; ++f) {
        double sum = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
            const T* in = x.data() + (n * maps + f) * plane;
#pragma omp simd reduction(+ : sum)
            for (std::size_t p = 0; p < plane; ++p) sum += static_cast<double>(in[p]);
        }
        const double mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
            const T* in = x.data() + (n * maps + f) * plane;
#pragma omp simd reduction(+ : sq)
            for (std::size_t p = 0; p < plane; ++p) {
                const double d = static_cast<double>(in[p]) - mean;
                sq += d * d;
            }
        }
        const double var = sq / static_cast<double>(count);
        const double inv_std = 1.0 / std::sqrt(var + epsilon_);
        inv_std_[f] = static_cast<T>(inv_std);
        const T g = gamma_.value[f], b = beta_.value[f];
        for (std::size_t n = 0; n < n_batch; ++n) {
            const T* in = x.data() + (n * maps + f) * plane;
            T* xh = normalized_.data() + (n * maps + f) * plane;
            T* out = y.data() + (n * maps + f) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                xh[p] = static_cast<T>((static_cast<double>(in[p]) - mean) * inv_std);
                out[p] = g * xh[p] + b;
            }
        }
        running_mean_[f] = static_cast<T>(momentum_ * static_cast<double>(running_mean_[f]) +
                                          (1.0 - momentum_) * mean);
        running_var_[f] = static_cast<T>(momentum_ * static_cast<double>(running_var_[f]) +
                                         (1.0 - momentum_) * var);
    }
    cached_ = true;
    return y;
}

template <typename T>
Tensor<T> BatchNormLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    if (upstream.dims() != normalized_.dims()) {
        throw ShapeError("batch_norm backward: upstream " + to_string(upstream.dims()) +
                         " does not match cached input");
    }
    const std::size_t maps = gamma_.value.dim(0);
    const std::size_t n_batch = upstream.dim(0);
    const std::size_t plane = upstream.dim(2) * upstream.dim(3);
    const double count = static_cast<double>(n_batch * plane);
    gamma_.grad = Tensor<T>(gamma_.value.dims());
    beta_.grad = Tensor<T>(beta_.value.dims());
    Tensor<T> dx;
    if (this->needs_input_grad_) dx = Tensor<T>(upstream.dims());
    for (std::size_t f = 0; f < maps; ++f) {
        double dgamma = 0.0, dbeta = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
            const T* gy = upstream.data() + (n * maps + f) * plane;
            const T* xh = normalized_.data() + (n * maps + f) * plane;
#pragma omp simd reduction(+ : dgamma, dbeta)
            for (std::size_t p = 0; p < plane; ++p) {
                dgamma += static_cast<double>(gy[p]) * static_cast<double>(xh[p]);
                dbeta += static_cast<double>(gy[p]);
            }
        }
        gamma_.grad[f] = static_cast<T>(dgamma);
        beta_.grad[f] = static_cast<T>(dbeta);
        if (!this->needs_input_grad_) continue;
        // dx = gamma * inv_std / M * (M * gy - sum(gy) - xhat * sum(gy * xhat))
        const double scale = static_cast<double>(gamma_.value[f]) *
                             static_cast<double>(inv_std_[f]) / count;
        for (std::size_t n = 0; n < n_batch; ++n) {
            const T* gy = upstream.data() + (n * maps + f) * plane;
            const T* xh = normalized_.data() + (n * maps + f) * plane;
            T* out = dx.data() + (n * maps + f) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                out[p] = static_cast<T>(scale * (count * static_cast<double>(gy[p]) - dbeta -
                                                 static_cast<double>(xh[p]) * dgamma));
            }
        }
    }
    return dx;
}

// ---- activation ------------------------------------------------------------

template <typename T>
Tensor<T> ActivationLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::Train) {
        input_ = x;
        cached_ = true;
    }
    return activation_forward(x, activation_);
}

template <typename T>
Tensor<T> ActivationLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    return activation_backward(input_, upstream, activation_);
}

// ---- average pool ----------------------------------------------------------

template <typename T>
AvgPoolLayer<T>::AvgPoolLayer(std::size_t width) : width_(width) {
    if (width == 0) throw ConfigError("avg_pool2d: width must be >= 1");
}

template <typename T>
Dims AvgPoolLayer<T>::output_dims(const Dims& in) const {
    expect_input_rank(in, 3, "avg_pool2d");
    if (in[2] % width_ != 0) {
        throw ConfigError("avg_pool2d: width " + std::to_string(width_) +
                          " does not divide time extent " + std::to_string(in[2]));
    }
    return {in[0], in[1], in[2] / width_};
}

template <typename T>
Tensor<T> AvgPoolLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::Train) cached_ = true;
    return avg_pool_forward(x, width_);
}

template <typename T>
Tensor<T> AvgPoolLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    return avg_pool_backward(upstream, width_);
}

// ---- dropout ---------------------------------------------------------------

template <typename T>
DropoutLayer<T>::DropoutLayer(double rate, bool spatial, std::uint64_t seed)
    : rate_(rate), spatial_(spatial), rng_(seed) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate " + std::to_string(rate) + " outside [0, 1)");
    }
}

template <typename T>
Tensor<T> DropoutLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::Infer) return x;
    mask_ = Tensor<T>(x.dims(), T{1});
    cached_ = true;
    if (rate_ == 0.0) return x;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    if (spatial_) {
        if (x.rank() < 2) throw ShapeError("spatial_dropout: expected (N,F,...) input");
        const std::size_t maps = x.dim(0) * x.dim(1);
        const std::size_t plane = maps == 0 ? 0 : x.size() / maps;
        for (std::size_t m = 0; m < maps; ++m) {
            const T v = rng_.bernoulli(rate_) ? T{0} : keep_scale;
            std::fill(mask_.data() + m * plane, mask_.data() + (m + 1) * plane, v);
        }
    } else {
        for (auto& v : mask_.values()) v = rng_.bernoulli(rate_) ? T{0} : keep_scale;
    }
    Tensor<T> y(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask_[i];
    return y;
}

template <typename T>
Tensor<T> DropoutLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    if (upstream.dims() != mask_.dims()) {
        throw ShapeError("dropout backward: upstream " + to_string(upstream.dims()) +
                         " does not match mask");
    }
    Tensor<T> g(upstream.dims());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = upstream[i] * mask_[i];
    return g;
}

// ---- flatten ---------------------------------------------------------------

template <typename T>
Tensor<T> FlattenLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    if (x.rank() < 1) throw ShapeError("flatten: empty input");
    if (mode == Mode::Train) {
        input_dims_ = x.dims();
        cached_ = true;
    }
    const std::size_t n = x.dim(0);
    return x.reshaped({n, n == 0 ? 0 : x.size() / n});
}

template <typename T>
Tensor<T> FlattenLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    return upstream.reshaped(input_dims_);
}

// ---- dense -----------------------------------------------------------------

template <typename T>
DenseLayer<T>::DenseLayer(std::size_t width, std::size_t units, std::optional<double> max_norm)
    : weights_(make_param<T>("weights", {width, units})), bias_(make_param<T>("bias", {units})) {
    if (max_norm) weights_.max_norm = MaxNorm{*max_norm, NormAxis::Columns};
}

template <typename T>
Dims DenseLayer<T>::output_dims(const Dims& in) const {
    expect_input_rank(in, 1, "dense");
    expect_axis(in[0], weights_.value.dim(0), 1, "dense input width");
    return {weights_.value.dim(1)};
}

template <typename T>
Tensor<T> DenseLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y = dense_forward(x, weights_.value, bias_.value);
    if (mode == Mode::Train) {
        input_ = x;
        cached_ = true;
    }
    return y;
}

template <typename T>
Tensor<T> DenseLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    const std::size_t n_batch = input_.dim(0), width = input_.dim(1);
    const std::size_t units = weights_.value.dim(1);
    if (upstream.dims() != Dims{n_batch, units}) {
        throw ShapeError("dense backward: upstream " + to_string(upstream.dims()) +
                         " does not match output shape");
    }
    weights_.grad = Tensor<T>(weights_.value.dims());
    bias_.grad = Tensor<T>(bias_.value.dims());
    Tensor<T> dx({n_batch, width});
    for (std::size_t n = 0; n < n_batch; ++n) {
        const T* gy = &upstream.at(n, 0);
        for (std::size_t k = 0; k < units; ++k) bias_.grad[k] += gy[k];
        for (std::size_t m = 0; m < width; ++m) {
            const T xv = input_.at(n, m);
            const T* w = &weights_.value.at(m, 0);
            T* gw = &weights_.grad.at(m, 0);
            T acc{0};
            for (std::size_t k = 0; k < units; ++k) {
                gw[k] += xv * gy[k];
                acc += w[k] * gy[k];
            }
            dx.at(n, m) = acc;
        }
    }
    return dx;
}

// ---- softmax ---------------------------------------------------------------

template <typename T>
Tensor<T> SoftmaxLayer<T>::forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y = softmax(x);
    if (mode == Mode::Train) {
        output_ = y;
        cached_ = true;
    }
    return y;
}

template <typename T>
Tensor<T> SoftmaxLayer<T>::backward(const Tensor<T>& upstream) {
    this->require_cache(cached_);
    if (upstream.dims() != output_.dims()) {
        throw ShapeError("softmax backward: upstream " + to_string(upstream.dims()) +
                         " does not match output shape");
    }
    const std::size_t n_batch = output_.dim(0), units = output_.dim(1);
    Tensor<T> dx(output_.dims());
    for (std::size_t n = 0; n < n_batch; ++n) {
        T dot{0};
        for (std::size_t k = 0; k < units; ++k) dot += upstream.at(n, k) * output_.at(n, k);
        for (std::size_t k = 0; k < units; ++k) {
            dx.at(n, k) = output_.at(n, k) * (upstream.at(n, k) - dot);
        }
    }
    return dx;
}

#define ERPNET_INSTANTIATE_LAYERS(T)                                                 \
    template class ReshapeLayer<T>;                                                  \
    template class TemporalConvLayer<T>;                                             \
    template class DepthwiseConvLayer<T>;                                            \
    template class SeparableConvLayer<T>;                                            \
    template class BatchNormLayer<T>;                                                \
    template class ActivationLayer<T>;                                               \
    template class AvgPoolLayer<T>;                                                  \
    template class DropoutLayer<T>;                                                  \
    template class FlattenLayer<T>;                                                  \
    template class DenseLayer<T>;                                                    \
    template class SoftmaxLayer<T>;                                                  \
    template void glorot_uniform(Tensor<T>&, std::size_t, std::size_t, Rng&);

ERPNET_INSTANTIATE_LAYERS(float)
ERPNET_INSTANTIATE_LAYERS(double)

#undef ERPNET_INSTANTIATE_LAYERS

}  // namespace erpnet
