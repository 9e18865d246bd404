#include "erpnet/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace erpnet {

std::string_view to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::Elu: return "elu";
        case ActivationKind::Relu: return "relu";
        case ActivationKind::Swish: return "swish";
        case ActivationKind::Mish: return "mish";
    }
    return "?";
}

ActivationKind parse_activation(std::string_view name) {
    if (name == "elu") return ActivationKind::Elu;
    if (name == "relu") return ActivationKind::Relu;
    if (name == "swish") return ActivationKind::Swish;
    if (name == "mish") return ActivationKind::Mish;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

namespace {

void expect_conv_input(const Dims& d, const std::string& what) {
    if (d.size() != 4) {
        throw ShapeError(what + ": expected input (N,F,H,T), got " + to_string(d));
    }
}

// 64-byte vectors through the GCC/Clang vector extension, so the correlation
// tiles below stay in registers.
template <typename T>
struct VecOf;
template <>
struct VecOf<float> {
    typedef float type __attribute__((vector_size(64)));
};
template <>
struct VecOf<double> {
    typedef double type __attribute__((vector_size(64)));
};
template <typename T>
using Vec = typename VecOf<T>::type;

template <typename T>
constexpr std::size_t kLanes = 64 / sizeof(T);

template <typename T>
inline Vec<T> load(const T* p) noexcept {
    Vec<T> v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

template <typename T>
inline void store(T* p, Vec<T> v) noexcept {
    std::memcpy(p, &v, sizeof v);
}

// out[t] += sum_k w[k] * src[t + k] for t < len, src holding len + k_len - 1
// values.
template <typename T>
void correlate_accumulate(const T* src, const T* w, std::size_t k_len, T* out, std::size_t len) {
    constexpr std::size_t L = kLanes<T>;
    std::size_t t0 = 0;
    for (; t0 + 4 * L <= len; t0 += 4 * L) {
        Vec<T> a0 = load(out + t0), a1 = load(out + t0 + L);
        Vec<T> a2 = load(out + t0 + 2 * L), a3 = load(out + t0 + 3 * L);
        for (std::size_t k = 0; k < k_len; ++k) {
            const Vec<T> wk = Vec<T>{} + w[k];
            const T* r = src + t0 + k;
            a0 += wk * load(r);
            a1 += wk * load(r + L);
            a2 += wk * load(r + 2 * L);
            a3 += wk * load(r + 3 * L);
        }
        store(out + t0, a0);
        store(out + t0 + L, a1);
        store(out + t0 + 2 * L, a2);
        store(out + t0 + 3 * L, a3);
    }
    for (; t0 + L <= len; t0 += L) {
        Vec<T> a = load(out + t0);
        for (std::size_t k = 0; k < k_len; ++k) a += (Vec<T>{} + w[k]) * load(src + t0 + k);
        store(out + t0, a);
    }
    for (; t0 < len; ++t0) {
        T acc = out[t0];
        for (std::size_t k = 0; k < k_len; ++k) acc += w[k] * src[t0 + k];
        out[t0] = acc;
    }
}

// dw[k] += sum_t g[t] * src[t + k] for k < k_len, t < len.
template <typename T>
void correlate_kernel_grad(const T* g, const T* src, std::size_t len, T* dw, std::size_t k_len) {
    constexpr std::size_t L = kLanes<T>;
    std::size_t k0 = 0;
    for (; k0 + 4 * L <= k_len; k0 += 4 * L) {
        Vec<T> a0{}, a1{}, a2{}, a3{};
        for (std::size_t t = 0; t < len; ++t) {
            const Vec<T> gt = Vec<T>{} + g[t];
            const T* r = src + t + k0;
            a0 += gt * load(r);
            a1 += gt * load(r + L);
            a2 += gt * load(r + 2 * L);
            a3 += gt * load(r + 3 * L);
        }
        store(dw + k0, load(dw + k0) + a0);
        store(dw + k0 + L, load(dw + k0 + L) + a1);
        store(dw + k0 + 2 * L, load(dw + k0 + 2 * L) + a2);
        store(dw + k0 + 3 * L, load(dw + k0 + 3 * L) + a3);
    }
    for (; k0 + L <= k_len; k0 += L) {
        Vec<T> a{};
        for (std::size_t t = 0; t < len; ++t) a += (Vec<T>{} + g[t]) * load(src + t + k0);
        store(dw + k0, load(dw + k0) + a);
    }
    for (; k0 < k_len; ++k0) {
        T acc{0};
#pragma omp simd reduction(+ : acc)
        for (std::size_t t = 0; t < len; ++t) acc += g[t] * src[t + k0];
        dw[k0] += acc;
    }
}

}  // namespace

template <typename T>
Tensor<T> temporal_conv_forward(const Tensor<T>& x, const Tensor<T>& kernel) {
    expect_conv_input(x.dims(), "temporal_conv");
    expect_rank(kernel, 4, "temporal_conv kernel");
    const std::size_t n_batch = x.dim(0), f_in = x.dim(1), rows = x.dim(2), len = x.dim(3);
    const std::size_t f_out = kernel.dim(0), k_len = kernel.dim(3);
    expect_axis(kernel.dim(1), f_in, 1, "temporal_conv kernel input maps");
    expect_axis(kernel.dim(2), 1, 2, "temporal_conv kernel height");
    if (k_len == 0) throw ShapeError("temporal_conv: kernel length must be >= 1");

    Tensor<T> out({n_batch, f_out, rows, len});
    const std::size_t pad = same_pad_left(k_len);
    std::vector<T> row(len + k_len - 1);
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t i = 0; i < f_in; ++i) {
            for (std::size_t h = 0; h < rows; ++h) {
                std::fill(row.begin(), row.end(), T{0});
                const T* src = &x.at(n, i, h, 0);
                std::copy(src, src + len, row.begin() + static_cast<std::ptrdiff_t>(pad));
                for (std::size_t f = 0; f < f_out; ++f) {
                    correlate_accumulate(row.data(), &kernel.at(f, i, 0, 0), k_len,
                                         &out.at(n, f, h, 0), len);
                }
            }
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> temporal_conv_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                    const Tensor<T>& upstream, bool need_input_grad) {
    const std::size_t n_batch = x.dim(0), f_in = x.dim(1), rows = x.dim(2), len = x.dim(3);
    const std::size_t f_out = kernel.dim(0), k_len = kernel.dim(3);
    if (upstream.dims() != Dims{n_batch, f_out, rows, len}) {
        throw ShapeError("temporal_conv backward: upstream " + to_string(upstream.dims()) +
                         " does not match output shape");
    }
    ConvGrads<T> g;
    g.kernel = Tensor<T>(kernel.dims());
    if (need_input_grad) g.input = Tensor<T>(x.dims());

    // The input adjoint correlates the zero-padded upstream row with the
    // reversed kernel: drow[s] = sum_k w[K-1-k] * gpad[s + k].
    const std::size_t pad = same_pad_left(k_len);
    std::vector<T> row(len + k_len - 1);
    std::vector<T> drow(len + k_len - 1);
    std::vector<T> gpad(len + 2 * (k_len - 1));
    std::vector<T> wrev(k_len);
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t i = 0; i < f_in; ++i) {
            for (std::size_t h = 0; h < rows; ++h) {
                std::fill(row.begin(), row.end(), T{0});
                const T* src = &x.at(n, i, h, 0);
                std::copy(src, src + len, row.begin() + static_cast<std::ptrdiff_t>(pad));
                if (need_input_grad) std::fill(drow.begin(), drow.end(), T{0});
                for (std::size_t f = 0; f < f_out; ++f) {
                    const T* gy = &upstream.at(n, f, h, 0);
                    correlate_kernel_grad(gy, row.data(), len, &g.kernel.at(f, i, 0, 0), k_len);
                    if (need_input_grad) {
                        const T* w = &kernel.at(f, i, 0, 0);
                        for (std::size_t k = 0; k < k_len; ++k) wrev[k] = w[k_len - 1 - k];
                        std::copy(gy, gy + len, gpad.begin() + static_cast<std::ptrdiff_t>(k_len - 1));
                        correlate_accumulate(gpad.data(), wrev.data(), k_len, drow.data(), drow.size());
                    }
                }
                if (need_input_grad) {
                    std::copy(drow.begin() + static_cast<std::ptrdiff_t>(pad),
                              drow.begin() + static_cast<std::ptrdiff_t>(pad + len),
                              &g.input.at(n, i, h, 0));
                }
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> per_map_conv_forward(const Tensor<T>& x, const Tensor<T>& kernel) {
    expect_conv_input(x.dims(), "per_map_conv");
    expect_rank(kernel, 3, "per_map_conv kernel");
    const std::size_t n_batch = x.dim(0), maps = x.dim(1), rows = x.dim(2), len = x.dim(3);
    expect_axis(kernel.dim(0), maps, 0, "per_map_conv kernel maps");
    expect_axis(kernel.dim(1), 1, 1, "per_map_conv kernel multiplier");
    const std::size_t k_len = kernel.dim(2);
    if (k_len == 0) throw ShapeError("per_map_conv: kernel length must be >= 1");

    Tensor<T> out(x.dims());
    const std::size_t pad = same_pad_left(k_len);
    std::vector<T> row(len + k_len - 1);
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t f = 0; f < maps; ++f) {
            const T* w = kernel.data() + f * k_len;
            for (std::size_t h = 0; h < rows; ++h) {
                std::fill(row.begin(), row.end(), T{0});
                const T* src = &x.at(n, f, h, 0);
                std::copy(src, src + len, row.begin() + static_cast<std::ptrdiff_t>(pad));
                T* o = &out.at(n, f, h, 0);
                for (std::size_t k = 0; k < k_len; ++k) {
                    const T wk = w[k];
                    const T* r = row.data() + k;
                    for (std::size_t t = 0; t < len; ++t) o[t] += wk * r[t];
                }
            }
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> per_map_conv_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                   const Tensor<T>& upstream) {
    const std::size_t n_batch = x.dim(0), maps = x.dim(1), rows = x.dim(2), len = x.dim(3);
    const std::size_t k_len = kernel.dim(2);
    if (upstream.dims() != x.dims()) {
        throw ShapeError("per_map_conv backward: upstream " + to_string(upstream.dims()) +
                         " does not match output shape");
    }
    ConvGrads<T> g{Tensor<T>(x.dims()), Tensor<T>(kernel.dims())};
    const std::size_t pad = same_pad_left(k_len);
    std::vector<T> row(len + k_len - 1);
    std::vector<T> drow(len + k_len - 1);
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t f = 0; f < maps; ++f) {
            const T* w = kernel.data() + f * k_len;
            T* dw = g.kernel.data() + f * k_len;
            for (std::size_t h = 0; h < rows; ++h) {
                std::fill(row.begin(), row.end(), T{0});
                std::fill(drow.begin(), drow.end(), T{0});
                const T* src = &x.at(n, f, h, 0);
                std::copy(src, src + len, row.begin() + static_cast<std::ptrdiff_t>(pad));
                const T* gy = &upstream.at(n, f, h, 0);
                for (std::size_t k = 0; k < k_len; ++k) {
                    const T* r = row.data() + k;
                    T acc{0};
#pragma omp simd reduction(+ : acc)
                    for (std::size_t t = 0; t < len; ++t) acc += gy[t] * r[t];
                    dw[k] += acc;
                    const T wk = w[k];
                    T* d = drow.data() + k;
                    for (std::size_t t = 0; t < len; ++t) d[t] += wk * gy[t];
                }
                std::copy(drow.begin() + static_cast<std::ptrdiff_t>(pad),
                          drow.begin() + static_cast<std::ptrdiff_t>(pad + len),
                          &g.input.at(n, f, h, 0));
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> depthwise_conv_forward(const Tensor<T>& x, const Tensor<T>& kernel) {
    expect_conv_input(x.dims(), "depthwise_conv");
    expect_rank(kernel, 2, "depthwise_conv kernel");
    const std::size_t n_batch = x.dim(0), maps = x.dim(1), chans = x.dim(2), len = x.dim(3);
    expect_axis(kernel.dim(1), chans, 2, "depthwise_conv channels");
    const std::size_t out_maps = kernel.dim(0);
    if (maps == 0 || out_maps % maps != 0) {
        throw ShapeError("depthwise_conv: kernel rows " + std::to_string(out_maps) +
                         " not a multiple of input maps " + std::to_string(maps));
    }
    const std::size_t depth = out_maps / maps;
    Tensor<T> out({n_batch, out_maps, 1, len});
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t m = 0; m < out_maps; ++m) {
            T* o = &out.at(n, m, 0, 0);
            for (std::size_t c = 0; c < chans; ++c) {
                const T w = kernel.at(m, c);
                const T* xr = &x.at(n, m / depth, c, 0);
                for (std::size_t t = 0; t < len; ++t) o[t] += w * xr[t];
            }
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> depthwise_conv_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                     const Tensor<T>& upstream) {
    const std::size_t n_batch = x.dim(0), maps = x.dim(1), chans = x.dim(2), len = x.dim(3);
    const std::size_t out_maps = kernel.dim(0);
    const std::size_t depth = out_maps / maps;
    if (upstream.dims() != Dims{n_batch, out_maps, 1, len}) {
        throw ShapeError("depthwise_conv backward: upstream " + to_string(upstream.dims()) +
                         " does not match output shape");
    }
    ConvGrads<T> g{Tensor<T>(x.dims()), Tensor<T>(kernel.dims())};
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t m = 0; m < out_maps; ++m) {
            const T* gy = &upstream.at(n, m, 0, 0);
            for (std::size_t c = 0; c < chans; ++c) {
                const T* xr = &x.at(n, m / depth, c, 0);
                T acc{0};
#pragma omp simd reduction(+ : acc)
                for (std::size_t t = 0; t < len; ++t) acc += gy[t] * xr[t];
                g.kernel.at(m, c) += acc;
                const T w = kernel.at(m, c);
                T* dx = &g.input.at(n, m / depth, c, 0);
                for (std::size_t t = 0; t < len; ++t) dx[t] += w * gy[t];
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> pointwise_conv_forward(const Tensor<T>& x, const Tensor<T>& kernel) {
    expect_conv_input(x.dims(), "pointwise_conv");
    expect_rank(kernel, 2, "pointwise_conv kernel");
    const std::size_t n_batch = x.dim(0), f_in = x.dim(1);
    const std::size_t plane = x.dim(2) * x.dim(3);
    expect_axis(kernel.dim(1), f_in, 1, "pointwise_conv input maps");
    const std::size_t f_out = kernel.dim(0);
    Tensor<T> out({n_batch, f_out, x.dim(2), x.dim(3)});
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t f = 0; f < f_out; ++f) {
            T* o = out.data() + (n * f_out + f) * plane;
            for (std::size_t i = 0; i < f_in; ++i) {
                const T w = kernel.at(f, i);
                const T* xr = x.data() + (n * f_in + i) * plane;
                for (std::size_t p = 0; p < plane; ++p) o[p] += w * xr[p];
            }
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> pointwise_conv_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                     const Tensor<T>& upstream) {
    const std::size_t n_batch = x.dim(0), f_in = x.dim(1);
    const std::size_t plane = x.dim(2) * x.dim(3);
    const std::size_t f_out = kernel.dim(0);
    if (upstream.dims() != Dims{n_batch, f_out, x.dim(2), x.dim(3)}) {
        throw ShapeError("pointwise_conv backward: upstream " + to_string(upstream.dims()) +
                         " does not match output shape");
    }
    ConvGrads<T> g{Tensor<T>(x.dims()), Tensor<T>(kernel.dims())};
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t f = 0; f < f_out; ++f) {
            const T* gy = upstream.data() + (n * f_out + f) * plane;
            for (std::size_t i = 0; i < f_in; ++i) {
                const T* xr = x.data() + (n * f_in + i) * plane;
                T acc{0};
#pragma omp simd reduction(+ : acc)
                for (std::size_t p = 0; p < plane; ++p) acc += gy[p] * xr[p];
                g.kernel.at(f, i) += acc;
                const T w = kernel.at(f, i);
                T* dx = g.input.data() + (n * f_in + i) * plane;
                for (std::size_t p = 0; p < plane; ++p) dx[p] += w * gy[p];
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> separable_conv_forward(const Tensor<T>& x, const Tensor<T>& depth_kernel,
                                 const Tensor<T>& point_kernel) {
    return pointwise_conv_forward(per_map_conv_forward(x, depth_kernel), point_kernel);
}

namespace {

// Above this, tanh(softplus(x)) and sigmoid(x) are 1 to working precision and
// exp(x) would come close to float overflow.
constexpr double kSaturation = 20.0;

// Branch-free exp for float so activation loops vectorize; Cephes range
// reduction and polynomial, about 1 ulp on [-87, 88].
inline float exp_kernel(float x) noexcept {
    x = std::clamp(x, -87.0f, 88.0f);
    // Adding 1.5 * 2^23 rounds to the nearest integer without a libm call.
    const float n = (x * 1.44269504088896341f + 12582912.0f) - 12582912.0f;
    const float r = x - n * 0.693359375f + n * 2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    const auto bits = static_cast<std::uint32_t>(static_cast<std::int32_t>(n) + 127) << 23;
    return p * std::bit_cast<float>(bits);
}

inline double exp_kernel(double x) noexcept { return std::exp(x); }

inline float expm1_kernel(float x) noexcept { return exp_kernel(x) - 1.0f; }
inline double expm1_kernel(double x) noexcept { return std::expm1(x); }

template <typename T>
inline T relu_value(T x) noexcept { return x > T{0} ? x : T{0}; }
template <typename T>
inline T relu_slope(T x) noexcept { return x > T{0} ? T{1} : T{0}; }

template <typename T>
inline T elu_value(T x) noexcept { return x > T{0} ? x : expm1_kernel(std::min(x, T{0})); }
template <typename T>
inline T elu_slope(T x) noexcept { return x > T{0} ? T{1} : exp_kernel(std::min(x, T{0})); }

template <typename T>
inline T sigmoid(T x) noexcept { return T{1} / (T{1} + exp_kernel(-x)); }

template <typename T>
inline T swish_value(T x) noexcept { return x * sigmoid(x); }
template <typename T>
inline T swish_slope(T x) noexcept {
    const T s = sigmoid(x);
    return s + x * s * (T{1} - s);
}

// tanh(ln(1+e^x)) = n / (n + 2) with n = e^x (e^x + 2)
template <typename T>
inline T mish_value(T x) noexcept {
    const T e = exp_kernel(std::min(x, T(kSaturation)));
    const T n = e * (e + T{2});
    return x > T(kSaturation) ? x : x * n / (n + T{2});
}
template <typename T>
inline T mish_slope(T x) noexcept {
    const T e = exp_kernel(std::min(x, T(kSaturation)));
    const T n = e * (e + T{2});
    const T tsp = n / (n + T{2});
    const T sig = e / (T{1} + e);
    return x > T(kSaturation) ? T{1} : tsp + x * (T{1} - tsp * tsp) * sig;
}

template <typename T, typename F>
void map_values(const T* in, T* out, std::size_t count, F f) {
#pragma omp simd
    for (std::size_t i = 0; i < count; ++i) out[i] = f(in[i]);
}

template <typename T, typename F>
void map_slopes(const T* in, const T* up, T* out, std::size_t count, F f) {
#pragma omp simd
    for (std::size_t i = 0; i < count; ++i) out[i] = up[i] * f(in[i]);
}

}  // namespace

template <typename T>
T activation_value(T x, ActivationKind kind) noexcept {
    switch (kind) {
        case ActivationKind::Relu: return relu_value(x);
        case ActivationKind::Elu: return elu_value(x);
        case ActivationKind::Swish: return swish_value(x);
        case ActivationKind::Mish: return mish_value(x);
    }
    return x;
}

template <typename T>
T activation_derivative(T x, ActivationKind kind) noexcept {
    switch (kind) {
        case ActivationKind::Relu: return relu_slope(x);
        case ActivationKind::Elu: return elu_slope(x);
        case ActivationKind::Swish: return swish_slope(x);
        case ActivationKind::Mish: return mish_slope(x);
    }
    return T{1};
}

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& x, ActivationKind kind) {
    Tensor<T> y(x.dims());
    const T* in = x.data();
    T* out = y.data();
    const std::size_t n = x.size();
    switch (kind) {
        case ActivationKind::Relu: map_values(in, out, n, [](T v) { return relu_value(v); }); break;
        case ActivationKind::Elu: map_values(in, out, n, [](T v) { return elu_value(v); }); break;
        case ActivationKind::Swish: map_values(in, out, n, [](T v) { return swish_value(v); }); break;
        case ActivationKind::Mish: map_values(in, out, n, [](T v) { return mish_value(v); }); break;
    }
    return y;
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& x, const Tensor<T>& upstream, ActivationKind kind) {
    if (x.dims() != upstream.dims()) {
        throw ShapeError("activation backward: upstream " + to_string(upstream.dims()) +
                         " vs input " + to_string(x.dims()));
    }
    Tensor<T> g(x.dims());
    const T* in = x.data();
    const T* up = upstream.data();
    T* out = g.data();
    const std::size_t n = x.size();
    switch (kind) {
        case ActivationKind::Relu: map_slopes(in, up, out, n, [](T v) { return relu_slope(v); }); break;
        case ActivationKind::Elu: map_slopes(in, up, out, n, [](T v) { return elu_slope(v); }); break;
        case ActivationKind::Swish: map_slopes(in, up, out, n, [](T v) { return swish_slope(v); }); break;
        case ActivationKind::Mish: map_slopes(in, up, out, n, [](T v) { return mish_slope(v); }); break;
    }
    return g;
}

template <typename T>
Tensor<T> avg_pool_forward(const Tensor<T>& x, std::size_t width) {
    expect_conv_input(x.dims(), "avg_pool");
    const std::size_t len = x.dim(3);
    if (width == 0 || len % width != 0) {
        throw ConfigError("avg_pool: width " + std::to_string(width) +
                          " does not divide time extent " + std::to_string(len));
    }
    const std::size_t out_len = len / width;
    const std::size_t rows = x.dim(0) * x.dim(1) * x.dim(2);
    Tensor<T> y({x.dim(0), x.dim(1), x.dim(2), out_len});
    const T scale = T{1} / static_cast<T>(width);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data() + r * len;
        T* out = y.data() + r * out_len;
        for (std::size_t o = 0; o < out_len; ++o) {
            T acc{0};
            for (std::size_t w = 0; w < width; ++w) acc += in[o * width + w];
            out[o] = acc * scale;
        }
    }
    return y;
}

template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& upstream, std::size_t width) {
    expect_conv_input(upstream.dims(), "avg_pool backward");
    const std::size_t out_len = upstream.dim(3);
    const std::size_t rows = upstream.dim(0) * upstream.dim(1) * upstream.dim(2);
    Tensor<T> g({upstream.dim(0), upstream.dim(1), upstream.dim(2), out_len * width});
    const T scale = T{1} / static_cast<T>(width);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* gy = upstream.data() + r * out_len;
        T* gx = g.data() + r * out_len * width;
        for (std::size_t o = 0; o < out_len; ++o) {
            for (std::size_t w = 0; w < width; ++w) gx[o * width + w] = gy[o] * scale;
        }
    }
    return g;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
    expect_rank(x, 2, "dense input");
    expect_rank(weights, 2, "dense weights");
    expect_rank(bias, 1, "dense bias");
    const std::size_t n_batch = x.dim(0), width = x.dim(1), units = weights.dim(1);
    expect_axis(weights.dim(0), width, 0, "dense weights rows vs input width");
    expect_axis(bias.dim(0), units, 0, "dense bias");
    Tensor<T> y({n_batch, units});
    for (std::size_t n = 0; n < n_batch; ++n) {
        T* out = &y.at(n, 0);
        for (std::size_t k = 0; k < units; ++k) out[k] = bias[k];
        for (std::size_t m = 0; m < width; ++m) {
            const T xv = x.at(n, m);
            const T* w = &weights.at(m, 0);
            for (std::size_t k = 0; k < units; ++k) out[k] += xv * w[k];
        }
    }
    return y;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    expect_rank(logits, 2, "softmax");
    const std::size_t n_batch = logits.dim(0), units = logits.dim(1);
    Tensor<T> p(logits.dims());
    for (std::size_t n = 0; n < n_batch; ++n) {
        const T* z = &logits.at(n, 0);
        T* out = &p.at(n, 0);
        const T peak = *std::max_element(z, z + units);
        T total{0};
        for (std::size_t k = 0; k < units; ++k) {
            out[k] = std::exp(z[k] - peak);
            total += out[k];
        }
        for (std::size_t k = 0; k < units; ++k) out[k] /= total;
    }
    return p;
}

namespace {

template <typename T>
void check_labels(const Tensor<T>& probs, std::span<const std::uint8_t> labels) {
    expect_rank(probs, 2, "cross_entropy probabilities");
    if (labels.size() != probs.dim(0)) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(probs.dim(0)) + " rows");
    }
    for (std::size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] >= probs.dim(1)) {
            throw DataError("label " + std::to_string(labels[n]) + " at row " + std::to_string(n) +
                            " outside [0, " + std::to_string(probs.dim(1)) + ")");
        }
    }
}

}  // namespace

template <typename T>
double cross_entropy(const Tensor<T>& probs, std::span<const std::uint8_t> labels) {
    check_labels(probs, labels);
    if (labels.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t n = 0; n < labels.size(); ++n) {
        const double p = static_cast<double>(probs.at(n, labels[n]));
        total -= std::log(std::max(p, kProbabilityFloor));
    }
    return total / static_cast<double>(labels.size());
}

template <typename T>
Tensor<T> cross_entropy_logit_grad(const Tensor<T>& probs, std::span<const std::uint8_t> labels) {
    check_labels(probs, labels);
    Tensor<T> g = probs;
    const T inv_n = T{1} / static_cast<T>(std::max<std::size_t>(labels.size(), 1));
    for (std::size_t n = 0; n < labels.size(); ++n) {
        g.at(n, labels[n]) -= T{1};
    }
    for (auto& v : g.values()) v *= inv_n;
    return g;
}

template <typename T>
Tensor<T> cross_entropy_prob_grad(const Tensor<T>& probs, std::span<const std::uint8_t> labels) {
    check_labels(probs, labels);
    Tensor<T> g(probs.dims());
    const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(labels.size(), 1));
    for (std::size_t n = 0; n < labels.size(); ++n) {
        const double p = static_cast<double>(probs.at(n, labels[n]));
        if (p >= kProbabilityFloor) g.at(n, labels[n]) = static_cast<T>(-inv_n / p);
    }
    return g;
}

#define ERPNET_INSTANTIATE_KERNELS(T)                                                           \
    template Tensor<T> temporal_conv_forward(const Tensor<T>&, const Tensor<T>&);               \
    template ConvGrads<T> temporal_conv_backward(const Tensor<T>&, const Tensor<T>&,            \
                                                 const Tensor<T>&, bool);                       \
    template Tensor<T> per_map_conv_forward(const Tensor<T>&, const Tensor<T>&);                \
    template ConvGrads<T> per_map_conv_backward(const Tensor<T>&, const Tensor<T>&,             \
                                                const Tensor<T>&);                              \
    template Tensor<T> depthwise_conv_forward(const Tensor<T>&, const Tensor<T>&);              \
    template ConvGrads<T> depthwise_conv_backward(const Tensor<T>&, const Tensor<T>&,           \
                                                  const Tensor<T>&);                            \
    template Tensor<T> pointwise_conv_forward(const Tensor<T>&, const Tensor<T>&);              \
    template ConvGrads<T> pointwise_conv_backward(const Tensor<T>&, const Tensor<T>&,           \
                                                  const Tensor<T>&);                            \
    template Tensor<T> separable_conv_forward(const Tensor<T>&, const Tensor<T>&,               \
                                              const Tensor<T>&);                                \
    template T activation_value(T, ActivationKind) noexcept;                                    \
    template T activation_derivative(T, ActivationKind) noexcept;                               \
    template Tensor<T> activation_forward(const Tensor<T>&, ActivationKind);                    \
    template Tensor<T> activation_backward(const Tensor<T>&, const Tensor<T>&, ActivationKind); \
    template Tensor<T> avg_pool_forward(const Tensor<T>&, std::size_t);                         \
    template Tensor<T> avg_pool_backward(const Tensor<T>&, std::size_t);                        \
    template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
    template Tensor<T> softmax(const Tensor<T>&);                                               \
    template double cross_entropy(const Tensor<T>&, std::span<const std::uint8_t>);             \
    template Tensor<T> cross_entropy_logit_grad(const Tensor<T>&, std::span<const std::uint8_t>); \
    template Tensor<T> cross_entropy_prob_grad(const Tensor<T>&, std::span<const std::uint8_t>);

ERPNET_INSTANTIATE_KERNELS(float)
ERPNET_INSTANTIATE_KERNELS(double)

#undef ERPNET_INSTANTIATE_KERNELS

}  // namespace erpnet
