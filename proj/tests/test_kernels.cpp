#include "erpnet/errors.hpp"
#include "erpnet/kernels.hpp"
#include "erpnet/random.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace erpnet;

namespace {

template <typename T>
Tensor<T> random_tensor(const Dims& dims, Rng& rng) {
    Tensor<T> t(dims);
    for (auto& v : t.values()) v = static_cast<T>(rng.normal());
    return t;
}

// Direct loop transcription of zero-padded "same" correlation, the extra pad
// of an even kernel on the right.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w) {
    const std::size_t N = x.dim(0), Fi = x.dim(1), H = x.dim(2), T = x.dim(3);
    const std::size_t Fo = w.dim(0), K = w.dim(3);
    const long left = static_cast<long>((K - 1) / 2);
    Tensor<double> y({N, Fo, H, T});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < Fo; ++f)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t t = 0; t < T; ++t) {
                    double acc = 0;
                    for (std::size_t i = 0; i < Fi; ++i)
                        for (std::size_t k = 0; k < K; ++k) {
                            const long s = static_cast<long>(t + k) - left;
                            if (s >= 0 && s < static_cast<long>(T)) {
                                acc += x.at(n, i, h, static_cast<std::size_t>(s)) * w.at(f, i, 0, k);
                            }
                        }
                    y.at(n, f, h, t) = acc;
                }
    return y;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    REQUIRE(a.dims() == b.dims());
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename T>
double relative_norm_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (double(a[i]) - double(b[i])) * (double(a[i]) - double(b[i]));
        den += double(b[i]) * double(b[i]);
    }
    return std::sqrt(num / den);
}

long double mish_oracle(long double x) { return x * std::tanh(std::log1p(std::exp(x))); }

}  // namespace

TEST_CASE("temporal conv examples") {
    Tensor<float> x({1, 1, 1, 4}, {1, 2, 3, 4});
    CHECK(temporal_conv_forward(x, Tensor<float>({1, 1, 1, 1}, {1})).storage() ==
          std::vector<float>{1, 2, 3, 4});
    CHECK(temporal_conv_forward(x, Tensor<float>({1, 1, 1, 3}, {0, 0, 1})).storage() ==
          std::vector<float>{2, 3, 4, 0});
    Rng rng(1);
    auto y = temporal_conv_forward(random_tensor<float>({2, 1, 4, 16}, rng), random_tensor<float>({8, 1, 1, 5}, rng));
    CHECK(y.dims() == Dims{2, 8, 4, 16});
    CHECK_THROWS_AS(temporal_conv_forward(x, Tensor<float>({1, 2, 1, 3})), ShapeError);
}

TEST_CASE("temporal conv matches the loop oracle for odd and even kernels") {
    Rng rng(11);
    for (std::size_t K : {1, 2, 3, 4, 7, 8, 16, 33, 64}) {
        const auto x = random_tensor<double>({2, 3, 2, 40}, rng);
        const auto w = random_tensor<double>({4, 3, 1, K}, rng);
        CHECK(max_abs_diff(temporal_conv_forward(x, w), conv_oracle(x, w)) < 1e-12);
    }
    // float path with the register-blocked tiles (T spans several tiles)
    const auto xd = random_tensor<double>({1, 1, 3, 128}, rng);
    const auto wd = random_tensor<double>({5, 1, 1, 64}, rng);
    const auto yf = temporal_conv_forward(xd.cast<float>(), wd.cast<float>());
    CHECK(relative_norm_diff(yf.cast<double>(), conv_oracle(xd, wd)) < 1e-6);
}

TEST_CASE("temporal conv backward is the transpose of forward") {
    Rng rng(5);
    for (std::size_t K : {1, 4, 5, 64, 70}) {
        const auto x = random_tensor<double>({2, 2, 3, 96}, rng);
        const auto w = random_tensor<double>({3, 2, 1, K}, rng);
        const auto g = random_tensor<double>({2, 3, 3, 96}, rng);
        const auto grads = temporal_conv_backward(x, w, g);
        // <g, conv(x, w)> is bilinear: its derivative along e_i is conv(e_i, w).
        double lhs = 0, rhs = 0;
        const auto y = temporal_conv_forward(x, w);
        for (std::size_t i = 0; i < y.size(); ++i) lhs += g[i] * y[i];
        for (std::size_t i = 0; i < x.size(); ++i) rhs += grads.input[i] * x[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
        rhs = 0;
        for (std::size_t i = 0; i < w.size(); ++i) rhs += grads.kernel[i] * w[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("identity kernel: input gradient equals upstream") {
    Rng rng(2);
    const auto x = random_tensor<float>({2, 1, 3, 8}, rng);
    const auto g = random_tensor<float>({2, 1, 3, 8}, rng);
    const auto grads = temporal_conv_backward(x, Tensor<float>({1, 1, 1, 1}, {1}), g);
    CHECK(grads.input == g);
}

TEST_CASE("depthwise conv examples and oracle") {
    Tensor<float> x({1, 1, 2, 1}, {3, 5});
    CHECK(depthwise_conv_forward(x, Tensor<float>({1, 2}, {1, 1})).storage() == std::vector<float>{8});
    CHECK(depthwise_conv_forward(x, Tensor<float>({2, 2}, {1, 0, 0, 1})).storage() ==
          std::vector<float>{3, 5});
    Rng rng(3);
    const auto xr = random_tensor<double>({2, 8, 4, 16}, rng);
    const auto w = random_tensor<double>({16, 4}, rng);
    const auto y = depthwise_conv_forward(xr, w);
    CHECK(y.dims() == Dims{2, 16, 1, 16});
    double err = 0;
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t m = 0; m < 16; ++m)
            for (std::size_t t = 0; t < 16; ++t) {
                double acc = 0;
                for (std::size_t c = 0; c < 4; ++c) acc += xr.at(n, m / 2, c, t) * w.at(m, c);
                err = std::max(err, std::abs(acc - y.at(n, m, 0, t)));
            }
    CHECK(err < 1e-12);
    CHECK_THROWS_AS(depthwise_conv_forward(xr, Tensor<double>({12, 4})), ShapeError);
}

TEST_CASE("separable conv examples and oracle") {
    Rng rng(4);
    // centred delta, identity mix
    const auto x = random_tensor<float>({2, 3, 1, 16}, rng);
    Tensor<float> delta({3, 1, 16});
    for (std::size_t f = 0; f < 3; ++f) delta.at(f, 0, same_pad_left(16)) = 1;
    Tensor<float> eye({3, 3});
    for (std::size_t f = 0; f < 3; ++f) eye.at(f, f) = 1;
    CHECK(separable_conv_forward(x, delta, eye) == x);

    Tensor<float> x2({1, 2, 1, 1}, {1, 2});
    Tensor<float> d1({2, 1, 1}, {1, 1});
    CHECK(separable_conv_forward(x2, d1, Tensor<float>({1, 2}, {1, 1})).storage() == std::vector<float>{3});

    const auto xr = random_tensor<double>({2, 16, 1, 32}, rng);
    const auto dk = random_tensor<double>({16, 1, 16}, rng);
    const auto pk = random_tensor<double>({16, 16}, rng);
    const auto y = separable_conv_forward(xr, dk, pk);
    CHECK(y.dims() == Dims{2, 16, 1, 32});
    // per-map oracle through the dense conv oracle with a diagonal kernel
    Tensor<double> diag({16, 16, 1, 16});
    for (std::size_t f = 0; f < 16; ++f)
        for (std::size_t k = 0; k < 16; ++k) diag.at(f, f, 0, k) = dk.at(f, 0, k);
    const auto mid = conv_oracle(xr, diag);
    Tensor<double> want({2, 16, 1, 32});
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t o = 0; o < 16; ++o)
            for (std::size_t t = 0; t < 32; ++t) {
                double acc = 0;
                for (std::size_t i = 0; i < 16; ++i) acc += pk.at(o, i) * mid.at(n, i, 0, t);
                want.at(n, o, 0, t) = acc;
            }
    CHECK(max_abs_diff(y, want) < 1e-12);
}

TEST_CASE("activation values") {
    for (auto k : {ActivationKind::Mish, ActivationKind::Swish, ActivationKind::Relu, ActivationKind::Elu}) {
        CHECK(activation_value(0.0, k) == 0.0);
        CHECK(activation_value(0.0f, k) == 0.0f);
    }
    CHECK(std::abs(activation_value(1.0, ActivationKind::Mish) - 0.865098) < 1e-6);
    CHECK(std::abs(activation_value(-10.0, ActivationKind::Mish) - (-4.5398e-4)) < 1e-7);
    CHECK(std::abs(activation_value(1.0f, ActivationKind::Mish) - 0.865098f) < 1e-6);
    CHECK(std::abs(activation_value(-10.0f, ActivationKind::Mish) - (-4.5398e-4f)) < 1e-7);
    CHECK(activation_value(-2.0, ActivationKind::Relu) == 0.0);
    CHECK(activation_value(-1.0, ActivationKind::Elu) == doctest::Approx(std::expm1(-1.0)));
    CHECK(activation_value(2.0, ActivationKind::Swish) == doctest::Approx(2.0 / (1.0 + std::exp(-2.0))));
}

TEST_CASE("activations match long-double oracles") {
    for (double x = -30.0; x <= 30.0; x += 0.037) {
        const long double lx = x;
        const long double sig = 1.0L / (1.0L + std::exp(-lx));
        const double mish = static_cast<double>(mish_oracle(lx));
        const double swish = static_cast<double>(lx * sig);
        const double elu = static_cast<double>(x > 0 ? lx : std::expm1(lx));
        CHECK(activation_value(x, ActivationKind::Mish) == doctest::Approx(mish).epsilon(1e-12));
        CHECK(activation_value(x, ActivationKind::Swish) == doctest::Approx(swish).epsilon(1e-12));
        CHECK(activation_value(x, ActivationKind::Elu) == doctest::Approx(elu).epsilon(1e-12));
        const float xf = static_cast<float>(x);
        CHECK(std::abs(activation_value(xf, ActivationKind::Mish) - mish_oracle(xf)) <=
              1e-6 * std::max(1.0L, std::abs(mish_oracle(xf))));
        // derivative against a central difference of the oracle
        const long double h = 1e-6L;
        const double dmish = static_cast<double>((mish_oracle(lx + h) - mish_oracle(lx - h)) / (2 * h));
        CHECK(activation_derivative(x, ActivationKind::Mish) == doctest::Approx(dmish).epsilon(1e-6));
    }
}

TEST_CASE("activation and softmax stay finite over [-1e4, 1e4]") {
    std::vector<float> xs;
    for (float x = -1e4f; x <= 1e4f; x += 7.3f) xs.push_back(x);
    xs.push_back(1e4f);
    Tensor<float> t({1, 1, 1, xs.size()}, xs);
    for (auto k : {ActivationKind::Mish, ActivationKind::Swish, ActivationKind::Relu, ActivationKind::Elu}) {
        const auto y = activation_forward(t, k);
        const auto g = activation_backward(t, Tensor<float>(t.dims(), 1.0f), k);
        for (std::size_t i = 0; i < y.size(); ++i) {
            REQUIRE(std::isfinite(y[i]));
            REQUIRE(std::isfinite(g[i]));
        }
        CHECK(y[y.size() - 1] == doctest::Approx(1e4));
    }
    Tensor<float> logits({3, 2}, {1e4f, -1e4f, -1e4f, -1e4f, 1000, 1000});
    const auto p = softmax(logits);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::isfinite(p[i]));
    CHECK(p.at(2, 0) == doctest::Approx(0.5));
}

TEST_CASE("vectorized activations agree with the scalar entry points") {
    Rng rng(9);
    const auto x = random_tensor<float>({1, 1, 1, 1000}, rng);
    for (auto k : {ActivationKind::Mish, ActivationKind::Swish, ActivationKind::Relu, ActivationKind::Elu}) {
        const auto y = activation_forward(x, k);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == activation_value(x[i], k));
    }
}

TEST_CASE("average pooling") {
    Tensor<float> x({1, 1, 1, 4}, {1, 3, 5, 7});
    CHECK(avg_pool_forward(x, 2).storage() == std::vector<float>{2, 6});
    CHECK(avg_pool_forward(Tensor<float>({1, 2, 1, 8}, 3.0f), 4).storage() == std::vector<float>(4, 3.0f));
    CHECK(avg_pool_forward(avg_pool_forward(Tensor<float>({1, 1, 1, 128}), 4), 8).dim(3) == 4);
    CHECK_THROWS_AS(avg_pool_forward(x, 3), ConfigError);
    const auto g = avg_pool_backward(Tensor<float>({1, 1, 1, 2}, {4, 8}), 2);
    CHECK(g.storage() == std::vector<float>{2, 2, 4, 4});
}

TEST_CASE("conv and pooling are linear") {
    Rng rng(21);
    const auto x = random_tensor<float>({2, 2, 3, 64}, rng);
    const auto y = random_tensor<float>({2, 2, 3, 64}, rng);
    const float a = 0.7f, b = -1.3f;
    Tensor<float> mix(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
    auto combine = [&](const Tensor<float>& fx, const Tensor<float>& fy) {
        Tensor<float> out(fx.dims());
        for (std::size_t i = 0; i < fx.size(); ++i) out[i] = a * fx[i] + b * fy[i];
        return out;
    };
    const auto w = random_tensor<float>({3, 2, 1, 17}, rng);
    CHECK(relative_norm_diff(temporal_conv_forward(mix, w),
                             combine(temporal_conv_forward(x, w), temporal_conv_forward(y, w))) < 1e-6);
    const auto dw = random_tensor<float>({4, 3}, rng);
    CHECK(relative_norm_diff(depthwise_conv_forward(mix, dw),
                             combine(depthwise_conv_forward(x, dw), depthwise_conv_forward(y, dw))) < 1e-6);
    CHECK(relative_norm_diff(avg_pool_forward(mix, 4), combine(avg_pool_forward(x, 4), avg_pool_forward(y, 4))) <
          1e-6);
}

TEST_CASE("softmax and dense") {
    const auto p = softmax(Tensor<float>({2, 2}, {0, 0, 1000, 1000}));
    CHECK(p.storage() == std::vector<float>{0.5f, 0.5f, 0.5f, 0.5f});
    Rng rng(8);
    const auto x = random_tensor<float>({5, 64}, rng);
    const auto w = random_tensor<float>({64, 2}, rng);
    const auto probs = dense_softmax(x, w, Tensor<float>({2}, {0.1f, -0.1f}));
    CHECK(probs.dims() == Dims{5, 2});
    for (std::size_t n = 0; n < 5; ++n) {
        CHECK(std::abs(probs.at(n, 0) + probs.at(n, 1) - 1.0f) <= 1e-6f);
        CHECK(probs.at(n, 0) > 0.0f);
        CHECK(probs.at(n, 0) < 1.0f);
    }
    CHECK_THROWS_AS(dense_forward(x, Tensor<float>({63, 2}), Tensor<float>({2})), ShapeError);
}

TEST_CASE("cross entropy values and adjoint") {
    const std::vector<std::uint8_t> one{1};
    CHECK(cross_entropy(Tensor<double>({1, 2}, {0, 1}), one) == 0.0);
    CHECK(cross_entropy(Tensor<double>({1, 2}, {0.5, 0.5}), one) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(std::isfinite(cross_entropy(Tensor<double>({1, 2}, {1, 0}), one)));
    CHECK_THROWS_AS(cross_entropy(Tensor<double>({1, 2}, {0.5, 0.5}), std::vector<std::uint8_t>{2}), DataError);

    Rng rng(12);
    Tensor<double> logits = random_tensor<double>({4, 2}, rng);
    const std::vector<std::uint8_t> labels{0, 1, 1, 0};
    const auto g = cross_entropy_logit_grad(softmax(logits), labels);
    const double h = 1e-5;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double s = logits[i];
        logits[i] = s + h;
        const double up = cross_entropy(softmax(logits), labels);
        logits[i] = s - h;
        const double down = cross_entropy(softmax(logits), labels);
        logits[i] = s;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - g[i]) <= 1e-6 * std::max(std::abs(fd), std::abs(g[i])));
    }
}
