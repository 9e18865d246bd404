#include "erpnet/gradcheck.hpp"

#include "erpnet/kernels.hpp"
#include "erpnet/layers.hpp"
#include "erpnet/model.hpp"
#include "erpnet/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>

namespace erpnet {

double relative_error(double analytic, double numeric) noexcept {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

namespace {

using TensorD = Tensor<double>;

TensorD random_tensor(const Dims& dims, Rng& rng, double scale = 1.0) {
    TensorD t(dims);
    for (auto& v : t.values()) v = scale * rng.normal();
    return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

struct Probe {
    double max_rel = 0.0;
    std::size_t coords = 0;
};

std::vector<std::size_t> coordinates(std::size_t n, std::size_t cap, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n > cap) {
        rng.shuffle(std::span<std::size_t>(idx));
        idx.resize(cap);
    }
    return idx;
}

// Compares `analytic` with central differences of the loss sum(r * eval())
// while perturbing `target` in place. The two outputs are differenced
// elementwise before weighting, which keeps cancellation error far below the
// tolerance even for near-zero gradient entries.
void probe(TensorD& target, const TensorD& analytic, const std::function<TensorD()>& eval,
           const TensorD& r, const GradCheckOptions& opt, Rng& rng, Probe& out) {
    for (std::size_t i : coordinates(target.size(), opt.max_coords, rng)) {
        const double saved = target[i];
        target[i] = saved + opt.step;
        const TensorD up = eval();
        target[i] = saved - opt.step;
        const TensorD down = eval();
        target[i] = saved;
        double diff = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) diff += r[j] * (up[j] - down[j]);
        const double numeric = diff / (2.0 * opt.step);
        out.max_rel = std::max(out.max_rel, relative_error(analytic[i], numeric));
        ++out.coords;
    }
}

TensorD scalar(double v) { return TensorD({1}, std::vector<double>{v}); }

// Checks one layer at input x. `before_forward` runs ahead of every forward
// pass (dropout reseeding).
void check_layer(Layer<double>& layer, TensorD x, const GradCheckOptions& opt, Rng& rng,
                 Probe& out, const std::function<void()>& before_forward = [] {}) {
    layer.set_needs_input_grad(true);
    for (auto* p : layer.params()) {
        for (auto& v : p->value.values()) v = 0.5 * rng.normal();
    }
    before_forward();
    const TensorD y = layer.forward(x, Mode::Train);
    const TensorD r = random_tensor(y.dims(), rng);
    const TensorD dx = layer.backward(r);
    std::vector<TensorD> dparams;
    for (auto* p : layer.params()) dparams.push_back(p->grad);

    auto eval = [&] {
        before_forward();
        return layer.forward(x, Mode::Train);
    };
    probe(x, dx, eval, r, opt, rng, out);
    auto params = layer.params();
    for (std::size_t k = 0; k < params.size(); ++k) {
        probe(params[k]->value, dparams[k], eval, r, opt, rng, out);
    }
}

using Case = std::function<void(Rng&, const GradCheckOptions&, Probe&)>;

Dims maps_shape(Rng& rng, std::size_t f_max = 4) {
    const std::size_t n = pick(rng, 1, 4);
    const std::size_t f = pick(rng, 1, f_max);
    const std::size_t c = pick(rng, 1, 6);
    const std::size_t t = std::size_t{8} << rng.below(3);  // 8, 16 or 32
    return {n, f, c, t};
}

void activation_case(ActivationKind kind, Rng& rng, const GradCheckOptions& opt, Probe& out) {
    ActivationLayer<double> layer(kind);
    TensorD x = random_tensor(maps_shape(rng), rng, 2.0);
    // Keep clear of the relu kink so the central difference is well defined.
    for (auto& v : x.values()) {
        if (std::abs(v) < 1e-2) v = v < 0 ? v - 1e-2 : v + 1e-2;
    }
    check_layer(layer, x, opt, rng, out);
}

void dropout_case(bool spatial, Rng& rng, const GradCheckOptions& opt, Probe& out) {
    const std::uint64_t seed = rng.next_u64();
    DropoutLayer<double> layer(0.3, spatial, seed);
    check_layer(layer, random_tensor(maps_shape(rng), rng), opt, rng, out,
                [&] { layer.reseed(seed); });
}

void dense_ce_case(Rng& rng, const GradCheckOptions& opt, Probe& out) {
    const std::size_t n = pick(rng, 1, 4);
    const std::size_t m = pick(rng, 1, 16);
    const std::size_t units = 2;
    DenseLayer<double> dense(m, units, std::nullopt);
    dense.set_needs_input_grad(true);
    for (auto* p : dense.params()) {
        for (auto& v : p->value.values()) v = 0.5 * rng.normal();
    }
    TensorD x = random_tensor({n, m}, rng);
    std::vector<std::uint8_t> labels(n);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(units));

    const TensorD probs = softmax(dense.forward(x, Mode::Train));
    const TensorD dx = dense.backward(cross_entropy_logit_grad(probs, labels));
    const TensorD dw = dense.weights().grad;
    const TensorD db = dense.bias().grad;
    auto loss = [&] { return scalar(cross_entropy(softmax(dense.forward(x, Mode::Train)), labels)); };
    const TensorD one = scalar(1.0);
    probe(x, dx, loss, one, opt, rng, out);
    probe(dense.weights().value, dw, loss, one, opt, rng, out);
    probe(dense.bias().value, db, loss, one, opt, rng, out);
}

void model_case(Arch arch, Rng& rng, const GradCheckOptions& opt, Probe& out) {
    ModelConfig cfg;
    cfg.arch = arch;
    cfg.activation = default_activation(arch);
    cfg.channels = pick(rng, 1, 4);
    cfg.samples = 32;
    cfg.f1 = pick(rng, 1, 3);
    cfg.f2 = pick(rng, 1, 3);
    cfg.d = pick(rng, 1, 2);
    cfg.kernel_length = pick(rng, 2, 8);
    cfg.dropout_rate = 0.25;
    auto model = Model<double>::build(cfg, rng.next_u64());
    std::vector<std::uint8_t> labels(pick(rng, 2, 4));
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(2));
    TensorD x = random_tensor({labels.size(), 1, cfg.channels, cfg.samples}, rng);

    const std::uint64_t seed = rng.next_u64();
    auto reseed = [&] {
        std::uint64_t k = 0;
        for (const auto& layer : model.layers()) {
            if (auto* d = dynamic_cast<DropoutLayer<double>*>(layer.get())) d->reseed(derive_seed(seed, k++));
        }
    };
    reseed();
    const TensorD probs = model.forward(x, Mode::Train);
    model.backward_from_logits(cross_entropy_logit_grad(probs, labels));
    std::vector<TensorD> grads;
    for (auto* p : model.params()) grads.push_back(p->grad);
    auto loss = [&] {
        reseed();
        return scalar(cross_entropy(model.forward(x, Mode::Train), labels));
    };
    const TensorD one = scalar(1.0);
    auto params = model.params();
    for (std::size_t k = 0; k < params.size(); ++k) {
        probe(params[k]->value, grads[k], loss, one, opt, rng, out);
    }
}

std::vector<std::pair<std::string, Case>> cases() {
    std::vector<std::pair<std::string, Case>> out;
    out.emplace_back("reshape", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        ReshapeLayer<double> layer;
        const Dims s = maps_shape(rng);
        check_layer(layer, random_tensor({s[0], s[2], s[3]}, rng), opt, rng, p);
    });
    out.emplace_back("conv2d", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        const Dims s = maps_shape(rng);
        TemporalConvLayer<double> layer(s[1], pick(rng, 1, 4), pick(rng, 1, std::min<std::size_t>(s[3], 9)));
        check_layer(layer, random_tensor(s, rng), opt, rng, p);
    });
    out.emplace_back("depthwise_conv2d", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        const Dims s = maps_shape(rng);
        DepthwiseConvLayer<double> layer(s[1], s[2], pick(rng, 1, 3));
        check_layer(layer, random_tensor(s, rng), opt, rng, p);
    });
    out.emplace_back("separable_conv2d", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        Dims s = maps_shape(rng, 8);
        s[2] = 1;
        SeparableConvLayer<double> layer(s[1], pick(rng, 1, 4), pick(rng, 1, std::min<std::size_t>(s[3], 16)));
        check_layer(layer, random_tensor(s, rng), opt, rng, p);
    });
    out.emplace_back("batch_norm", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        Dims s = maps_shape(rng);
        BatchNormLayer<double> layer(s[1]);
        check_layer(layer, random_tensor(s, rng, 1.5), opt, rng, p);
    });
    for (auto kind : {ActivationKind::Elu, ActivationKind::Relu, ActivationKind::Swish, ActivationKind::Mish}) {
        out.emplace_back("activation_" + std::string(to_string(kind)),
                         [kind](Rng& rng, const GradCheckOptions& opt, Probe& p) {
                             activation_case(kind, rng, opt, p);
                         });
    }
    out.emplace_back("average_pooling2d", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        AvgPoolLayer<double> layer(std::size_t{1} << pick(rng, 0, 3));
        check_layer(layer, random_tensor(maps_shape(rng), rng), opt, rng, p);
    });
    out.emplace_back("dropout", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        dropout_case(false, rng, opt, p);
    });
    out.emplace_back("spatial_dropout2d", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        dropout_case(true, rng, opt, p);
    });
    out.emplace_back("flatten", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        FlattenLayer<double> layer;
        check_layer(layer, random_tensor(maps_shape(rng), rng), opt, rng, p);
    });
    out.emplace_back("dense", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        const std::size_t m = pick(rng, 1, 16);
        DenseLayer<double> layer(m, pick(rng, 1, 4), std::nullopt);
        check_layer(layer, random_tensor({pick(rng, 1, 4), m}, rng), opt, rng, p);
    });
    out.emplace_back("softmax", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        SoftmaxLayer<double> layer;
        check_layer(layer, random_tensor({pick(rng, 1, 4), pick(rng, 2, 4)}, rng, 2.0), opt, rng, p);
    });
    out.emplace_back("dense_softmax_cross_entropy", dense_ce_case);
    out.emplace_back("model_cn-eegnet", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        model_case(Arch::CnEegnet, rng, opt, p);
    });
    out.emplace_back("model_eegnet", [](Rng& rng, const GradCheckOptions& opt, Probe& p) {
        model_case(Arch::Eegnet, rng, opt, p);
    });
    return out;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options) {
    std::vector<GradCheckResult> results;
    std::uint64_t case_index = 0;
    for (const auto& [name, run] : cases()) {
        Probe probe_total;
        for (std::size_t s = 0; s < options.seeds; ++s) {
            Rng rng(derive_seed(derive_seed(options.base_seed, case_index), s));
            run(rng, options, probe_total);
        }
        results.push_back({name, probe_total.max_rel, probe_total.coords, options.seeds,
                           probe_total.max_rel <= options.tolerance});
        ++case_index;
    }
    return results;
}

std::string format_gradcheck(const std::vector<GradCheckResult>& results) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-30s %8s %8s %14s  %s\n", "layer", "seeds", "coords",
                  "max_rel_error", "status");
    os << line;
    for (const auto& r : results) {
        std::snprintf(line, sizeof(line), "%-30s %8zu %8zu %14.3e  %s\n", r.name.c_str(), r.seeds,
                      r.coords, r.max_rel_error, r.passed ? "ok" : "FAIL");
        os << line;
    }
    return os.str();
}

}  // namespace erpnet
