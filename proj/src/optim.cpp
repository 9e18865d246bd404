#include "erpnet/optim.hpp"

#include "erpnet/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace erpnet {

namespace {

constexpr std::array kAllOptimizers{OptimizerKind::Sgd,    OptimizerKind::Adagrad,
                                    OptimizerKind::Adadelta, OptimizerKind::Adam,
                                    OptimizerKind::Adamax, OptimizerKind::Nadam,
                                    OptimizerKind::AdaBelief};

}  // namespace

std::string_view to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::Sgd: return "sgd";
        case OptimizerKind::Adagrad: return "adagrad";
        case OptimizerKind::Adadelta: return "adadelta";
        case OptimizerKind::Adam: return "adam";
        case OptimizerKind::Adamax: return "adamax";
        case OptimizerKind::Nadam: return "nadam";
        case OptimizerKind::AdaBelief: return "adabelief";
    }
    return "?";
}

OptimizerKind parse_optimizer(std::string_view name) {
    for (auto kind : kAllOptimizers) {
        if (to_string(kind) == name) return kind;
    }
    throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::span<const OptimizerKind> all_optimizers() { return kAllOptimizers; }

OptimizerHyper OptimizerHyper::defaults(OptimizerKind kind) {
    OptimizerHyper h;
    h.kind = kind;
    return h;
}

void OptimizerHyper::validate() const {
    if (!(lr > 0.0)) throw ConfigError("optimizer: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optimizer: beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer: beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be > 0");
}

void to_json(nlohmann::json& j, const OptimizerHyper& h) {
    j = nlohmann::json{{"kind", std::string(to_string(h.kind))},
                       {"lr", h.lr},
                       {"beta1", h.beta1},
                       {"beta2", h.beta2},
                       {"epsilon", h.epsilon}};
}

void from_json(const nlohmann::json& j, OptimizerHyper& h) {
    OptimizerHyper out;
    if (j.contains("kind")) out.kind = parse_optimizer(j.at("kind").get<std::string>());
    if (j.contains("lr")) out.lr = j.at("lr").get<double>();
    if (j.contains("beta1")) out.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) out.beta2 = j.at("beta2").get<double>();
    if (j.contains("epsilon")) out.epsilon = j.at("epsilon").get<double>();
    h = out;
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerHyper hyper) : hyper_(hyper) {
    hyper_.validate();
}

template <typename T>
void Optimizer<T>::step(std::span<Param<T>* const> params) {
    if (t_ == 0) {
        first_.clear();
        second_.clear();
        for (auto* p : params) {
            first_.emplace_back(p->value.dims());
            second_.emplace_back(p->value.dims());
        }
    }
    if (params.size() != first_.size()) {
        throw UsageError("optimizer step: parameter list changed size (" +
                         std::to_string(params.size()) + " vs " + std::to_string(first_.size()) +
                         ")");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = *params[i];
        if (p.grad.dims() != p.value.dims() || first_[i].dims() != p.value.dims()) {
            throw UsageError("optimizer step: gradient " + to_string(p.grad.dims()) +
                             " does not match parameter '" + p.name + "' " +
                             to_string(p.value.dims()));
        }
    }
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        update(*params[i], i);
        if (params[i]->max_norm) {
            apply_max_norm_inplace(params[i]->value, params[i]->max_norm->bound,
                                   params[i]->max_norm->axis);
        }
    }
}

template <typename T>
void Optimizer<T>::update(Param<T>& p, std::size_t slot) {
    // Arithmetic in double; only the stored values are narrowed to T.
    const double lr = hyper_.lr, b1 = hyper_.beta1, b2 = hyper_.beta2, eps = hyper_.epsilon;
    const double t = static_cast<double>(t_);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c1_next = 1.0 - std::pow(b1, t + 1.0);
    const double c2 = 1.0 - std::pow(b2, t);
    T* theta = p.value.data();
    const T* grad = p.grad.data();
    T* m = first_[slot].data();
    T* v = second_[slot].data();
    const std::size_t count = p.value.size();

    for (std::size_t i = 0; i < count; ++i) {
        const double g = grad[i];
        double th = theta[i];
        switch (hyper_.kind) {
            case OptimizerKind::Sgd: th -= lr * g; break;
            case OptimizerKind::Adagrad: {
                const double acc = static_cast<double>(m[i]) + g * g;
                m[i] = static_cast<T>(acc);
                th -= lr * g / (std::sqrt(acc) + eps);
                break;
            }
            case OptimizerKind::Adadelta: {
                const double acc = b2 * static_cast<double>(m[i]) + (1.0 - b2) * g * g;
                const double dx =
                    -std::sqrt(static_cast<double>(v[i]) + eps) / std::sqrt(acc + eps) * g;
                m[i] = static_cast<T>(acc);
                v[i] = static_cast<T>(b2 * static_cast<double>(v[i]) + (1.0 - b2) * dx * dx);
                th += lr * dx;
                break;
            }
            case OptimizerKind::Adam: {
                const double mm = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
                const double vv = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
                m[i] = static_cast<T>(mm);
                v[i] = static_cast<T>(vv);
                th -= lr * (mm / c1) / (std::sqrt(vv / c2) + eps);
                break;
            }
            case OptimizerKind::Adamax: {
                const double mm = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
                const double uu = std::max(b2 * static_cast<double>(v[i]), std::abs(g));
                m[i] = static_cast<T>(mm);
                v[i] = static_cast<T>(uu);
                th -= (lr / c1) * mm / (uu + eps);
                break;
            }
            case OptimizerKind::Nadam: {
                const double mm = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
                const double vv = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
                m[i] = static_cast<T>(mm);
                v[i] = static_cast<T>(vv);
                const double lookahead = b1 * mm / c1_next + (1.0 - b1) * g / c1;
                th -= lr * lookahead / (std::sqrt(vv / c2) + eps);
                break;
            }
            case OptimizerKind::AdaBelief: {
                const double mm = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
                const double diff = g - mm;
                const double ss = b2 * static_cast<double>(v[i]) + (1.0 - b2) * diff * diff + eps;
                m[i] = static_cast<T>(mm);
                v[i] = static_cast<T>(ss);
                th -= lr * (mm / c1) / (std::sqrt(ss / c2) + eps);
                break;
            }
        }
        theta[i] = static_cast<T>(th);
    }
}

namespace {

// Fixed per-slice visiting so rows and columns share one implementation.
struct SliceLayout {
    std::size_t slices, length, slice_stride, elem_stride;
};

template <typename T>
SliceLayout slice_layout(const Tensor<T>& kernel, NormAxis axis) {
    if (kernel.rank() != 2) {
        throw ShapeError("max-norm: expected a 2-D kernel, got " + to_string(kernel.dims()));
    }
    const std::size_t rows = kernel.dim(0), cols = kernel.dim(1);
    if (axis == NormAxis::Rows) return {rows, cols, cols, 1};
    return {cols, rows, 1, cols};
}

template <typename T>
double slice_norm(const T* base, const SliceLayout& l, std::size_t s) {
    double sq = 0.0;
    for (std::size_t e = 0; e < l.length; ++e) {
        const double v = base[s * l.slice_stride + e * l.elem_stride];
        sq += v * v;
    }
    return std::sqrt(sq);
}

}  // namespace

template <typename T>
double max_slice_norm(const Tensor<T>& kernel, NormAxis axis) {
    const auto l = slice_layout(kernel, axis);
    double best = 0.0;
    for (std::size_t s = 0; s < l.slices; ++s) best = std::max(best, slice_norm(kernel.data(), l, s));
    return best;
}

template <typename T>
void apply_max_norm_inplace(Tensor<T>& kernel, double bound, NormAxis axis) {
    if (!(bound > 0.0)) throw ConfigError("max-norm bound must be > 0");
    const auto l = slice_layout(kernel, axis);
    T* base = kernel.data();
    for (std::size_t s = 0; s < l.slices; ++s) {
        double norm = slice_norm(base, l, s);
        if (norm <= bound) continue;
        double scale = bound / norm;
        // Rounding of the scaled elements can leave the norm a few ulps above
        // the bound; shrink until it holds exactly.
        for (int attempt = 0; attempt < 64 && norm > bound; ++attempt) {
            for (std::size_t e = 0; e < l.length; ++e) {
                T& v = base[s * l.slice_stride + e * l.elem_stride];
                v = static_cast<T>(static_cast<double>(v) * scale);
            }
            norm = slice_norm(base, l, s);
            scale = 1.0 - 4.0 * std::numeric_limits<T>::epsilon();
        }
    }
}

template class Optimizer<float>;
template class Optimizer<double>;
template double max_slice_norm(const Tensor<float>&, NormAxis);
template double max_slice_norm(const Tensor<double>&, NormAxis);
template void apply_max_norm_inplace(Tensor<float>&, double, NormAxis);
template void apply_max_norm_inplace(Tensor<double>&, double, NormAxis);

}  // namespace erpnet
