#pragma once

#include "erpnet/layers.hpp"
#include "erpnet/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace erpnet {

enum class OptimizerKind { Sgd, Adagrad, Adadelta, Adam, Adamax, Nadam, AdaBelief };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

/// All seven kinds, in sweep order.
std::span<const OptimizerKind> all_optimizers();

struct OptimizerHyper {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 0.0009;
    double beta1 = 0.9;
    double beta2 = 0.999;  ///< also the Adadelta decay rho
    double epsilon = 1e-7;

    /// Shared tuple lr=0.0009, beta1=0.9, beta2=0.999, epsilon=1e-7.
    static OptimizerHyper defaults(OptimizerKind kind);
    void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerHyper& h);
void from_json(const nlohmann::json& j, OptimizerHyper& h);

// Per-parameter state for one training run. State tensors are lazily sized on
// the first step and must keep matching the parameter list afterwards.
//
//   sgd        theta -= lr g
//   adagrad    a += g^2;                     theta -= lr g / (sqrt(a) + eps)
//   adadelta   a = rho a + (1-rho) g^2;      dx = -sqrt(u+eps)/sqrt(a+eps) g;
//              u = rho u + (1-rho) dx^2;     theta += lr dx
//   adam       m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2;
//              theta -= lr mhat / (sqrt(vhat) + eps)
//   adamax     u = max(b2 u, |g|);           theta -= lr/(1-b1^t) m / (u + eps)
//   nadam      theta -= lr (b1 m/(1-b1^(t+1)) + (1-b1) g/(1-b1^t)) / (sqrt(vhat) + eps)
//   adabelief  s = b2 s + (1-b2)(g-m)^2 + eps; theta -= lr mhat / (sqrt(shat) + eps)
template <typename T>
class Optimizer {
  public:
    explicit Optimizer(OptimizerHyper hyper);

    /// One update over all parameters from their .grad fields, then max-norm
    /// projection of every constrained parameter.
    void step(std::span<Param<T>* const> params);

    const OptimizerHyper& hyper() const noexcept { return hyper_; }
    std::uint64_t steps() const noexcept { return t_; }

  private:
    void update(Param<T>& p, std::size_t slot);

    OptimizerHyper hyper_;
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> first_;   ///< m, or the squared-gradient accumulator
    std::vector<Tensor<T>> second_;  ///< v / u / s, or the Adadelta update accumulator
};

/// Largest L2 norm over the slices selected by `axis`, accumulated in double.
template <typename T>
double max_slice_norm(const Tensor<T>& kernel, NormAxis axis);

/// Rescales every slice whose L2 norm exceeds `bound` to norm `bound`.
template <typename T>
void apply_max_norm_inplace(Tensor<T>& kernel, double bound, NormAxis axis);

template <typename T>
Tensor<T> apply_max_norm(Tensor<T> kernel, double bound, NormAxis axis = NormAxis::Columns) {
    apply_max_norm_inplace(kernel, bound, axis);
    return kernel;
}

}  // namespace erpnet
