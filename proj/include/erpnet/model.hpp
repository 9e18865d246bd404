#pragma once

#include "erpnet/layers.hpp"
#include "erpnet/model_config.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace erpnet {

struct TraceEntry {
    int block = 0;  ///< 1, 2 or 3
    std::string layer;
    Dims output;  ///< per-sample output extents
};

/// Symbolic per-layer output shapes for a configuration, without building weights.
std::vector<TraceEntry> shape_trace(const ModelConfig& cfg);

// Fixed layer chain assembled from a ModelConfig. Move-only; the model owns
// its layers exclusively.
template <typename T>
class Model {
  public:
    static Model build(const ModelConfig& cfg, std::uint64_t seed);

    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    /// batch (N,1,C,T) or (N,C,T) -> class probabilities (N, n_classes).
    Tensor<T> forward(const Tensor<T>& batch, Mode mode);

    /// Backpropagates a gradient taken with respect to the pre-softmax
    /// logits through the whole chain (softmax layer skipped).
    void backward_from_logits(const Tensor<T>& grad_logits);
    /// Backpropagates a gradient with respect to the output probabilities.
    void backward(const Tensor<T>& grad_probs);

    std::vector<Param<T>*> params();
    /// Trainable values followed by running statistics, in layer order.
    std::vector<Tensor<T>*> state();
    std::vector<Tensor<T>> snapshot();
    void restore(const std::vector<Tensor<T>>& snapshot);

    const ModelConfig& config() const noexcept { return config_; }
    const std::vector<LayerPtr<T>>& layers() const noexcept { return layers_; }
    std::vector<int> blocks() const { return blocks_; }

    std::size_t count_layers(LayerKind kind) const;

  private:
    Model() = default;
    void add(int block, LayerPtr<T> layer);

    ModelConfig config_;
    std::vector<LayerPtr<T>> layers_;
    std::vector<int> blocks_;
};

/// Trainable parameters (batch-norm gamma/beta included, running stats excluded).
template <typename T>
std::size_t param_count(Model<T>& model);

// Checkpoint ("CNW1"): magic, u32 config length, config JSON (UTF-8), u64
// FNV-1a hash of the JSON bytes, then every state tensor of the model in
// layer order as little-endian float32.
void save_checkpoint(Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace erpnet
