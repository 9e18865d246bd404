#include "erpnet/model.hpp"

#include "erpnet/binary_io.hpp"

#include <json.hpp>

#include <string>

namespace erpnet {

template <typename T>
void Model<T>::add(int block, LayerPtr<T> layer) {
    layers_.push_back(std::move(layer));
    blocks_.push_back(block);
}

template <typename T>
Model<T> Model<T>::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.config_ = cfg;
    const std::size_t c = cfg.channels;
    const std::size_t time = cfg.samples;
    const std::size_t f1d = cfg.f1 * cfg.d;
    const std::size_t flat = cfg.f2 * (time / (kBlock1PoolWidth * kBlock2PoolWidth));
    const bool cn = cfg.arch == Arch::CnEegnet;
    std::uint64_t dropout_index = 0;
    auto dropout = [&](bool spatial) {
        return std::make_unique<DropoutLayer<T>>(cfg.dropout_rate, spatial,
                                                 derive_seed(seed, 1000 + dropout_index++));
    };
    auto act = [&] { return std::make_unique<ActivationLayer<T>>(cfg.activation); };

    // block 1: temporal filters, spatial (depthwise) filters, pool
    m.add(1, std::make_unique<ReshapeLayer<T>>());
    m.add(1, std::make_unique<TemporalConvLayer<T>>(1, cfg.f1, cfg.kernel_length));
    m.add(1, std::make_unique<BatchNormLayer<T>>(cfg.f1));
    if (cn) m.add(1, act());
    m.add(1, std::make_unique<DepthwiseConvLayer<T>>(cfg.f1, c, cfg.d, kDepthwiseMaxNorm));
    m.add(1, std::make_unique<BatchNormLayer<T>>(f1d));
    m.add(1, act());
    m.add(1, std::make_unique<AvgPoolLayer<T>>(kBlock1PoolWidth));
    if (!cn) m.add(1, dropout(false));

    // block 2: separable convolution(s), pool
    if (cn) {
        m.add(2, std::make_unique<SeparableConvLayer<T>>(f1d, cfg.f2, kSeparableKernelLength));
        m.add(2, dropout(true));
        m.add(2, std::make_unique<SeparableConvLayer<T>>(cfg.f2, cfg.f2, kSeparableKernelLength));
    } else {
        m.add(2, std::make_unique<SeparableConvLayer<T>>(f1d, cfg.f2, kSeparableKernelLength));
    }
    m.add(2, std::make_unique<BatchNormLayer<T>>(cfg.f2));
    m.add(2, act());
    m.add(2, std::make_unique<AvgPoolLayer<T>>(kBlock2PoolWidth));
    if (!cn) m.add(2, dropout(false));

    // block 3: classifier
    m.add(3, std::make_unique<FlattenLayer<T>>());
    m.add(3, std::make_unique<DenseLayer<T>>(flat, cfg.n_classes, cfg.norm_rate));
    m.add(3, std::make_unique<SoftmaxLayer<T>>());

    // The raw input never needs a gradient.
    m.layers_[0]->set_needs_input_grad(false);
    m.layers_[1]->set_needs_input_grad(false);

    Rng rng(seed);
    for (auto& layer : m.layers_) {
        switch (layer->kind()) {
            case LayerKind::TemporalConv: {
                auto& k = static_cast<TemporalConvLayer<T>&>(*layer).kernel().value;
                const std::size_t rf = k.dim(3);
                glorot_uniform(k, k.dim(1) * rf, k.dim(0) * rf, rng);
                break;
            }
            case LayerKind::DepthwiseConv: {
                auto& k = static_cast<DepthwiseConvLayer<T>&>(*layer).kernel().value;
                glorot_uniform(k, c * cfg.f1, c * cfg.d, rng);
                break;
            }
            case LayerKind::SeparableConv: {
                auto& sep = static_cast<SeparableConvLayer<T>&>(*layer);
                auto& dk = sep.depth_kernel().value;
                auto& pk = sep.point_kernel().value;
                glorot_uniform(dk, dk.dim(0) * dk.dim(2), dk.dim(2), rng);
                glorot_uniform(pk, pk.dim(1), pk.dim(0), rng);
                break;
            }
            case LayerKind::Dense: {
                auto& w = static_cast<DenseLayer<T>&>(*layer).weights().value;
                glorot_uniform(w, w.dim(0), w.dim(1), rng);
                break;
            }
            default: break;
        }
    }
    return m;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& batch, Mode mode) {
    const std::size_t c = config_.channels, time = config_.samples;
    const bool ok3 = batch.rank() == 3 && batch.dim(1) == c && batch.dim(2) == time;
    const bool ok4 = batch.rank() == 4 && batch.dim(1) == 1 && batch.dim(2) == c &&
                     batch.dim(3) == time;
    if (!ok3 && !ok4) {
        throw ShapeError("layer 0 (reshape): batch " + to_string(batch.dims()) +
                         " does not match model input (N,1," + std::to_string(c) + "," +
                         std::to_string(time) + ")");
    }
    Tensor<T> x = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        try {
            x = layers_[i]->forward(x, mode);
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + " (" + layers_[i]->name() +
                             "): " + e.what());
        }
    }
    return x;
}

template <typename T>
void Model<T>::backward_from_logits(const Tensor<T>& grad_logits) {
    Tensor<T> g = grad_logits;
    // layers_.back() is the softmax; the logit gradient enters below it
    for (std::size_t i = layers_.size() - 1; i-- > 0;) {
        g = layers_[i]->backward(g);
        if (!layers_[i]->needs_input_grad()) break;
    }
}

template <typename T>
void Model<T>::backward(const Tensor<T>& grad_probs) {
    backward_from_logits(layers_.back()->backward(grad_probs));
}

template <typename T>
std::vector<Param<T>*> Model<T>::params() {
    std::vector<Param<T>*> out;
    for (auto& layer : layers_) {
        for (auto* p : layer->params()) out.push_back(p);
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>*> Model<T>::state() {
    std::vector<Tensor<T>*> out;
    for (auto* p : params()) out.push_back(&p->value);
    for (auto& layer : layers_) {
        for (auto* b : layer->buffers()) out.push_back(b);
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::snapshot() {
    std::vector<Tensor<T>> out;
    for (auto* t : state()) out.push_back(*t);
    return out;
}

template <typename T>
void Model<T>::restore(const std::vector<Tensor<T>>& snap) {
    auto targets = state();
    if (targets.size() != snap.size()) {
        throw UsageError("restore: snapshot has " + std::to_string(snap.size()) +
                         " tensors, model has " + std::to_string(targets.size()));
    }
    for (std::size_t i = 0; i < snap.size(); ++i) {
        if (targets[i]->dims() != snap[i].dims()) {
            throw ShapeError("restore: tensor " + std::to_string(i) + " has dims " +
                             to_string(snap[i].dims()) + ", model expects " +
                             to_string(targets[i]->dims()));
        }
        *targets[i] = snap[i];
    }
}

template <typename T>
std::size_t Model<T>::count_layers(LayerKind kind) const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer->kind() == kind ? 1 : 0;
    return n;
}

template <typename T>
std::size_t param_count(Model<T>& model) {
    std::size_t total = 0;
    for (auto* p : model.params()) total += p->value.size();
    return total;
}

std::vector<TraceEntry> shape_trace(const ModelConfig& cfg) {
    auto model = Model<float>::build(cfg, 0);
    std::vector<TraceEntry> trace;
    Dims dims{cfg.channels, cfg.samples};
    const auto blocks = model.blocks();
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        const auto& layer = *model.layers()[i];
        dims = layer.output_dims(dims);
        trace.push_back({blocks[i], layer.name(), dims});
    }
    return trace;
}

namespace {

constexpr std::string_view kCheckpointMagic = "CNW1";

}  // namespace

void save_checkpoint(Model<float>& model, const std::filesystem::path& path) {
    const std::string config_json = nlohmann::json(model.config()).dump();
    ByteWriter w;
    w.raw(kCheckpointMagic);
    w.u32(static_cast<std::uint32_t>(config_json.size()));
    w.raw(config_json);
    w.u64(fnv1a64(config_json));
    for (auto* t : model.state()) {
        for (float v : t->values()) w.f32(v);
    }
    write_file_bytes(path, w.bytes());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    ByteReader r(bytes);
    if (r.remaining() < 4 || r.raw(4, "magic") != kCheckpointMagic) {
        throw FormatError("bad checkpoint magic, expected CNW1", 0);
    }
    const std::uint32_t len = r.u32("config length");
    const std::size_t json_offset = r.offset();
    const std::string config_json(r.raw(len, "config JSON"));
    const std::uint64_t hash = r.u64("config hash");
    if (hash != fnv1a64(config_json)) {
        throw FormatError("checkpoint config hash mismatch", json_offset);
    }
    ModelConfig cfg;
    try {
        cfg = nlohmann::json::parse(config_json).get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid checkpoint config JSON: ") + e.what(), json_offset);
    }
    auto model = Model<float>::build(cfg, 0);
    for (auto* t : model.state()) {
        for (auto& v : t->values()) v = r.f32("weights");
    }
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes after checkpoint weights", r.offset());
    }
    return model;
}

template class Model<float>;
template class Model<double>;
template std::size_t param_count(Model<float>&);
template std::size_t param_count(Model<double>&);

}  // namespace erpnet
