#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "declust/autodiff.hpp"
#include "declust/tensor.hpp"

namespace declust {

enum class Mode { kTrain, kEval };

/// Patch-mixer geometry. Paper-scale values are patch 2, depth 8, 256
/// channels, kernel 7; the desk defaults shrink depth/width but keep the
/// geometry so structure-sensitive tests exercise the real block.
struct MixerConfig {
    std::size_t in_channels = 3;
    std::size_t image_size = 32;  // square side
    std::size_t patch_size = 2;
    std::size_t depth = 4;
    std::size_t channels = 64;
    std::size_t dw_kernel = 7;
    double dropout_rate = 0.04;
    std::size_t head_hidden = 512;
    std::size_t embed_dim = 128;

    void validate() const;
    std::size_t embedding_dim() const { return channels; }
    /// patch embed: ch*(C*p^2) + ch
    /// per block:   ch*k^2 + ch  (depthwise) + ch^2 + ch (pointwise) + 4*ch (two batchnorms)
    /// head:        ch*hh + hh + hh*ed + ed
    std::size_t param_count() const;
};

/// Vector encoder: GELU-activated hidden layers; the last hidden output is
/// the embedding.
struct MlpConfig {
    std::size_t input_dim = 8;
    std::vector<std::size_t> hidden = {64, 32};
    std::size_t head_hidden = 64;
    std::size_t embed_dim = 16;

    void validate() const;
    std::size_t embedding_dim() const { return hidden.back(); }
    std::size_t param_count() const;
};

/// Named tensors in a fixed order; the unit Adam and checkpoints operate on.
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Tensor> values;

    void add(std::string name, Tensor t);
    std::size_t size() const { return values.size(); }
    std::size_t index_of(const std::string& name) const;
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
};

/// Per-graph leaf ids for every entry of a ParamStore, in store order.
struct ParamNodes {
    std::vector<NodeId> ids;
};
ParamNodes bind_params(Graph& g, const ParamStore& store, bool trainable = true);

/// Pre-projection embedding z = f(x): what the clustering branch consumes.
struct EmbeddingNode {
    NodeId id;
};
/// Projected representation h(f(x)): what the contrastive loss consumes.
/// Distinct types keep the two branches from being cross-wired.
struct RepresentationNode {
    NodeId id;
};

class Encoder {
public:
    static Encoder make_mlp(const MlpConfig& cfg, std::uint64_t seed);
    static Encoder make_mixer(const MixerConfig& cfg, std::uint64_t seed);

    bool is_image() const { return mixer_.has_value(); }
    std::size_t embedding_dim() const;
    std::size_t projection_dim() const;
    double dropout_rate() const { return mixer_ ? mixer_->dropout_rate : 0.0; }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    ParamStore& buffers() { return buffers_; }
    const ParamStore& buffers() const { return buffers_; }

    const std::optional<MixerConfig>& mixer_config() const { return mixer_; }
    const std::optional<MlpConfig>& mlp_config() const { return mlp_; }

    /// Training-mode batchnorm nodes recorded during a forward pass, mapped
    /// to the running-stat buffer base name ("...bn1" etc.).
    struct BnHook {
        std::string name;
        NodeId node;
    };

    EmbeddingNode encode(Graph& g, const ParamNodes& p, const Tensor& input, Mode mode,
                         std::uint64_t mask_seed, std::vector<BnHook>* hooks = nullptr) const;
    RepresentationNode project(Graph& g, const ParamNodes& p, EmbeddingNode z) const;

    /// One mixing block on a (C,H,W) node. Exposed for direct testing.
    NodeId mixer_block(Graph& g, const ParamNodes& p, NodeId x, std::size_t block, Mode mode,
                       std::uint64_t mask_seed, std::vector<BnHook>* hooks = nullptr) const;

    /// Eval-mode conveniences (no dropout, running statistics).
    Tensor encode_value(const Tensor& input) const;
    Tensor project_value(const Tensor& embedding) const;
    /// Eval-mode embeddings for a list of samples, stacked N x d.
    Tensor embed_all(const std::vector<Tensor>& samples) const;

    /// Folds the batch statistics recorded by the hooks into the running
    /// buffers: r <- (1 - momentum) r + momentum * batch.
    void update_running_stats(const Graph& g, const std::vector<BnHook>& hooks,
                              double momentum = 0.1);

private:
    Encoder() = default;
    NodeId param_node(const ParamNodes& p, const std::string& name) const;

    std::optional<MixerConfig> mixer_;
    std::optional<MlpConfig> mlp_;
    ParamStore params_;
    ParamStore buffers_;
};

}  // namespace declust
