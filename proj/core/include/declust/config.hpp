#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "declust/augment.hpp"
#include "declust/contrastive.hpp"
#include "declust/data.hpp"
#include "declust/encoder.hpp"
#include "declust/evaluation.hpp"
#include "declust/training.hpp"

namespace declust {

struct DataConfig {
    std::string kind = "blobs";  // "blobs" | "cifar"
    std::string name;            // label for metrics rows; derived from kind when empty
    int classes = 2;
    std::size_t dim = 8;
    double separation = 6.0;
    double sigma = 0.5;
    std::size_t max_per_class = 400;
    double imbalance_ratio = 20.0;
    double test_fraction = 0.5;
    std::string cifar_train;
    std::string cifar_test;
    std::size_t cifar_limit = 0;  // 0: all records
};

struct EncoderConfigSection {
    std::string kind = "mlp";  // "mlp" | "mixer"
    std::vector<std::size_t> mlp_hidden = {64, 32};
    std::size_t mlp_head_hidden = 64;
    std::size_t mlp_embed_dim = 16;
    std::size_t mixer_patch_size = 2;
    std::size_t mixer_depth = 4;
    std::size_t mixer_channels = 64;
    std::size_t mixer_dw_kernel = 7;
    double mixer_dropout_rate = 0.04;
    std::size_t mixer_head_hidden = 512;
    std::size_t mixer_embed_dim = 128;
};

struct TrainSection {
    double gamma = 5.0;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::string target_refresh = "per-step";  // "per-step" | "per-epoch"
    std::size_t clusters = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-6;
    std::size_t checkpoint_interval = 0;
    bool cluster_on_view1 = false;
};

struct AugmentSection {
    AugmentConfig image;
    double vec_noise_sigma = 0.1;
    double vec_drop_p = 0.1;
};

struct ProbeSection {
    std::size_t epochs = 100;
    std::size_t batch_size = 512;
    std::size_t knn_k = 20;
};

/// The resolved experiment description: everything a run needs, loadable
/// from a JSON file, overridable via dotted key=value assignments. Unknown
/// keys are rejected with their path; all defaults are the published
/// training values.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    DataConfig data;
    EncoderConfigSection encoder;
    ContrastiveConfig contrastive;
    TrainSection train;
    AugmentSection augment;
    ProbeSection probe;

    static ExperimentConfig defaults() { return ExperimentConfig{}; }
    /// Parses JSON text, applying dotted overrides ("train.gamma=1") on top.
    static ExperimentConfig from_json_text(const std::string& text,
                                           const std::vector<std::string>& overrides = {});
    /// Canonical serialization (sorted keys, 2-space indent); parse of the
    /// output reproduces the config exactly.
    std::string to_json_text() const;
    /// FNV-1a over the canonical serialization.
    std::uint64_t hash() const;

    void validate() const;
    std::string dataset_name() const;

    TrainConfig train_config() const;
    ProbeConfig probe_config(double label_fraction) const;
    Encoder build_encoder() const;
    /// (train, test) pair: seeded blobs with long-tailed counts, or parsed
    /// CIFAR-10 batches.
    std::pair<Dataset, Dataset> build_datasets() const;
};

}  // namespace declust
