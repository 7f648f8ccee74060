#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "declust/augment.hpp"
#include "declust/clustering.hpp"
#include "declust/contrastive.hpp"
#include "declust/data.hpp"
#include "declust/encoder.hpp"

namespace declust {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-6;
    double eps = 1e-8;
};

/// Bias-corrected Adam with decoupled weight decay: parameters shrink by
/// lr * wd before the moment update touches them. Rejects non-finite
/// gradients with the offending parameter's name.
class Adam {
public:
    Adam(const AdamConfig& cfg, const std::vector<Tensor>& params);

    void step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads,
              const std::vector<std::string>& names, const std::vector<bool>& decay);

    const AdamConfig& config() const { return cfg_; }
    const std::vector<Tensor>& m() const { return m_; }
    const std::vector<Tensor>& v() const { return v_; }
    long t() const { return t_; }
    void restore(std::vector<Tensor> m, std::vector<Tensor> v, long t);

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    long t_ = 0;
};

enum class TargetRefresh { kPerStep, kPerEpoch };

struct TrainConfig {
    double gamma = 5.0;
    ContrastiveConfig contrastive;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    TargetRefresh target_refresh = TargetRefresh::kPerStep;
    std::size_t clusters = 0;  // 0: use the dataset's class count
    AdamConfig adam;
    std::size_t checkpoint_interval = 0;  // epochs between interval checkpoints; 0 = end only
    bool cluster_on_view1 = false;        // ablation: cluster view-1 embeddings instead of raw
    AugmentConfig image_aug;
    double vec_noise_sigma = 0.1;
    double vec_drop_p = 0.1;
    std::uint64_t config_hash = 0;

    void validate() const;
};

/// L_total = contrastive + gamma * clustering.
double mtl_loss(double contrastive, double clustering, double gamma);

struct StepResult {
    double contrastive = 0.0;
    double clustering = 0.0;
    double total = 0.0;
};

/// Everything the optimizer moves plus enough state to resume: encoder and
/// head parameters, batchnorm buffers, centroids, Adam moments, epoch, and
/// the hash of the config that produced it. Round-trips bit-exactly through
/// the tensor container.
struct Checkpoint {
    ParamStore params;
    ParamStore buffers;
    Tensor centroids;
    std::vector<Tensor> adam_m, adam_v;  // parallel to params, then centroids last
    long adam_t = 0;
    std::size_t epoch = 0;
    std::uint64_t config_hash = 0;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

/// One joint training transaction: two augmented views per sample feed the
/// contrastive branch, un-augmented samples feed the clustering branch, the
/// combined loss backpropagates once, and Adam updates encoder, head, and
/// centroids together (centroids are excluded from weight decay).
class Trainer {
public:
    Trainer(Encoder encoder, ClusterState clusters, const TrainConfig& cfg);

    /// fixed_target: per-epoch target rows for this batch (N x K) when the
    /// refresh mode is per-epoch; null recomputes the target from the
    /// batch's detached soft assignments.
    StepResult step(const std::vector<const Tensor*>& batch, std::uint64_t step_seed,
                    const Tensor* fixed_target = nullptr);

    /// Same forward computation with frozen parameters; no update.
    StepResult evaluate_batch(const std::vector<const Tensor*>& batch, std::uint64_t step_seed,
                              const Tensor* fixed_target = nullptr) const;

    Encoder& encoder() { return encoder_; }
    const Encoder& encoder() const { return encoder_; }
    ClusterState& clusters() { return clusters_; }
    const ClusterState& clusters() const { return clusters_; }
    Adam& adam() { return adam_; }
    const Adam& adam() const { return adam_; }

    Checkpoint make_checkpoint(std::size_t epoch) const;
    /// Seed layout for view augmentation and dropout masks, shared with the
    /// compositional tests: stream = derive_seed(step_seed, sample_index, tag)
    /// with tags 1/2 for the two augmented views, 3/4 for their dropout
    /// masks, 5 for the clustering branch's masks.
    static std::uint64_t stream_seed(std::uint64_t step_seed, std::size_t index, int tag);

    Tensor augment_sample(const Tensor& sample, std::uint64_t seed) const;

private:
    struct ForwardNodes {
        Graph graph;
        ParamNodes params;
        NodeId centroids;
        NodeId contrastive, clustering, total;
        std::vector<Encoder::BnHook> hooks;
    };
    ForwardNodes forward(const std::vector<const Tensor*>& batch, std::uint64_t step_seed,
                         const Tensor* fixed_target) const;

    Encoder encoder_;
    ClusterState clusters_;
    TrainConfig cfg_;
    Adam adam_;
};

struct EpochRow {
    std::size_t epoch;
    double contrastive, clustering, total, wall_seconds;
};

struct FitResult {
    Checkpoint checkpoint;
    std::vector<EpochRow> rows;
};

/// "epoch,contrastive_loss,clustering_loss,total_loss,wall_seconds" rows.
std::string loss_csv(const std::vector<EpochRow>& rows);

/// K-means initialization on initial eval-mode embeddings, then the seeded
/// epoch loop of shuffled training steps. on_interval fires every
/// checkpoint_interval epochs when that is non-zero.
FitResult fit(const Dataset& ds, Encoder encoder, const TrainConfig& cfg,
              const std::function<void(const Checkpoint&, std::size_t)>& on_interval = {});

}  // namespace declust
