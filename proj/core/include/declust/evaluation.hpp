#pragma once

#include <cstdint>
#include <vector>

#include "declust/tensor.hpp"
#include "declust/training.hpp"

namespace declust {

struct ProbeConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 512;  // effectively min(512, N)
    double label_fraction = 1.0;
    AdamConfig adam;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Metrics {
    double top1 = 0.0;
    double f1 = 0.0;  // binary F1 (minority class) when C = 2, macro F1 otherwise
    std::vector<double> per_class_f1;
};

/// Exactly round(fraction * N) indices, stratified so each class's share is
/// preserved within one sample; deterministic given seed.
std::vector<std::size_t> stratified_subset(const std::vector<int>& labels, double fraction,
                                           std::uint64_t seed);

/// Single linear layer on frozen embeddings, trained with softmax
/// cross-entropy; returns test metrics. Rejects a single-class training set.
Metrics linear_probe(const Tensor& train_embeddings, const std::vector<int>& train_labels,
                     const Tensor& test_embeddings, const std::vector<int>& test_labels,
                     int class_count, const ProbeConfig& cfg);

/// Euclidean k-nearest majority vote with k' = min(k, N_train). Vote ties
/// break toward the class with the smaller summed neighbor distance, then
/// the lower class index.
std::vector<int> knn_predict(const Tensor& train_embeddings,
                             const std::vector<int>& train_labels,
                             const Tensor& query_embeddings, std::size_t k = 20);

/// top1 plus F1: binary F1 on the minority class when class_count == 2
/// (matching the imbalance failure mode where an all-majority predictor
/// scores 0), macro-averaged per-class F1 otherwise; an absent class
/// contributes F1 = 0.
Metrics compute_metrics(const std::vector<int>& predicted, const std::vector<int>& truth,
                        int class_count);

/// Pair-counting adjusted Rand index in [-1, 1].
double adjusted_rand_index(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

}  // namespace declust
