#pragma once

#include <cstdint>

#include "declust/autodiff.hpp"
#include "declust/tensor.hpp"

namespace declust {

/// K centroids plus the Student-t degree of freedom (1 throughout training;
/// configurable for tests).
struct ClusterState {
    Tensor centroids;  // K x d
    double alpha = 1.0;

    std::size_t clusters() const { return centroids.rank() == 2 ? centroids.shape[0] : 0; }
    void validate() const;
};

/// Lloyd's algorithm with k-means++ seeding; at most 300 iterations or until
/// the largest centroid shift drops below 1e-6. An emptied cluster is
/// re-seeded at the point farthest from its assigned centroid. The returned
/// centroids are sorted lexicographically so the result is a deterministic
/// function of (embeddings, k, seed).
ClusterState kmeans_init(const Tensor& embeddings, std::size_t k, std::uint64_t seed);

/// Student-t soft assignments (N x K):
/// q_ij = (1 + |z_i - mu_j|^2 / alpha)^(-(alpha+1)/2), row-normalized.
Tensor soft_assign(const Tensor& embeddings, const ClusterState& state);

/// Differentiable version; embeddings and centroids are graph nodes.
NodeId soft_assign_node(Graph& g, NodeId embeddings, NodeId centroids, double alpha);

/// Sharpened, frequency-normalized target: p_ij = (q_ij^2 / u_j) / sum_l,
/// with u_j the column sums of Q. Treated as a constant during training (no
/// gradient flows through it). Rejects empty clusters (u_j = 0).
Tensor target_distribution(const Tensor& q);

/// KL(P || Q) = sum_ij p_ij log(p_ij / q_ij), with 0 log(0/q) := 0.
/// Rejects q_ij = 0 where p_ij > 0.
double kl_loss(const Tensor& p, const Tensor& q);

/// Differentiable in Q's upstream inputs; P enters as a constant.
NodeId kl_loss_node(Graph& g, const Tensor& p, NodeId q);

}  // namespace declust
