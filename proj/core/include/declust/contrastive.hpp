#pragma once

#include <span>

#include "declust/autodiff.hpp"
#include "declust/tensor.hpp"

namespace declust {

/// Temperature, positive-class prior, and the smoothing exponent that
/// controls negative-sample emphasis.
struct ContrastiveConfig {
    double tau = 0.5;
    double tau_plus = 0.1;
    double lambda = 2.0;

    void validate() const;
};

/// Paired augmented-view representations: rows i of z1 and z2 are the
/// positive pair of sample i.
struct ViewBatch {
    Tensor z1;  // N x d
    Tensor z2;  // N x d

    std::size_t size() const { return z1.shape.empty() ? 0 : z1.shape[0]; }
    std::size_t dim() const { return z1.rank() == 2 ? z1.shape[1] : 0; }
    void validate() const;
};

/// (a . b) / (|a| |b|). Rejects zero-norm inputs.
double cosine_sim(std::span<const double> a, std::span<const double> b);

/// Mean over the 2N-2 other-sample representations (both views) of
/// exp(cos(anchor, z) / tau). view is 1 or 2.
double neg_mean(const ViewBatch& batch, std::size_t i, int view, const ContrastiveConfig& cfg);

/// Sum over both anchor views of
/// max{ exp(-1/tau), (S - tau+ * exp(pos_sim/tau)) / (1 - tau+) }.
double debiased_distance(const ViewBatch& batch, std::size_t i, const ContrastiveConfig& cfg);

/// Per-sample smoothed debiased loss
/// -2 log[ exp(pos/tau) / (exp(pos/tau) + (1 + D_i)^lambda) ].
double sample_loss(const ViewBatch& batch, std::size_t i, const ContrastiveConfig& cfg);

/// (1 / 2N) * sum_i sample_loss(i).
double batch_loss(const ViewBatch& batch, const ContrastiveConfig& cfg);

/// Differentiable graph builders. z1 and z2 are (N x d) nodes; the returned
/// node is the single-element loss.
NodeId batch_loss_node(Graph& g, NodeId z1, NodeId z2, const ContrastiveConfig& cfg);
NodeId sample_loss_node(Graph& g, NodeId z1, NodeId z2, std::size_t i,
                        const ContrastiveConfig& cfg);

/// Independent re-implementation of batch_loss with explicit scalar loops
/// and no shared code with the graph path; the agreement oracle.
double loss_oracle_scalar(const ViewBatch& batch, const ContrastiveConfig& cfg);

}  // namespace declust
