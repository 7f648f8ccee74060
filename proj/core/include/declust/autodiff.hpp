#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "declust/tensor.hpp"

namespace declust {

using NodeId = std::size_t;

enum class OpKind : std::uint8_t {
    kLeaf,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kMatMul,
    kExp,
    kLog,
    kPowScalar,
    kPow,
    kSum,
    kMean,
    kMaxScalar,
    kGelu,
    kBatchNorm,
    kDropout,
    kDepthwiseConv,
    kPointwiseConv,
    kReshape,
    kTranspose,
    kPatchExtract,
};

const char* op_name(OpKind op);

/// Gradients for every node of a graph, zero tensors where the loss does not
/// reach.
struct GradMap {
    std::vector<Tensor> grads;
    const Tensor& at(NodeId id) const { return grads.at(id); }
};

/// Reverse-mode tape over dense tensors. Nodes are appended in construction
/// order (so they are always topologically sorted), values are computed
/// eagerly and never mutated, and backward replays the chain rule over the
/// recorded trace. Single-threaded per graph; recorded values may be read
/// concurrently.
class Graph {
public:
    /// Leaf holding `value`; participates in gradients iff value.requires_grad.
    NodeId input(Tensor value);
    /// Leaf that never requires gradients.
    NodeId constant(Tensor value);
    NodeId constant(double v);

    // Elementwise arithmetic. Operands must have identical shapes, except
    // that either side may be a single-element tensor, which broadcasts.
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId add_scalar(NodeId a, double v) { return add(a, constant(v)); }
    NodeId mul_scalar(NodeId a, double v) { return mul(a, constant(v)); }

    /// 2-D matrix product (m x k) . (k x n) -> (m x n).
    NodeId matmul(NodeId a, NodeId b);

    NodeId exp(NodeId a);
    /// Rejects non-positive inputs.
    NodeId log(NodeId a);
    /// Elementwise a^p for a fixed exponent.
    NodeId pow(NodeId a, double p);
    /// Elementwise a^b with a node exponent (scalar b broadcasts); requires a > 0.
    NodeId pow(NodeId a, NodeId b);
    /// Reduction to a single-element tensor.
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    /// Elementwise max(a, c). At an exact tie the gradient routes to the
    /// pass-through side (mask a >= c).
    NodeId max_with(NodeId a, double c);
    /// tanh-form approximation 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715 x^3))).
    NodeId gelu(NodeId a);

    /// Per-channel batchnorm in training mode: channel = dim 0, statistics
    /// over all remaining dims of this tensor, epsilon added to the biased
    /// variance. The computed batch mean/var are recorded on the node (see
    /// batch_mean/batch_var) so the caller can fold them into running
    /// averages outside the graph.
    NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, double eps);
    /// Eval mode: normalizes with the provided running statistics.
    NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, NodeId running_mean,
                     NodeId running_var, double eps);

    /// Inverted dropout with an explicit 0/1 mask: x * mask / keep_prob.
    NodeId dropout(NodeId x, NodeId mask, double keep_prob);

    /// x: (C,H,W), w: (C,k,k) with odd k, b: (C). Same padding, stride 1.
    NodeId depthwise_conv(NodeId x, NodeId w, NodeId b);
    /// x: (Cin,H,W), w: (Cout,Cin), b: (Cout) -> (Cout,H,W).
    NodeId pointwise_conv(NodeId x, NodeId w, NodeId b);

    NodeId reshape(NodeId a, std::vector<std::size_t> shape);
    NodeId transpose(NodeId a);
    /// (C,H,W) -> (C*p*p, S) with S = (H/p)*(W/p); column s lists patch s in
    /// (channel, dy, dx) order. Used for patch embedding.
    NodeId patch_extract(NodeId a, std::size_t p);

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Batch statistics recorded by a training-mode batchnorm node.
    const Tensor& batch_mean(NodeId id) const;
    const Tensor& batch_var(NodeId id) const;

    /// Reverse-mode sweep from a single-element loss node.
    GradMap backward(NodeId loss) const;

    /// Recomputes every non-leaf value from the recorded trace and compares
    /// bit-for-bit against the stored values.
    bool replay_matches() const;

private:
    struct Node {
        OpKind op = OpKind::kLeaf;
        std::array<NodeId, 5> in{};
        std::uint8_t n_in = 0;
        bool requires_grad = false;
        bool flag = false;     // batchnorm: training mode
        double attr = 0.0;     // pow exponent / clamp bound / keep_prob / bn eps
        std::size_t iattr = 0; // patch size
        Tensor value;
        Tensor saved0, saved1; // batchnorm: batch mean / biased batch var
    };

    NodeId push(Node n);
    const Node& node(NodeId id) const;
    static void eval_node(Node& n, const std::vector<Node>& nodes);

    std::vector<Node> nodes_;
};

/// Stacks equal-length rank-1 rows (or 1 x d matrices) into an (n x d)
/// matrix using basis-vector matmuls, keeping gradients flowing to each row.
NodeId stack_rows(Graph& g, const std::vector<NodeId>& rows);

}  // namespace declust
