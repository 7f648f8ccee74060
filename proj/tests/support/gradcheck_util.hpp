#pragma once

#include <functional>
#include <vector>

#include <declust/autodiff.hpp>
#include <declust/grad_check.hpp>
#include <declust/rng.hpp>
#include <declust/tensor.hpp>

namespace testutil {

using declust::Graph;
using declust::NodeId;
using declust::Tensor;

/// Checks the analytic gradient of a graph-building function against central
/// differences for every input tensor. `build` receives the current leaf
/// values and must return (graph, loss node, leaf ids in input order).
struct BuildResult {
    Graph graph;
    NodeId loss;
    std::vector<NodeId> leaves;
};

inline double graph_gradcheck(
    const std::function<BuildResult(const std::vector<Tensor>&)>& build,
    std::vector<Tensor> inputs, double h = 1e-4) {
    BuildResult base = build(inputs);
    declust::GradMap gm = base.graph.backward(base.loss);

    double worst = 0.0;
    for (std::size_t which = 0; which < inputs.size(); ++which) {
        auto f = [&](const Tensor& probe) {
            std::vector<Tensor> moved = inputs;
            moved[which] = probe;
            BuildResult r = build(moved);
            return r.graph.value(r.loss).data[0];
        };
        Tensor numeric = declust::finite_diff_grad(f, inputs[which], h);
        double err = declust::rel_error(gm.at(base.leaves[which]), numeric);
        worst = std::max(worst, err);
    }
    return worst;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, declust::Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace testutil
