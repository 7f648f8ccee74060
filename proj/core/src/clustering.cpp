#include "declust/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "declust/rng.hpp"

namespace declust {

void ClusterState::validate() const {
    if (centroids.rank() != 2 || clusters() < 2)
        throw std::invalid_argument("ClusterState: centroids must be K x d with K >= 2");
    if (!(alpha > 0.0)) throw std::invalid_argument("ClusterState: alpha must be > 0");
    std::size_t k = clusters(), d = centroids.shape[1];
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
            bool same = true;
            for (std::size_t j = 0; j < d && same; ++j)
                same = centroids.at(a, j) == centroids.at(b, j);
            if (same)
                throw std::invalid_argument("ClusterState: centroids " + std::to_string(a) +
                                            " and " + std::to_string(b) + " coincide");
        }
}

namespace {

double sq_dist(const Tensor& a, std::size_t ia, const Tensor& b, std::size_t ib, std::size_t d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double diff = a.data[ia * d + j] - b.data[ib * d + j];
        acc += diff * diff;
    }
    return acc;
}

}  // namespace

ClusterState kmeans_init(const Tensor& embeddings, std::size_t k, std::uint64_t seed) {
    if (embeddings.rank() != 2)
        throw std::invalid_argument("kmeans_init: embeddings must be N x d");
    std::size_t n = embeddings.shape[0], d = embeddings.shape[1];
    if (k < 2) throw std::invalid_argument("kmeans_init: needs K >= 2");
    if (n < k)
        throw std::invalid_argument("kmeans_init: N=" + std::to_string(n) + " < K=" +
                                    std::to_string(k));

    Rng rng(seed);
    Tensor centroids({k, d});
    std::vector<bool> chosen(n, false);

    // k-means++ seeding
    std::size_t first = static_cast<std::size_t>(rng.below(n));
    chosen[first] = true;
    for (std::size_t j = 0; j < d; ++j) centroids.at(0, j) = embeddings.at(first, j);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            best[i] = std::min(best[i], sq_dist(embeddings, i, centroids, c - 1, d));
            total += chosen[i] ? 0.0 : best[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                acc += best[i];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        }
        if (pick == n) {  // duplicates or rounding: take the first unchosen point
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
        }
        chosen[pick] = true;
        for (std::size_t j = 0; j < d; ++j) centroids.at(c, j) = embeddings.at(pick, j);
    }

    // Lloyd iterations
    std::vector<std::size_t> assign(n);
    for (int iter = 0; iter < 300; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double bd = std::numeric_limits<double>::infinity();
            std::size_t bc = 0;
            for (std::size_t c = 0; c < k; ++c) {
                double dd = sq_dist(embeddings, i, centroids, c, d);
                if (dd < bd) {
                    bd = dd;
                    bc = c;
                }
            }
            assign[i] = bc;
        }
        Tensor next({k, d});
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            counts[assign[i]]++;
            for (std::size_t j = 0; j < d; ++j) next.at(assign[i], j) += embeddings.at(i, j);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // re-seed at the point farthest from its assigned centroid
                double far = -1.0;
                std::size_t fi = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    double dd = sq_dist(embeddings, i, centroids, assign[i], d);
                    if (dd > far) {
                        far = dd;
                        fi = i;
                    }
                }
                for (std::size_t j = 0; j < d; ++j) next.at(c, j) = embeddings.at(fi, j);
            } else {
                for (std::size_t j = 0; j < d; ++j)
                    next.at(c, j) /= static_cast<double>(counts[c]);
            }
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            shift = std::max(shift, std::sqrt(sq_dist(next, c, centroids, c, d)));
        centroids = std::move(next);
        if (shift < 1e-6) break;
    }

    // canonical order: lexicographic by coordinates
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t j = 0; j < d; ++j) {
            if (centroids.at(a, j) != centroids.at(b, j))
                return centroids.at(a, j) < centroids.at(b, j);
        }
        return a < b;
    });
    ClusterState state;
    state.centroids = Tensor({k, d});
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < d; ++j) state.centroids.at(c, j) = centroids.at(order[c], j);
    state.validate();
    return state;
}

Tensor soft_assign(const Tensor& embeddings, const ClusterState& state) {
    state.validate();
    if (embeddings.rank() != 2 || embeddings.shape[1] != state.centroids.shape[1])
        throw std::invalid_argument("soft_assign: embeddings " + shape_str(embeddings.shape) +
                                    " incompatible with centroids " +
                                    shape_str(state.centroids.shape));
    std::size_t n = embeddings.shape[0], k = state.clusters(), d = embeddings.shape[1];
    double expo = -(state.alpha + 1.0) / 2.0;
    Tensor q({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            double dd = sq_dist(embeddings, i, state.centroids, c, d);
            double v = std::pow(1.0 + dd / state.alpha, expo);
            q.at(i, c) = v;
            row_sum += v;
        }
        for (std::size_t c = 0; c < k; ++c) q.at(i, c) /= row_sum;
    }
    return q;
}

NodeId soft_assign_node(Graph& g, NodeId embeddings, NodeId centroids, double alpha) {
    const Tensor& e = g.value(embeddings);
    const Tensor& m = g.value(centroids);
    if (e.rank() != 2 || m.rank() != 2 || e.shape[1] != m.shape[1])
        throw std::invalid_argument("soft_assign: embeddings " + shape_str(e.shape) +
                                    " incompatible with centroids " + shape_str(m.shape));
    if (!(alpha > 0.0)) throw std::invalid_argument("soft_assign: alpha must be > 0");
    std::size_t n = e.shape[0], k = m.shape[0], d = e.shape[1];

    NodeId gram = g.matmul(embeddings, g.transpose(centroids));  // N x K
    NodeId ones_d = g.constant(Tensor::full({d, 1}, 1.0));
    NodeId e_sq = g.matmul(g.mul(embeddings, embeddings), ones_d);  // N x 1
    NodeId m_sq = g.matmul(g.mul(centroids, centroids), ones_d);    // K x 1
    NodeId e_wide = g.matmul(e_sq, g.constant(Tensor::full({1, k}, 1.0)));
    NodeId m_wide = g.matmul(g.constant(Tensor::full({n, 1}, 1.0)), g.transpose(m_sq));
    NodeId dist2 = g.sub(g.add(e_wide, m_wide), g.mul_scalar(gram, 2.0));

    NodeId base = g.add_scalar(g.mul_scalar(dist2, 1.0 / alpha), 1.0);
    NodeId kernel = g.pow(base, -(alpha + 1.0) / 2.0);
    NodeId row_sums = g.matmul(kernel, g.constant(Tensor::full({k, 1}, 1.0)));
    NodeId wide = g.matmul(row_sums, g.constant(Tensor::full({1, k}, 1.0)));
    return g.div(kernel, wide);
}

Tensor target_distribution(const Tensor& q) {
    if (q.rank() != 2) throw std::invalid_argument("target_distribution: Q must be N x K");
    std::size_t n = q.shape[0], k = q.shape[1];
    std::vector<double> freq(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) freq[c] += q.at(i, c);
    for (std::size_t c = 0; c < k; ++c)
        if (freq[c] == 0.0)
            throw std::invalid_argument("target_distribution: empty cluster " + std::to_string(c));
    Tensor p({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            double v = q.at(i, c) * q.at(i, c) / freq[c];
            p.at(i, c) = v;
            row_sum += v;
        }
        for (std::size_t c = 0; c < k; ++c) p.at(i, c) /= row_sum;
    }
    return p;
}

double kl_loss(const Tensor& p, const Tensor& q) {
    if (!p.same_shape(q))
        throw std::invalid_argument("kl_loss: shape mismatch " + shape_str(p.shape) + " vs " +
                                    shape_str(q.shape));
    double acc = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        if (p.data[i] == 0.0) continue;
        if (q.data[i] == 0.0)
            throw std::invalid_argument("kl_loss: q is zero where p > 0 at flat index " +
                                        std::to_string(i));
        acc += p.data[i] * std::log(p.data[i] / q.data[i]);
    }
    return acc;
}

NodeId kl_loss_node(Graph& g, const Tensor& p, NodeId q) {
    if (!p.same_shape(g.value(q)))
        throw std::invalid_argument("kl_loss: shape mismatch " + shape_str(p.shape) + " vs " +
                                    shape_str(g.value(q).shape));
    double entropy_term = 0.0;  // sum p log p, constant in Q
    for (double v : p.data) {
        if (v < 0.0) throw std::invalid_argument("kl_loss: negative target entry");
        if (v > 0.0) entropy_term += v * std::log(v);
    }
    NodeId cross = g.sum(g.mul(g.constant(p), g.log(q)));
    return g.sub(g.constant(entropy_term), cross);
}

}  // namespace declust
