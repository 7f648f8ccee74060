#include "declust/contrastive.hpp"

#include <cmath>
#include <stdexcept>

namespace declust {

void ContrastiveConfig::validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("ContrastiveConfig: tau must be > 0");
    if (!(tau_plus >= 0.0 && tau_plus < 1.0))
        throw std::invalid_argument("ContrastiveConfig: tau_plus must be in [0, 1)");
    if (!(lambda >= 0.0)) throw std::invalid_argument("ContrastiveConfig: lambda must be >= 0");
}

void ViewBatch::validate() const {
    if (z1.rank() != 2 || z2.rank() != 2 || !z1.same_shape(z2))
        throw std::invalid_argument("ViewBatch: z1/z2 must be equal-shaped N x d matrices");
    if (size() < 2) throw std::invalid_argument("ViewBatch: needs N >= 2 samples");
    for (const Tensor* z : {&z1, &z2})
        for (std::size_t i = 0; i < size(); ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < dim(); ++j) sq += z->at(i, j) * z->at(i, j);
            if (sq == 0.0)
                throw std::invalid_argument("ViewBatch: zero-norm row " + std::to_string(i));
        }
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_sim: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_sim: zero-norm input");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

// Row-normalizes an (n x d) node to unit L2 rows.
NodeId normalize_rows(Graph& g, NodeId m) {
    std::size_t d = g.value(m).shape[1];
    NodeId sq = g.mul(m, m);
    NodeId row_sums = g.matmul(sq, g.constant(Tensor::full({d, 1}, 1.0)));
    NodeId norms = g.pow(row_sums, 0.5);
    NodeId wide = g.matmul(norms, g.constant(Tensor::full({1, d}, 1.0)));
    return g.div(m, wide);
}

// Selects rows [r0, r0+count) of an (n x d) node via a constant selector.
NodeId select_rows(Graph& g, NodeId m, std::size_t r0, std::size_t count) {
    std::size_t n = g.value(m).shape[0];
    Tensor sel({count, n});
    for (std::size_t i = 0; i < count; ++i) sel.at(i, r0 + i) = 1.0;
    return g.matmul(g.constant(std::move(sel)), m);
}

struct CommonTerms {
    NodeId pos_exp;   // (2N x 1) exp(pos_sim / tau) per anchor
    NodeId clamped;   // (2N x 1) per-view clamped debiased term
    std::size_t n;
};

// Shared head of the batch loss: cosine matrix, per-anchor negative means,
// and the clamped per-view debiased terms.
CommonTerms build_terms(Graph& g, NodeId z1, NodeId z2, const ContrastiveConfig& cfg) {
    cfg.validate();
    const Tensor& t1 = g.value(z1);
    const Tensor& t2 = g.value(z2);
    if (t1.rank() != 2 || !t1.same_shape(t2))
        throw std::invalid_argument("batch_loss: z1/z2 must be equal-shaped N x d matrices");
    std::size_t n = t1.shape[0];
    if (n < 2) throw std::invalid_argument("batch_loss: needs N >= 2 samples");
    for (const Tensor* t : {&t1, &t2})
        for (std::size_t i = 0; i < n; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < t->shape[1]; ++j) sq += t->at(i, j) * t->at(i, j);
            if (sq == 0.0)
                throw std::invalid_argument("batch_loss: zero-norm row " + std::to_string(i));
        }

    std::size_t m = 2 * n;
    NodeId u1 = normalize_rows(g, z1);
    NodeId u2 = normalize_rows(g, z2);
    // stack views: rows [0,N) from view 1, rows [N,2N) from view 2
    Tensor sel_top({m, n}), sel_bot({m, n});
    for (std::size_t i = 0; i < n; ++i) {
        sel_top.at(i, i) = 1.0;
        sel_bot.at(n + i, i) = 1.0;
    }
    NodeId u = g.add(g.matmul(g.constant(std::move(sel_top)), u1),
                     g.matmul(g.constant(std::move(sel_bot)), u2));

    NodeId sims = g.matmul(u, g.transpose(u));
    NodeId exps = g.exp(g.mul_scalar(sims, 1.0 / cfg.tau));

    Tensor pos_mask({m, m});
    Tensor neg_mask = Tensor::full({m, m}, 1.0);
    for (std::size_t r = 0; r < m; ++r) {
        std::size_t partner = r < n ? r + n : r - n;
        pos_mask.at(r, partner) = 1.0;
        neg_mask.at(r, r) = 0.0;
        neg_mask.at(r, partner) = 0.0;
    }
    NodeId ones_col = g.constant(Tensor::full({m, 1}, 1.0));
    NodeId pos_exp = g.matmul(g.mul(exps, g.constant(std::move(pos_mask))), ones_col);
    NodeId s_col = g.mul_scalar(g.matmul(g.mul(exps, g.constant(std::move(neg_mask))), ones_col),
                                1.0 / static_cast<double>(m - 2));

    NodeId unclamped = g.mul_scalar(
        g.sub(s_col, g.mul_scalar(pos_exp, cfg.tau_plus)), 1.0 / (1.0 - cfg.tau_plus));
    NodeId clamped = g.max_with(unclamped, std::exp(-1.0 / cfg.tau));
    return {pos_exp, clamped, n};
}

NodeId loss_from_terms(Graph& g, const CommonTerms& terms, const ContrastiveConfig& cfg) {
    std::size_t n = terms.n;
    NodeId d = g.add(select_rows(g, terms.clamped, 0, n), select_rows(g, terms.clamped, n, n));
    NodeId p = select_rows(g, terms.pos_exp, 0, n);
    NodeId powed = g.pow(g.add_scalar(d, 1.0), cfg.lambda);
    NodeId ratio = g.div(p, g.add(p, powed));
    return g.mul_scalar(g.log(ratio), -2.0);  // (N x 1) per-sample losses
}

}  // namespace

NodeId batch_loss_node(Graph& g, NodeId z1, NodeId z2, const ContrastiveConfig& cfg) {
    CommonTerms terms = build_terms(g, z1, z2, cfg);
    NodeId per_sample = loss_from_terms(g, terms, cfg);
    return g.mul_scalar(g.mean(per_sample), 0.5);  // (1/2N) * sum
}

NodeId sample_loss_node(Graph& g, NodeId z1, NodeId z2, std::size_t i,
                        const ContrastiveConfig& cfg) {
    std::size_t n = g.value(z1).rank() == 2 ? g.value(z1).shape[0] : 0;
    if (i >= n) throw std::invalid_argument("sample_loss: index out of range");
    CommonTerms terms = build_terms(g, z1, z2, cfg);
    NodeId per_sample = loss_from_terms(g, terms, cfg);
    return select_rows(g, per_sample, i, 1);
}

double neg_mean(const ViewBatch& batch, std::size_t i, int view, const ContrastiveConfig& cfg) {
    batch.validate();
    cfg.validate();
    if (i >= batch.size()) throw std::invalid_argument("neg_mean: index out of range");
    if (view != 1 && view != 2) throw std::invalid_argument("neg_mean: view must be 1 or 2");
    const Tensor& za = view == 1 ? batch.z1 : batch.z2;
    std::span<const double> anchor(za.data.data() + i * batch.dim(), batch.dim());
    double acc = 0.0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j == i) continue;
        for (const Tensor* z : {&batch.z1, &batch.z2}) {
            std::span<const double> other(z->data.data() + j * batch.dim(), batch.dim());
            acc += std::exp(cosine_sim(anchor, other) / cfg.tau);
        }
    }
    return acc / static_cast<double>(2 * batch.size() - 2);
}

double debiased_distance(const ViewBatch& batch, std::size_t i, const ContrastiveConfig& cfg) {
    batch.validate();
    cfg.validate();
    if (i >= batch.size()) throw std::invalid_argument("debiased_distance: index out of range");
    std::span<const double> a(batch.z1.data.data() + i * batch.dim(), batch.dim());
    std::span<const double> b(batch.z2.data.data() + i * batch.dim(), batch.dim());
    double pos = std::exp(cosine_sim(a, b) / cfg.tau);
    double floor = std::exp(-1.0 / cfg.tau);
    double d = 0.0;
    for (int view : {1, 2}) {
        double s = neg_mean(batch, i, view, cfg);
        double unclamped = (s - cfg.tau_plus * pos) / (1.0 - cfg.tau_plus);
        d += std::max(floor, unclamped);
    }
    return d;
}

double sample_loss(const ViewBatch& batch, std::size_t i, const ContrastiveConfig& cfg) {
    batch.validate();
    Graph g;
    NodeId node = sample_loss_node(g, g.constant(batch.z1), g.constant(batch.z2), i, cfg);
    return g.value(node).data[0];
}

double batch_loss(const ViewBatch& batch, const ContrastiveConfig& cfg) {
    batch.validate();
    Graph g;
    NodeId node = batch_loss_node(g, g.constant(batch.z1), g.constant(batch.z2), cfg);
    return g.value(node).data[0];
}

double loss_oracle_scalar(const ViewBatch& batch, const ContrastiveConfig& cfg) {
    batch.validate();
    cfg.validate();
    const std::size_t n = batch.size();
    const std::size_t d = batch.dim();
    auto cell = [&](const Tensor& z, std::size_t row, std::size_t col) {
        return z.data[row * d + col];
    };
    auto cos = [&](const Tensor& za, std::size_t ia, const Tensor& zb, std::size_t ib) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            dot += cell(za, ia, c) * cell(zb, ib, c);
            na += cell(za, ia, c) * cell(za, ia, c);
            nb += cell(zb, ib, c) * cell(zb, ib, c);
        }
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double pos = std::exp(cos(batch.z1, i, batch.z2, i) / cfg.tau);
        double dist = 0.0;
        for (int view = 1; view <= 2; ++view) {
            const Tensor& anchor = view == 1 ? batch.z1 : batch.z2;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                s += std::exp(cos(anchor, i, batch.z1, j) / cfg.tau);
                s += std::exp(cos(anchor, i, batch.z2, j) / cfg.tau);
            }
            s /= static_cast<double>(2 * n - 2);
            double unclamped = (s - cfg.tau_plus * pos) / (1.0 - cfg.tau_plus);
            double floor = std::exp(-1.0 / cfg.tau);
            dist += unclamped > floor ? unclamped : floor;
        }
        double powed = std::pow(1.0 + dist, cfg.lambda);
        total += -2.0 * std::log(pos / (pos + powed));
    }
    return total / static_cast<double>(2 * n);
}

}  // namespace declust
