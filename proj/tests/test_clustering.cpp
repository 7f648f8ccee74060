#include <doctest.h>

#include <cmath>
#include <declust/clustering.hpp>
#include <declust/data.hpp>
#include <declust/evaluation.hpp>
#include <declust/grad_check.hpp>
#include <declust/rng.hpp>
#include <stdexcept>

#include "support/gradcheck_util.hpp"

using namespace declust;
using testutil::BuildResult;
using testutil::graph_gradcheck;
using testutil::random_tensor;

namespace {

Tensor random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({n, d});
    for (double& v : t.data) v = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("kmeans on two 1-D points") {
    Tensor pts({2, 1}, {-1.0, 1.0});
    ClusterState st = kmeans_init(pts, 2, 0);
    CHECK(st.centroids.at(0, 0) == doctest::Approx(-1.0));
    CHECK(st.centroids.at(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("kmeans with K = N puts a centroid on every point") {
    Tensor pts({4, 2}, {0, 0, 1, 0, 0, 1, 1, 1});
    ClusterState st = kmeans_init(pts, 4, 3);
    // sorted lexicographically; every input point appears exactly once
    std::vector<std::vector<double>> expect{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(st.centroids.at(c, 0) == doctest::Approx(expect[c][0]));
        CHECK(st.centroids.at(c, 1) == doctest::Approx(expect[c][1]));
    }
}

TEST_CASE("kmeans recovers well-separated blobs (ARI oracle)") {
    std::vector<std::vector<double>> means{{0, 0, 0}, {10, 0, 0}, {0, 10, 0}};
    std::vector<std::size_t> counts{100, 100, 100};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Dataset ds = gen_blobs(3, 3, means, 0.1, counts, derive_seed(17, seed));
        Tensor pts({ds.size(), 3});
        for (std::size_t i = 0; i < ds.size(); ++i)
            for (std::size_t j = 0; j < 3; ++j) pts.at(i, j) = ds.samples[i].data[j];
        ClusterState st = kmeans_init(pts, 3, seed);
        Tensor q = soft_assign(pts, st);
        std::vector<int> assign(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < 3; ++c)
                if (q.at(i, c) > q.at(i, best)) best = c;
            assign[i] = static_cast<int>(best);
        }
        CHECK(adjusted_rand_index(assign, ds.labels) > 0.99);
    }
}

TEST_CASE("kmeans rejects N < K and is seed-deterministic") {
    Tensor pts = random_rows(5, 2, 1);
    CHECK_THROWS_AS(kmeans_init(pts, 6, 0), std::invalid_argument);
    ClusterState a = kmeans_init(pts, 3, 42);
    ClusterState b = kmeans_init(pts, 3, 42);
    CHECK(a.centroids.bit_equal(b.centroids));
}

TEST_CASE("soft assignments against hand-evaluated cases") {
    // equidistant from two centroids -> (0.5, 0.5)
    ClusterState st;
    st.centroids = Tensor({2, 1}, {-1.0, 1.0});
    Tensor z({1, 1}, {0.0});
    Tensor q = soft_assign(z, st);
    CHECK(q.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(q.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    // alpha = 1, squared distances (0, 1): kernel (1, 0.5) -> (2/3, 1/3)
    ClusterState st2;
    st2.centroids = Tensor({2, 1}, {0.0, 1.0});
    Tensor at_zero({1, 1}, {0.0});
    Tensor q2 = soft_assign(at_zero, st2);
    CHECK(q2.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(q2.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // rows sum to one on random inputs
    ClusterState st3;
    st3.centroids = random_rows(4, 3, 5);
    Tensor emb = random_rows(10, 3, 6);
    Tensor q3 = soft_assign(emb, st3);
    for (std::size_t i = 0; i < 10; ++i) {
        double row = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            row += q3.at(i, c);
            CHECK(q3.at(i, c) > 0.0);
            CHECK(q3.at(i, c) < 1.0);
        }
        CHECK(std::abs(row - 1.0) < 1e-9);
    }
}

TEST_CASE("soft assignment is invariant under centroid permutation") {
    ClusterState st;
    st.centroids = random_rows(3, 4, 8);
    Tensor emb = random_rows(6, 4, 9);
    Tensor q = soft_assign(emb, st);

    ClusterState permuted;
    permuted.centroids = Tensor({3, 4});
    std::vector<std::size_t> perm{2, 0, 1};
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t j = 0; j < 4; ++j)
            permuted.centroids.at(c, j) = st.centroids.at(perm[c], j);
    Tensor qp = soft_assign(emb, permuted);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(qp.at(i, c) == doctest::Approx(q.at(i, perm[c])).epsilon(1e-12));
}

TEST_CASE("graph soft assignment matches the plain evaluation") {
    ClusterState st;
    st.centroids = random_rows(3, 5, 21);
    Tensor emb = random_rows(7, 5, 22);
    Tensor q = soft_assign(emb, st);

    Graph g;
    NodeId qn = soft_assign_node(g, g.constant(emb), g.constant(st.centroids), st.alpha);
    const Tensor& qg = g.value(qn);
    REQUIRE(qg.shape == q.shape);
    for (std::size_t i = 0; i < q.numel(); ++i)
        CHECK(qg.data[i] == doctest::Approx(q.data[i]).epsilon(1e-12));
}

TEST_CASE("target distribution fixed points") {
    // identical rows: sharpening and frequency normalization cancel
    Tensor q({3, 2}, {2.0 / 3, 1.0 / 3, 2.0 / 3, 1.0 / 3, 2.0 / 3, 1.0 / 3});
    Tensor p = target_distribution(q);
    for (std::size_t i = 0; i < q.numel(); ++i)
        CHECK(p.data[i] == doctest::Approx(q.data[i]).epsilon(1e-12));

    // one-hot rows with every cluster occupied reproduce themselves
    Tensor onehot({3, 2}, {1, 0, 0, 1, 1, 0});
    Tensor p2 = target_distribution(onehot);
    for (std::size_t i = 0; i < onehot.numel(); ++i)
        CHECK(p2.data[i] == doctest::Approx(onehot.data[i]).epsilon(1e-12));

    // random rows stay row-stochastic
    ClusterState st;
    st.centroids = random_rows(4, 3, 31);
    Tensor p3 = target_distribution(soft_assign(random_rows(9, 3, 32), st));
    for (std::size_t i = 0; i < 9; ++i) {
        double row = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            row += p3.at(i, c);
            CHECK(p3.at(i, c) >= 0.0);
        }
        CHECK(std::abs(row - 1.0) < 1e-9);
    }

    // an empty cluster is rejected with its index
    Tensor empty_col({2, 2}, {1, 0, 1, 0});
    CHECK_THROWS_WITH_AS(target_distribution(empty_col),
                         "target_distribution: empty cluster 1", std::invalid_argument);
}

TEST_CASE("KL divergence values and edge cases") {
    Tensor p({1, 2}, {1.0, 0.0});
    Tensor q({1, 2}, {0.5, 0.5});
    CHECK(kl_loss(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-6));

    Tensor same({2, 2}, {0.3, 0.7, 0.6, 0.4});
    CHECK(kl_loss(same, same) == doctest::Approx(0.0).epsilon(1e-15));

    Tensor qzero({1, 2}, {0.0, 1.0});
    CHECK_THROWS_AS(kl_loss(p, qzero), std::invalid_argument);

    // non-negative on random stochastic pairs; zero only when P = Q
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(derive_seed(77, seed));
        Tensor a({4, 3}), b({4, 3});
        for (std::size_t i = 0; i < 4; ++i) {
            double sa = 0.0, sb = 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
                a.at(i, c) = rng.uniform(0.01, 1.0);
                b.at(i, c) = rng.uniform(0.01, 1.0);
                sa += a.at(i, c);
                sb += b.at(i, c);
            }
            for (std::size_t c = 0; c < 3; ++c) {
                a.at(i, c) /= sa;
                b.at(i, c) /= sb;
            }
        }
        double kl = kl_loss(a, b);
        CHECK(kl >= 0.0);
        double max_gap = 0.0;
        for (std::size_t i = 0; i < a.numel(); ++i)
            max_gap = std::max(max_gap, std::abs(a.data[i] - b.data[i]));
        if (kl < 1e-12) CHECK(max_gap < 1e-5);
    }
}

TEST_CASE("graph KL matches the plain evaluation and handles zero targets") {
    ClusterState st;
    st.centroids = random_rows(3, 4, 41);
    Tensor emb = random_rows(6, 4, 42);
    Tensor q = soft_assign(emb, st);
    Tensor p = target_distribution(q);

    Graph g;
    NodeId qn = soft_assign_node(g, g.constant(emb), g.constant(st.centroids), st.alpha);
    NodeId kl = kl_loss_node(g, p, qn);
    CHECK(g.value(kl).data[0] == doctest::Approx(kl_loss(p, q)).epsilon(1e-10));

    // zero entries in the constant target contribute nothing
    Graph g2;
    Tensor ph({1, 2}, {1.0, 0.0});
    NodeId qc = g2.constant(Tensor({1, 2}, {0.5, 0.5}));
    CHECK(g2.value(kl_loss_node(g2, ph, qc)).data[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("KL gradients w.r.t. embeddings and centroids match finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Tensor emb = random_rows(4, 3, derive_seed(51, seed));
        Tensor cen = random_rows(3, 3, derive_seed(52, seed));
        // the target is computed once from the unperturbed assignment and
        // held fixed, matching its detached role in training
        ClusterState st;
        st.centroids = cen;
        Tensor p = target_distribution(soft_assign(emb, st));

        auto build = [&](const std::vector<Tensor>& in) {
            BuildResult r;
            Tensor e = in[0];
            e.requires_grad = true;
            Tensor c = in[1];
            c.requires_grad = true;
            NodeId ei = r.graph.input(std::move(e));
            NodeId ci = r.graph.input(std::move(c));
            NodeId q = soft_assign_node(r.graph, ei, ci, 1.0);
            r.loss = kl_loss_node(r.graph, p, q);
            r.leaves = {ei, ci};
            return r;
        };
        CHECK(graph_gradcheck(build, {emb, cen}) < 1e-5);
    }
}
