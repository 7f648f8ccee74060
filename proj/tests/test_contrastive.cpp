#include <doctest.h>

#include <cmath>
#include <declust/contrastive.hpp>
#include <declust/grad_check.hpp>
#include <declust/rng.hpp>
#include <stdexcept>

#include "support/gradcheck_util.hpp"

using namespace declust;
using testutil::BuildResult;
using testutil::graph_gradcheck;

namespace {

const double kE2 = std::exp(2.0);

// N=2 batch over an orthonormal basis: sample 0's views are both e0
// (pos sim 1), sample 1's views are both e2, so every anchor sees two
// orthogonal negatives (S = 1 with tau = 0.5) and both samples share the
// same per-sample loss.
ViewBatch symmetric_batch() {
    ViewBatch b;
    b.z1 = Tensor({2, 4}, {1, 0, 0, 0, /**/ 0, 0, 1, 0});
    b.z2 = Tensor({2, 4}, {1, 0, 0, 0, /**/ 0, 0, 1, 0});
    return b;
}

ViewBatch random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    ViewBatch b;
    b.z1 = Tensor({n, d});
    b.z2 = Tensor({n, d});
    for (double& v : b.z1.data) v = rng.normal();
    for (double& v : b.z2.data) v = rng.normal();
    return b;
}

// Any per-view term within `margin` of the clamp bound makes the loss
// non-differentiable there; such batches are resampled in gradient tests.
bool near_clamp_kink(const ViewBatch& b, const ContrastiveConfig& cfg, double margin = 1e-3) {
    double floor = std::exp(-1.0 / cfg.tau);
    for (std::size_t i = 0; i < b.size(); ++i) {
        std::span<const double> a(b.z1.data.data() + i * b.dim(), b.dim());
        std::span<const double> c(b.z2.data.data() + i * b.dim(), b.dim());
        double pos = std::exp(cosine_sim(a, c) / cfg.tau);
        for (int view : {1, 2}) {
            double s = neg_mean(b, i, view, cfg);
            double unclamped = (s - cfg.tau_plus * pos) / (1.0 - cfg.tau_plus);
            if (std::abs(unclamped - floor) < margin) return true;
        }
    }
    return false;
}

}  // namespace

TEST_CASE("config and batch validation") {
    ContrastiveConfig bad;
    bad.tau_plus = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.lambda = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    ViewBatch single;
    single.z1 = Tensor({1, 2}, {1, 0});
    single.z2 = Tensor({1, 2}, {1, 0});
    CHECK_THROWS_AS(single.validate(), std::invalid_argument);

    ViewBatch zero_row = symmetric_batch();
    zero_row.z1.at(1, 2) = 0.0;
    CHECK_THROWS_AS(zero_row.validate(), std::invalid_argument);
}

TEST_CASE("cosine similarity") {
    std::vector<double> e1{1, 0}, e2{0, 1}, diag{1, 1};
    CHECK(cosine_sim(e1, e1) == doctest::Approx(1.0));
    CHECK(cosine_sim(e1, e2) == doctest::Approx(0.0));
    CHECK(cosine_sim(diag, e1) == doctest::Approx(0.70711).epsilon(1e-5));
    std::vector<double> zero{0, 0};
    CHECK_THROWS_AS(cosine_sim(zero, e1), std::invalid_argument);
}

TEST_CASE("negative mean against hand-evaluated cases") {
    ContrastiveConfig cfg;  // tau 0.5
    // orthogonal negatives: S = exp(0) = 1
    CHECK(neg_mean(symmetric_batch(), 0, 1, cfg) == doctest::Approx(1.0).epsilon(1e-12));

    // negatives with sims {1, 0}: S = (e^2 + 1) / 2
    ViewBatch b;
    b.z1 = Tensor({2, 4}, {1, 0, 0, 0, /**/ 1, 0, 0, 0});
    b.z2 = Tensor({2, 4}, {1, 0, 0, 0, /**/ 0, 1, 0, 0});
    CHECK(neg_mean(b, 0, 1, cfg) == doctest::Approx((kE2 + 1.0) / 2.0).epsilon(1e-12));
    CHECK(neg_mean(b, 0, 1, cfg) == doctest::Approx(4.19453).epsilon(1e-5));

    // both negatives aligned: S = e^2 exactly
    ViewBatch c;
    c.z1 = Tensor({2, 4}, {1, 0, 0, 0, /**/ 1, 0, 0, 0});
    c.z2 = Tensor({2, 4}, {1, 0, 0, 0, /**/ 1, 0, 0, 0});
    CHECK(neg_mean(c, 0, 1, cfg) == doctest::Approx(kE2).epsilon(1e-12));

    CHECK_THROWS_AS(neg_mean(symmetric_batch(), 5, 1, cfg), std::invalid_argument);
    CHECK_THROWS_AS(neg_mean(symmetric_batch(), 0, 3, cfg), std::invalid_argument);
}

TEST_CASE("debiased distance: plain, clamped, and floor cases") {
    ContrastiveConfig cfg;
    double per_view = (1.0 - 0.1 * kE2) / 0.9;
    double d = debiased_distance(symmetric_batch(), 0, cfg);
    CHECK(d == doctest::Approx(2.0 * per_view).epsilon(1e-12));
    CHECK(d == doctest::Approx(0.58025).epsilon(2e-4));

    // anti-aligned negatives drive the unclamped term negative -> floor
    ViewBatch anti;
    anti.z1 = Tensor({2, 4}, {1, 0, 0, 0, /**/ -1, 0, 0, 0});
    anti.z2 = Tensor({2, 4}, {1, 0, 0, 0, /**/ -1, 0, 0, 0});
    double clamped = debiased_distance(anti, 0, cfg);
    CHECK(clamped == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-12));
    CHECK(clamped == doctest::Approx(0.27067).epsilon(1e-4));

    // clamp floor holds for arbitrary batches
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        ViewBatch b = random_batch(3, 5, seed);
        for (std::size_t i = 0; i < b.size(); ++i)
            CHECK(debiased_distance(b, i, cfg) >= 2.0 * std::exp(-1.0 / cfg.tau));
    }
}

TEST_CASE("per-sample loss against hand-evaluated cases") {
    ContrastiveConfig cfg;  // lambda 2
    double d = 2.0 * (1.0 - 0.1 * kE2) / 0.9;
    double expected = -2.0 * std::log(kE2 / (kE2 + (1.0 + d) * (1.0 + d)));
    double loss = sample_loss(symmetric_batch(), 0, cfg);
    CHECK(loss == doctest::Approx(expected).epsilon(1e-10));
    CHECK(loss == doctest::Approx(0.5822632982540096).epsilon(1e-9));

    cfg.lambda = 0.0;  // (1 + D)^0 = 1 regardless of negatives
    double at_zero = sample_loss(symmetric_batch(), 0, cfg);
    CHECK(at_zero == doctest::Approx(-2.0 * std::log(kE2 / (kE2 + 1.0))).epsilon(1e-12));
    CHECK(at_zero == doctest::Approx(0.25386).epsilon(1e-4));

    // tiny temperature: the positive term dominates and the loss vanishes
    cfg = {};
    cfg.tau = 0.05;
    CHECK(sample_loss(symmetric_batch(), 0, cfg) < 1e-6);
}

TEST_CASE("batch loss: scaling, symmetry, and the hand-evaluated batch") {
    ContrastiveConfig cfg;
    ViewBatch b = symmetric_batch();
    double per_sample = sample_loss(b, 0, cfg);
    CHECK(sample_loss(b, 1, cfg) == doctest::Approx(per_sample).epsilon(1e-12));
    // all sample losses equal v -> batch loss = v / 2
    CHECK(batch_loss(b, cfg) == doctest::Approx(per_sample / 2.0).epsilon(1e-12));
    CHECK(batch_loss(b, cfg) == doctest::Approx(0.29118).epsilon(2e-4));

    // permuting sample order leaves the loss unchanged
    ViewBatch p = random_batch(5, 6, 77);
    double before = batch_loss(p, cfg);
    ViewBatch swapped = p;
    for (std::size_t j = 0; j < p.dim(); ++j) {
        std::swap(swapped.z1.at(0, j), swapped.z1.at(3, j));
        std::swap(swapped.z2.at(0, j), swapped.z2.at(3, j));
    }
    CHECK(batch_loss(swapped, cfg) == doctest::Approx(before).epsilon(1e-12));

    // batch loss equals the sum of per-sample losses over 2N
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += sample_loss(p, i, cfg);
    CHECK(batch_loss(p, cfg) ==
          doctest::Approx(acc / (2.0 * static_cast<double>(p.size()))).epsilon(1e-12));
}

TEST_CASE("vectorized loss equals the scalar-loop oracle") {
    ContrastiveConfig cfg;
    CHECK(loss_oracle_scalar(symmetric_batch(), cfg) == doctest::Approx(0.29118).epsilon(2e-4));
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        ViewBatch b = random_batch(3, 4, seed);
        CHECK(std::abs(batch_loss(b, cfg) - loss_oracle_scalar(b, cfg)) < 1e-10);
    }
    // same formula path on an all-orthogonal batch: exact agreement expected
    ViewBatch ortho;
    ortho.z1 = Tensor({2, 4}, {1, 0, 0, 0, /**/ 0, 1, 0, 0});
    ortho.z2 = Tensor({2, 4}, {0, 0, 1, 0, /**/ 0, 0, 0, 1});
    CHECK(std::abs(batch_loss(ortho, cfg) - loss_oracle_scalar(ortho, cfg)) < 1e-10);
}

TEST_CASE("loss is strictly increasing and convex in lambda") {
    const std::vector<double> grid{0.0, 0.5, 1.0, 2.0, 3.0, 5.0};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ViewBatch b = random_batch(4, 6, derive_seed(123, seed));
        ContrastiveConfig cfg;
        std::vector<double> losses;
        for (double l : grid) {
            cfg.lambda = l;
            losses.push_back(batch_loss(b, cfg));
        }
        for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] > losses[i - 1]);
        // second difference over the uniformly spaced tail {1, 2, 3}
        double d2 = losses[4] - 2.0 * losses[3] + losses[2];
        CHECK(d2 > 0.0);
    }
}

TEST_CASE("analytic batch-loss gradients match finite differences") {
    ContrastiveConfig cfg;
    int checked = 0;
    std::uint64_t seed = 0;
    while (checked < 20) {
        ViewBatch b = random_batch(3, 5, derive_seed(31, seed++));
        if (near_clamp_kink(b, cfg)) continue;
        auto build = [&](const std::vector<Tensor>& in) {
            BuildResult r;
            Tensor z1 = in[0];
            z1.requires_grad = true;
            Tensor z2 = in[1];
            z2.requires_grad = true;
            NodeId a = r.graph.input(std::move(z1));
            NodeId c = r.graph.input(std::move(z2));
            r.loss = batch_loss_node(r.graph, a, c, cfg);
            r.leaves = {a, c};
            return r;
        };
        CHECK(graph_gradcheck(build, {b.z1, b.z2}) < 1e-5);
        ++checked;
    }
}

TEST_CASE("per-sample loss node gradients match finite differences on a 4x8 batch") {
    ContrastiveConfig cfg;
    int checked = 0;
    std::uint64_t seed = 100;
    while (checked < 5) {
        ViewBatch b = random_batch(4, 8, derive_seed(57, seed++));
        if (near_clamp_kink(b, cfg)) continue;
        auto build = [&](const std::vector<Tensor>& in) {
            BuildResult r;
            Tensor z1 = in[0];
            z1.requires_grad = true;
            Tensor z2 = in[1];
            z2.requires_grad = true;
            NodeId a = r.graph.input(std::move(z1));
            NodeId c = r.graph.input(std::move(z2));
            r.loss = sample_loss_node(r.graph, a, c, 1, cfg);
            r.leaves = {a, c};
            return r;
        };
        CHECK(graph_gradcheck(build, {b.z1, b.z2}) < 1e-5);
        ++checked;
    }
}
