#include <doctest.h>

#include <cmath>
#include <declust/lambda_analysis.hpp>
#include <declust/rng.hpp>
#include <stdexcept>

using namespace declust;

namespace {

const double kE2 = std::exp(2.0);

LambdaScene basic_scene() {
    LambdaScene s;
    s.sim_pos = 1.0;
    s.sim_negs = {0.0, 0.0};
    s.tau = 0.5;
    s.lambda = 1.0;
    return s;
}

LambdaScene random_scene(std::uint64_t seed) {
    Rng rng(seed);
    LambdaScene s;
    s.sim_pos = rng.uniform(-1.0, 1.0);
    std::size_t pairs = 1 + rng.below(4);
    s.sim_negs.resize(2 * pairs);
    for (double& v : s.sim_negs) v = rng.uniform(-1.0, 1.0);
    s.tau = rng.uniform(0.2, 1.0);
    s.lambda = rng.uniform(0.0, 5.0);
    return s;
}

}  // namespace

TEST_CASE("scene validation") {
    LambdaScene s = basic_scene();
    s.sim_negs = {0.5};  // odd count
    CHECK_THROWS_AS(lambda_loss(s), std::invalid_argument);
    s = basic_scene();
    s.tau = 0.0;
    CHECK_THROWS_AS(lambda_loss(s), std::invalid_argument);
    s = basic_scene();
    s.sim_pos = 1.5;
    CHECK_THROWS_AS(lambda_loss(s), std::invalid_argument);
}

TEST_CASE("loss value against the hand-evaluated scene") {
    LambdaScene s = basic_scene();  // P = e^2, B = 3, lambda = 1
    double expected = std::log((kE2 + 3.0) / kE2);
    CHECK(lambda_loss(s) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(lambda_loss(s) == doctest::Approx(0.34085).epsilon(4e-4));

    // lambda = 0: log((P + 1) / P), independent of the negatives
    s.lambda = 0.0;
    CHECK(lambda_loss(s) == doctest::Approx(std::log((kE2 + 1.0) / kE2)).epsilon(1e-12));
    LambdaScene other = s;
    other.sim_negs = {0.9, -0.3, 0.2, 0.6};
    CHECK(lambda_loss(other) == doctest::Approx(lambda_loss(s)).epsilon(1e-12));

    // B > 1 always, so the loss exceeds the lambda = 0 floor for lambda > 0
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        LambdaScene r = random_scene(seed);
        r.lambda = std::max(r.lambda, 0.1);
        LambdaScene floor = r;
        floor.lambda = 0.0;
        CHECK(lambda_loss(r) > lambda_loss(floor));
    }
}

TEST_CASE("first derivative: closed form, sign, and finite differences") {
    LambdaScene s = basic_scene();
    CHECK(lambda_grad(s) == doctest::Approx(3.0 * std::log(3.0) / (kE2 + 3.0)).epsilon(1e-12));
    CHECK(lambda_grad(s) == doctest::Approx(0.31716).epsilon(3e-4));

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        LambdaScene r = random_scene(seed);
        double h = 1e-5;
        LambdaScene up = r, down = r;
        up.lambda += h;
        down.lambda -= h;
        if (down.lambda < 0.0) continue;
        double numeric = (lambda_loss(up) - lambda_loss(down)) / (2.0 * h);
        double analytic = lambda_grad(r);
        CHECK(std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)) < 1e-6);
        CHECK(analytic > 0.0);
    }

    // B -> 1+ sends ln(B) -> 0 and the derivative with it
    LambdaScene nearly;
    nearly.sim_pos = 1.0;
    nearly.sim_negs = {-1.0, -1.0};
    nearly.tau = 0.05;  // exp(-20) makes B - 1 around 4e-9
    nearly.lambda = 1.0;
    CHECK(lambda_grad(nearly) < 1e-8);
}

TEST_CASE("second derivative: closed form, positivity, finite differences") {
    LambdaScene s = basic_scene();
    double expected = kE2 * 3.0 * std::log(3.0) * std::log(3.0) / ((kE2 + 3.0) * (kE2 + 3.0));
    CHECK(lambda_hess(s) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(lambda_hess(s) == doctest::Approx(0.24790).epsilon(1e-4));

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        LambdaScene r = random_scene(seed);
        double h = 1e-3;
        if (r.lambda < h) r.lambda += h;
        LambdaScene up = r, down = r;
        up.lambda += h;
        down.lambda -= h;
        double numeric =
            (lambda_loss(up) - 2.0 * lambda_loss(r) + lambda_loss(down)) / (h * h);
        double analytic = lambda_hess(r);
        CHECK(std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)) < 1e-4);
        CHECK(analytic > 0.0);
    }

    // P -> infinity kills the curvature
    LambdaScene hot = basic_scene();
    hot.tau = 0.03;  // P = e^(1/0.03) huge, B barely above 3
    CHECK(lambda_hess(hot) < 1e-10);
}

TEST_CASE("orthogonal-negative limit") {
    // N = 2, sim_pos = 1, tau = 0.5, lambda = 1: the appendix limit value
    CHECK(limit_orthogonal_negatives(2, 1.0, 0.5, 1.0) ==
          doctest::Approx(0.24790).epsilon(1e-4));
    // lambda = 0 keeps ln(B) = ln 3: P (ln 3)^2 / (P + 1)^2
    double expected = kE2 * std::log(3.0) * std::log(3.0) / ((kE2 + 1.0) * (kE2 + 1.0));
    CHECK(limit_orthogonal_negatives(2, 1.0, 0.5, 0.0) ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(limit_orthogonal_negatives(2, 1.0, 0.5, 0.0) == doctest::Approx(0.12671).epsilon(1e-3));

    // exactly the all-zero-negatives scene by construction
    LambdaScene zeros;
    zeros.sim_pos = 0.4;
    zeros.sim_negs = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};  // N = 4
    zeros.tau = 0.7;
    zeros.lambda = 2.5;
    CHECK(limit_orthogonal_negatives(4, 0.4, 0.7, 2.5) == lambda_hess(zeros));

    CHECK_THROWS_AS(limit_orthogonal_negatives(1, 1.0, 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("positive negatives push B above 2N - 1") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(derive_seed(9, seed));
        LambdaScene s;
        s.sim_pos = rng.uniform(-1.0, 1.0);
        std::size_t pairs = 1 + rng.below(4);
        s.sim_negs.resize(2 * pairs);
        for (double& v : s.sim_negs) v = rng.uniform(1e-6, 1.0);  // strictly positive sims
        s.tau = rng.uniform(0.2, 1.0);
        double two_n_minus_1 = static_cast<double>(s.sim_negs.size()) + 1.0;
        CHECK(s.negative_base() > two_n_minus_1);
    }
}

TEST_CASE("sweep CSV is monotone in the loss column") {
    std::vector<double> grid{0.0, 0.5, 1.0, 2.0, 3.0, 5.0};
    auto rows = lambda_sweep(basic_scene(), grid);
    REQUIRE(rows.size() == grid.size());
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].loss > rows[i - 1].loss);
    std::string csv = lambda_sweep_csv(rows);
    CHECK(csv.starts_with("lambda,loss,grad,hess\n"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(grid.size()) + 1);
}
