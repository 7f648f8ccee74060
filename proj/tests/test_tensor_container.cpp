#include <doctest.h>

#include <stdexcept>

#include <declust/container.hpp>
#include <declust/rng.hpp>
#include <declust/tensor.hpp>

using namespace declust;

TEST_CASE("tensor shape/data consistency is enforced") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(Tensor::scalar(4.0).is_scalar());
}

TEST_CASE("rank-2 accessors") {
    Tensor t({2, 2}, {1, 2, 3, 4});
    CHECK(t.at(0, 1) == 2.0);
    CHECK(t.at(1, 0) == 3.0);
    CHECK_THROWS_AS(Tensor({4}).rows(), std::invalid_argument);
}

TEST_CASE("container round trip is bit-exact") {
    Rng rng(7);
    std::vector<NamedTensor> items;
    for (int i = 0; i < 20; ++i) {
        std::size_t r = 1 + rng.below(3);
        std::vector<std::size_t> shape;
        for (std::size_t d = 0; d < r; ++d) shape.push_back(1 + rng.below(5));
        Tensor t(shape);
        for (double& v : t.data) v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
        items.push_back({"tensor." + std::to_string(i), t});
    }
    auto bytes = container_to_bytes(items);
    auto parsed = container_from_bytes(bytes);
    REQUIRE(parsed.size() == items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        CHECK(parsed[i].name == items[i].name);
        CHECK(parsed[i].value.bit_equal(items[i].value));
    }
    CHECK(container_to_bytes(parsed) == bytes);
}

TEST_CASE("container rejects corrupt input") {
    auto bytes = container_to_bytes({{"x", Tensor::scalar(1.0)}});
    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    CHECK_THROWS_AS(container_from_bytes(truncated), std::invalid_argument);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(container_from_bytes(bad_magic), std::invalid_argument);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(container_from_bytes(trailing), std::invalid_argument);
}

TEST_CASE("rng streams are deterministic and well-ranged") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        double u = a.uniform();
        CHECK(u == b.uniform());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    Rng c(43);
    bool differs = false;
    Rng a2(42);
    for (int i = 0; i < 16 && !differs; ++i) differs = a2.next() != c.next();
    CHECK(differs);

    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("rng shuffle is seed-stable") {
    std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8}, v2 = v1;
    Rng a(5), b(5);
    a.shuffle(v1);
    b.shuffle(v2);
    CHECK(v1 == v2);
}
