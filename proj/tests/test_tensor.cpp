#include <catch2/catch_amalgamated.hpp>

#include "diffad/tensor.hpp"
#include "testutil.hpp"

using namespace diffad;

TEST_CASE("matmul hand cases") {
    Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    Tensor b = Tensor::matrix({{1}, {1}});
    Tensor c = matmul(a, b);
    REQUIRE(c.shape() == std::vector<std::size_t>{2, 1});
    CHECK(c(0, 0) == 3.0);
    CHECK(c(1, 0) == 7.0);
}

TEST_CASE("matmul identity") {
    RngStream rng(11);
    Tensor a = testutil::random_tensor({4, 4}, rng);
    Tensor eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
    CHECK(testutil::max_abs_diff(matmul(a, eye), a) == 0.0);
    CHECK(testutil::max_abs_diff(matmul(eye, a), a) == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    RngStream rng(12);
    Tensor a = testutil::random_tensor({3, 4}, rng);
    Tensor b = testutil::random_tensor({4, 2}, rng);
    CHECK(testutil::max_abs_diff(matmul(a, b), testutil::matmul_oracle(a, b)) < 1e-12);
}

TEST_CASE("matmul associativity vs oracle on small shapes") {
    RngStream rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t m = 1 + rng.uniform_int(8);
        const std::size_t k = 1 + rng.uniform_int(8);
        const std::size_t l = 1 + rng.uniform_int(8);
        const std::size_t n = 1 + rng.uniform_int(8);
        Tensor a = testutil::random_tensor({m, k}, rng);
        Tensor b = testutil::random_tensor({k, l}, rng);
        Tensor c = testutil::random_tensor({l, n}, rng);
        Tensor left = matmul(matmul(a, b), c);
        Tensor right = matmul(a, matmul(b, c));
        Tensor oracle = testutil::matmul_oracle(testutil::matmul_oracle(a, b), c);
        CHECK(testutil::max_abs_diff(left, oracle) < 1e-12);
        CHECK(testutil::max_abs_diff(right, oracle) < 1e-12);
    }
}

TEST_CASE("matmul dimension mismatch") {
    Tensor a = Tensor::matrix({{1, 2}});
    Tensor b = Tensor::matrix({{1, 2}});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("relu definition") {
    Tensor x = Tensor::row({-1, 0, 2});
    Tensor y = relu(x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.0);
}

TEST_CASE("add identity and shape policing") {
    RngStream rng(14);
    Tensor x = testutil::random_tensor({3, 5}, rng);
    CHECK(testutil::max_abs_diff(add(x, Tensor::zeros({3, 5})), x) == 0.0);
    CHECK_THROWS_AS(add(x, Tensor::zeros({2, 5})), ShapeError);
}

TEST_CASE("trailing row-vector broadcast") {
    Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
    Tensor v = Tensor::row({10, 20});
    Tensor s = add(m, v);
    CHECK(s(0, 0) == 11.0);
    CHECK(s(1, 1) == 24.0);
    // broadcast only applies to a trailing vector over rows
    CHECK_THROWS_AS(add(v, m), ShapeError);
}

TEST_CASE("gelu matches the exact Phi formula") {
    // 1 * Phi(1), frozen from 0.5*x*(1+erf(x/sqrt(2))) at x=1
    CHECK(gelu(Tensor::row({1.0}))[0] == Catch::Approx(0.8413447460685429).epsilon(1e-12));
    CHECK(gelu(Tensor::row({0.0}))[0] == 0.0);
    RngStream rng(15);
    for (int i = 0; i < 20; ++i) {
        const double x = -3.0 + 6.0 * rng.uniform();
        const double expect = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
        CHECK(gelu(Tensor::row({x}))[0] == Catch::Approx(expect).margin(1e-14));
    }
}

TEST_CASE("softmax hand cases") {
    Tensor y = softmax(Tensor::row({0, 0}));
    CHECK(y[0] == Catch::Approx(0.5).margin(1e-15));
    CHECK(y[1] == Catch::Approx(0.5).margin(1e-15));

    Tensor z = softmax(Tensor::row({std::log(1.0), std::log(2.0), std::log(3.0)}));
    CHECK(z[0] == Catch::Approx(1.0 / 6.0).margin(1e-12));
    CHECK(z[1] == Catch::Approx(2.0 / 6.0).margin(1e-12));
    CHECK(z[2] == Catch::Approx(3.0 / 6.0).margin(1e-12));
}

TEST_CASE("softmax rows sum to one and shift invariance") {
    RngStream rng(16);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor x = testutil::random_tensor({4, 7}, rng, -30.0, 30.0);
        Tensor y = softmax(x);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j) s += y(i, j);
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
        const double c = -50.0 + 100.0 * rng.uniform();
        Tensor shifted = x;
        for (auto& v : shifted.data()) v += c;
        CHECK(testutil::max_abs_diff(softmax(shifted), y) < 1e-12);
    }
}

TEST_CASE("layer_norm constant row maps to bias") {
    Tensor x = Tensor::matrix({{3, 3, 3, 3}});
    Tensor out = layer_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}), 1e-5);
    for (std::size_t j = 0; j < 4; ++j) CHECK(out[j] == 0.0);
}

TEST_CASE("layer_norm on an already standardized row") {
    Tensor x = Tensor::matrix({{1, -1}});
    Tensor out = layer_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-14);
    CHECK(out[0] == Catch::Approx(1.0).epsilon(1e-7));
    CHECK(out[1] == Catch::Approx(-1.0).epsilon(1e-7));
}

TEST_CASE("layer_norm matches scalar-loop oracle") {
    RngStream rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t d = 2 + rng.uniform_int(9);
        Tensor x = testutil::random_tensor({1, d}, rng, -5.0, 5.0);
        Tensor gain = testutil::random_tensor({d}, rng);
        Tensor bias = testutil::random_tensor({d}, rng);
        const double eps = 1e-6;
        Tensor got = layer_norm(x, gain, bias, eps);
        auto want = testutil::layer_norm_oracle(x.data(), gain.data(), bias.data(), eps);
        for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(got[j] - want[j]) < 1e-12);
    }
    CHECK_THROWS_AS(layer_norm(Tensor::matrix({{1, 2}}), Tensor::full({2}, 1.0),
                               Tensor::zeros({2}), 0.0),
                    ContractError);
}
