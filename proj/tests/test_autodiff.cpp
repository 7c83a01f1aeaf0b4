#include <doctest.h>
#include <ttd/autodiff.hpp>
#include <ttd/rng.hpp>

#include <cmath>
#include <functional>

using namespace ttd;

namespace {

// Checks d(sum f(x))/dx against the central-difference oracle at a random point.
// `build` maps a leaf node to the op under test; `point` supplies the input.
void check_grad(const std::function<Node(const Node&)>& build, const Tensor& point,
                double eps = 1e-6, double tol = 1e-6) {
    Node x = leaf(point);
    Node y = sum(build(x));
    auto grads = gradient(y, {x});
    Tensor fd = finite_difference_gradient(
        [&](const Tensor& p) {
            NoGradGuard ng;
            Node xp = constant(p);
            return evaluate(sum(build(xp))).item();
        },
        point, eps);
    REQUIRE(grads[0].size() == fd.size());
    for (std::int64_t i = 0; i < fd.size(); ++i)
        CHECK(grads[0].data()[i] == doctest::Approx(fd.data()[i]).epsilon(tol).scale(1.0));
}

}  // namespace

TEST_CASE("unary primitives match finite differences on random instances") {
    Rng rng(11, 0);
    struct OpCase {
        const char* name;
        std::function<Node(const Node&)> build;
        double lo, hi;  // sampling range keeps each op away from its kinks/poles
    };
    std::vector<OpCase> cases = {
        {"neg", [](const Node& x) { return neg(x); }, -2, 2},
        {"tanh", [](const Node& x) { return tanh_(x); }, -2, 2},
        {"sigmoid", [](const Node& x) { return sigmoid(x); }, -3, 3},
        {"softplus", [](const Node& x) { return softplus(x); }, -3, 3},
        {"exp", [](const Node& x) { return exp_(x); }, -1.5, 1.5},
        {"log", [](const Node& x) { return log_(x); }, 0.3, 3},
        {"sqrt", [](const Node& x) { return sqrt_(x); }, 0.3, 3},
        {"square", [](const Node& x) { return square(x); }, -2, 2},
        {"sin", [](const Node& x) { return sin_(x); }, -3, 3},
        {"cos", [](const Node& x) { return cos_(x); }, -3, 3},
        {"relu_pos", [](const Node& x) { return relu(x); }, 0.2, 2},
        {"relu_neg", [](const Node& x) { return relu(x); }, -2, -0.2},
        {"max_scalar", [](const Node& x) { return maximum_scalar(x, 0.5); }, 0.7, 2},
        {"clip_inside", [](const Node& x) { return clip(x, -1, 1); }, -0.8, 0.8},
        {"scale", [](const Node& x) { return mul_scalar(x, -0.73); }, -2, 2},
        {"shift", [](const Node& x) { return add_scalar(x, 1.9); }, -2, 2},
        {"mean", [](const Node& x) { return mean(x); }, -2, 2},
        {"rowsum", [](const Node& x) { return rowwise_sum(x); }, -2, 2},
        {"colsum", [](const Node& x) { return colwise_sum(x); }, -2, 2},
        {"transpose", [](const Node& x) { return transpose(x); }, -2, 2},
        {"compose",
         [](const Node& x) { return mul(tanh_(x), exp_(mul_scalar(x, 0.3))); }, -1.5, 1.5},
    };
    for (auto& c : cases) {
        CAPTURE(c.name);
        for (int rep = 0; rep < 20; ++rep) {
            std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(3));
            std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(4));
            Tensor p = rng.uniform_tensor({m, n}, c.lo, c.hi);
            check_grad(c.build, p);
        }
    }
}

TEST_CASE("binary primitives match finite differences") {
    Rng rng(12, 0);
    for (int rep = 0; rep < 20; ++rep) {
        std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(3));
        std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(4));
        Tensor pa = rng.uniform_tensor({m, n}, -2, 2);
        Tensor pb = rng.uniform_tensor({m, n}, 0.5, 2.5);

        // differentiate through both slots of each binary op
        check_grad([&](const Node& x) { return add(x, constant(pb)); }, pa);
        check_grad([&](const Node& x) { return sub(constant(pb), x); }, pa);
        check_grad([&](const Node& x) { return mul(x, constant(pb)); }, pa);
        check_grad([&](const Node& x) { return div(x, constant(pb)); }, pa);
        check_grad([&](const Node& x) { return div(constant(pb), x); },
                   rng.uniform_tensor({m, n}, 0.5, 2.5));

        // scalar-like broadcast slot
        Tensor ps = rng.uniform_tensor({}, 0.5, 1.5);
        check_grad([&](const Node& x) { return mul(x, expand_scalar(constant(ps), {})); }, pa);
        check_grad([&](const Node& x) { return mul(constant(pa), x); }, ps);
    }
}

TEST_CASE("matmul and structural ops match finite differences") {
    Rng rng(13, 0);
    for (int rep = 0; rep < 20; ++rep) {
        std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(3));
        std::int64_t k = 1 + static_cast<std::int64_t>(rng.below(4));
        std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(3));
        Tensor a = rng.uniform_tensor({m, k}, -1, 1);
        Tensor b = rng.uniform_tensor({k, n}, -1, 1);
        check_grad([&](const Node& x) { return matmul(x, constant(b)); }, a);
        check_grad([&](const Node& x) { return matmul(constant(a), x); }, b);

        Tensor bt = rng.uniform_tensor({n, k}, -1, 1);
        check_grad([&](const Node& x) { return matmul_nt(x, constant(bt)); }, a);
        check_grad([&](const Node& x) { return matmul_nt(constant(a), x); }, bt);
        Tensor at = rng.uniform_tensor({k, m}, -1, 1);
        Tensor bkn = rng.uniform_tensor({k, n}, -1, 1);
        check_grad([&](const Node& x) { return matmul_tn(x, constant(bkn)); }, at);
        check_grad([&](const Node& x) { return matmul_tn(constant(at), x); }, bkn);

        check_grad([&](const Node& x) { return broadcast_rows(x, 5); },
                   rng.uniform_tensor({1, n}, -1, 1));
        check_grad([&](const Node& x) { return broadcast_cols(x, 4); },
                   rng.uniform_tensor({m, 1}, -1, 1));
        check_grad([&](const Node& x) { return reshape(x, {k, m}); }, a);
        check_grad([&](const Node& x) { return concat_cols(x, constant(b)); },
                   rng.uniform_tensor({k, 2}, -1, 1));
        check_grad([&](const Node& x) { return slice_cols(x, 1, k); },
                   rng.uniform_tensor({m, k + 1}, -1, 1));
        check_grad([&](const Node& x) { return pad_cols(x, k + 3, 2); }, a);
        check_grad([&](const Node& x) { return minimum(x, constant(b)); },
                   rng.uniform_tensor({k, n}, -1, 1), 1e-6, 1e-5);
    }
}

TEST_CASE("composite vector ops match finite differences") {
    Rng rng(14, 0);
    for (int rep = 0; rep < 20; ++rep) {
        std::int64_t n = 2 + static_cast<std::int64_t>(rng.below(5));
        Tensor u = rng.uniform_tensor({1, n}, -2, 2);
        Tensor v = rng.uniform_tensor({1, n}, -2, 2);
        check_grad([&](const Node& x) { return dot(x, constant(v)); }, u);
        check_grad([&](const Node& x) { return norm(x); }, u, 1e-6, 1e-5);
        check_grad([&](const Node& x) { return cosine_similarity(x, constant(v)); }, u, 1e-6,
                   1e-5);
        check_grad([&](const Node& x) { return cosine_similarity(constant(u), x); }, v, 1e-6,
                   1e-5);
    }
}

TEST_CASE("nested differentiation: d2/dx2 sum sin(x) = -sin(x)") {
    Rng rng(15, 0);
    Tensor p = rng.uniform_tensor({2, 3}, -3, 3);
    Node x = leaf(p);
    Node y = sum(sin_(x));
    auto g1 = gradient_nodes(y, {x});
    auto g2 = gradient(sum(g1[0]), {x});
    for (std::int64_t i = 0; i < p.size(); ++i)
        CHECK(g2[0].data()[i] == doctest::Approx(-std::sin(p.data()[i])).epsilon(1e-12));
}

TEST_CASE("third derivative of x^4 via repeated gradient_nodes") {
    Node x = leaf(Tensor::scalar(1.3));
    Node y = square(square(x));  // x^4
    Node g1 = gradient_nodes(y, {x})[0];              // 4x^3
    Node g2 = gradient_nodes(sum(g1), {x})[0];        // 12x^2
    auto g3 = gradient(sum(g2), {x});                 // 24x
    CHECK(g3[0].item() == doctest::Approx(24.0 * 1.3).epsilon(1e-12));
}

TEST_CASE("stopgrad blocks flow exactly") {
    Node x = leaf(Tensor::vector({1.0, -2.0, 3.0}));
    Node y = sum(mul(stopgrad(x), x));  // d/dx = stopgrad(x), not 2x
    auto g = gradient(y, {x});
    CHECK(g[0](0) == 1.0);
    CHECK(g[0](1) == -2.0);
    CHECK(g[0](2) == 3.0);

    // fully blocked path yields a bitwise-zero gradient
    Node z = sum(square(stopgrad(x)));
    auto gz = gradient(z, {x});
    for (std::int64_t i = 0; i < 3; ++i) CHECK(gz[0](i) == 0.0);
}

TEST_CASE("cosine similarity stays within [-1, 1] and hits the endpoints") {
    Node u = constant(Tensor::vector({1.0, 2.0, -1.0}));
    Node v = constant(Tensor::vector({2.0, 4.0, -2.0}));
    CHECK(evaluate(cosine_similarity(u, u)).item() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(evaluate(cosine_similarity(u, v)).item() == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(evaluate(cosine_similarity(u, neg(v))).item() ==
          doctest::Approx(-1.0).epsilon(1e-7));

    Rng rng(16, 0);
    for (int rep = 0; rep < 50; ++rep) {
        Tensor a = rng.normal_tensor({1, 4});
        Tensor b = rng.normal_tensor({1, 4});
        double c = evaluate(cosine_similarity(constant(a), constant(b))).item();
        CHECK(c <= 1.0 + 1e-12);
        CHECK(c >= -1.0 - 1e-12);
    }
}

TEST_CASE("gradients w.r.t. unreachable leaves are zero") {
    Node x = leaf(Tensor::scalar(2.0));
    Node z = leaf(Tensor::vector({1.0, 1.0}));
    auto g = gradient(square(x), {x, z});
    CHECK(g[0].item() == doctest::Approx(4.0));
    CHECK(g[1].size() == 2);
    CHECK(g[1](0) == 0.0);
    CHECK(g[1](1) == 0.0);
}

TEST_CASE("no-grad mode records no parents") {
    Node x = leaf(Tensor::scalar(3.0));
    NoGradGuard ng;
    Node y = square(x);
    CHECK_FALSE(y.requires_grad());
    CHECK(evaluate(y).item() == 9.0);
}

TEST_CASE("wrap_angle maps into (-pi, pi] with unit derivative") {
    Node x = leaf(Tensor::vector({0.5, 3.5, -3.5, 7.0}));
    Node y = wrap_angle(x);
    const Tensor& v = evaluate(y);
    const double pi = 3.14159265358979323846;
    for (std::int64_t i = 0; i < 4; ++i) {
        CHECK(v(i) <= pi + 1e-12);
        CHECK(v(i) >= -pi - 1e-12);
        CHECK(std::abs(std::remainder(v(i) - x.value()(i), 2 * pi)) < 1e-12);
    }
    auto g = gradient(sum(y), {x});
    for (std::int64_t i = 0; i < 4; ++i) CHECK(g[0](i) == 1.0);
}
