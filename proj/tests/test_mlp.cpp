#include <doctest.h>
#include <ttd/mlp.hpp>

#include <cmath>

using namespace ttd;

TEST_CASE("mlp forward shape and tanh output bound") {
    Rng rng(21, 0);
    MlpParams actor = MlpParams::create({3, 16, 16, 2}, Activation::Relu, rng,
                                        /*tanh_output=*/true, /*output_scale=*/2.0);
    Node x = constant(rng.normal_tensor({5, 3}));
    Node out = actor.forward(x);
    const Tensor& y = evaluate(out);
    CHECK(y.rows() == 5);
    CHECK(y.cols() == 2);
    for (double v : y.data()) CHECK(std::abs(v) <= 2.0);
}

TEST_CASE("mlp parameter gradients match finite differences") {
    Rng rng(22, 0);
    MlpParams net = MlpParams::create({2, 8, 1}, Activation::Tanh, rng);
    Tensor xin = rng.normal_tensor({4, 2});

    auto params = net.params();
    Node loss = mean(square(net.forward(constant(xin))));
    auto grads = gradient(loss, params);

    auto vals = net.param_values();
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor fd = finite_difference_gradient(
            [&](const Tensor& pv) {
                NoGradGuard ng;
                auto trial = vals;
                trial[p] = pv;
                MlpParams copy = net;
                copy.set_param_values(trial);
                return evaluate(mean(square(copy.forward(constant(xin))))).item();
            },
            vals[p], 1e-6);
        for (std::int64_t i = 0; i < fd.size(); ++i)
            CHECK(grads[p].data()[i] ==
                  doctest::Approx(fd.data()[i]).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("target copy tracks values but not parameter gradients") {
    Rng rng(23, 0);
    MlpParams net = MlpParams::create({2, 8, 1}, Activation::Relu, rng);
    MlpParams tgt = net.target_copy();
    CHECK_FALSE(tgt.trainable);

    Tensor xin = rng.normal_tensor({3, 2});
    Node na = net.forward(constant(xin));
    Node nb = tgt.forward(constant(xin));
    const Tensor& a = evaluate(na);
    const Tensor& b = evaluate(nb);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);

    // input gradients still flow through a target network
    Node x = leaf(xin);
    auto g = gradient(sum(tgt.forward(x)), {x});
    double nz = 0;
    for (double v : g[0].data()) nz += std::abs(v);
    CHECK(nz > 0.0);
}

TEST_CASE("soft update blends parameters") {
    Rng rng(24, 0);
    MlpParams online = MlpParams::create({2, 4, 1}, Activation::Relu, rng);
    MlpParams target = online.target_copy();
    MlpParams fresh = MlpParams::create({2, 4, 1}, Activation::Relu, rng);
    target.set_param_values(fresh.param_values());

    auto tv = target.param_values();
    auto ov = online.param_values();
    double tau = 0.25;
    soft_update(target, online, tau);
    auto nv = target.param_values();
    for (std::size_t p = 0; p < nv.size(); ++p)
        for (std::int64_t i = 0; i < nv[p].size(); ++i)
            CHECK(nv[p].data()[i] == doctest::Approx((1 - tau) * tv[p].data()[i] +
                                                     tau * ov[p].data()[i])
                                         .epsilon(1e-14));
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    Rng rng(25, 0);
    MlpParams net = MlpParams::create({1, 1}, Activation::Relu, rng);
    Adam opt(0.05);
    Tensor xin = Tensor::matrix(1, 1, {1.0});
    for (int it = 0; it < 400; ++it) {
        Node pred = net.forward(constant(xin));
        Node loss = square(add_scalar(pred, -3.0));  // (w + b - 3)^2
        auto grads = gradient(sum(loss), net.params());
        opt.step(net, grads);
    }
    double out = evaluate(net.forward(constant(xin))).item();
    CHECK(out == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("adam first step moves each parameter by ~lr") {
    Rng rng(26, 0);
    MlpParams net = MlpParams::create({1, 1}, Activation::Relu, rng);
    auto before = net.param_values();
    Adam opt(0.01);
    std::vector<Tensor> grads = {Tensor::matrix(1, 1, {0.37}), Tensor::matrix(1, 1, {-5.0})};
    opt.step(net, grads);
    auto after = net.param_values();
    // bias-corrected first step is lr * g / (|g| + eps) ~= lr * sign(g)
    CHECK(after[0](0) == doctest::Approx(before[0](0) - 0.01).epsilon(1e-4));
    CHECK(after[1](0) == doctest::Approx(before[1](0) + 0.01).epsilon(1e-4));
}
