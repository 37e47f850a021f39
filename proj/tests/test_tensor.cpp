#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "trl3d/core/checkpoint.hpp"
#include "trl3d/core/nn.hpp"
#include "trl3d/core/ops.hpp"
#include "trl3d/core/optim.hpp"

using namespace trl3d;

namespace {

void check_values(const Tensor& t, const std::vector<double>& expected, double tol = 0.0) {
    REQUIRE(t.numel() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(std::abs(t.data()[i] - expected[i]) <= tol);
}

// Gradient of `fn` with respect to every leaf in `inputs`, checked entrywise
// against central differences at step 1e-6.
void check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& fn, std::vector<Tensor> inputs,
                     double tol = 1e-4) {
    for (auto& t : inputs) t.zero_grad();
    fn(inputs).backward();
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        // Inputs the loss does not touch get no gradient; their numeric one must vanish.
        std::vector<double> analytic(inputs[k].numel(), 0.0);
        if (inputs[k].has_grad()) analytic.assign(inputs[k].grad().begin(), inputs[k].grad().end());
        for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
            const double numeric = oracle::central_difference(
                [&] {
                    NoGradGuard guard;
                    return fn(inputs).item();
                },
                inputs[k], i, 1e-6);
            CHECK(oracle::relative_error(analytic[i], numeric, 1e-6) < tol);
        }
    }
}

}  // namespace

TEST_CASE("tensor construction and shape bookkeeping") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.numel() == 6);
    CHECK(t.dim(-1) == 3);
    CHECK(shape_string(t.shape()) == "[2,3]");
    CHECK_THROWS(Tensor({2, 2}, std::vector<double>{1, 2, 3}));
    CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("elementwise examples") {
    check_values(relu(Tensor({3}, {-1, 0, 2})), {0, 0, 2});
    check_values(add(Tensor({2}, {1, 2}), Tensor({2}, {3, 4})), {4, 6});
    check_values(add(Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2, 1}, {10, 20})), {11, 12, 23, 24});
    check_values(softplus(Tensor({1}, {0.0})), {std::log(2.0)}, 1e-15);
}

TEST_CASE("shape mismatch names both shapes") {
    try {
        add(Tensor({2, 3}), Tensor({4}));
        FAIL("expected an exception");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4]") != std::string::npos);
    }
}

TEST_CASE("matmul examples") {
    check_values(matmul(Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2, 1}, {1, 1})), {3, 7});
    Rng rng(3);
    Tensor m = oracle::random_tensor({3, 3}, rng);
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    check_values(matmul(eye, m), m.values());
    CHECK_THROWS(matmul(Tensor({2, 3}), Tensor({2, 3})));
}

TEST_CASE("matmul gradient is ones times B transpose") {
    Rng rng(8);
    Tensor a = oracle::random_tensor({2, 3}, rng, 1.0, true);
    Tensor b = oracle::random_tensor({3, 4}, rng);
    sum(matmul(a, b)).backward();
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            double row_sum = 0.0;
            for (std::size_t j = 0; j < 4; ++j) row_sum += b.data()[k * 4 + j];
            CHECK(a.grad()[i * 3 + k] == doctest::Approx(row_sum).epsilon(1e-12));
        }
    }
}

TEST_CASE("reductions") {
    CHECK(mean(Tensor({3}, {1, 2, 3})).item() == 2.0);
    CHECK(argmax(Tensor({3}, {0, 5, 5})) == 1);
    check_values(argmax(Tensor({2, 3}, {1, 3, 3, 7, 7, 0}), -1), {1, 0});
    check_values(max(Tensor({2, 2}, {1, 4, 3, 2}), 0), {3, 4});
    CHECK_THROWS(sum(Tensor({2, 2}), 2));

    Tensor x({4}, {1, -2, 3, 0.5}, true);
    sum(x).backward();
    check_values(Tensor({4}, std::vector<double>(x.grad().begin(), x.grad().end())), {1, 1, 1, 1});
}

TEST_CASE("linear examples") {
    Tensor x({2, 2}, {1, 2, 3, 4});
    check_values(linear(x, Tensor({2, 3}, 0.0), Tensor({3}, {7, 8, 9})), {7, 8, 9, 7, 8, 9});
    check_values(linear(x, Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, 0.0)), {1, 2, 3, 4});
    CHECK_THROWS(linear(x, Tensor({3, 2}), Tensor({2})));
}

TEST_CASE("softmax and layer norm properties") {
    check_values(softmax(Tensor({2}, {0, 0}), 0), {0.5, 0.5});
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = oracle::random_tensor({5, 7}, rng, 20.0);
        Tensor s = softmax(x, -1);
        Tensor shifted = softmax(add_scalar(x, 123.25), -1);
        for (std::size_t r = 0; r < 5; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < 7; ++c) {
                total += s.data()[r * 7 + c];
                CHECK(std::abs(s.data()[r * 7 + c] - shifted.data()[r * 7 + c]) < 1e-12);
            }
            CHECK(std::abs(total - 1.0) < 1e-12);
        }
        Tensor ln = layer_norm(x, -1);
        for (std::size_t r = 0; r < 5; ++r) {
            double m = 0.0, v = 0.0;
            for (std::size_t c = 0; c < 7; ++c) m += ln.data()[r * 7 + c];
            m /= 7.0;
            for (std::size_t c = 0; c < 7; ++c) v += (ln.data()[r * 7 + c] - m) * (ln.data()[r * 7 + c] - m);
            CHECK(std::abs(m) < 1e-10);
            CHECK(v / 7.0 == doctest::Approx(1.0).epsilon(1e-4));
        }
    }
}

TEST_CASE("backward examples and errors") {
    Tensor x({2}, {1, 2}, true);
    Tensor loss = sum(mul(x, x));
    loss.backward();
    check_values(Tensor({2}, std::vector<double>(x.grad().begin(), x.grad().end())), {2, 4});
    CHECK_THROWS(loss.backward());

    Tensor y({3}, {1, 2, 3}, true);
    Tensor constant = add(scale(sum(y), 0.0), Tensor::scalar(5.0));
    constant.backward();
    for (double g : y.grad()) CHECK(g == 0.0);

    Tensor z({2}, {1, 2}, true);
    CHECK_THROWS(mul(z, z).backward());

    {
        NoGradGuard guard;
        CHECK_FALSE(grad_mode_enabled());
        CHECK_FALSE(mul(z, z).requires_grad());
    }
    CHECK(grad_mode_enabled());
}

TEST_CASE("mul gradient equals the other operand") {
    Rng rng(4);
    Tensor a = oracle::random_tensor({5}, rng, 1.0, true);
    Tensor b = oracle::random_tensor({5}, rng);
    sum(mul(a, b)).backward();
    for (std::size_t i = 0; i < 5; ++i) CHECK(a.grad()[i] == b.data()[i]);
}

TEST_CASE("every differentiable op matches finite differences over 20 seeds") {
    using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
    const std::vector<std::pair<const char*, Fn>> cases{
        {"add", [](const auto& in) { return sum(mul(add(in[0], in[1]), in[0])); }},
        {"sub broadcast", [](const auto& in) { return sum(mul(sub(in[0], in[2]), in[0])); }},
        {"div", [](const auto& in) { return sum(div(in[0], add_scalar(mul(in[1], in[1]), 1.0))); }},
        {"relu", [](const auto& in) { return sum(mul(relu(in[0]), in[1])); }},
        {"softplus", [](const auto& in) { return sum(mul(softplus(in[0]), in[1])); }},
        {"exp log sqrt", [](const auto& in) { return sum(log(add_scalar(sqrt(add_scalar(exp(in[0]), 1.0)), 0.5))); }},
        {"sin cos", [](const auto& in) { return sum(mul(sin(in[0]), cos(in[1]))); }},
        {"matmul",
         [](const auto& in) {
             Tensor m = matmul(in[0], transpose(in[1], 0, 1));
             return sum(mul(m, m));
         }},
        {"linear",
         [](const auto& in) {
             Tensor y = linear(in[0], transpose(in[1], 0, 1), reshape(in[2], {3}));
             return sum(mul(y, y));
         }},
        {"mean max", [](const auto& in) { return add(mean(mul(in[0], in[1])), sum(max(in[1], 0))); }},
        {"softmax", [](const auto& in) { return sum(mul(softmax(in[0], -1), in[1])); }},
        {"log_softmax", [](const auto& in) { return sum(mul(log_softmax(in[0], 0), in[1])); }},
        {"layer_norm", [](const auto& in) { return sum(mul(layer_norm(in[0], -1), in[1])); }},
        {"shape ops",
         [](const auto& in) {
             Tensor p = permute(reshape(in[0], {3, 2, 2}), {2, 0, 1});
             Tensor c = concat({narrow(in[1], 0, 1, 2), index_select(in[0], 0, {2, 0})}, 0);
             return add(sum(mul(p, p)), add(sum(mul(c, c)), sum(exp(gather_last(in[1], {0, 1, 2})))));
         }},
    };
    for (const auto& [name, fn] : cases) {
        CAPTURE(name);
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            Rng rng(seed);
            // 3x4, 3x4, 3x1; the relu input avoids the kink at 0.
            check_gradients(fn, {oracle::random_tensor({3, 4}, rng, 1.0, true),
                                 oracle::random_tensor({3, 4}, rng, 1.0, true),
                                 oracle::random_tensor({3, 1}, rng, 1.0, true)});
        }
    }
}

TEST_CASE("composite MLP loss matches finite differences") {
    Rng rng(77);
    Mlp mlp = Mlp::init({4, 6, 3}, rng);
    Tensor x = oracle::random_tensor({5, 4}, rng, 1.0, true);
    ParamList params;
    mlp.collect("mlp", params);
    std::vector<Tensor> inputs{x};
    for (auto& [name, t] : params) inputs.push_back(t);
    check_gradients([&](const std::vector<Tensor>&) { return mean(mul(mlp(x), mlp(x))); }, inputs);
}

TEST_CASE("linear init follows the fan-in bound") {
    Rng rng(5);
    Linear l = Linear::init(16, 8, rng);
    for (double w : l.weight.data()) CHECK(std::abs(w) <= 0.25);
    for (double b : l.bias.data()) CHECK(b == 0.0);
    Rng again(5);
    CHECK(Linear::init(16, 8, again).weight.values() == l.weight.values());
}

TEST_CASE("sgd examples") {
    Tensor p({2}, {1.0, -2.0}, true);
    Sgd zero_lr({p}, 0.0, 0.9);
    sum(mul(p, p)).backward();
    zero_lr.step();
    check_values(p, {1.0, -2.0});
    CHECK_FALSE(p.has_grad());

    Sgd plain({p}, 0.1);
    sum(scale(p, 3.0)).backward();
    plain.step();
    check_values(p, {0.7, -2.3}, 1e-15);

    CHECK_THROWS(plain.step());
}

TEST_CASE("sgd momentum matches the hand-unrolled recurrence") {
    // loss = sum(p^2): g = 2p. v1 = g0, p1 = p0 - lr v1; v2 = 0.9 v1 + g1, p2 = p1 - lr v2.
    const double lr = 0.05, mu = 0.9, p0 = 1.5;
    Tensor p({1}, {p0}, true);
    Sgd opt({p}, lr, mu);
    for (int i = 0; i < 2; ++i) {
        sum(mul(p, p)).backward();
        opt.step();
    }
    const double v1 = 2 * p0, p1 = p0 - lr * v1;
    const double v2 = mu * v1 + 2 * p1, p2 = p1 - lr * v2;
    CHECK(p.item() == doctest::Approx(p2).epsilon(1e-15));
}

TEST_CASE("adam first step moves each entry by lr against its gradient sign") {
    Tensor p({3}, {1.0, -1.0, 0.5}, true);
    Adam opt({p}, 0.01);
    sum(mul(p, Tensor({3}, {2.0, -3.0, 0.25}))).backward();
    opt.step();
    check_values(p, {0.99, -0.99, 0.49}, 1e-9);
}

TEST_CASE("rng streams are reproducible") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        if (i == 0) CHECK(x != c.next_u64());
    }
    Rng u(9);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        CHECK(u.below(7) < 7);
    }
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
}

TEST_CASE("checkpoint round trip and version check") {
    Rng rng(6);
    ParamList params{{"a.weight", oracle::random_tensor({2, 3}, rng)}, {"b", oracle::random_tensor({4}, rng)}};
    std::stringstream ss;
    write_checkpoint(ss, params);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 6) == std::string("TRL3D\0", 6));

    std::stringstream in(bytes);
    const ParamList back = read_checkpoint(in);
    REQUIRE(back.size() == 2);
    CHECK(back[0].first == "a.weight");
    CHECK(back[0].second.shape() == Shape{2, 3});
    CHECK(back[1].second.values() == params[1].second.values());

    std::string wrong = bytes;
    wrong[6] = 9;  // version field
    std::stringstream bad(wrong);
    CHECK_THROWS_AS(read_checkpoint(bad), CheckpointError);

    std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(read_checkpoint(truncated), CheckpointError);

    ParamList dst{{"a.weight", Tensor({2, 3})}, {"b", Tensor({4})}};
    assign_parameters(dst, back);
    CHECK(dst[0].second.values() == params[0].second.values());
    ParamList mismatched{{"b", Tensor({5})}};
    CHECK_THROWS(assign_parameters(mismatched, back));
}
