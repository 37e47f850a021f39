#include <cmath>

#include <Eigen/Core>

#include "doctest.h"
#include "oracles.hpp"
#include "trl3d/core/ops.hpp"
#include "trl3d/losses.hpp"

using namespace trl3d;

namespace {

Tensor from_rows(const std::vector<std::vector<double>>& rows) {
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor({rows.size(), rows[0].size()}, flat);
}

double squared_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    const std::size_t m = a.shape()[1];
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double d = a.data()[i * m + k] - b.data()[j * m + k];
        s += d * d;
    }
    return s;
}

}  // namespace

TEST_CASE("cross entropy examples") {
    CHECK(cross_entropy(Tensor({10}, 0.0), 3).item() == doctest::Approx(std::log(10.0)).epsilon(1e-15));
    CHECK(cross_entropy(Tensor({3}, {0.0, 60.0, 0.0}), 1).item() < 1e-25);
    CHECK_THROWS_AS(cross_entropy(Tensor({3}), 3), std::out_of_range);
    CHECK_THROWS(cross_entropy(Tensor({2, 3}), std::vector<std::size_t>{0}));
}

TEST_CASE("cross entropy gradient is softmax minus one-hot") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor logits = oracle::random_tensor({6}, rng, 3.0, true);
        const std::size_t label = rng.below(6);
        cross_entropy(logits, label).backward();
        const Tensor p = softmax(logits.detach(), 0);
        for (std::size_t k = 0; k < 6; ++k) {
            const double expected = p.data()[k] - (k == label ? 1.0 : 0.0);
            CHECK(logits.grad()[k] == doctest::Approx(expected).epsilon(1e-12));
            const double fd = oracle::central_difference([&] { return cross_entropy(logits, label).item(); }, logits, k, 1e-6);
            CHECK(oracle::relative_error(expected, fd, 1e-6) < 1e-4);
        }
    }
}

TEST_CASE("triplet sampling respects the windows") {
    TcnConfig cfg;
    cfg.positive_window = 3;
    cfg.negatives_per_anchor = 2;
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t frames = 8 + rng.below(20);
        const auto triplets = sample_triplets(frames, cfg, rng);
        CHECK(triplets.size() == 2 * frames);
        for (const auto& t : triplets) {
            const auto gap = [](std::size_t a, std::size_t b) { return a > b ? a - b : b - a; };
            CHECK(t.positive < frames);
            CHECK(t.negative < frames);
            CHECK(gap(t.anchor, t.positive) <= 3);
            CHECK(gap(t.anchor, t.negative) > 3);
        }
    }
    CHECK_THROWS(sample_triplets(7, cfg, rng));
    Rng a(9), b(9);
    const auto ta = sample_triplets(12, cfg, a), tb = sample_triplets(12, cfg, b);
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].negative == tb[i].negative);
    cfg.margin = 0.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("tcn hinge cases") {
    TcnConfig cfg;
    cfg.positive_window = 1;
    cfg.margin = 0.2;
    // Four frames far apart on a line: every negative is at least 4 away, positive at most 1.
    const Tensor spread = from_rows({{0.0}, {2.0}, {4.0}, {6.0}});
    Rng rng(3);
    CHECK(tcn_loss(spread, spread, cfg, rng).item() == 0.0);

    // Anchor equidistant from positive and negative: the hinge equals the margin.
    const Tensor anchors = from_rows({{0.0, 0.0}, {5.0, 5.0}});
    const Tensor others = from_rows({{1.0, 0.0}, {0.0, 1.0}});
    CHECK(triplet_loss(anchors, others, {{0, 0, 1}}, 0.2).item() == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("tcn on a hand-built four-frame pair") {
    TcnConfig cfg;
    cfg.positive_window = 1;
    cfg.margin = 0.5;
    const Tensor a = from_rows({{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}});
    const Tensor b = from_rows({{0.1, 0.0}, {0.5, 0.5}, {1.0, 0.8}, {0.3, 1.0}});
    Rng draw(17), replay(17);
    const auto triplets = sample_triplets(4, cfg, replay);
    double expected = 0.0;
    for (const auto& t : triplets) {
        expected += std::max(0.0, squared_distance(a, t.anchor, b, t.positive) -
                                      squared_distance(a, t.anchor, b, t.negative) + cfg.margin);
    }
    expected /= static_cast<double>(triplets.size());
    CHECK(tcn_loss(a, b, cfg, draw).item() == doctest::Approx(expected).epsilon(1e-15));
    CHECK(draw.counter() == replay.counter());
}

TEST_CASE("tcn loss is non-negative and orthogonally invariant") {
    TcnConfig cfg;
    cfg.positive_window = 2;
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = oracle::random_tensor({9, 3}, rng), b = oracle::random_tensor({9, 3}, rng);
        const Eigen::Matrix3d q = oracle::random_orthogonal(rng, trial % 2 == 1);
        Tensor qt({3, 3});
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) qt.mutable_data()[3 * i + j] = q(i, j);
        }
        Rng r1(trial), r2(trial);
        const double plain = tcn_loss(a, b, cfg, r1).item();
        const double rotated = tcn_loss(matmul(a, qt), matmul(b, qt), cfg, r2).item();
        CHECK(plain >= 0.0);
        CHECK(rotated == doctest::Approx(plain).epsilon(1e-12));
    }
}

TEST_CASE("tcn gradients on a six-frame pair") {
    TcnConfig cfg;
    cfg.positive_window = 1;
    cfg.margin = 2.0;  // keeps every hinge active, away from its kink
    Rng rng(5);
    Tensor a = oracle::random_tensor({6, 4}, rng, 0.5, true), b = oracle::random_tensor({6, 4}, rng, 0.5, true);
    auto loss = [&] {
        Rng fixed(99);
        return tcn_loss(a, b, cfg, fixed);
    };
    loss().backward();
    for (Tensor* t : {&a, &b}) {
        const std::vector<double> g(t->grad().begin(), t->grad().end());
        for (std::size_t i = 0; i < t->numel(); ++i) {
            const double fd = oracle::central_difference([&] { return loss().item(); }, *t, i, 1e-6);
            CHECK(oracle::relative_error(g[i], fd, 1e-6) < 1e-4);
        }
    }
    CHECK_THROWS(tcn_loss(oracle::random_tensor({6, 4}, rng), oracle::random_tensor({5, 4}, rng), cfg, rng));
}
