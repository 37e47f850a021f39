#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "trl3d/core/ops.hpp"
#include "trl3d/layer.hpp"

using namespace trl3d;

namespace {

LayerConfig small_config(std::size_t m = 8) {
    LayerConfig cfg;
    cfg.embed_dim = m;
    cfg.stem_hidden = 5;
    return cfg;
}

void fill(const ParamList& params, const std::function<double()>& value) {
    for (const auto& [name, t] : params) {
        Tensor handle = t;
        for (auto& x : handle.mutable_data()) x = value();
    }
}

bool same_values(const Tensor& a, const Tensor& b, double tol = 0.0) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (std::abs(a.data()[i] - b.data()[i]) > tol) return false;
    }
    return true;
}

// Rows of a [N, m] tensor in the order given by `order`.
Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& order) { return index_select(t, 0, order); }

}  // namespace

TEST_CASE("layer config validation") {
    LayerConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.embed_dim = 3;
    CHECK_THROWS(cfg.validate());
    cfg = small_config();
    cfg.stem_hidden = 2;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("parameter count at the reference width") {
    LayerConfig cfg;
    cfg.embed_dim = 192;
    cfg.stem_hidden = 32;
    // depth 2 affine layers, stem m-m-m-32-32, two 32->3 heads, embedding 3-m-m.
    const std::size_t m = 192, h = 32;
    const std::size_t depth = (m * m + m) + (m + 1);
    const std::size_t stem = 2 * (m * m + m) + (m * h + h) + (h * h + h);
    const std::size_t heads = 2 * (h * 3 + 3);
    const std::size_t embed = (3 * m + m) + (m * m + m);
    CHECK(depth + stem + heads + embed == 156615);
    CHECK(layer_parameter_count(cfg) == 156615);
    Rng rng(1);
    CHECK(count_parameters(LayerParams::init(cfg, rng).parameters()) == 156615);

    for (auto coord : {CoordMode::depth, CoordMode::direct_xyz}) {
        for (auto fusion : {FusionMode::embedding, FusionMode::concat}) {
            LayerConfig c = small_config();
            c.coord_mode = coord;
            c.fusion_mode = fusion;
            Rng r(2);
            CHECK(count_parameters(LayerParams::init(c, r).parameters()) == layer_parameter_count(c));
        }
    }
}

TEST_CASE("parameter names carry the trl3d prefix") {
    Rng rng(3);
    for (const auto& [name, t] : LayerParams::init(small_config(), rng).parameters()) {
        CHECK(name.rfind("trl3d.", 0) == 0);
    }
}

TEST_CASE("zero weights give depth equal to the output bias") {
    const LayerConfig cfg = small_config();
    Rng rng(4);
    LayerParams p = LayerParams::init(cfg, rng);
    fill(p.parameters(), [] { return 0.0; });
    Tensor(p.coords.layers.back().bias).mutable_data()[0] = 1.75;
    const Tensor depth = estimate_pseudo_depth(oracle::random_tensor({6, 8}, rng), p);
    REQUIRE(depth.shape() == Shape{6});
    for (double d : depth.data()) CHECK(d == 1.75);

    const CameraEstimate cam = estimate_camera(oracle::random_tensor({6, 8}, rng), p);
    const auto ext = cam.extrinsics();
    REQUIRE(ext.size() == 1);
    CHECK((ext[0].rotation - Mat3::Identity()).norm() == 0.0);
    Tensor(p.trans_head->bias).mutable_data()[1] = -0.5;
    const auto shifted = estimate_camera(oracle::random_tensor({6, 8}, rng), p).extrinsics();
    CHECK(shifted[0].translation.isApprox(Eigen::Vector3d(0, -0.5, 0)));
}

TEST_CASE("depth is permutation-equivariant and the camera permutation-invariant") {
    const LayerConfig cfg = small_config();
    Rng rng(5);
    const LayerParams p = LayerParams::init(cfg, rng);
    const Tensor tokens = oracle::random_tensor({7, 8}, rng);
    const std::vector<std::size_t> order{3, 0, 6, 1, 5, 2, 4};
    const Tensor depth = estimate_pseudo_depth(tokens, p);
    const Tensor permuted = estimate_pseudo_depth(permute_rows(tokens, order), p);
    for (std::size_t i = 0; i < order.size(); ++i) CHECK(permuted.data()[i] == depth.data()[order[i]]);

    const CameraEstimate a = estimate_camera(tokens, p);
    const CameraEstimate b = estimate_camera(permute_rows(tokens, order), p);
    CHECK(same_values(a.rotation, b.rotation, 1e-12));
    CHECK(same_values(a.translation, b.translation, 1e-12));
}

TEST_CASE("estimated rotations are always valid") {
    LayerConfig cfg = small_config();
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        LayerParams p = LayerParams::init(cfg, rng);
        fill(p.parameters(), [&] { return rng.uniform(-3.0, 3.0); });
        for (const auto& ext : estimate_camera(oracle::random_tensor({3, 5, 8}, rng, 5.0), p).extrinsics()) {
            CHECK(ext.is_valid());
        }
    }
}

TEST_CASE("forward_image: identity at init, shape and CLS preservation") {
    Rng rng(7);
    const PatchGrid grid = make_patch_grid(2, 3);
    for (auto coord : {CoordMode::depth, CoordMode::direct_xyz}) {
        for (auto fusion : {FusionMode::embedding, FusionMode::concat}) {
            LayerConfig cfg = small_config();
            cfg.coord_mode = coord;
            cfg.fusion_mode = fusion;
            const LayerParams p = LayerParams::init(cfg, rng);
            for (const Shape& shape : {Shape{7, 8}, Shape{3, 7, 8}}) {
                const Tensor tokens = oracle::random_tensor(shape, rng);
                const LayerOutput out = forward_image(tokens, grid, cfg, p);
                CHECK(out.tokens.shape() == tokens.shape());
                const std::size_t batches = shape.size() == 3 ? shape[0] : 1;
                for (std::size_t b = 0; b < batches; ++b) {
                    for (std::size_t c = 0; c < 8; ++c) {
                        CHECK(out.tokens.data()[b * 56 + c] == tokens.data()[b * 56 + c]);
                    }
                }
                if (fusion == FusionMode::embedding) CHECK(same_values(out.tokens, tokens));
                CHECK(out.camera.has_value() == (coord == CoordMode::depth));
                CHECK(out.pseudo_depth.defined() == (coord == CoordMode::depth));
            }
        }
    }
    LayerConfig cfg = small_config();
    const LayerParams p = LayerParams::init(cfg, rng);
    CHECK_THROWS(forward_image(Tensor({6, 8}), grid, cfg, p));
    CHECK_THROWS(forward_image(Tensor({7, 9}), grid, cfg, p));
}

TEST_CASE("centre token with identity camera and depth 2 lands at (0, 0, 2)") {
    const LayerConfig cfg = small_config();
    Rng rng(8);
    LayerParams p = LayerParams::init(cfg, rng);
    fill(p.parameters(), [] { return 0.0; });
    Tensor(p.coords.layers.back().bias).mutable_data()[0] = 2.0;
    const PatchGrid grid = make_patch_grid(3, 3);
    const LayerOutput out = forward_image(oracle::random_tensor({10, 8}, rng), grid, cfg, p);
    REQUIRE(out.world.shape() == Shape{9, 3});
    CHECK(out.world.data()[3 * 4 + 0] == 0.0);
    CHECK(out.world.data()[3 * 4 + 1] == 0.0);
    CHECK(out.world.data()[3 * 4 + 2] == 2.0);
    // A corner token follows the pinhole model: (u*d/c, v*d/c, d).
    CHECK(out.world.data()[0] == doctest::Approx(grid.u[0] * 2.0));
    CHECK(out.world.data()[1] == doctest::Approx(grid.v[0] * 2.0));
}

TEST_CASE("video strategies") {
    Rng rng(9);
    const PatchGrid grid = make_patch_grid(2, 2);
    LayerConfig dt = small_config();
    LayerConfig jt = dt;
    jt.video_strategy = VideoStrategy::joint;
    LayerParams p = LayerParams::init(dt, rng);
    fill(p.parameters(), [&] { return rng.uniform(-0.5, 0.5); });

    const Tensor one = oracle::random_tensor({1, 5, 8}, rng);
    const LayerOutput a = forward_video(one, grid, dt, p), b = forward_video(one, grid, jt, p);
    CHECK(same_values(a.tokens, b.tokens, 1e-12));

    const Tensor frame = oracle::random_tensor({1, 5, 8}, rng);
    const Tensor twice = concat({frame, frame}, 0);
    const LayerOutput d2 = forward_video(twice, grid, dt, p), j2 = forward_video(twice, grid, jt, p);
    CHECK(same_values(d2.tokens, j2.tokens, 1e-12));
    CHECK(d2.extrinsics().size() == 2);
    CHECK(j2.extrinsics().size() == 1);

    const Tensor distinct = oracle::random_tensor({2, 5, 8}, rng);
    const auto cams = forward_video(distinct, grid, dt, p).extrinsics();
    REQUIRE(cams.size() == 2);
    CHECK((cams[0].rotation - cams[1].rotation).norm() > 1e-6);
}

TEST_CASE("layer gradients match finite differences") {
    const PatchGrid grid = make_patch_grid(2, 2);
    for (auto coord : {CoordMode::depth, CoordMode::direct_xyz}) {
        for (auto fusion : {FusionMode::embedding, FusionMode::concat}) {
            LayerConfig cfg = small_config();
            cfg.coord_mode = coord;
            cfg.fusion_mode = fusion;
            Rng rng(10);
            LayerParams p = LayerParams::init(cfg, rng);
            fill(p.parameters(), [&] { return rng.uniform(-0.6, 0.6); });
            Tensor tokens = oracle::random_tensor({5, 8}, rng, 1.0, true);
            const Tensor weights = oracle::random_tensor({5, 8}, rng);
            auto loss = [&] { return sum(mul(forward_image(tokens, grid, cfg, p).tokens, weights)); };

            std::vector<std::pair<std::string, Tensor>> inputs = p.parameters();
            inputs.push_back({"tokens", tokens});
            for (auto& [name, t] : inputs) t.zero_grad();
            loss().backward();

            NoGradGuard guard;
            ActivationPatternRecorder recorder;
            loss();
            const auto base = recorder.fingerprint();
            std::size_t checked = 0;
            for (auto& [name, t] : inputs) {
                CAPTURE(name);
                REQUIRE(t.has_grad());
                const std::vector<double> g(t.grad().begin(), t.grad().end());
                for (std::size_t i = 0; i < t.numel(); ++i) {
                    bool smooth = true;
                    const double fd = oracle::central_difference(
                        [&] {
                            recorder.reset();
                            const double v = loss().item();
                            smooth = smooth && recorder.fingerprint() == base;
                            return v;
                        },
                        t, i, 1e-6);
                    if (!smooth) continue;  // the probe crossed a relu kink
                    ++checked;
                    CHECK(oracle::relative_error(g[i], fd, 1e-6) < 1e-4);
                }
            }
            CHECK(checked > 0);
        }
    }
}

TEST_CASE("activation pattern recorder tracks relu signs only") {
    Tensor x({4}, {-1.0, 0.5, 2.0, -3.0});
    ActivationPatternRecorder rec;
    relu(x);
    const auto base = rec.fingerprint();
    rec.reset();
    relu(Tensor({4}, {-2.0, 0.1, 9.0, -0.1}));
    CHECK(rec.fingerprint() == base);
    rec.reset();
    relu(Tensor({4}, {1.0, 0.5, 2.0, -3.0}));
    CHECK(rec.fingerprint() != base);
    rec.reset();
    softplus(x);
    CHECK(rec.fingerprint() == 0);
}
