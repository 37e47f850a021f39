#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "doctest.h"
#include "oracles.hpp"
#include "trl3d/core/ops.hpp"
#include "trl3d/geometry.hpp"

using namespace trl3d;

namespace {

constexpr double kPi = std::numbers::pi;

void check_point(const Point3& got, const Point3& want, double tol = 1e-12) {
    CHECK((got - want).norm() <= tol);
}

CameraExtrinsics random_extrinsics(Rng& rng) {
    const EulerAngles e{rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi)};
    return {euler_to_rotation(e), Eigen::Vector3d(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3))};
}

}  // namespace

TEST_CASE("euler_to_rotation examples") {
    CHECK((euler_to_rotation({0, 0, 0}) - Mat3::Identity()).norm() == 0.0);
    check_point(euler_to_rotation({kPi / 2, 0, 0}) * Point3(1, 0, 0), Point3(0, 1, 0), 1e-15);
    // Composition order: yaw about z applied last.
    const EulerAngles e{0.3, -0.7, 1.1};
    const Mat3 rz = Eigen::AngleAxisd(e.yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    const Mat3 ry = Eigen::AngleAxisd(e.pitch, Eigen::Vector3d::UnitY()).toRotationMatrix();
    const Mat3 rx = Eigen::AngleAxisd(e.roll, Eigen::Vector3d::UnitX()).toRotationMatrix();
    CHECK((euler_to_rotation(e) - rz * ry * rx).norm() < 1e-15);
}

TEST_CASE("rotations stay in SO(3)") {
    Rng rng(21);
    for (int i = 0; i < 1000; ++i) {
        const Mat3 r = euler_to_rotation({rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)});
        CHECK(orthonormality_error(r) < 1e-9);
        CHECK(std::abs(r.determinant() - 1.0) < 1e-9);
        CHECK(CameraExtrinsics{r, Eigen::Vector3d::Zero()}.is_valid());
    }
    CHECK_FALSE(CameraExtrinsics{2.0 * Mat3::Identity(), Eigen::Vector3d::Zero()}.is_valid());
}

TEST_CASE("uvd_to_camera examples") {
    check_point(uvd_to_camera(0, 0, 5, {1.0}), {0, 0, 5});
    check_point(uvd_to_camera(0.5, -0.5, 2, {1.0}), {1, -1, 2});
    check_point(uvd_to_camera(0.5, -0.5, 2, {2.0}), {0.5, -0.5, 2});
    // Non-positive depth passes through.
    check_point(uvd_to_camera(0.5, 0.5, -2, {1.0}), {-1, -1, -2});
}

TEST_CASE("camera_to_world and world_to_camera") {
    CameraExtrinsics identity;
    check_point(camera_to_world({1, 2, 3}, identity), {1, 2, 3});
    check_point(world_to_camera({1, 2, 3}, identity), {1, 2, 3});
    CameraExtrinsics shifted{Mat3::Identity(), Eigen::Vector3d(1, 0, 0)};
    check_point(camera_to_world({0, 0, 0}, shifted), {1, 0, 0});
    CameraExtrinsics half_turn{euler_to_rotation({kPi, 0, 0}), Eigen::Vector3d::Zero()};
    check_point(world_to_camera({1, 0, 0}, half_turn), {-1, 0, 0}, 1e-15);

    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const CameraExtrinsics ext = random_extrinsics(rng);
        const Point3 p(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
        check_point(world_to_camera(camera_to_world(p, ext), ext), p, 1e-9);
        check_point(camera_to_world(world_to_camera(p, ext), ext), p, 1e-9);
        check_point(ext.center(), camera_to_world(Point3::Zero(), ext), 1e-12);
        check_point(ext.looking_at(), ext.rotation.row(2).transpose(), 0.0);
    }
}

TEST_CASE("project examples and errors") {
    const ImagePoint a = project({0, 0, 5}, {1.0});
    CHECK(a.u == 0.0);
    CHECK(a.v == 0.0);
    const ImagePoint b = project({1, -1, 2}, {1.0});
    CHECK(b.u == 0.5);
    CHECK(b.v == -0.5);
    const ImagePoint c = project({1, 1, 2}, {2.0, 0.1, -0.2});
    CHECK(c.u == doctest::Approx(1.1));
    CHECK(c.v == doctest::Approx(0.8));
    CHECK_THROWS_AS(project({0, 0, 0}, {1.0}), std::domain_error);
    CHECK_THROWS_AS(project({0, 0, -1}, {1.0}), std::domain_error);
    CHECK_THROWS(CameraIntrinsics{0.0}.validate());
}

TEST_CASE("project inverts uvd_to_camera") {
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        const CameraIntrinsics k{rng.uniform(0.1, 5.0), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
        const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1), d = rng.uniform(1e-3, 1e3);
        const ImagePoint q = project(uvd_to_camera(u, v, d, k), k);
        CHECK(std::abs(q.u - u) < 1e-12);
        CHECK(std::abs(q.v - v) < 1e-12);
    }
}

TEST_CASE("patch grid") {
    const PatchGrid one = make_patch_grid(1, 1);
    CHECK(one.size() == 1);
    CHECK(one.u[0] == 0.0);
    CHECK(one.v[0] == 0.0);

    const PatchGrid two = make_patch_grid(2, 2);
    CHECK(two.u == std::vector<double>{-0.5, 0.5, -0.5, 0.5});
    CHECK(two.v == std::vector<double>{-0.5, -0.5, 0.5, 0.5});

    const PatchGrid big = make_patch_grid(14, 14);
    REQUIRE(big.size() == 196);
    for (std::size_t r = 0; r < 14; ++r) {
        for (std::size_t c = 0; c < 14; ++c) {
            const std::size_t k = r * 14 + c;
            CHECK(big.u[k] == doctest::Approx(-1.0 + (2.0 * c + 1.0) / 14.0).epsilon(1e-14));
            CHECK(big.v[k] == doctest::Approx(-1.0 + (2.0 * r + 1.0) / 14.0).epsilon(1e-14));
            // Symmetric about the centre.
            CHECK(big.u[k] == -big.u[r * 14 + (13 - c)]);
        }
    }
    // Odd extents put a token at the origin; the shorter side keeps the spacing.
    const PatchGrid wide = make_patch_grid(3, 5);
    CHECK(wide.u[7] == 0.0);
    CHECK(wide.v[7] == 0.0);
    CHECK(wide.u[1] - wide.u[0] == doctest::Approx(0.4));
    CHECK(wide.v[5] - wide.v[0] == doctest::Approx(0.4));

    // Reversing the token order twice restores every coordinate.
    std::vector<double> u = big.u;
    std::reverse(u.begin(), u.end());
    std::reverse(u.begin(), u.end());
    CHECK(u == big.u);

    CHECK_THROWS(make_patch_grid(0, 3));
}

TEST_CASE("look_at orientation") {
    const CameraExtrinsics cam = look_at({0, -4, 0}, {0, 0, 0}, {0, 0, 1});
    CHECK(cam.is_valid());
    check_point(cam.center(), {0, -4, 0}, 1e-12);
    check_point(cam.looking_at(), {0, 1, 0}, 1e-12);
    // The target sits on the optical axis.
    const Point3 target_cam = world_to_camera({0, 0, 0}, cam);
    CHECK(std::abs(target_cam.x()) < 1e-12);
    CHECK(std::abs(target_cam.y()) < 1e-12);
    CHECK(target_cam.z() == doctest::Approx(4.0));
    // World up projects to negative image v (image rows grow downwards).
    CHECK(world_to_camera({0, 0, 1}, cam).y() < 0.0);
    CHECK_THROWS(look_at({0, 0, 4}, {0, 0, 0}, {0, 0, 1}));
}

TEST_CASE("tensor geometry agrees with the scalar functions") {
    Rng rng(31);
    std::vector<double> angles;
    for (int i = 0; i < 12; ++i) angles.push_back(rng.uniform(-3, 3));
    const Tensor rot = rotation_from_euler(Tensor({4, 3}, angles));
    REQUIRE(rot.shape() == Shape{4, 3, 3});
    for (std::size_t b = 0; b < 4; ++b) {
        const Mat3 r = euler_to_rotation({angles[3 * b], angles[3 * b + 1], angles[3 * b + 2]});
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) CHECK(std::abs(rot.data()[9 * b + 3 * i + j] - r(i, j)) < 1e-15);
        }
    }

    const PatchGrid grid = make_patch_grid(2, 3, {1.5});
    const Tensor depth = oracle::random_tensor({6}, rng, 3.0);
    const Tensor cam = uvd_to_camera(depth, grid);
    REQUIRE(cam.shape() == Shape{6, 3});
    const CameraExtrinsics ext = random_extrinsics(rng);
    Tensor r({3, 3}), t({3});
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) r.mutable_data()[3 * i + j] = ext.rotation(i, j);
        t.mutable_data()[i] = ext.translation(i);
    }
    const Tensor world = camera_to_world(cam, r, t);
    for (std::size_t n = 0; n < 6; ++n) {
        const Point3 p = uvd_to_camera(grid.u[n], grid.v[n], depth.data()[n], grid.intrinsics);
        const Point3 w = camera_to_world(p, ext);
        for (int i = 0; i < 3; ++i) {
            CHECK(std::abs(cam.data()[3 * n + i] - p(i)) < 1e-12);
            CHECK(std::abs(world.data()[3 * n + i] - w(i)) < 1e-12);
        }
    }
}

TEST_CASE("gradient through euler_to_rotation matches finite differences") {
    Rng rng(44);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor angles = oracle::random_tensor({2, 3}, rng, 3.0, true);
        const Tensor weights = oracle::random_tensor({2, 3, 3}, rng);
        auto loss = [&] { return sum(mul(rotation_from_euler(angles), weights)); };
        loss().backward();
        const std::vector<double> g(angles.grad().begin(), angles.grad().end());
        for (std::size_t i = 0; i < 6; ++i) {
            const double fd = oracle::central_difference([&] { return loss().item(); }, angles, i, 1e-6);
            CHECK(oracle::relative_error(g[i], fd, 1e-6) < 1e-4);
        }
    }
}
