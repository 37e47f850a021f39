#include <cmath>
#include <stdexcept>

#include "trl3d/core/ops.hpp"
#include "trl3d/geometry.hpp"

namespace trl3d {

namespace {

// Rotation entries and their partials with respect to yaw, pitch and roll.
struct EulerJacobian {
    double r[9], dy[9], dp[9], dr[9];
};

EulerJacobian euler_jacobian(double yaw, double pitch, double roll) {
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    const double cr = std::cos(roll), sr = std::sin(roll);
    return EulerJacobian{
        {cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,  //
         sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,  //
         -sp, cp * sr, cp * cr},
        {-sy * cp, -sy * sp * sr - cy * cr, -sy * sp * cr + cy * sr,  //
         cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,     //
         0.0, 0.0, 0.0},
        {-cy * sp, cy * cp * sr, cy * cp * cr,  //
         -sy * sp, sy * cp * sr, sy * cp * cr,  //
         -cp, -sp * sr, -sp * cr},
        {0.0, cy * sp * cr + sy * sr, -cy * sp * sr + sy * cr,  //
         0.0, sy * sp * cr - cy * sr, -sy * sp * sr - cy * cr,  //
         0.0, cp * cr, -cp * sr},
    };
}

}  // namespace

Tensor rotation_from_euler(const Tensor& angles) {
    if (angles.rank() == 0 || angles.shape().back() != 3) {
        throw std::invalid_argument("rotation_from_euler: expected [..., 3], got " + shape_string(angles.shape()));
    }
    const std::size_t n = angles.numel() / 3;
    auto a = angles.data();
    std::vector<double> y(n * 9);
    for (std::size_t k = 0; k < n; ++k) {
        const Mat3 r = euler_to_rotation({a[3 * k], a[3 * k + 1], a[3 * k + 2]});
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) y[9 * k + 3 * i + j] = r(i, j);
        }
    }
    Shape out = angles.shape();
    out.back() = 3;
    out.push_back(3);
    auto na = angles.node();
    return detail::make_result(std::move(out), std::move(y), {angles}, [na, n](const std::vector<double>& g) {
        double* ga = na->grad_buffer();
        const auto& a = na->data;
        for (std::size_t k = 0; k < n; ++k) {
            const EulerJacobian jac = euler_jacobian(a[3 * k], a[3 * k + 1], a[3 * k + 2]);
            double sy = 0.0, sp = 0.0, sr = 0.0;
            for (int e = 0; e < 9; ++e) {
                const double ge = g[9 * k + e];
                sy += ge * jac.dy[e];
                sp += ge * jac.dp[e];
                sr += ge * jac.dr[e];
            }
            ga[3 * k] += sy;
            ga[3 * k + 1] += sp;
            ga[3 * k + 2] += sr;
        }
    });
}

Tensor uvd_to_camera(const Tensor& depth, const PatchGrid& grid) {
    if (depth.rank() == 0 || depth.shape().back() != grid.size()) {
        throw std::invalid_argument("uvd_to_camera: depth " + shape_string(depth.shape()) + " does not match a grid of " +
                                    std::to_string(grid.size()) + " tokens");
    }
    const auto& k = grid.intrinsics;
    std::vector<double> coeff(grid.size() * 3);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        coeff[3 * i] = (grid.u[i] - k.u0) / k.focal;
        coeff[3 * i + 1] = (grid.v[i] - k.v0) / k.focal;
        coeff[3 * i + 2] = 1.0;
    }
    Shape col = depth.shape();
    col.push_back(1);
    return mul(reshape(depth, col), Tensor({grid.size(), 3}, std::move(coeff)));
}

Tensor camera_to_world(const Tensor& points, const Tensor& rotation, const Tensor& translation) {
    if (points.rank() < 2 || points.shape().back() != 3 || rotation.rank() < 2 || translation.rank() < 1 ||
        translation.shape().back() != 3) {
        throw std::invalid_argument("camera_to_world: expected points [...,N,3], R [...,3,3], t [...,3]; got " +
                                    shape_string(points.shape()) + ", " + shape_string(rotation.shape()) + ", " +
                                    shape_string(translation.shape()));
    }
    // Row form of R^T (p + t) is (p + t)^T R.
    Shape tshape = translation.shape();
    tshape.insert(tshape.end() - 1, 1);
    return matmul(add(points, reshape(translation, tshape)), rotation);
}

}  // namespace trl3d
