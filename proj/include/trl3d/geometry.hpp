#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "trl3d/core/tensor.hpp"

namespace trl3d {

using Point3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics in normalised image units (image centre at the origin).
struct CameraIntrinsics {
    double focal = 1.0;
    double u0 = 0.0;
    double v0 = 0.0;

    void validate() const;
};

/// Camera pose angles in radians; unbounded.
struct EulerAngles {
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
};

/// World-to-camera pose. A world point maps into the camera frame as
/// R*p - t; the inverse (camera to world) is R^T*p + R^T*t.
struct CameraExtrinsics {
    Mat3 rotation = Mat3::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    /// Camera centre in world coordinates (image of the camera-frame origin).
    Point3 center() const;
    /// Camera +z axis expressed in the world frame (third row of R).
    Eigen::Vector3d looking_at() const;
    /// R^T R = I and det R = 1 within `tol`.
    bool is_valid(double tol = 1e-9) const;
};

struct ImagePoint {
    double u = 0.0;
    double v = 0.0;
};

/// Token-centre image coordinates in row-major token order.
struct PatchGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> u;
    std::vector<double> v;
    CameraIntrinsics intrinsics;

    std::size_t size() const { return rows * cols; }
};

/// R = Rz(yaw) * Ry(pitch) * Rx(roll).
Mat3 euler_to_rotation(const EulerAngles& angles);

/// Frobenius norm of R^T R - I.
double orthonormality_error(const Mat3& r);

Point3 uvd_to_camera(double u, double v, double depth, const CameraIntrinsics& k);
Point3 camera_to_world(const Point3& p, const CameraExtrinsics& ext);
Point3 world_to_camera(const Point3& p, const CameraExtrinsics& ext);

/// Throws std::domain_error for points at or behind the image plane (z <= 0).
ImagePoint project(const Point3& p_cam, const CameraIntrinsics& k);

/// Uniform grid of patch centres; the longer side spans [-1, 1] and the
/// shorter side uses the same spacing.
PatchGrid make_patch_grid(std::size_t rows, std::size_t cols, CameraIntrinsics k = {});

/// Camera at `eye` looking at `target`, with `up` resolving the roll.
/// Camera axes: +x right, +y down, +z forward.
CameraExtrinsics look_at(const Point3& eye, const Point3& target, const Eigen::Vector3d& up);

// ---- differentiable counterparts used inside the network ----

/// angles[..., 3] (yaw, pitch, roll) -> rotation matrices [..., 3, 3].
Tensor rotation_from_euler(const Tensor& angles);

/// depth[..., N] on `grid` -> camera-frame points [..., N, 3].
Tensor uvd_to_camera(const Tensor& depth, const PatchGrid& grid);

/// points[..., N, 3] with rotation [..., 3, 3] and translation [..., 3]
/// -> world points R^T p + R^T t, as rows.
Tensor camera_to_world(const Tensor& points, const Tensor& rotation, const Tensor& translation);

}  // namespace trl3d
