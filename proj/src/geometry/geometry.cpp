#include "trl3d/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/LU>

namespace trl3d {

void CameraIntrinsics::validate() const {
    if (!(focal > 0.0) || !std::isfinite(focal)) {
        throw std::invalid_argument("intrinsics: focal length must be positive, got " + std::to_string(focal));
    }
}

Point3 CameraExtrinsics::center() const { return rotation.transpose() * translation; }

Eigen::Vector3d CameraExtrinsics::looking_at() const { return rotation.row(2).transpose(); }

bool CameraExtrinsics::is_valid(double tol) const {
    return orthonormality_error(rotation) < tol && std::abs(rotation.determinant() - 1.0) < tol;
}

Mat3 euler_to_rotation(const EulerAngles& a) {
    const double cy = std::cos(a.yaw), sy = std::sin(a.yaw);
    const double cp = std::cos(a.pitch), sp = std::sin(a.pitch);
    const double cr = std::cos(a.roll), sr = std::sin(a.roll);
    Mat3 r;
    r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,  //
        sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,   //
        -sp, cp * sr, cp * cr;
    return r;
}

double orthonormality_error(const Mat3& r) { return (r.transpose() * r - Mat3::Identity()).norm(); }

Point3 uvd_to_camera(double u, double v, double depth, const CameraIntrinsics& k) {
    return {(u - k.u0) * depth / k.focal, (v - k.v0) * depth / k.focal, depth};
}

Point3 camera_to_world(const Point3& p, const CameraExtrinsics& ext) {
    const Mat3 rt = ext.rotation.transpose();
    return rt * p + rt * ext.translation;
}

Point3 world_to_camera(const Point3& p, const CameraExtrinsics& ext) { return ext.rotation * p - ext.translation; }

ImagePoint project(const Point3& p_cam, const CameraIntrinsics& k) {
    if (!(p_cam.z() > 0.0)) throw std::domain_error("project: point is behind camera");
    return {k.focal * p_cam.x() / p_cam.z() + k.u0, k.focal * p_cam.y() / p_cam.z() + k.v0};
}

PatchGrid make_patch_grid(std::size_t rows, std::size_t cols, CameraIntrinsics k) {
    if (rows == 0 || cols == 0) {
        throw std::invalid_argument("make_patch_grid: extents must be positive, got " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    }
    k.validate();
    PatchGrid g;
    g.rows = rows;
    g.cols = cols;
    g.intrinsics = k;
    const double spacing = 2.0 / static_cast<double>(std::max(rows, cols));
    const double rc = (static_cast<double>(rows) - 1.0) / 2.0;
    const double cc = (static_cast<double>(cols) - 1.0) / 2.0;
    g.u.reserve(rows * cols);
    g.v.reserve(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            g.u.push_back((static_cast<double>(j) - cc) * spacing);
            g.v.push_back((static_cast<double>(i) - rc) * spacing);
        }
    }
    return g;
}

CameraExtrinsics look_at(const Point3& eye, const Point3& target, const Eigen::Vector3d& up) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d right = forward.cross(up);
    if (right.norm() < 1e-12) throw std::invalid_argument("look_at: up vector is parallel to the view direction");
    right.normalize();
    const Eigen::Vector3d down = forward.cross(right);
    CameraExtrinsics ext;
    ext.rotation.row(0) = right.transpose();
    ext.rotation.row(1) = down.transpose();
    ext.rotation.row(2) = forward.transpose();
    ext.translation = ext.rotation * eye;
    return ext;
}

}  // namespace trl3d
