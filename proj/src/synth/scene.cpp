#include <cmath>
#include <stdexcept>
#include <string>

#include "trl3d/synthdata.hpp"

namespace trl3d {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::size_t kShapePoints = 40;
constexpr double kMaxTilt = 0.6;
constexpr double kBackdropIntensity = 0.35;

double compute_extent(const std::vector<Point3>& pts) {
    double e = 0.0;
    for (const auto& p : pts) e = std::max(e, p.norm());
    return e;
}

void add_segment(std::vector<Point3>& pts, const Point3& a, const Point3& b, std::size_t n, double jitter, Rng& rng) {
    for (std::size_t i = 0; i < n; ++i) {
        const double s = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        const Point3 j(rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter));
        pts.push_back(a + s * (b - a) + j);
    }
}

}  // namespace

const char* shape_class_name(std::size_t class_id) {
    switch (class_id) {
        case 0: return "line";
        case 1: return "ring";
        case 2: return "cross";
        case 3: return "blob_pair";
        default: throw std::out_of_range("unknown shape class " + std::to_string(class_id));
    }
}

Scene generate_scene(std::size_t class_id, Rng& rng) {
    shape_class_name(class_id);
    Scene s;
    s.class_id = class_id;
    std::vector<Point3> pts;
    switch (static_cast<ShapeClass>(class_id)) {
        case ShapeClass::line:
            add_segment(pts, Point3(-1.0, 0.0, 0.0), Point3(1.0, 0.0, 0.0), kShapePoints, 0.02, rng);
            break;
        case ShapeClass::ring:
            for (std::size_t i = 0; i < kShapePoints; ++i) {
                const double a = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(kShapePoints);
                const double r = kRingRadius + rng.uniform(-kRingJitter, kRingJitter);
                pts.emplace_back(r * std::cos(a), r * std::sin(a), 0.0);
            }
            break;
        case ShapeClass::cross:
            add_segment(pts, Point3(-0.8, 0.0, 0.0), Point3(0.8, 0.0, 0.0), kShapePoints / 2, 0.02, rng);
            add_segment(pts, Point3(0.0, -0.8, 0.0), Point3(0.0, 0.8, 0.0), kShapePoints / 2, 0.02, rng);
            break;
        case ShapeClass::blob_pair:
            for (std::size_t i = 0; i < kShapePoints; ++i) {
                const double cx = i < kShapePoints / 2 ? -0.7 : 0.7;
                pts.emplace_back(cx + 0.12 * rng.normal(), 0.12 * rng.normal(), 0.12 * rng.normal());
            }
            break;
    }
    // Random yaw and a bounded tilt keep shapes recognisable but never axis-aligned.
    const double yaw = rng.uniform(0.0, 2.0 * kPi);
    const double pitch = rng.uniform(-kMaxTilt, kMaxTilt);
    const double roll = rng.uniform(-kMaxTilt, kMaxTilt);
    const Mat3 r = euler_to_rotation({yaw, pitch, roll});
    for (auto& p : pts) {
        s.points.push_back(r * p);
        s.intensity.push_back(rng.uniform(0.7, 1.0));
    }
    s.extent = compute_extent(s.points);
    return s;
}

Scene ground_backdrop(double half_width, double spacing, double height) {
    if (!(spacing > 0.0) || !(half_width > 0.0)) throw std::invalid_argument("ground_backdrop: bad grid");
    Scene s;
    s.class_id = 0;
    const long steps = static_cast<long>(std::floor(half_width / spacing + 1e-9));
    for (long i = -steps; i <= steps; ++i) {
        for (long j = -steps; j <= steps; ++j) {
            s.points.emplace_back(static_cast<double>(i) * spacing, static_cast<double>(j) * spacing, height);
            s.intensity.push_back(kBackdropIntensity);
        }
    }
    s.extent = compute_extent(s.points);
    return s;
}

Scene merge(const Scene& scene, const Scene& extra) {
    Scene out = scene;
    out.points.insert(out.points.end(), extra.points.begin(), extra.points.end());
    out.intensity.insert(out.intensity.end(), extra.intensity.begin(), extra.intensity.end());
    out.extent = compute_extent(out.points);
    return out;
}

Scene SceneScript::at(double s) const {
    const Mat3 spin_r = euler_to_rotation({spin * s, 0.0, 0.0});
    const Point3 centre = start + s * (end - start);
    Scene moved = object;
    for (auto& p : moved.points) p = spin_r * p + centre;
    moved.extent = compute_extent(moved.points);
    return merge(moved, backdrop);
}

}  // namespace trl3d
