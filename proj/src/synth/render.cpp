#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "trl3d/synthdata.hpp"

namespace trl3d {

namespace {

constexpr double kNearPlane = 1e-6;
// Points at this depth keep their full intensity; farther ones dim as 1/z.
constexpr double kReferenceDepth = 4.0;

}  // namespace

ViewSample render_view(const Scene& scene, const CameraExtrinsics& ext, const RenderSpec& spec) {
    const std::size_t h = spec.height, w = spec.width, ps = spec.patch;
    if (h == 0 || w == 0 || ps == 0 || h % ps != 0 || w % ps != 0) {
        throw std::invalid_argument("render_view: image " + std::to_string(h) + "x" + std::to_string(w) +
                                    " is not tiled by patch " + std::to_string(ps));
    }
    if (scene.points.empty() || scene.points.size() != scene.intensity.size()) {
        throw std::invalid_argument("render_view: scene needs points with one intensity each");
    }
    spec.intrinsics.validate();
    const std::size_t rows = h / ps, cols = w / ps;
    const double half = static_cast<double>(std::max(h, w)) / 2.0;

    std::vector<double> image(h * w, 0.0);
    std::vector<double> depth_sum(rows * cols, 0.0);
    std::vector<std::size_t> depth_count(rows * cols, 0);
    std::size_t in_front = 0;

    for (std::size_t i = 0; i < scene.points.size(); ++i) {
        const Point3 pc = world_to_camera(scene.points[i], ext);
        if (!(pc.z() > kNearPlane)) continue;
        ++in_front;
        const ImagePoint ip = project(pc, spec.intrinsics);
        const double x = ip.u * half + static_cast<double>(w) / 2.0;
        const double y = ip.v * half + static_cast<double>(h) / 2.0;
        if (!(x >= 0.0 && x < static_cast<double>(w) && y >= 0.0 && y < static_cast<double>(h))) continue;

        const auto col = static_cast<std::size_t>(x);
        const auto row = static_cast<std::size_t>(y);
        const std::size_t patch = (row / ps) * cols + col / ps;
        depth_sum[patch] += pc.z();
        ++depth_count[patch];

        const double value = scene.intensity[i] * std::min(1.0, kReferenceDepth / pc.z());
        const double cx = x - 0.5, cy = y - 0.5;
        const double c0 = std::floor(cx), r0 = std::floor(cy);
        const double fx = cx - c0, fy = cy - r0;
        for (int dr = 0; dr < 2; ++dr) {
            for (int dc = 0; dc < 2; ++dc) {
                const double rr = r0 + dr, cc = c0 + dc;
                if (rr < 0.0 || cc < 0.0 || rr >= static_cast<double>(h) || cc >= static_cast<double>(w)) continue;
                const double wgt = (dr ? fy : 1.0 - fy) * (dc ? fx : 1.0 - fx);
                image[static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)] += wgt * value;
            }
        }
    }
    if (2 * in_front < scene.points.size()) {
        throw std::domain_error("render_view: only " + std::to_string(in_front) + " of " +
                                std::to_string(scene.points.size()) + " points are in front of the camera");
    }
    for (auto& p : image) p = std::min(1.0, p);
    std::vector<double> depth(rows * cols, std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < depth.size(); ++k) {
        if (depth_count[k]) depth[k] = depth_sum[k] / static_cast<double>(depth_count[k]);
    }

    ViewSample out;
    out.image = Tensor({h, w, 1}, std::move(image));
    out.gt_depth = Tensor({rows, cols}, std::move(depth));
    out.extrinsics = ext;
    out.class_id = scene.class_id;
    return out;
}

AlignmentPair generate_alignment_pair(const SceneScript& script, const CameraExtrinsics& cam_a,
                                      const std::vector<CameraExtrinsics>& cam_b, std::size_t frames,
                                      const RenderSpec& spec) {
    if (frames < 2) throw std::invalid_argument("generate_alignment_pair: need at least 2 frames");
    if (cam_b.size() != frames) {
        throw std::invalid_argument("generate_alignment_pair: moving camera has " + std::to_string(cam_b.size()) +
                                    " poses for " + std::to_string(frames) + " frames");
    }
    AlignmentPair pair;
    for (std::size_t t = 0; t < frames; ++t) {
        const Scene world = script.at(static_cast<double>(t) / static_cast<double>(frames - 1));
        pair.a.push_back(render_view(world, cam_a, spec));
        pair.b.push_back(render_view(world, cam_b[t], spec));
    }
    return pair;
}

}  // namespace trl3d
