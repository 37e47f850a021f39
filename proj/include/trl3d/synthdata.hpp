#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "trl3d/core/rng.hpp"
#include "trl3d/core/tensor.hpp"
#include "trl3d/geometry.hpp"

namespace trl3d {

enum class ShapeClass : std::size_t { line = 0, ring = 1, cross = 2, blob_pair = 3 };
inline constexpr std::size_t kNumShapeClasses = 4;

const char* shape_class_name(std::size_t class_id);

// Shape constants (world units).
inline constexpr double kRingRadius = 0.8;
inline constexpr double kRingJitter = 0.03;

struct Scene {
    std::size_t class_id = 0;
    std::vector<Point3> points;
    std::vector<double> intensity;  // one per point, in (0, 1]
    double extent = 0.0;            // max distance of a point from the origin
};

/// Random pose of one of the catalog shapes, centred on the origin.
Scene generate_scene(std::size_t class_id, Rng& rng);

/// Sparse ground grid on the plane z = height with a dimmer intensity.
Scene ground_backdrop(double half_width = 2.0, double spacing = 0.25, double height = -1.0);

/// `scene` plus the points of `extra`; extent is recomputed.
Scene merge(const Scene& scene, const Scene& extra);

struct ViewSample {
    Tensor image;     // [H, W, 1], intensities in [0, 1]
    Tensor gt_depth;  // [rows, cols], +inf where no point landed
    CameraExtrinsics extrinsics;
    std::size_t class_id = 0;
};

/// Image-plane extent: pixel (r, c) has its centre at
/// u = (c + 0.5 - W/2) * 2/S, v = (r + 0.5 - H/2) * 2/S with S = max(H, W),
/// which makes patch centres coincide with make_patch_grid.
struct RenderSpec {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t patch = 4;
    CameraIntrinsics intrinsics{2.0};
};

/// Point splatting with bilinear weights and depth attenuation. Throws when
/// fewer than half of the points are in front of the camera.
ViewSample render_view(const Scene& scene, const CameraExtrinsics& ext, const RenderSpec& spec);

/// Deterministic animation of a scene: the object spins about the vertical
/// axis while its centre moves linearly from `start` to `end`; the backdrop
/// is static.
struct SceneScript {
    Scene object;
    Scene backdrop;
    Point3 start{-1.0, 0.0, 0.0};
    Point3 end{1.0, 0.0, 0.0};
    double spin = 3.14159265358979;  // radians over the whole clip

    /// World state at normalised time s in [0, 1].
    Scene at(double s) const;
};

struct AlignmentPair {
    std::vector<ViewSample> a;  // static camera
    std::vector<ViewSample> b;  // moving camera
};

/// Both views render the same world state at each of `frames` steps.
/// `cam_b` holds one pose per frame.
AlignmentPair generate_alignment_pair(const SceneScript& script, const CameraExtrinsics& cam_a,
                                      const std::vector<CameraExtrinsics>& cam_b, std::size_t frames,
                                      const RenderSpec& spec);

// ---- camera layout ----

/// Azimuth sectors of 30 degrees; even sectors are "seen", odd ones "unseen".
enum class ViewSplit { seen, unseen };

struct CameraRig {
    double distance = 4.0;
    double min_elevation = 0.35;  // radians
    double max_elevation = 0.70;
    std::size_t sectors = 12;
};

double sample_azimuth(ViewSplit split, const CameraRig& rig, Rng& rng);
bool azimuth_in_split(double azimuth, ViewSplit split, const CameraRig& rig);
CameraExtrinsics orbit_camera(double azimuth, double elevation, double distance, const Point3& target = Point3::Zero());

// ---- datasets ----

struct DataConfig {
    std::string kind = "classify";  // "classify" or "align"
    std::uint64_t seed = 1;
    RenderSpec render;
    CameraRig rig;
    bool backdrop = true;
    // classify
    std::size_t train_per_class = 64;
    std::size_t test_per_class = 16;
    // align
    std::size_t frames = 24;
    std::size_t train_pairs = 8;
    std::size_t test_pairs = 4;
    double orbit_sweep = 0.45;  // azimuth travelled by the moving camera, radians (< one sector)

    void validate() const;
};

/// One sequence of frames. Classification samples are single-frame
/// sequences with view "". Alignment pairs are two sequences sharing a
/// group index, with views "a" and "b".
struct SampleSequence {
    std::string split;
    std::size_t group = 0;
    std::string view;
    std::size_t class_id = 0;
    std::uint64_t scene_seed = 0;
    std::vector<ViewSample> frames;
};

struct Dataset {
    DataConfig config;
    std::vector<SampleSequence> sequences;

    std::vector<const SampleSequence*> select(const std::string& split, const std::string& view = "") const;
    std::vector<std::string> splits() const;
};

/// Splits: train, test (new scenes, seen cameras), test_unseen (train scenes, unseen cameras).
Dataset generate_classify_dataset(const DataConfig& cfg);
/// Splits: train and test_seen (seen cameras), test_unseen (train scenes, unseen cameras).
Dataset generate_align_dataset(const DataConfig& cfg);
Dataset generate_dataset(const DataConfig& cfg);

inline constexpr int kDatasetFormatVersion = 1;

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Writes manifest.json and data.bin (checkpoint container) under `dir`.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Manifest text exactly as written by save_dataset.
std::string dataset_manifest(const Dataset& ds);

}  // namespace trl3d
