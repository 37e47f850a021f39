#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "trl3d/synthdata.hpp"

namespace trl3d {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTargetJitter = 0.2;
constexpr double kHeadingJitter = 0.3;
constexpr double kLiftBase = -0.4;
// Cameras of alignment clips look at the middle of the lift.
const Point3 kClipTarget(0.0, 0.0, 0.2);

// Stream bases for derived seeds; each sample adds its index.
constexpr std::uint64_t kTrainScenes = 1'000'000;
constexpr std::uint64_t kTrainCameras = 2'000'000;
constexpr std::uint64_t kTestScenes = 3'000'000;
constexpr std::uint64_t kTestCameras = 4'000'000;
constexpr std::uint64_t kUnseenCameras = 5'000'000;
constexpr std::uint64_t kScriptStream = 6'000'000;

double sector_width(const CameraRig& rig) { return 2.0 * kPi / static_cast<double>(rig.sectors); }

std::size_t pick_sector(ViewSplit split, const CameraRig& rig, Rng& rng) {
    return 2 * rng.below(rig.sectors / 2) + (split == ViewSplit::unseen ? 1 : 0);
}

Point3 jittered_target(Rng& rng) {
    return Point3(rng.uniform(-kTargetJitter, kTargetJitter), rng.uniform(-kTargetJitter, kTargetJitter), 0.0);
}

Scene with_backdrop(const Scene& s, const DataConfig& cfg) { return cfg.backdrop ? merge(s, ground_backdrop()) : s; }

ViewSample render_random_view(const Scene& scene, ViewSplit split, const DataConfig& cfg, Rng& rng) {
    const double az = sample_azimuth(split, cfg.rig, rng);
    const double el = rng.uniform(cfg.rig.min_elevation, cfg.rig.max_elevation);
    const double dist = cfg.rig.distance * rng.uniform(0.9, 1.1);
    return render_view(with_backdrop(scene, cfg), orbit_camera(az, el, dist, jittered_target(rng)), cfg.render);
}

SceneScript make_script(std::size_t class_id, std::uint64_t scene_seed, const DataConfig& cfg) {
    Rng shape_rng(scene_seed);
    SceneScript script;
    script.object = generate_scene(class_id, shape_rng);
    if (cfg.backdrop) script.backdrop = ground_backdrop();
    Rng rng(mix_seed(scene_seed, kScriptStream));
    // Every clip performs the same task, a lift while drifting along +x,
    // with per-scene variation in heading, height and spin.
    const double heading = rng.uniform(-kHeadingJitter, kHeadingJitter);
    const Point3 dir(std::cos(heading), std::sin(heading), 0.0);
    const double rise = rng.uniform(0.8, 1.2);
    script.start = -0.5 * dir + Point3(0.0, 0.0, kLiftBase);
    script.end = 0.5 * dir + Point3(0.0, 0.0, kLiftBase + rise);
    script.spin = rng.uniform(0.5 * kPi, kPi);
    return script;
}

void add_pair(Dataset& ds, const std::string& split, std::size_t group, std::size_t class_id, std::uint64_t scene_seed,
              ViewSplit cams, Rng& cam_rng) {
    const DataConfig& cfg = ds.config;
    const SceneScript script = make_script(class_id, scene_seed, cfg);

    const double az_a = sample_azimuth(cams, cfg.rig, cam_rng);
    const double el_a = cam_rng.uniform(cfg.rig.min_elevation, cfg.rig.max_elevation);
    const CameraExtrinsics cam_a = orbit_camera(az_a, el_a, cfg.rig.distance, kClipTarget);

    // The moving camera stays inside one sector while sweeping in azimuth,
    // rising in elevation and closing in on the scene.
    const double width = sector_width(cfg.rig);
    const double az0 = static_cast<double>(pick_sector(cams, cfg.rig, cam_rng)) * width +
                       cam_rng.uniform(0.0, width - cfg.orbit_sweep);
    const double direction = cam_rng.uniform() < 0.5 ? 0.0 : 1.0;
    std::vector<CameraExtrinsics> cam_b;
    for (std::size_t t = 0; t < cfg.frames; ++t) {
        const double s = static_cast<double>(t) / static_cast<double>(cfg.frames - 1);
        const double az = az0 + cfg.orbit_sweep * (direction > 0.0 ? s : 1.0 - s);
        const double el = cfg.rig.min_elevation + (cfg.rig.max_elevation - cfg.rig.min_elevation) * s;
        const double dist = cfg.rig.distance * (1.1 - 0.2 * s);
        cam_b.push_back(orbit_camera(az, el, dist, kClipTarget));
    }
    AlignmentPair pair = generate_alignment_pair(script, cam_a, cam_b, cfg.frames, cfg.render);
    ds.sequences.push_back({split, group, "a", class_id, scene_seed, std::move(pair.a)});
    ds.sequences.push_back({split, group, "b", class_id, scene_seed, std::move(pair.b)});
}

}  // namespace

double sample_azimuth(ViewSplit split, const CameraRig& rig, Rng& rng) {
    const std::size_t sector = pick_sector(split, rig, rng);
    return (static_cast<double>(sector) + rng.uniform()) * sector_width(rig);
}

bool azimuth_in_split(double azimuth, ViewSplit split, const CameraRig& rig) {
    const double width = sector_width(rig);
    double a = std::fmod(azimuth, 2.0 * kPi);
    if (a < 0.0) a += 2.0 * kPi;
    const auto sector = static_cast<std::size_t>(std::floor(a / width)) % rig.sectors;
    return (sector % 2 == 1) == (split == ViewSplit::unseen);
}

CameraExtrinsics orbit_camera(double azimuth, double elevation, double distance, const Point3& target) {
    const Point3 eye = target + distance * Point3(std::cos(elevation) * std::cos(azimuth),
                                                  std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
    return look_at(eye, target, Eigen::Vector3d::UnitZ());
}

void DataConfig::validate() const {
    if (kind != "classify" && kind != "align") throw std::invalid_argument("data: kind must be classify or align");
    const RenderSpec& r = render;
    if (r.patch == 0 || r.height % r.patch != 0 || r.width % r.patch != 0 || r.height == 0 || r.width == 0) {
        throw std::invalid_argument("data: image size must be a positive multiple of the patch size");
    }
    r.intrinsics.validate();
    if (rig.sectors < 2 || rig.sectors % 2 != 0) throw std::invalid_argument("data: camera sectors must be even");
    if (!(rig.distance > 0.0) || rig.min_elevation > rig.max_elevation) {
        throw std::invalid_argument("data: bad camera rig");
    }
    if (kind == "classify" && (train_per_class == 0 || test_per_class == 0)) {
        throw std::invalid_argument("data: per-class sample counts must be positive");
    }
    if (kind == "align") {
        if (frames < 2) throw std::invalid_argument("data: frames must be >= 2");
        if (train_pairs == 0 || test_pairs == 0) throw std::invalid_argument("data: pair counts must be positive");
        if (!(orbit_sweep >= 0.0) || orbit_sweep >= sector_width(rig)) {
            throw std::invalid_argument("data: orbit_sweep must stay inside one camera sector");
        }
    }
}

std::vector<const SampleSequence*> Dataset::select(const std::string& split, const std::string& view) const {
    std::vector<const SampleSequence*> out;
    for (const auto& s : sequences) {
        if (s.split == split && s.view == view) out.push_back(&s);
    }
    return out;
}

std::vector<std::string> Dataset::splits() const {
    std::vector<std::string> out;
    for (const auto& s : sequences) {
        if (std::find(out.begin(), out.end(), s.split) == out.end()) out.push_back(s.split);
    }
    return out;
}

Dataset generate_classify_dataset(const DataConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.config = cfg;
    ds.config.kind = "classify";
    const std::size_t classes = kNumShapeClasses;

    std::vector<std::uint64_t> train_seeds;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t k = 0; k < cfg.train_per_class; ++k) {
            const std::size_t idx = c * cfg.train_per_class + k;
            const std::uint64_t seed = mix_seed(cfg.seed, kTrainScenes + idx);
            train_seeds.push_back(seed);
            Rng srng(seed);
            Rng crng(mix_seed(cfg.seed, kTrainCameras + idx));
            const Scene scene = generate_scene(c, srng);
            ds.sequences.push_back({"train", idx, "", c, seed, {render_random_view(scene, ViewSplit::seen, cfg, crng)}});
        }
    }
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t k = 0; k < cfg.test_per_class; ++k) {
            const std::size_t idx = c * cfg.test_per_class + k;
            const std::uint64_t seed = mix_seed(cfg.seed, kTestScenes + idx);
            Rng srng(seed);
            Rng crng(mix_seed(cfg.seed, kTestCameras + idx));
            const Scene scene = generate_scene(c, srng);
            ds.sequences.push_back({"test", idx, "", c, seed, {render_random_view(scene, ViewSplit::seen, cfg, crng)}});
        }
    }
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t k = 0; k < cfg.test_per_class; ++k) {
            const std::size_t idx = c * cfg.test_per_class + k;
            const std::uint64_t seed = train_seeds[c * cfg.train_per_class + k % cfg.train_per_class];
            Rng srng(seed);
            Rng crng(mix_seed(cfg.seed, kUnseenCameras + idx));
            const Scene scene = generate_scene(c, srng);
            ds.sequences.push_back(
                {"test_unseen", idx, "", c, seed, {render_random_view(scene, ViewSplit::unseen, cfg, crng)}});
        }
    }
    return ds;
}

Dataset generate_align_dataset(const DataConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.config = cfg;
    ds.config.kind = "align";
    std::vector<std::uint64_t> train_seeds;
    for (std::size_t i = 0; i < cfg.train_pairs; ++i) {
        const std::uint64_t seed = mix_seed(cfg.seed, kTrainScenes + i);
        train_seeds.push_back(seed);
        Rng crng(mix_seed(cfg.seed, kTrainCameras + i));
        add_pair(ds, "train", i, i % kNumShapeClasses, seed, ViewSplit::seen, crng);
    }
    for (std::size_t i = 0; i < cfg.test_pairs; ++i) {
        const std::uint64_t seed = mix_seed(cfg.seed, kTestScenes + i);
        Rng crng(mix_seed(cfg.seed, kTestCameras + i));
        add_pair(ds, "test_seen", i, i % kNumShapeClasses, seed, ViewSplit::seen, crng);
    }
    for (std::size_t i = 0; i < cfg.test_pairs; ++i) {
        const std::size_t src = i % cfg.train_pairs;
        Rng crng(mix_seed(cfg.seed, kUnseenCameras + i));
        add_pair(ds, "test_unseen", i, src % kNumShapeClasses, train_seeds[src], ViewSplit::unseen, crng);
    }
    return ds;
}

Dataset generate_dataset(const DataConfig& cfg) {
    return cfg.kind == "align" ? generate_align_dataset(cfg) : generate_classify_dataset(cfg);
}

}  // namespace trl3d
