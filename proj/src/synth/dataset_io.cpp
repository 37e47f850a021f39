#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"

#include "trl3d/core/checkpoint.hpp"
#include "trl3d/synthdata.hpp"

namespace trl3d {

namespace {

using nlohmann::ordered_json;

ordered_json config_to_json(const DataConfig& c) {
    ordered_json j;
    j["kind"] = c.kind;
    j["seed"] = c.seed;
    j["image_height"] = c.render.height;
    j["image_width"] = c.render.width;
    j["patch_size"] = c.render.patch;
    j["focal"] = c.render.intrinsics.focal;
    j["principal_u"] = c.render.intrinsics.u0;
    j["principal_v"] = c.render.intrinsics.v0;
    j["camera_distance"] = c.rig.distance;
    j["min_elevation"] = c.rig.min_elevation;
    j["max_elevation"] = c.rig.max_elevation;
    j["camera_sectors"] = c.rig.sectors;
    j["backdrop"] = c.backdrop;
    j["train_per_class"] = c.train_per_class;
    j["test_per_class"] = c.test_per_class;
    j["frames"] = c.frames;
    j["train_pairs"] = c.train_pairs;
    j["test_pairs"] = c.test_pairs;
    j["orbit_sweep"] = c.orbit_sweep;
    return j;
}

DataConfig config_from_json(const ordered_json& j) {
    DataConfig c;
    c.kind = j.at("kind").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.render.height = j.at("image_height").get<std::size_t>();
    c.render.width = j.at("image_width").get<std::size_t>();
    c.render.patch = j.at("patch_size").get<std::size_t>();
    c.render.intrinsics.focal = j.at("focal").get<double>();
    c.render.intrinsics.u0 = j.at("principal_u").get<double>();
    c.render.intrinsics.v0 = j.at("principal_v").get<double>();
    c.rig.distance = j.at("camera_distance").get<double>();
    c.rig.min_elevation = j.at("min_elevation").get<double>();
    c.rig.max_elevation = j.at("max_elevation").get<double>();
    c.rig.sectors = j.at("camera_sectors").get<std::size_t>();
    c.backdrop = j.at("backdrop").get<bool>();
    c.train_per_class = j.at("train_per_class").get<std::size_t>();
    c.test_per_class = j.at("test_per_class").get<std::size_t>();
    c.frames = j.at("frames").get<std::size_t>();
    c.train_pairs = j.at("train_pairs").get<std::size_t>();
    c.test_pairs = j.at("test_pairs").get<std::size_t>();
    c.orbit_sweep = j.at("orbit_sweep").get<double>();
    return c;
}

std::string blob_key(std::size_t seq, std::size_t frame, const char* field) {
    return "seq" + std::to_string(seq) + "/frame" + std::to_string(frame) + "/" + field;
}

Tensor camera_tensor(const CameraExtrinsics& e) {
    std::vector<double> v;
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) v.push_back(e.rotation(i, k));
    }
    for (int i = 0; i < 3; ++i) v.push_back(e.translation(i));
    return Tensor({12}, std::move(v));
}

CameraExtrinsics camera_from_tensor(const Tensor& t) {
    if (t.shape() != Shape{12}) throw DatasetError("dataset: camera blob has shape " + shape_string(t.shape()));
    auto d = t.data();
    CameraExtrinsics e;
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) e.rotation(i, k) = d[3 * i + k];
        e.translation(i) = d[9 + i];
    }
    return e;
}

}  // namespace

std::string dataset_manifest(const Dataset& ds) {
    ordered_json j;
    j["format"] = "trl3d-dataset";
    j["format_version"] = kDatasetFormatVersion;
    j["config"] = config_to_json(ds.config);
    ordered_json classes = ordered_json::array();
    for (std::size_t c = 0; c < kNumShapeClasses; ++c) classes.push_back(shape_class_name(c));
    j["classes"] = classes;
    j["blob"] = "data.bin";
    ordered_json seqs = ordered_json::array();
    for (const auto& s : ds.sequences) {
        ordered_json e;
        e["split"] = s.split;
        e["group"] = s.group;
        e["view"] = s.view;
        e["class_id"] = s.class_id;
        e["scene_seed"] = s.scene_seed;
        e["frames"] = s.frames.size();
        ordered_json cams = ordered_json::array();
        for (const auto& f : s.frames) {
            const Point3 c = f.extrinsics.center();
            cams.push_back({c.x(), c.y(), c.z()});
        }
        e["camera_centers"] = cams;
        seqs.push_back(std::move(e));
    }
    j["sequences"] = seqs;
    return j.dump(2) + "\n";
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    ParamList blobs;
    for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
        const auto& seq = ds.sequences[s];
        for (std::size_t f = 0; f < seq.frames.size(); ++f) {
            blobs.emplace_back(blob_key(s, f, "image"), seq.frames[f].image);
            blobs.emplace_back(blob_key(s, f, "gt_depth"), seq.frames[f].gt_depth);
            blobs.emplace_back(blob_key(s, f, "camera"), camera_tensor(seq.frames[f].extrinsics));
        }
    }
    save_checkpoint(dir / "data.bin", blobs);
    std::ofstream os(dir / "manifest.json", std::ios::binary);
    if (!os) throw DatasetError("dataset: cannot write " + (dir / "manifest.json").string());
    os << dataset_manifest(ds);
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream is(manifest_path, std::ios::binary);
    if (!is) throw DatasetError("dataset: missing manifest " + manifest_path.string());
    ordered_json j;
    try {
        j = ordered_json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(std::string("dataset: corrupt manifest: ") + e.what());
    }
    Dataset ds;
    try {
        if (j.at("format").get<std::string>() != "trl3d-dataset") throw DatasetError("dataset: not a dataset manifest");
        const int version = j.at("format_version").get<int>();
        if (version != kDatasetFormatVersion) {
            throw DatasetError("dataset: unsupported format version " + std::to_string(version));
        }
        ds.config = config_from_json(j.at("config"));
        const ParamList blobs = load_checkpoint(dir / j.at("blob").get<std::string>());
        std::map<std::string, Tensor> by_name(blobs.begin(), blobs.end());
        auto fetch = [&](const std::string& key) {
            auto it = by_name.find(key);
            if (it == by_name.end()) throw DatasetError("dataset: blob is missing " + key);
            return it->second;
        };
        const auto& seqs = j.at("sequences");
        for (std::size_t s = 0; s < seqs.size(); ++s) {
            const auto& e = seqs[s];
            SampleSequence seq;
            seq.split = e.at("split").get<std::string>();
            seq.group = e.at("group").get<std::size_t>();
            seq.view = e.at("view").get<std::string>();
            seq.class_id = e.at("class_id").get<std::size_t>();
            seq.scene_seed = e.at("scene_seed").get<std::uint64_t>();
            const auto frames = e.at("frames").get<std::size_t>();
            for (std::size_t f = 0; f < frames; ++f) {
                ViewSample v;
                v.image = fetch(blob_key(s, f, "image"));
                v.gt_depth = fetch(blob_key(s, f, "gt_depth"));
                v.extrinsics = camera_from_tensor(fetch(blob_key(s, f, "camera")));
                v.class_id = seq.class_id;
                seq.frames.push_back(std::move(v));
            }
            ds.sequences.push_back(std::move(seq));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(std::string("dataset: corrupt manifest: ") + e.what());
    }
    return ds;
}

}  // namespace trl3d
