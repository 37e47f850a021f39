#include "trl3d/app/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace trl3d {

namespace {

struct KeySpec {
    const char* key;
    const char* fallback;
};

// Defaults describe the desk-scale setup used by the test suite.
const KeySpec kKeys[] = {
    {"seed", "1"},
    {"data_dir", ""},
    {"checkpoint", ""},
    {"checkpoints", ""},
    // synthetic data
    {"data.kind", "classify"},
    {"data.seed", "1"},
    {"data.image_size", "24"},
    {"data.patch_size", "4"},
    {"data.focal", "2"},
    {"data.camera_distance", "4"},
    {"data.min_elevation", "0.35"},
    {"data.max_elevation", "0.7"},
    {"data.camera_sectors", "12"},
    {"data.backdrop", "true"},
    {"data.train_per_class", "64"},
    {"data.test_per_class", "16"},
    {"data.frames", "24"},
    {"data.train_pairs", "8"},
    {"data.test_pairs", "4"},
    {"data.orbit_sweep", "0.45"},
    // backbone
    {"model.depth", "4"},
    {"model.heads", "2"},
    {"model.embed_dim", "32"},
    {"model.mlp_ratio", "4"},
    {"model.insert_at", "2"},
    {"model.insert_kind", "trl3d"},
    {"model.num_classes", "4"},
    // 3DTRL
    {"layer.coord_mode", "depth"},
    {"layer.fusion_mode", "embedding"},
    {"layer.video_strategy", "divided"},
    {"layer.stem_hidden", "32"},
    {"layer.focal", "1"},
    // optimiser
    {"optim.kind", "adam"},
    {"optim.lr", "0.001"},
    {"optim.momentum", "0.9"},
    {"optim.schedule", "constant"},
    {"optim.steps", "600"},
    {"optim.batch", "16"},
    // time-contrastive loss
    {"tcn.positive_window", "3"},
    {"tcn.margin", "0.2"},
    {"tcn.negatives_per_anchor", "1"},
    // evaluation
    {"eval.split", "test_seen"},
    {"gradcheck.entries", "3"},
    {"gradcheck.step", "1e-5"},
    {"gradcheck.tolerance", "1e-4"},
    {"gradcheck.batch", "2"},
    {"ablate.seeds", "1,2,3"},
    {"ablate.variants", "baseline,mlp,trl3d,direct_xyz,concat"},
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || text.empty()) {
        throw ConfigError("config: " + key + "=" + text + " is not a valid number");
    }
    return v;
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& k : kKeys) values_[k.key] = k.fallback;
}

std::vector<std::string> RunConfig::known_keys() {
    std::vector<std::string> out;
    for (const auto& k : kKeys) out.emplace_back(k.key);
    return out;
}

bool RunConfig::has_key(const std::string& key) const { return values_.count(key) != 0; }

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second = value;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: " + origin + ":" + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (!cfg.has_key(key)) {
            throw ConfigError("config: " + origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        cfg.set(key, trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("config: cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
}

const std::string& RunConfig::str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second;
}

double RunConfig::real(const std::string& key) const {
    const std::string& s = str(key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw ConfigError("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + "=" + s + " is not a valid number");
    }
}

std::int64_t RunConfig::integer(const std::string& key) const { return parse_number<std::int64_t>(key, str(key)); }

std::size_t RunConfig::count(const std::string& key) const { return parse_number<std::size_t>(key, str(key)); }

std::uint64_t RunConfig::u64(const std::string& key) const { return parse_number<std::uint64_t>(key, str(key)); }

bool RunConfig::flag(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config: " + key + "=" + s + " is not a boolean");
}

std::vector<std::string> RunConfig::words(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream is(str(key));
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::size_t> RunConfig::counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& w : words(key)) out.push_back(parse_number<std::size_t>(key, w));
    return out;
}

std::string RunConfig::resolved() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

}  // namespace trl3d
