#include "trl3d/core/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace trl3d {

namespace {

constexpr std::array<char, 6> kMagic{'T', 'R', 'L', '3', 'D', '\0'};

template <class U>
void put_le(std::ostream& os, U v) {
    std::array<char, sizeof(U)> b;
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), b.size());
}

template <class U>
U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> b;
    if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) throw CheckpointError("checkpoint: corrupt payload");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const ParamList& params) {
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(os, kCheckpointVersion);
    for (const auto& [name, t] : params) {
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape()) put_le<std::uint64_t>(os, e);
        for (double v : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw CheckpointError("checkpoint: write failed");
}

ParamList read_checkpoint(std::istream& is) {
    std::array<char, 6> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw CheckpointError("checkpoint: bad magic");
    const auto version = get_le<std::uint32_t>(is);
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
    }
    ParamList out;
    while (is.peek() != std::char_traits<char>::eof()) {
        const auto len = get_le<std::uint32_t>(is);
        if (len > (1u << 20)) throw CheckpointError("checkpoint: corrupt payload");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw CheckpointError("checkpoint: corrupt payload");
        const auto rank = get_le<std::uint32_t>(is);
        if (rank > 16) throw CheckpointError("checkpoint: corrupt payload");
        Shape shape(rank);
        std::uint64_t numel = 1;
        for (auto& e : shape) {
            const auto v = get_le<std::uint64_t>(is);
            if (v > (1ULL << 32)) throw CheckpointError("checkpoint: corrupt payload");
            e = static_cast<std::size_t>(v);
            numel *= v;
            if (numel > (1ULL << 34)) throw CheckpointError("checkpoint: corrupt payload");
        }
        std::vector<double> values(static_cast<std::size_t>(numel));
        for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamList& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
    write_checkpoint(os, params);
}

ParamList load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot open " + path.string());
    return read_checkpoint(is);
}

void assign_parameters(const ParamList& dst, const ParamList& src) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : src) by_name[name] = &t;
    for (const auto& [name, t] : dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CheckpointError("checkpoint: missing parameter " + name);
        if (it->second->shape() != t.shape()) {
            throw CheckpointError("checkpoint: shape mismatch for " + name + ": model " + shape_string(t.shape()) +
                                  ", checkpoint " + shape_string(it->second->shape()));
        }
    }
    if (src.size() != dst.size()) {
        throw CheckpointError("checkpoint: holds " + std::to_string(src.size()) + " parameters, model expects " +
                              std::to_string(dst.size()));
    }
    for (const auto& [name, t] : dst) {
        Tensor handle = t;
        auto target = handle.mutable_data();
        auto values = by_name[name]->data();
        std::copy(values.begin(), values.end(), target.begin());
    }
}

}  // namespace trl3d
