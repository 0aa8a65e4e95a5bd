#include "polyper/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "polyper/error.hpp"

namespace polyper {

namespace {

constexpr char kMagic[8] = {'P', 'L', 'Y', 'P', 'R', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_i32(std::ostream& os, std::int32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is, const std::string& path) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw DataError("truncated checkpoint: " + path);
    return v;
}

std::int32_t read_i32(std::istream& is, const std::string& path) {
    std::int32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw DataError("truncated checkpoint: " + path);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(ckpt.config_text.size()));
    os.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
    write_u32(os, sizeof(float));
    write_u32(os, static_cast<std::uint32_t>(ckpt.params.order.size()));
    for (const auto& name : ckpt.params.order) {
        const Tensor<float>& t = ckpt.params.tensors.at(name);
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) write_i32(os, d);
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!os) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("not a checkpoint file: " + path);
    const std::uint32_t version = read_u32(is, path);
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    Checkpoint ckpt;
    const std::uint32_t cfg_len = read_u32(is, path);
    ckpt.config_text.resize(cfg_len);
    if (cfg_len && !is.read(ckpt.config_text.data(), cfg_len)) throw DataError("truncated checkpoint: " + path);
    const std::uint32_t width = read_u32(is, path);
    if (width != sizeof(float)) throw DataError("unsupported scalar width in checkpoint: " + path);
    const std::uint32_t count = read_u32(is, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw DataError("truncated checkpoint: " + path);
        const std::uint32_t rank = read_u32(is, path);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = read_i32(is, path);
        Tensor<float> t(shape);
        if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float))))
            throw DataError("truncated checkpoint: " + path);
        ckpt.params.add(name, std::move(t));
    }
    return ckpt;
}

}  // namespace polyper
