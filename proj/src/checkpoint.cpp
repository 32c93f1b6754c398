#include "ttrec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ttrec/errors.hpp"

namespace ttrec {

namespace {

constexpr char kMagic[4] = {'T', 'T', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

static_assert(sizeof(float) == 4, "float32 payloads require 4-byte float");

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IoError(std::string("checkpoint: truncated ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is, const char* what) {
    const std::uint64_t lo = get_u32(is, what);
    const std::uint64_t hi = get_u32(is, what);
    return lo | (hi << 32);
}

void put_f32_block(std::ostream& os, const float* data, std::int64_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(data), count * 4);
    } else {
        for (std::int64_t i = 0; i < count; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, data + i, 4);
            put_u32(os, bits);
        }
    }
}

void get_f32_block(std::istream& is, float* data, std::int64_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char*>(data), count * 4))
            throw IoError("checkpoint: truncated tensor payload");
    } else {
        for (std::int64_t i = 0; i < count; ++i) {
            const std::uint32_t bits = get_u32(is, "tensor payload");
            std::memcpy(data + i, &bits, 4);
        }
    }
}

} // namespace

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const ParamStore<float>& store) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u64(os, config_text.size());
    os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));

    put_u32(os, static_cast<std::uint32_t>(store.count()));
    for (std::size_t i = 0; i < store.count(); ++i) {
        const auto& e = store.entry(static_cast<int>(i));
        if (!e.value.all_finite())
            throw NumericalError("refusing to checkpoint non-finite parameter '" + e.name + "'");
        put_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(os, static_cast<std::uint32_t>(e.value.rank()));
        for (auto ext : e.value.extents()) put_u64(os, static_cast<std::uint64_t>(ext));
    }
    for (std::size_t i = 0; i < store.count(); ++i) {
        const auto& e = store.entry(static_cast<int>(i));
        put_f32_block(os, e.value.data(), e.value.size());
    }
    if (!os) throw IoError("failed while writing '" + path + "'");
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("'" + path + "' is not a checkpoint file");
    const std::uint32_t version = get_u32(is, "version");
    if (version != kVersion)
        throw IoError("'" + path + "': unsupported checkpoint version " + std::to_string(version));

    CheckpointData data;
    data.config_text.resize(get_u64(is, "header length"));
    if (!data.config_text.empty() &&
        !is.read(data.config_text.data(), static_cast<std::streamsize>(data.config_text.size())))
        throw IoError("checkpoint: truncated header");

    const std::uint32_t count = get_u32(is, "tensor count");
    std::vector<std::pair<std::string, Extents>> manifest;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(get_u32(is, "name length"), '\0');
        if (!name.empty() && !is.read(name.data(), static_cast<std::streamsize>(name.size())))
            throw IoError("checkpoint: truncated tensor name");
        Extents ext(get_u32(is, "tensor rank"));
        for (auto& e : ext) e = static_cast<std::int64_t>(get_u64(is, "tensor extent"));
        manifest.emplace_back(std::move(name), std::move(ext));
    }
    for (auto& [name, ext] : manifest) {
        Tensor<float> t(ext);
        get_f32_block(is, t.data(), t.size());
        if (!t.all_finite())
            throw NumericalError("checkpoint '" + path + "': non-finite values in tensor '" + name + "'");
        data.tensors.emplace_back(std::move(name), std::move(t));
    }
    return data;
}

ParamStore<float> store_from_checkpoint(const CheckpointData& data) {
    ParamStore<float> store;
    for (const auto& [name, tensor] : data.tensors) store.add(name, tensor);
    return store;
}

} // namespace ttrec
