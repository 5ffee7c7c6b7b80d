#include "asfnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "asfnet/tensor_io.hpp"

namespace asfnet {

namespace {

constexpr char kMagic[4] = {'A', 'S', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kMaskPrefix = "__mask__.";

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void write_named(std::ostream& out, const std::string& name, const Tensor& t) {
    if (name.size() > 0xffff) throw FormatError("ASFC: tensor name too long");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    save_asft(out, t);
}

bool is_lambda_name(const std::string& name) {
    return name.rfind("head.lambda", 0) == 0;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const PruneMask* mask) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("ASFC: cannot open '" + path.string() + "' for writing");

    std::uint32_t count = static_cast<std::uint32_t>(params.names().size());
    if (mask != nullptr) count += static_cast<std::uint32_t>(mask->masks.size());

    f.write(kMagic, 4);
    put_u32(f, kVersion);
    put_u32(f, count);
    for (const auto& name : params.names()) {
        write_named(f, name, params.at(name).value);
    }
    if (mask != nullptr) {
        for (const auto& [name, m] : mask->masks) {
            write_named(f, std::string(kMaskPrefix) + name, m);
        }
    }
    if (!f) throw FormatError("ASFC: write failed for '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, bool lambda_trainable) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("ASFC: cannot open '" + path.string() + "' for reading");

    auto read_exact = [&](void* dst, std::size_t n, const char* what) {
        f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(f.gcount()) != n) {
            throw FormatError(std::string("ASFC: truncated while reading ") + what);
        }
    };
    auto read_u32 = [&](const char* what) {
        unsigned char b[4];
        read_exact(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };

    char magic[4];
    read_exact(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("ASFC: bad magic bytes (expected 'ASFC')");
    }
    const std::uint32_t version = read_u32("version");
    if (version != kVersion) {
        throw FormatError("ASFC: unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = read_u32("tensor count");

    LoadedCheckpoint out;
    for (std::uint32_t i = 0; i < count; ++i) {
        unsigned char lb[2];
        read_exact(lb, 2, "name length");
        const std::uint16_t len =
            static_cast<std::uint16_t>(lb[0]) | (static_cast<std::uint16_t>(lb[1]) << 8);
        std::string name(len, '\0');
        read_exact(name.data(), len, "name");
        Tensor t = load_asft(f);
        if (name.rfind(kMaskPrefix, 0) == 0) {
            out.mask.masks.emplace(name.substr(std::strlen(kMaskPrefix)), std::move(t));
        } else {
            const bool lambda = is_lambda_name(name);
            out.params.add(name, std::move(t), lambda ? lambda_trainable : true,
                           /*decay=*/!lambda);
        }
    }
    return out;
}

}  // namespace asfnet
