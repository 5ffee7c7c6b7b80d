#include "asfnet/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace asfnet {

namespace {

constexpr char kMagic[4] = {'A', 'S', 'F', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

// Tracks the absolute byte offset so truncation errors can name it.
struct Reader {
    std::istream& in;
    std::size_t offset = 0;

    void bytes(void* dst, std::size_t n, const char* what) {
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        const std::size_t got = static_cast<std::size_t>(in.gcount());
        if (got != n) {
            throw FormatError(std::string("ASFT: truncated while reading ") + what +
                              " at byte offset " + std::to_string(offset + got));
        }
        offset += n;
    }

    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        bytes(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint8_t u8(const char* what) {
        unsigned char b;
        bytes(&b, 1, what);
        return b;
    }

    float f32(const char* what) {
        std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

std::size_t asft_byte_size(std::size_t elements) {
    return 4 + 4 + 1 + 4 * 4 + 4 * elements;
}

void save_asft(std::ostream& out, const Tensor& t) {
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    out.put(static_cast<char>(4));
    for (int d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data) put_f32(out, v);
}

void save_asft(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("ASFT: cannot open '" + path.string() + "' for writing");
    save_asft(f, t);
    if (!f) throw FormatError("ASFT: write failed for '" + path.string() + "'");
}

Tensor load_asft(std::istream& in) {
    Reader r{in};
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("ASFT: bad magic bytes at offset 0 (expected 'ASFT')");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw FormatError("ASFT: unsupported version " + std::to_string(version));
    }
    const std::uint8_t rank = r.u8("rank");
    if (rank != 4) {
        throw FormatError("ASFT: unsupported rank " + std::to_string(rank) + " (expected 4)");
    }
    std::array<int, 4> dims{};
    std::size_t total = 1;
    for (int i = 0; i < 4; ++i) {
        const std::uint32_t d = r.u32("dims");
        if (d > (1u << 30)) throw FormatError("ASFT: implausible dimension " + std::to_string(d));
        dims[i] = static_cast<int>(d);
        total *= d;
    }
    std::vector<float> data(total);
    for (std::size_t i = 0; i < total; ++i) data[i] = r.f32("payload");
    return Tensor(dims, std::move(data));
}

Tensor load_asft(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("ASFT: cannot open '" + path.string() + "' for reading");
    return load_asft(f);
}

}  // namespace asfnet
