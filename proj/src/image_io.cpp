#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "qfuse/image.hpp"

namespace qfuse {

namespace {

std::uint8_t quantize(float v) {
    float s = v * 255.f;
    if (s < 0.f) s = 0.f;
    if (s > 255.f) s = 255.f;
    return static_cast<std::uint8_t>(std::lround(s));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::string& path, const std::uint8_t* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("short write to '" + path + "'");
}

// ---- PGM (binary P5, maxval 255) ----

Image read_pgm(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    auto fail = [&](const char* why) -> ParseError { return ParseError(path + ": " + why); };
    auto skip_ws = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_ws();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw fail("malformed PGM header");
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw fail("not a P5 PGM");
    pos = 2;
    const long w = read_int();
    const long h = read_int();
    const long maxval = read_int();
    if (w <= 0 || h <= 0) throw fail("non-positive PGM extents");
    if (maxval != 255) throw fail("unsupported PGM maxval (want 255)");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("missing whitespace after PGM maxval");
    ++pos;
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() - pos < need) throw fail("truncated PGM pixel data");
    Image im(static_cast<int>(h), static_cast<int>(w));
    for (std::size_t i = 0; i < need; ++i) im.v[i] = static_cast<float>(bytes[pos + i]) / 255.f;
    return im;
}

// ---- PNG (8-bit grayscale, non-interlaced) ----

constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::uint8_t* data,
               std::size_t n) {
    put_u32(out, static_cast<std::uint32_t>(n));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data, data + n);
    const auto crc =
        ::crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

Image read_png(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    auto fail = [&](const char* why) -> ParseError { return ParseError(path + ": " + why); };
    if (bytes.size() < 8 + 25 || std::memcmp(bytes.data(), kPngSig, 8) != 0) throw fail("not a PNG");
    std::size_t pos = 8;
    long w = 0, h = 0;
    int bit_depth = 0, color_type = -1;
    bool seen_ihdr = false, seen_iend = false;
    std::vector<std::uint8_t> idat;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw fail("truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw fail("bad IHDR length");
            w = get_u32(data);
            h = get_u32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw fail("interlaced PNG unsupported");
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
            break;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || !seen_iend) throw fail("missing PNG IHDR/IEND");
    if (w <= 0 || h <= 0) throw fail("non-positive PNG extents");
    if (bit_depth != 8 || color_type != 0) throw fail("only 8-bit grayscale PNG supported");

    const std::size_t stride = static_cast<std::size_t>(w);
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (::uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size()) {
        throw fail("corrupt PNG pixel stream");
    }
    // undo per-scanline filters
    std::vector<std::uint8_t> pix(static_cast<std::size_t>(h) * stride);
    for (long y = 0; y < h; ++y) {
        const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
        const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1;
        std::uint8_t* dst = pix.data() + static_cast<std::size_t>(y) * stride;
        const std::uint8_t* up = y > 0 ? dst - stride : nullptr;
        for (std::size_t x = 0; x < stride; ++x) {
            const int a = x > 0 ? dst[x - 1] : 0;
            const int b = up ? up[x] : 0;
            const int c = (x > 0 && up) ? up[x - 1] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: {
                    const int p = a + b - c;
                    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                    v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
                default: throw fail("unknown PNG filter type");
            }
            dst[x] = static_cast<std::uint8_t>(v & 0xff);
        }
    }
    Image im(static_cast<int>(h), static_cast<int>(w));
    for (std::size_t i = 0; i < pix.size(); ++i) im.v[i] = static_cast<float>(pix[i]) / 255.f;
    return im;
}

}  // namespace

Image read_image(const std::string& path) {
    const auto bytes = read_file(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return read_png(path, bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return read_pgm(path, bytes);
    throw ParseError(path + ": unrecognized image format (want P5 PGM or grayscale PNG)");
}

void write_pgm(const std::string& path, const Image& im) {
    std::string header = "P5\n" + std::to_string(im.w) + " " + std::to_string(im.h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + im.size());
    for (float v : im.v) out.push_back(quantize(v));
    write_file(path, out.data(), out.size());
}

void write_png(const std::string& path, const Image& im) {
    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    std::uint8_t ihdr[13];
    ihdr[0] = static_cast<std::uint8_t>(im.w >> 24);
    ihdr[1] = static_cast<std::uint8_t>(im.w >> 16);
    ihdr[2] = static_cast<std::uint8_t>(im.w >> 8);
    ihdr[3] = static_cast<std::uint8_t>(im.w);
    ihdr[4] = static_cast<std::uint8_t>(im.h >> 24);
    ihdr[5] = static_cast<std::uint8_t>(im.h >> 16);
    ihdr[6] = static_cast<std::uint8_t>(im.h >> 8);
    ihdr[7] = static_cast<std::uint8_t>(im.h);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 0;   // grayscale
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter
    ihdr[12] = 0;  // no interlace
    put_chunk(out, "IHDR", ihdr, 13);

    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(im.h) * (im.w + 1));
    for (int y = 0; y < im.h; ++y) {
        raw.push_back(0);  // filter: none
        for (int x = 0; x < im.w; ++x) raw.push_back(quantize(im.at(y, x)));
    }
    uLongf comp_cap = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_cap);
    if (::compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw IoError("PNG compression failed for '" + path + "'");
    }
    put_chunk(out, "IDAT", comp.data(), comp_cap);
    put_chunk(out, "IEND", nullptr, 0);
    write_file(path, out.data(), out.size());
}

}  // namespace qfuse
