#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "mgeo/catalog.hpp"
#include "mgeo/error.hpp"

namespace mgeo {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CodecError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CodecError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CodecError("short write to " + path.string());
}

class HeaderReader {
public:
    explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    // Skips whitespace and '#' comments, then reads a decimal field.
    long next_int(const char* what) {
        skip_space();
        long value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000) throw CodecError(std::string("header field too large: ") + what);
            ++pos_;
            ++digits;
        }
        if (digits == 0) throw CodecError(std::string("missing header field: ") + what);
        return value;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw CodecError("missing separator before pixel data");
        }
        return pos_ + 1;
    }

private:
    void skip_space() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 2;
};

Image decode_pnm(const std::vector<std::uint8_t>& bytes, char kind, int channels) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != kind) {
        throw CodecError(std::string("bad magic number, expected P") + kind);
    }
    HeaderReader header(bytes);
    const long width = header.next_int("width");
    const long height = header.next_int("height");
    const long maxval = header.next_int("maxval");
    if (maxval != 255) throw CodecError("unsupported maxval " + std::to_string(maxval) + ", expected 255");
    if (width <= 0 || height <= 0) throw CodecError("empty image");
    const std::size_t start = header.raster_start();
    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    if (bytes.size() - start < count) {
        throw CodecError("truncated pixel data: expected " + std::to_string(count) + " bytes, got " +
                         std::to_string(bytes.size() - start));
    }
    Image image(static_cast<int>(height), static_cast<int>(width), channels);
    for (std::size_t i = 0; i < count; ++i) image.data[i] = bytes[start + i] / 255.0;
    return image;
}

std::vector<std::uint8_t> encode_pnm(const Image& image, char kind, int channels) {
    if (image.channels != channels) {
        throw CodecError("P" + std::string(1, kind) + " expects " + std::to_string(channels) + " channel(s)");
    }
    const std::string header = "P" + std::string(1, kind) + "\n" + std::to_string(image.width) + " " +
                               std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + image.size());
    for (double v : image.data) out.push_back(to_byte(v));
    return out;
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

constexpr std::array<char, 8> kSidecarMagic = {'M', 'G', 'E', 'O', 'F', '6', '4', '\0'};

}  // namespace

std::uint8_t to_byte(double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("pixel value outside [0,1]: " + std::to_string(v));
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) { return decode_pnm(bytes, '6', 3); }
Image read_image(const std::filesystem::path& path) {
    try {
        return decode_ppm(read_bytes(path));
    } catch (const CodecError& e) {
        throw CodecError(path.string() + ": " + e.what());
    }
}
std::vector<std::uint8_t> encode_ppm(const Image& image) { return encode_pnm(image, '6', 3); }
void write_image(const Image& image, const std::filesystem::path& path) { write_bytes(encode_ppm(image), path); }

Mask decode_pgm(const std::vector<std::uint8_t>& bytes) {
    Mask mask = decode_pnm(bytes, '5', 1);
    for (double& v : mask.data) v = v >= 0.5 ? 1.0 : 0.0;
    return mask;
}
Mask read_mask(const std::filesystem::path& path) {
    try {
        return decode_pgm(read_bytes(path));
    } catch (const CodecError& e) {
        throw CodecError(path.string() + ": " + e.what());
    }
}
std::vector<std::uint8_t> encode_pgm(const Mask& mask) { return encode_pnm(mask, '5', 1); }
void write_mask(const Mask& mask, const std::filesystem::path& path) { write_bytes(encode_pgm(mask), path); }

void write_float_sidecar(const Image& image, const std::filesystem::path& path) {
    if (image.channels != 3) throw CodecError("float sidecar expects an RGB image");
    std::vector<std::uint8_t> out(kSidecarMagic.begin(), kSidecarMagic.end());
    put_u32le(out, static_cast<std::uint32_t>(image.height));
    put_u32le(out, static_cast<std::uint32_t>(image.width));
    for (double v : image.data) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    write_bytes(out, path);
}

Image read_float_sidecar(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kSidecarMagic.data(), kSidecarMagic.size()) != 0) {
        throw CodecError(path.string() + ": bad float sidecar magic");
    }
    const int height = static_cast<int>(get_u32le(bytes.data() + 8));
    const int width = static_cast<int>(get_u32le(bytes.data() + 12));
    Image image(height, width, 3);
    if (bytes.size() != 16 + image.size() * 8) throw CodecError(path.string() + ": truncated float sidecar");
    for (std::size_t i = 0; i < image.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t(bytes[16 + i * 8 + b]) << (8 * b);
        image.data[i] = std::bit_cast<double>(bits);
    }
    return image;
}

Image quantize(const Image& image) {
    Image out = image;
    for (double& v : out.data) v = to_byte(v) / 255.0;
    return out;
}

}  // namespace mgeo
