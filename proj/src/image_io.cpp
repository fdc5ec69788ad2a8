#include "hpt/image_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace hpt {

namespace {
constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= bytes.size()) {
        std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back(kB64Alphabet[v & 63]);
        i += 3;
    }
    std::size_t rem = bytes.size() - i;
    if (rem == 1) {
        std::uint32_t v = bytes[i] << 16;
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (rem == 2) {
        std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t buf = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        int v = b64_value(c);
        if (v < 0) throw std::runtime_error("invalid base64 character");
        buf = (buf << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((buf >> bits) & 0xff));
        }
    }
    return out;
}

std::uint8_t quantize_u8(double v) {
    if (v <= 0.0) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

std::string encode_inline_payload(const Image& img) {
    std::vector<std::uint8_t> raster(static_cast<std::size_t>(3) * img.height * img.width);
    std::size_t k = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) raster[k++] = quantize_u8(img.at(c, y, x));
    return "inline:" + base64_encode(raster);
}

Image decode_inline_payload(std::string_view b64, int height, int width) {
    auto raster = base64_decode(b64);
    std::size_t expected = static_cast<std::size_t>(3) * height * width;
    if (raster.size() != expected)
        throw std::runtime_error("inline payload size mismatch: got " + std::to_string(raster.size()) +
                                 " bytes, expected " + std::to_string(expected));
    Image img(height, width);
    std::size_t k = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = raster[k++] / 255.0;
    return img;
}

void write_pgm(const std::string& path, const Mat& gray) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "P5\n" << gray.cols << " " << gray.rows << "\n255\n";
    for (std::size_t r = 0; r < gray.rows; ++r)
        for (std::size_t c = 0; c < gray.cols; ++c) {
            std::uint8_t b = quantize_u8(gray.at(r, c));
            out.write(reinterpret_cast<const char*>(&b), 1);
        }
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {
int read_pnm_token(std::ifstream& in) {
    // skip whitespace and '#' comments
    int c = in.get();
    while (c != EOF && (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    int value = 0;
    bool any = false;
    while (c >= '0' && c <= '9') {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw std::runtime_error("malformed PNM header");
    return value;
}
}  // namespace

Image read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char m0 = static_cast<char>(in.get());
    char m1 = static_cast<char>(in.get());
    if (m0 != 'P' || (m1 != '5' && m1 != '6')) throw std::runtime_error("unsupported image format: " + path);
    bool color = (m1 == '6');
    int w = read_pnm_token(in);
    int h = read_pnm_token(in);
    int maxval = read_pnm_token(in);
    if (maxval <= 0 || maxval > 255) throw std::runtime_error("unsupported PNM maxval: " + path);
    std::size_t n = static_cast<std::size_t>(w) * h * (color ? 3 : 1);
    std::vector<std::uint8_t> raster(n);
    in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n)) throw std::runtime_error("truncated image: " + path);
    Image img(h, w);
    std::size_t k = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (color) {
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = raster[k++] / static_cast<double>(maxval);
            } else {
                double v = raster[k++] / static_cast<double>(maxval);
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
            }
        }
    return img;
}

Image load_image_ref(const std::string& image_ref, int height, int width, const std::string& base_dir) {
    constexpr std::string_view kInline = "inline:";
    if (image_ref.rfind(kInline, 0) == 0)
        return decode_inline_payload(std::string_view(image_ref).substr(kInline.size()), height, width);
    std::string path = image_ref;
    if (!base_dir.empty() && !image_ref.empty() && image_ref.front() != '/') path = base_dir + "/" + image_ref;
    Image img = read_pnm(path);
    if (img.height != height || img.width != width)
        throw std::runtime_error("image size mismatch for " + image_ref);
    return img;
}

}  // namespace hpt
