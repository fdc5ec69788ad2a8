#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hpt/common.hpp"

namespace hpt {

// RGB image, channel-major (3*H*W doubles in [0,1]).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h, int w) : height(h), width(w), px(static_cast<std::size_t>(3) * h * w, 0.0) {}

    double& at(int c, int y, int x) { return px[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return px[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// 8-bit quantization, round half up.
std::uint8_t quantize_u8(double v);

// Inline manifest payloads are interleaved RGB8, row-major (same raster as P6).
std::string encode_inline_payload(const Image& img);
Image decode_inline_payload(std::string_view b64, int height, int width);

// Binary portable graymap / pixmap.
void write_pgm(const std::string& path, const Mat& gray);  // values in [0,1]
Image read_pnm(const std::string& path);                   // P5 or P6

// Resolve an ImageRecord-style ref ("inline:<b64>" or a path relative to base_dir).
Image load_image_ref(const std::string& image_ref, int height, int width, const std::string& base_dir);

}  // namespace hpt
