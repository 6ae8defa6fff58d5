#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fre::data {

struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 1;   // 1 (gray or palette index) or 3 (RGB); alpha is dropped
    int bit_depth = 8;  // 8 or 16
    bool paletted = false;
    std::vector<std::uint16_t> pixels;  // interleaved, row-major

    std::uint16_t max_value() const { return bit_depth == 16 ? 65535 : 255; }
};

// Palette images yield raw indices; sub-byte depths are widened to 8 bits.
PngImage read_png(const std::filesystem::path& path);

// Grayscale (channels == 1) or RGB (channels == 3), 8 or 16 bits.
void write_png(const std::filesystem::path& path, const PngImage& image);

}  // namespace fre::data
