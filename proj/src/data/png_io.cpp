#include "fre/data/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "fre/errors.hpp"

namespace fre::data {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

PngImage read_png(const std::filesystem::path& path) {
    const std::string file = path.string();
    FilePtr fp(std::fopen(file.c_str(), "rb"));
    if (!fp) throw DataError(file, "cannot open image");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw DataError(file, "not a PNG file");
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError(file, "libpng initialisation failed");
    }

    // Everything with a destructor lives before setjmp so a longjmp skips none.
    PngImage img;
    std::vector<std::uint8_t> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError(file, "corrupt PNG data");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    img.paletted = color == PNG_COLOR_TYPE_PALETTE;
    if (depth < 8) {
        if (color == PNG_COLOR_TYPE_GRAY) png_set_expand_gray_1_2_4_to_8(png);
        else png_set_packing(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.bit_depth = png_get_bit_depth(png, info) == 16 ? 16 : 8;
    img.channels = png_get_channels(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * static_cast<std::size_t>(img.height));
    rows.resize(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (img.channels != 1 && img.channels != 3) {
        throw DataError(file, "unsupported channel count " + std::to_string(img.channels));
    }
    const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
    img.pixels.resize(count);
    if (img.bit_depth == 16) {
        for (std::size_t i = 0; i < count; ++i) {
            img.pixels[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) img.pixels[i] = buffer[i];
    }
    return img;
}

void write_png(const std::filesystem::path& path, const PngImage& image) {
    const std::string file = path.string();
    if (image.channels != 1 && image.channels != 3) throw DataError(file, "can only write gray or RGB PNGs");
    if (image.bit_depth != 8 && image.bit_depth != 16) throw DataError(file, "bit depth must be 8 or 16");
    const std::size_t count = static_cast<std::size_t>(image.width) * image.height * image.channels;
    if (image.pixels.size() != count) throw DataError(file, "pixel buffer size mismatch");

    FilePtr fp(std::fopen(file.c_str(), "wb"));
    if (!fp) throw DataError(file, "cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError(file, "libpng initialisation failed");
    }
    const std::size_t bytes_per = image.bit_depth == 16 ? 2 : 1;
    const std::size_t rowbytes = static_cast<std::size_t>(image.width) * image.channels * bytes_per;
    std::vector<std::uint8_t> buffer(rowbytes * static_cast<std::size_t>(image.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
    for (std::size_t i = 0; i < count; ++i) {
        if (bytes_per == 2) {
            // PNG stores 16-bit samples big-endian.
            buffer[2 * i] = static_cast<std::uint8_t>(image.pixels[i] >> 8);
            buffer[2 * i + 1] = static_cast<std::uint8_t>(image.pixels[i] & 0xff);
        } else {
            buffer[i] = static_cast<std::uint8_t>(image.pixels[i]);
        }
    }
    for (int y = 0; y < image.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError(file, "PNG encoding failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height),
                 image.bit_depth, image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace fre::data
