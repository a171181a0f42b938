#include "core/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <memory>
#include <vector>

namespace casr {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image load_image(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    require(fp != nullptr, ErrorCode::io, "cannot open image: " + path);

    png_byte header[8];
    require(std::fread(header, 1, 8, fp.get()) == 8 && !png_sig_cmp(header, 0, 8), ErrorCode::io,
            "not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, ErrorCode::runtime, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorCode::runtime, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::io, "PNG decode error: " + path);
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::invalid_argument, "16-bit PNG not supported (8-bit sRGB required): " + path);
    }

    bool converted = false;
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
        converted = true;
    }
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        if (bit_depth < 8)
            png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
        converted = true;
    }
    if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
        if (png_get_valid(png, info, PNG_INFO_tRNS))
            png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
        converted = true;
    }
    if (converted)
        std::cerr << "[casr] warning: converting non-RGB PNG to RGB: " << path << "\n";

    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const size_t rowbytes = png_get_rowbytes(png, info);
    require(rowbytes == static_cast<size_t>(w) * 3, ErrorCode::io, "unexpected PNG row layout: " + path);

    std::vector<png_byte> data(static_cast<size_t>(h) * rowbytes);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] = data.data() + static_cast<size_t>(y) * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at3(c, y, x) = data[(static_cast<size_t>(y) * w + x) * 3 + c] / 127.5 - 1.0;
    return img;
}

void save_image(const Image& img, const std::string& path) {
    require(img.ndim() == 3 && (img.channels() == 3 || img.channels() == 1), ErrorCode::invalid_argument,
            "save_image: expected [3,H,W] or [1,H,W] image");
    const int h = img.height(), w = img.width();

    std::vector<png_byte> data(static_cast<size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = img.at3(img.channels() == 1 ? 0 : c, y, x);
                v = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
                // round-half-to-even via the default FP rounding mode
                double q = std::nearbyint((v + 1.0) * 127.5);
                data[(static_cast<size_t>(y) * w + x) * 3 + c] = static_cast<png_byte>(q);
            }
        }
    }

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    require(fp != nullptr, ErrorCode::io, "cannot write image: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, ErrorCode::runtime, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorCode::runtime, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::io, "PNG encode error: " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] = data.data() + static_cast<size_t>(y) * w * 3;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace casr
