#include "cmtda/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace cmtda {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png_8bit(const std::string& path, int h, int w, int channels,
                    const std::vector<png_byte>& rows_data) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw FileMissingError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("libpng error while writing " + path);
    }
    png_init_io(png, fp.get());
    const int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(rows_data.data() + static_cast<std::size_t>(y) * w * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void read_png_8bit(const std::string& path, int expect_channels, int& h, int& w,
                   std::vector<png_byte>& out) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw FileMissingError("cannot open: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("libpng error while reading " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    // Normalize whatever we find to 8-bit gray or RGB.
    png_set_strip_16(png);
    png_set_packing(png);
    const png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (expect_channels == 3 && (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA))
        png_set_gray_to_rgb(png);
    if (expect_channels == 1 && (color & PNG_COLOR_MASK_COLOR))
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);

    h = static_cast<int>(png_get_image_height(png, info));
    w = static_cast<int>(png_get_image_width(png, info));
    const int ch = static_cast<int>(png_get_channels(png, info));
    if (ch != expect_channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("unexpected channel count in " + path);
    }
    out.resize(static_cast<std::size_t>(h) * w * ch);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = out.data() + static_cast<std::size_t>(y) * w * ch;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void write_png_rgb(const std::string& path, const Tensor& image) {
    if (image.c != 3) throw ShapeError("write_png_rgb: need 3 channels");
    std::vector<png_byte> rows(static_cast<std::size_t>(image.h) * image.w * 3);
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                float v = image.at(ch, y, x);
                v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
                rows[(static_cast<std::size_t>(y) * image.w + x) * 3 + ch] =
                    static_cast<png_byte>(std::lround(v * 255.f));
            }
    write_png_8bit(path, image.h, image.w, 3, rows);
}

Tensor read_png_rgb(const std::string& path) {
    int h = 0, w = 0;
    std::vector<png_byte> data;
    read_png_8bit(path, 3, h, w, data);
    Tensor img(3, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                img.at(ch, y, x) =
                    static_cast<float>(data[(static_cast<std::size_t>(y) * w + x) * 3 + ch]) / 255.f;
    return img;
}

void write_png_labels(const std::string& path, const LabelMap& labels) {
    std::vector<png_byte> rows(labels.v.begin(), labels.v.end());
    write_png_8bit(path, labels.h, labels.w, 1, rows);
}

LabelMap read_png_labels(const std::string& path) {
    int h = 0, w = 0;
    std::vector<png_byte> data;
    read_png_8bit(path, 1, h, w, data);
    LabelMap lab(h, w);
    lab.v.assign(data.begin(), data.end());
    return lab;
}

void write_png_gray(const std::string& path, const Tensor& map1) {
    if (map1.c != 1) throw ShapeError("write_png_gray: need 1 channel");
    std::vector<png_byte> rows(static_cast<std::size_t>(map1.h) * map1.w);
    for (int y = 0; y < map1.h; ++y)
        for (int x = 0; x < map1.w; ++x) {
            float v = map1.at(0, y, x);
            v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
            rows[static_cast<std::size_t>(y) * map1.w + x] =
                static_cast<png_byte>(std::lround(v * 255.f));
        }
    write_png_8bit(path, map1.h, map1.w, 1, rows);
}

}  // namespace cmtda
