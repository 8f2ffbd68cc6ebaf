#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "refsr/core/checkpoint.hpp"
#include "refsr/core/image.hpp"

namespace refsr {

namespace detail {

struct PngReadState {
    const std::uint8_t* data;
    size_t size;
    size_t pos;
};

inline void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->pos + n > st->size) png_error(png, "unexpected end of PNG data");
    std::memcpy(out, st->data + st->pos, n);
    st->pos += n;
}

inline void png_mem_write(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), n);
}

inline void png_mem_flush(png_structp) {}

}  // namespace detail

inline Image decode_png(const std::string& bytes, const std::string& origin = "") {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw io_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw io_error("png_create_info_struct failed");
    }
    std::vector<png_bytep> rows;
    std::vector<std::uint8_t> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("failed to decode PNG" + (origin.empty() ? "" : ": " + origin));
    }
    detail::PngReadState st{reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size(), 0};
    png_set_read_fn(png, &st, detail::png_mem_read);
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = static_cast<int>(png_get_channels(png, info));
    if (c != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("unexpected channel count after PNG expansion");
    }
    pixels.resize(static_cast<size_t>(h) * w * 3);
    rows.resize(h);
    for (int y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return from_u8_interleaved(pixels.data(), h, w, 3);
}

inline std::string encode_png(const Image& img) {
    check_image(img, "encode_png");
    const Image rgb = gray_to_rgb(img);
    const int h = rgb.dim(1), w = rgb.dim(2);
    const std::vector<std::uint8_t> pixels = to_u8_interleaved(rgb);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw io_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw io_error("png_create_info_struct failed");
    }
    std::string out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error("failed to encode PNG");
    }
    png_set_write_fn(png, &out, detail::png_mem_write, detail::png_mem_flush);
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y)
        rows[y] = const_cast<png_bytep>(pixels.data() + static_cast<size_t>(y) * w * 3);
    png_write_image(png, rows.data());
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
    return out;
}

inline Image read_png(const std::string& path) { return decode_png(read_file(path), path); }

inline void write_png(const std::string& path, const Image& img) {
    write_file_atomic(path, encode_png(img));
}

}  // namespace refsr
