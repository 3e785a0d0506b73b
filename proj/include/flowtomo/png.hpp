#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "flowtomo/error.hpp"
#include "flowtomo/types.hpp"
#include "flowtomo/warp.hpp"

namespace flowtomo {

/// 8-bit raster, row-major, 1 (gray) or 3 (RGB) channels.
struct Raster {
    std::size_t width = 0, height = 0, channels = 1;
    std::vector<std::uint8_t> px;

    Raster() = default;
    Raster(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c), px(w * h * c, fill) {}

    void set(std::size_t x, std::size_t y, std::array<std::uint8_t, 3> rgb) {
        if (x >= width || y >= height) return;
        for (std::size_t c = 0; c < channels; ++c) px[(y * width + x) * channels + c] = rgb[c];
    }
};

/// Writes `r` to `path` through a temporary file renamed on success.
inline void write_png(const std::filesystem::path& path, const Raster& r) {
    require_arg(r.width > 0 && r.height > 0 && (r.channels == 1 || r.channels == 3), "write_png: bad raster");
    const std::filesystem::path tmp = path.string() + ".tmp";
    FILE* fp = std::fopen(tmp.string().c_str(), "wb");
    require(fp != nullptr, ErrorCode::io_error, "cannot open " + tmp.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        std::filesystem::remove(tmp);
        throw Error(ErrorCode::io_error, "libpng failed writing " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(r.width), png_uint_32(r.height), 8,
                 r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < r.height; ++y)
        png_write_row(png, const_cast<png_bytep>(r.px.data() + y * r.width * r.channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    require(std::fclose(fp) == 0, ErrorCode::io_error, "cannot close " + tmp.string());
    std::filesystem::rename(tmp, path);
}

/// Reads an 8-bit gray or RGB PNG (used by tests to inspect outputs).
inline Raster read_png(const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.string().c_str(), "rb");
    require(fp != nullptr, ErrorCode::io_error, "cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw Error(ErrorCode::io_error, "libpng failed reading " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const auto type = png_get_color_type(png, info);
    require(png_get_bit_depth(png, info) == 8 && (type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_RGB),
            ErrorCode::unknown_format, "read_png: only 8-bit gray/RGB supported");
    Raster r(png_get_image_width(png, info), png_get_image_height(png, info), type == PNG_COLOR_TYPE_GRAY ? 1 : 3);
    for (std::size_t y = 0; y < r.height; ++y) png_read_row(png, r.px.data() + y * r.width * r.channels, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return r;
}

/// Value at quantile q in [0, 1] (nearest rank).
template <class T>
double percentile(std::span<const T> v, double q) {
    require_arg(!v.empty(), "percentile: empty input");
    std::vector<double> s(v.begin(), v.end());
    const std::size_t k = std::size_t(std::clamp(q, 0.0, 1.0) * double(s.size() - 1) + 0.5);
    std::nth_element(s.begin(), s.begin() + long(k), s.end());
    return s[k];
}

/// Linear gray mapping of a plane: lo -> 0, hi -> 255, clipped.
template <class T>
Raster gray_raster(ImageView<const T> img, double lo, double hi) {
    Raster r(img.cols, img.rows, 1);
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t y = 0; y < img.rows; ++y)
        for (std::size_t x = 0; x < img.cols; ++x) {
            const double t = std::clamp((double(img(y, x)) - lo) / span, 0.0, 1.0);
            r.px[y * img.cols + x] = std::uint8_t(std::lround(255.0 * t));
        }
    return r;
}

/// Central xy, xz and yz planes of u with gray levels clipped at the
/// 0.5 / 99.5 percentiles of the whole volume.
template <class T>
std::array<Raster, 3> orthogonal_slices(const Volume<T>& u) {
    const double lo = percentile<T>(u.values(), 0.005), hi = percentile<T>(u.values(), 0.995);
    const std::size_t nz = u.dim(0), ny = u.dim(1), nx = u.dim(2);
    Grid3<T> xz(1, nz, nx), yz(1, nz, ny);
    for (std::size_t z = 0; z < nz; ++z) {
        for (std::size_t x = 0; x < nx; ++x) xz(0, z, x) = u(z, ny / 2, x);
        for (std::size_t y = 0; y < ny; ++y) yz(0, z, y) = u(z, y, nx / 2);
    }
    return {gray_raster<T>(plane_view(u, nz / 2), lo, hi), gray_raster<T>(plane_view(xz, 0), lo, hi),
            gray_raster<T>(plane_view(yz, 0), lo, hi)};
}

inline Raster to_raster(const RgbImage& img) {
    Raster r(img.width, img.height, 3);
    r.px = img.rgb;
    return r;
}

/// Straight line between two pixel positions (Bresenham).
inline void draw_line(Raster& r, long x0, long y0, long x1, long y1, std::array<std::uint8_t, 3> rgb) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
        if (x0 >= 0 && y0 >= 0) r.set(std::size_t(x0), std::size_t(y0), rgb);
        if (x0 == x1 && y0 == y1) break;
        const long e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

} // namespace flowtomo
