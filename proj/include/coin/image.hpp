// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/core.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

namespace coin {

/// Row-major interleaved image: value(y, x, c) = data[(y * width + x) * channels + c].
template <typename T> class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, T fill = T(0))
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return data_.empty(); }

    T& operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
    const T& operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool same_shape(const Image& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    template <typename U> Image<U> cast() const {
        Image<U> out(width_, height_, channels_);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            out.data()[i] = static_cast<U>(data_[i]);
        }
        return out;
    }

    bool operator==(const Image& o) const = default;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<T> data_;
};

template <typename T> void require_same_shape(const Image<T>& a, const Image<T>& b, const char* what) {
    if (!a.same_shape(b)) {
        std::ostringstream os;
        os << what << ": " << a.width() << "x" << a.height() << "x" << a.channels() << " vs " << b.width() << "x"
           << b.height() << "x" << b.channels();
        throw Error(ErrorCode::DimensionMismatch, os.str());
    }
}

inline std::uint8_t quantize_u8(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

/// Rounds every value to the nearest 8-bit level (what a PNG round trip keeps).
template <typename T> Image<T> quantize8(const Image<T>& img) {
    Image<T> out = img;
    for (auto& v : out.data()) {
        v = T(quantize_u8(double(v))) / T(255);
    }
    return out;
}

namespace detail {

struct PngWriteDeleter {
    void operator()(png_structp p) const { png_destroy_write_struct(&p, nullptr); }
};

} // namespace detail

/// Writes 1- or 3-channel images as 8-bit PNG. Values are clamped to [0,1].
/// No timestamps or text chunks are emitted, so equal images give equal bytes.
template <typename T> void write_png(const std::filesystem::path& path, const Image<T>& img) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw Error(ErrorCode::Format, "PNG output supports 1 or 3 channels");
    }
    std::unique_ptr<FILE, decltype(&std::fclose)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!fp) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::Io, "libpng initialisation failed");
    }
    std::vector<std::uint8_t> bytes(img.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = quantize_u8(double(img.data()[i]));
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::Io, "libpng failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width()) * img.channels();
    for (int y = 0; y < img.height(); ++y) {
        png_write_row(png, bytes.data() + stride * static_cast<std::size_t>(y));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads an 8-bit gray/RGB(A) PNG into [0,1] values. Alpha is dropped and
/// gray is kept single-channel.
template <typename T> Image<T> read_png(const std::filesystem::path& path) {
    std::unique_ptr<FILE, decltype(&std::fclose)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
    if (!fp) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::Io, "libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::Format, "not a readable PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_packing(png);
    const auto color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * width * channels;
    }
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Image<T> img(width, height, channels);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        img.data()[i] = T(bytes[i]) / T(255);
    }
    return img;
}

/// Writes a little-endian PFM ("Pf" for 1 channel, "PF" for 3). Rows are
/// stored bottom-to-top as the format requires.
template <typename T> void write_pfm(const std::filesystem::path& path, const Image<T>& img) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw Error(ErrorCode::Format, "PFM output supports 1 or 3 channels");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    out << (img.channels() == 1 ? "Pf" : "PF") << "\n" << img.width() << " " << img.height() << "\n-1.0\n";
    std::vector<float> row(static_cast<std::size_t>(img.width()) * img.channels());
    for (int y = img.height() - 1; y >= 0; --y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                row[static_cast<std::size_t>(x) * img.channels() + c] = static_cast<float>(img(y, x, c));
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) {
        throw Error(ErrorCode::Io, "failed writing " + path.string());
    }
}

template <typename T> Image<T> read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    std::string magic;
    int width = 0, height = 0;
    double scale = 0;
    in >> magic >> width >> height >> scale;
    in.get();
    if ((magic != "Pf" && magic != "PF") || width <= 0 || height <= 0 || scale == 0) {
        throw Error(ErrorCode::Format, "bad PFM header in " + path.string());
    }
    if (scale > 0) {
        throw Error(ErrorCode::Format, "big-endian PFM not supported: " + path.string());
    }
    const int channels = magic == "Pf" ? 1 : 3;
    Image<T> img(width, height, channels);
    std::vector<float> row(static_cast<std::size_t>(width) * channels);
    for (int y = height - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) {
            throw Error(ErrorCode::Format, "truncated PFM: " + path.string());
        }
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                img(y, x, c) = T(row[static_cast<std::size_t>(x) * channels + c]);
            }
        }
    }
    return img;
}

} // namespace coin
