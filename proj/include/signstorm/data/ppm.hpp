#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "signstorm/tensor.hpp"

namespace signstorm {

// Binary portable pixmap (P6, maxval 255) reader/writer. The only image
// codec in the library; everything else converts to PPM up front.

inline uint8_t quantize8(double v) {
    // round half up, clamped to [0,255]
    double scaled = std::floor(v * 255.0 + 0.5);
    if (scaled < 0.0) scaled = 0.0;
    if (scaled > 255.0) scaled = 255.0;
    return static_cast<uint8_t>(scaled);
}

namespace detail {

inline int ppm_token(std::istream& in, const std::string& path) {
    // whitespace-separated integer token; '#' starts a comment to end of line
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    if (c == EOF) throw Error("ppm: truncated header in " + path);
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw Error("ppm: malformed header in " + path);
    in.unget();
    return value;
}

} // namespace detail

inline Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("ppm: cannot open " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '6')
        throw Error("ppm: " + path + " is not a binary P6 pixmap");
    const int w = detail::ppm_token(in, path);
    const int h = detail::ppm_token(in, path);
    const int maxval = detail::ppm_token(in, path);
    if (maxval != 255) throw Error("ppm: only maxval 255 is supported, got " + std::to_string(maxval) + " in " + path);
    in.get(); // single whitespace after maxval
    if (w <= 0 || h <= 0) throw Error("ppm: bad dimensions in " + path);
    std::string raw(static_cast<size_t>(w) * h * 3, '\0');
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw Error("ppm: truncated pixel data in " + path);
    Tensor img(Shape{h, w, 3});
    for (int64_t i = 0; i < img.size(); ++i)
        img[i] = static_cast<double>(static_cast<uint8_t>(raw[static_cast<size_t>(i)])) / 255.0;
    return img;
}

inline void write_ppm(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.dim(2) != 3)
        throw Error("ppm: expected [H,W,3] image, got " + shape_str(img.shape()));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("ppm: cannot write " + path);
    out << "P6\n" << img.dim(1) << " " << img.dim(0) << "\n255\n";
    std::string raw(static_cast<size_t>(img.size()), '\0');
    for (int64_t i = 0; i < img.size(); ++i)
        raw[static_cast<size_t>(i)] = static_cast<char>(quantize8(img[i]));
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!out) throw Error("ppm: write failed for " + path);
}

} // namespace signstorm
