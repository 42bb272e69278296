#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "signstorm/model.hpp"

namespace signstorm {

static_assert(std::endian::native == std::endian::little, "weight files are little-endian");

// Weight file layout:
//   8-byte magic "SGNSTRM1"
//   u32 input_resolution, u32 channels, u32 num_classes,
//   u32 block_count, { u32 filters, u32 kernel } per block,
//   u32 dense_width, f64 leaky_slope
//   per-parameter f64 arrays in declaration order
//   u32 CRC-32 of all preceding bytes

inline constexpr char kWeightMagic[8] = {'S', 'G', 'N', 'S', 'T', 'R', 'M', '1'};

inline uint32_t crc32_update(uint32_t crc, const void* data, size_t len) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(data);
    crc = ~crc;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
    return ~crc;
}

inline uint32_t crc32_of(const void* data, size_t len) { return crc32_update(0, data, len); }

namespace detail {

struct ByteWriter {
    std::string bytes;
    void raw(const void* p, size_t n) { bytes.append(static_cast<const char*>(p), n); }
    void u32(uint32_t v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
};

struct ByteReader {
    const std::string& bytes;
    size_t pos = 0;
    const std::string& path;

    void raw(void* p, size_t n) {
        if (pos + n > bytes.size())
            throw Error("weights: " + path + " truncated at byte " + std::to_string(bytes.size()) + " (need " +
                        std::to_string(pos + n) + ")");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    uint32_t u32() {
        uint32_t v;
        raw(&v, 4);
        return v;
    }
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }
};

} // namespace detail

inline void save_weights(const Model& model, const std::string& path) {
    const ModelConfig& cfg = model.config();
    detail::ByteWriter w;
    w.raw(kWeightMagic, 8);
    w.u32(static_cast<uint32_t>(cfg.input_resolution));
    w.u32(static_cast<uint32_t>(cfg.channels));
    w.u32(static_cast<uint32_t>(cfg.num_classes));
    w.u32(static_cast<uint32_t>(cfg.conv_blocks.size()));
    for (const ConvBlock& b : cfg.conv_blocks) {
        w.u32(static_cast<uint32_t>(b.filters));
        w.u32(static_cast<uint32_t>(b.kernel));
    }
    w.u32(static_cast<uint32_t>(cfg.dense_width));
    w.f64(cfg.leaky_slope);
    for (const Tensor& p : model.params()) w.raw(p.data(), static_cast<size_t>(p.size()) * 8);
    const uint32_t crc = crc32_of(w.bytes.data(), w.bytes.size());
    w.u32(crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("weights: cannot write " + path);
    out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw Error("weights: write failed for " + path);
}

inline Model load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("weights: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    detail::ByteReader r{bytes, 0, path};
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kWeightMagic, 8) != 0)
        throw Error("weights: " + path + " has an unrecognized format (bad magic)");

    ModelConfig cfg;
    cfg.input_resolution = static_cast<int>(r.u32());
    cfg.channels = static_cast<int>(r.u32());
    cfg.num_classes = static_cast<int>(r.u32());
    const uint32_t blocks = r.u32();
    if (blocks == 0 || blocks > 64)
        throw Error("weights: " + path + " declares implausible block count " + std::to_string(blocks));
    cfg.conv_blocks.clear();
    for (uint32_t i = 0; i < blocks; ++i) {
        ConvBlock b;
        b.filters = static_cast<int>(r.u32());
        b.kernel = static_cast<int>(r.u32());
        cfg.conv_blocks.push_back(b);
    }
    cfg.dense_width = static_cast<int>(r.u32());
    cfg.leaky_slope = r.f64();
    cfg.validate();

    // parameter shapes implied by the config, declaration order
    std::vector<Tensor> params;
    int cin = cfg.channels;
    int res = cfg.input_resolution;
    for (const ConvBlock& b : cfg.conv_blocks) {
        params.emplace_back(Shape{b.kernel, b.kernel, cin, b.filters});
        params.emplace_back(Shape{b.filters});
        cin = b.filters;
        res /= 2;
    }
    const int flat = res * res * cin;
    params.emplace_back(Shape{flat, cfg.dense_width});
    params.emplace_back(Shape{cfg.dense_width});
    params.emplace_back(Shape{cfg.dense_width, cfg.num_classes});
    params.emplace_back(Shape{cfg.num_classes});
    for (Tensor& p : params) r.raw(p.data(), static_cast<size_t>(p.size()) * 8);

    const size_t payload_end = r.pos;
    const uint32_t stored_crc = r.u32();
    if (r.pos != bytes.size())
        throw Error("weights: " + path + " has " + std::to_string(bytes.size() - r.pos) +
                    " trailing bytes after the checksum");
    const uint32_t actual_crc = crc32_of(bytes.data(), payload_end);
    if (stored_crc != actual_crc)
        throw Error("weights: " + path + " checksum mismatch (file corrupt)");

    return Model::from_params(std::move(cfg), std::move(params));
}

} // namespace signstorm
