#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "signstorm/data/dataset.hpp"
#include "signstorm/rng.hpp"

namespace signstorm {

// Deterministic synthetic traffic-sign dataset: parameterized glyphs
// (disk / triangle / octagon / rectangle, class-specific hue, bar pattern
// and optional ring) over a muted gradient background with per-example
// jitter. Classes are separable by construction, which is what the
// desk-scale training and attack experiments need.

inline const std::vector<std::string>& synth_class_names() {
    static const std::vector<std::string> names = {
        "Stop_Sign",
        "Traffic_signal",
        "Speed Limit 20 KMPH",
        "Speed Limit 30 KMPH",
        "Speed Limit 50 KMPH",
        "Speed Limit 60 KMPH",
        "Speed Limit 70 KMPH",
        "Speed Limit 80 KMPH",
        "Speed Limit 100 KMPH",
        "Speed Limit 120 KMPH",
        "Keep-Right",
        "Keep-Left",
        "Turn right ahead",
        "Turn left ahead",
        "Ahead only",
        "Yield",
        "No entry",
        "No passing",
        "Roundabout mandatory",
        "Pedestrian crossing",
        "School zone",
        "Slippery road",
        "Road work",
        "Railway crossing",
        "Bumpy road",
        "Wild animals",
        "End of all speed and passing limits",
        "Priority road",
        "Children crossing",
    };
    return names;
}

namespace detail {

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double h6 = h * 6.0;
    const int i = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch (i) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

struct SignStyle {
    int shape;      // 0 disk, 1 triangle, 2 octagon, 3 rectangle
    bool ring;
    int bars;       // 3-bit "digit" pattern
    double hue;
};

inline SignStyle class_style(int class_id) {
    SignStyle s;
    s.shape = class_id % 4;
    s.ring = (class_id / 4) % 2 == 1;
    s.bars = (class_id / 8) % 8;
    s.hue = std::fmod(static_cast<double>(class_id) * 0.618033988749895 + 0.05, 1.0);
    return s;
}

// u, v are pixel offsets from the glyph center in units of the glyph radius.
inline bool inside_glyph(int shape, double u, double v) {
    switch (shape) {
        case 0: return u * u + v * v <= 1.0;
        case 1: return v >= -0.93 && v <= 0.82 && std::fabs(u) <= (v + 0.93) * 0.56;
        case 2: return std::max({std::fabs(u), std::fabs(v), (std::fabs(u) + std::fabs(v)) / 1.41421356237}) <= 0.92;
        default: return std::fabs(u) <= 0.88 && std::fabs(v) <= 0.74;
    }
}

inline Tensor render_sign(int class_id, int resolution, SplitMix64& rng) {
    const SignStyle style = class_style(class_id);
    const double R = static_cast<double>(resolution);

    const double hue = style.hue + rng.next_double(-0.03, 0.03);
    const double cx = 0.5 * R + rng.next_double(-0.15, 0.15) * R;
    const double cy = 0.5 * R + rng.next_double(-0.15, 0.15) * R;
    const double radius = 0.5 * R * rng.next_double(0.58, 0.82);
    const double bg_hue0 = rng.next_double(0.0, 1.0);
    const double bg_v0 = rng.next_double(0.30, 0.55);
    const double bg_hue1 = rng.next_double(0.0, 1.0);
    const double bg_v1 = rng.next_double(0.45, 0.70);

    const auto sign_rgb = hsv_to_rgb(hue, 0.85, 0.92);
    const auto bg0 = hsv_to_rgb(bg_hue0, 0.12, bg_v0);
    const auto bg1 = hsv_to_rgb(bg_hue1, 0.12, bg_v1);

    Tensor img(Shape{resolution, resolution, 3});
    for (int y = 0; y < resolution; ++y) {
        const double ty = resolution > 1 ? static_cast<double>(y) / (resolution - 1) : 0.0;
        for (int x = 0; x < resolution; ++x) {
            const double noise = rng.next_double(-0.02, 0.02);
            const double u = (x + 0.5 - cx) / radius;
            const double v = (y + 0.5 - cy) / radius;
            std::array<double, 3> rgb = {(1.0 - ty) * bg0[0] + ty * bg1[0],
                                         (1.0 - ty) * bg0[1] + ty * bg1[1],
                                         (1.0 - ty) * bg0[2] + ty * bg1[2]};
            if (inside_glyph(style.shape, u, v)) {
                rgb = sign_rgb;
                if (style.ring && !inside_glyph(style.shape, u / 0.8, v / 0.8)) rgb = {0.96, 0.96, 0.96};
                if (inside_glyph(style.shape, u / 0.78, v / 0.78)) {
                    static const double bar_offsets[3] = {-0.40, 0.0, 0.40};
                    for (int b = 0; b < 3; ++b)
                        if ((style.bars >> b) & 1)
                            if (std::fabs(v - bar_offsets[b]) <= 0.13 && std::fabs(u) <= 0.52) rgb = {0.06, 0.06, 0.06};
                }
            }
            for (int c = 0; c < 3; ++c) {
                double val = rgb[static_cast<size_t>(c)] + noise;
                img[(static_cast<int64_t>(y) * resolution + x) * 3 + c] = std::min(1.0, std::max(0.0, val));
            }
        }
    }
    return img;
}

} // namespace detail

inline DatasetSplit synth_signs(int num_classes, int per_class, int resolution, uint64_t seed) {
    const auto& names = synth_class_names();
    if (num_classes < 2 || num_classes > static_cast<int>(names.size()))
        throw Error("synth_signs: num_classes must be in [2, " + std::to_string(names.size()) + "]");
    if (per_class < 1) throw Error("synth_signs: per_class must be positive");
    if (resolution < 4) throw Error("synth_signs: resolution must be >= 4");

    std::vector<LabeledExample> all;
    all.reserve(static_cast<size_t>(num_classes) * per_class);
    SplitMix64 rng(seed ^ 0x5370526D53796E74ULL);
    for (int c = 0; c < num_classes; ++c)
        for (int k = 0; k < per_class; ++k) {
            LabeledExample ex;
            ex.image = detail::render_sign(c, resolution, rng);
            ex.class_id = c;
            ex.source_path = "synthetic/" + std::to_string(c) + "/" + std::to_string(k);
            all.push_back(std::move(ex));
        }

    DatasetSplit out;
    detail::split_70_15_15(std::move(all), seed, out);
    out.class_names.assign(names.begin(), names.begin() + num_classes);
    return out;
}

} // namespace signstorm
