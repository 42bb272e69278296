#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "signstorm/data/ppm.hpp"
#include "signstorm/data/yolo.hpp"
#include "signstorm/rng.hpp"
#include "signstorm/tensor.hpp"

namespace signstorm {

struct BBox {
    double cx = 0, cy = 0, w = 0, h = 0;
};

struct LabeledExample {
    Tensor image; // [H,W,3] in [0,1]
    int class_id = 0;
    std::optional<BBox> bbox;
    std::string source_path;
};

// 70:15:15 split of a shuffled example list. Splits are disjoint and cover
// every kept example; same seed, same membership.
struct DatasetSplit {
    std::vector<LabeledExample> train, val, test;
    uint64_t seed = 0;
    std::vector<std::string> class_names;
    std::vector<std::string> warnings;

    size_t total() const { return train.size() + val.size() + test.size(); }
};

namespace detail {

inline void split_70_15_15(std::vector<LabeledExample> all, uint64_t seed, DatasetSplit& out) {
    SplitMix64 rng(seed);
    std::vector<size_t> order(all.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const size_t n = all.size();
    const size_t n_train = static_cast<size_t>(0.70 * static_cast<double>(n));
    const size_t n_val = static_cast<size_t>(0.15 * static_cast<double>(n));
    for (size_t i = 0; i < n; ++i) {
        LabeledExample& ex = all[order[i]];
        if (i < n_train)
            out.train.push_back(std::move(ex));
        else if (i < n_train + n_val)
            out.val.push_back(std::move(ex));
        else
            out.test.push_back(std::move(ex));
    }
    out.seed = seed;
}

} // namespace detail

// Non-aspect-preserving bilinear resize, corner-aligned sampling. Used both
// for dataset stretching and for upsampling saliency maps.
inline Tensor bilinear_resize(const Tensor& img, int out_h, int out_w) {
    if (img.rank() != 3) throw Error("resize: expected [H,W,C] tensor, got " + shape_str(img.shape()));
    if (out_h < 1 || out_w < 1) throw Error("resize: target size must be positive");
    const int H = img.dim(0), W = img.dim(1), C = img.dim(2);
    Tensor out(Shape{out_h, out_w, C});
    const double sy = out_h > 1 ? static_cast<double>(H - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(W - 1) / (out_w - 1) : 0.0;
    for (int y = 0; y < out_h; ++y) {
        const double fy = y * sy;
        const int y0 = std::min(static_cast<int>(fy), H - 1);
        const int y1 = std::min(y0 + 1, H - 1);
        const double ty = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = x * sx;
            const int x0 = std::min(static_cast<int>(fx), W - 1);
            const int x1 = std::min(x0 + 1, W - 1);
            const double tx = fx - x0;
            for (int c = 0; c < C; ++c) {
                auto at = [&](int yy, int xx) {
                    return img[(static_cast<int64_t>(yy) * W + xx) * C + c];
                };
                const double top = (1.0 - tx) * at(y0, x0) + tx * at(y0, x1);
                const double bot = (1.0 - tx) * at(y1, x0) + tx * at(y1, x1);
                out[(static_cast<int64_t>(y) * out_w + x) * C + c] = (1.0 - ty) * top + ty * bot;
            }
        }
    }
    return out;
}

inline Tensor resize_stretch(const Tensor& img, int target_resolution) {
    if (target_resolution < 2) throw Error("resize: target resolution must be >= 2");
    if (img.dim(0) == target_resolution && img.dim(1) == target_resolution) return img;
    return bilinear_resize(img, target_resolution, target_resolution);
}

// Loads images/*.ppm with labels/*.txt matched by filename stem and splits
// 70:15:15. The per-example class is the first annotation's class; extra
// annotations are counted and reported as a warning. Images without an
// annotation file, and background-only images, are skipped with a warning.
inline DatasetSplit load_dataset(const std::string& images_dir, const std::string& labels_dir,
                                 int num_classes, uint64_t seed) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(images_dir)) throw Error("dataset: " + images_dir + " is not a directory");
    if (!fs::is_directory(labels_dir)) throw Error("dataset: " + labels_dir + " is not a directory");

    std::vector<fs::path> image_paths;
    for (const auto& entry : fs::directory_iterator(images_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".ppm") image_paths.push_back(entry.path());
    std::sort(image_paths.begin(), image_paths.end(),
              [](const fs::path& a, const fs::path& b) { return a.stem().string() < b.stem().string(); });

    DatasetSplit out;
    std::vector<LabeledExample> all;
    int discarded_annotations = 0;
    for (const fs::path& ip : image_paths) {
        const fs::path lp = fs::path(labels_dir) / (ip.stem().string() + ".txt");
        if (!fs::exists(lp)) {
            out.warnings.push_back("no annotation file for " + ip.string() + "; skipped");
            continue;
        }
        auto annotations = parse_yolo_file(lp.string());
        if (annotations.empty()) {
            out.warnings.push_back(ip.string() + " is background-only; skipped");
            continue;
        }
        if (annotations.size() > 1)
            discarded_annotations += static_cast<int>(annotations.size()) - 1;
        const YoloAnnotation& a = annotations.front();
        if (a.class_id >= num_classes)
            throw Error("dataset: " + lp.string() + " has class " + std::to_string(a.class_id) +
                        " but the dataset is declared with " + std::to_string(num_classes) + " classes");
        LabeledExample ex;
        ex.image = read_ppm(ip.string());
        ex.class_id = a.class_id;
        ex.bbox = BBox{a.cx, a.cy, a.w, a.h};
        ex.source_path = ip.string();
        all.push_back(std::move(ex));
    }
    if (discarded_annotations > 0)
        out.warnings.push_back(std::to_string(discarded_annotations) +
                               " extra annotations discarded (first annotation defines the class)");
    detail::split_70_15_15(std::move(all), seed, out);
    out.class_names.reserve(static_cast<size_t>(num_classes));
    for (int i = 0; i < num_classes; ++i) out.class_names.push_back("class_" + std::to_string(i));
    return out;
}

} // namespace signstorm
