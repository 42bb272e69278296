#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "signstorm/tensor.hpp"

namespace signstorm {

// One object row of a YOLO-format .txt annotation:
// "class cx cy w h", all four box fields normalized to [0,1].
struct YoloAnnotation {
    int class_id = 0;
    double cx = 0, cy = 0, w = 0, h = 0;
};

inline YoloAnnotation parse_yolo_txt(const std::string& line, int line_number = 1) {
    std::istringstream ss(line);
    std::vector<std::string> fields;
    std::string tok;
    while (ss >> tok) fields.push_back(tok);
    if (fields.size() != 5)
        throw Error("annotation line " + std::to_string(line_number) + ": expected 5 fields, got " +
                    std::to_string(fields.size()));
    YoloAnnotation a;
    try {
        size_t used = 0;
        a.class_id = std::stoi(fields[0], &used);
        if (used != fields[0].size()) throw std::invalid_argument(fields[0]);
        a.cx = std::stod(fields[1]);
        a.cy = std::stod(fields[2]);
        a.w = std::stod(fields[3]);
        a.h = std::stod(fields[4]);
    } catch (const std::exception&) {
        throw Error("annotation line " + std::to_string(line_number) + ": malformed number");
    }
    if (a.class_id < 0)
        throw Error("annotation line " + std::to_string(line_number) + ": negative class id");
    const char* names[4] = {"cx", "cy", "w", "h"};
    const double vals[4] = {a.cx, a.cy, a.w, a.h};
    for (int i = 0; i < 4; ++i)
        if (vals[i] < 0.0 || vals[i] > 1.0)
            throw Error("annotation line " + std::to_string(line_number) + ": field " + names[i] + " = " +
                        fields[static_cast<size_t>(i) + 1] + " outside [0,1]");
    return a;
}

// All annotations of one file; blank lines are skipped, an empty file yields
// an empty list (background-only image).
inline std::vector<YoloAnnotation> parse_yolo_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("annotation: cannot open " + path);
    std::vector<YoloAnnotation> out;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        bool blank = true;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
        if (blank) continue;
        try {
            out.push_back(parse_yolo_txt(line, line_number));
        } catch (const Error& e) {
            throw Error(path + ": " + e.what());
        }
    }
    return out;
}

} // namespace signstorm
