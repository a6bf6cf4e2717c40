#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "pconv/image.hpp"
#include "pconv/trainer.hpp"

namespace pconv {

/// Dataset manifests are UTF-8 text, one sample per line:
/// `image_path<TAB>mask_or_label_path`, LF line endings. Relative paths
/// resolve against the manifest's directory.

inline void write_manifest(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& [a, b] : rows) os << a << '\t' << b << '\n';
    if (!os) throw IoError("write failure on '" + path + "'");
}

inline std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open manifest '" + path + "' for reading");
    std::vector<std::pair<std::string, std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw FormatError("manifest line without a tab separator in '" + path + "': '" +
                              line + "'");
        rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return rows;
}

inline std::string resolve_against(const std::string& manifest_path, const std::string& p) {
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return p;
    return (std::filesystem::path(manifest_path).parent_path() / fp).string();
}

/// Loads (image, hole-mask) pairs for inpainting training.
inline std::vector<InpaintSample<float>> load_inpaint_dataset(const std::string& manifest_path) {
    std::vector<InpaintSample<float>> out;
    for (const auto& [img_rel, mask_rel] : read_manifest(manifest_path)) {
        GrayImage img = read_pgm(resolve_against(manifest_path, img_rel));
        BinaryMask mask = read_mask_pgm(resolve_against(manifest_path, mask_rel));
        out.push_back({image_to_tensor(img), mask_to_tensor(mask)});
    }
    return out;
}

/// Loads (image, label) pairs for segmentation training; any nonzero label
/// becomes target 1.
inline std::vector<SegSample<float>> load_seg_dataset(const std::string& manifest_path) {
    std::vector<SegSample<float>> out;
    for (const auto& [img_rel, label_rel] : read_manifest(manifest_path)) {
        GrayImage img = read_pgm(resolve_against(manifest_path, img_rel));
        LabelMap label = read_label_pgm(resolve_against(manifest_path, label_rel));
        Tensor<float> target(1, 1, label.height, label.width);
        for (std::size_t i = 0; i < label.size(); ++i) target[i] = label.v[i] ? 1.f : 0.f;
        out.push_back({image_to_tensor(img), std::move(target)});
    }
    return out;
}

} // namespace pconv
