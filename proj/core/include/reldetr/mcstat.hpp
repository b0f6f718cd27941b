#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reldetr/geom.hpp"

namespace reldetr::mcstat {

struct ImageInfo {
    double width = 0.0;
    double height = 0.0;
};

struct AnnotationSet {
    std::map<std::int64_t, ImageInfo> images;
    /// Center-size boxes in pixel units, in file order.
    std::map<std::int64_t, std::vector<geom::Box>> boxes_by_image;
    /// Annotations dropped for w <= 0 or h <= 0.
    std::size_t dropped_boxes = 0;
};

/// Reads images[].{id,width,height} and annotations[].{image_id,bbox}; bbox
/// is [x_min, y_min, w, h]. Throws InputError naming `source` and the JSON
/// location on malformed input.
AnnotationSet parse_coco(const nlohmann::json& doc, const std::string& source = "<memory>");
AnnotationSet load_coco(const std::filesystem::path& path);

/// Pearson correlation of two 4-sample vectors; nullopt when either has zero
/// variance. Values within rounding of ±1 are returned as exactly ±1.
std::optional<double> pearson(const std::array<double, 4>& a, const std::array<double, 4>& b);
std::optional<double> pearson4(const geom::Box& a, const geom::Box& b);

struct ImageMc {
    std::optional<double> mc;  // nullopt when fewer than two boxes
    std::size_t degenerate_pairs = 0;
};

/// Mean |Pearson| over ordered pairs i != j; undefined pairs count as 0.
ImageMc image_mc(std::span<const geom::Box> boxes);

struct McRecord {
    std::int64_t image_id = 0;
    std::size_t n_objects = 0;
    double mc = 0.0;
};

struct Histogram {
    std::vector<double> edges;
    std::vector<std::size_t> counts;
    std::vector<double> density;
};

struct McSummary {
    bool has_data = false;
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;  // population
    Histogram histogram;
    std::size_t n_images = 0;
    std::size_t n_records = 0;
    std::size_t n_skipped = 0;
    std::size_t n_degenerate_pairs = 0;
    std::size_t n_dropped_boxes = 0;
};

struct McOptions {
    std::size_t bins = 20;
    /// Worker threads; 0 picks the hardware concurrency. Never changes output.
    std::size_t jobs = 1;
};

struct McResult {
    std::vector<McRecord> records;  // ascending image id
    McSummary summary;
};

McResult dataset_mc(const AnnotationSet& annotations, const McOptions& options = {});

/// "image_id,n_objects,mc" CSV, LF line endings, shortest round-trip floats.
std::string records_csv(std::span<const McRecord> records);
nlohmann::json summary_json(const McSummary& summary);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace reldetr::mcstat
