#include "reldetr/mcstat.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <thread>

#include "reldetr/errors.hpp"

namespace reldetr::mcstat {

std::optional<double> pearson(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    const double ma = (a[0] + a[1] + a[2] + a[3]) / 4.0;
    const double mb = (b[0] + b[1] + b[2] + b[3]) / 4.0;
    double saa = 0.0, sbb = 0.0, sab = 0.0, qa = 0.0, qb = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
        qa += a[i] * a[i];
        qb += b[i] * b[i];
    }
    // Variance at the level of rounding noise counts as zero.
    constexpr double rel = 1e-24;
    if (saa <= rel * qa || sbb <= rel * qb) return std::nullopt;
    double r = sab / std::sqrt(saa * sbb);
    constexpr double snap = 1.0 - 64.0 * std::numeric_limits<double>::epsilon();
    if (r >= snap) r = 1.0;
    if (r <= -snap) r = -1.0;
    return r;
}

std::optional<double> pearson4(const geom::Box& a, const geom::Box& b) {
    return pearson(a.as_array(), b.as_array());
}

ImageMc image_mc(std::span<const geom::Box> boxes) {
    ImageMc out;
    const std::size_t n = boxes.size();
    if (n < 2) return out;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            auto r = pearson4(boxes[i], boxes[j]);
            if (r) {
                total += std::abs(*r);
            } else {
                ++out.degenerate_pairs;
            }
        }
    }
    out.mc = total / static_cast<double>(n * (n - 1));
    return out;
}

McResult dataset_mc(const AnnotationSet& annotations, const McOptions& options) {
    if (options.bins == 0) throw InputError("histogram needs at least one bin");
    std::vector<std::int64_t> ids;
    for (const auto& [id, info] : annotations.images) ids.push_back(id);

    static const std::vector<geom::Box> kNone;
    std::vector<ImageMc> per_image(ids.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            auto it = annotations.boxes_by_image.find(ids[k]);
            per_image[k] = image_mc(it == annotations.boxes_by_image.end() ? kNone : it->second);
        }
    };
    std::size_t jobs = options.jobs == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                         : options.jobs;
    jobs = std::min(jobs, std::max<std::size_t>(1, ids.size()));
    if (jobs <= 1) {
        work(0, ids.size());
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (ids.size() + jobs - 1) / jobs;
        for (std::size_t begin = 0; begin < ids.size(); begin += chunk) {
            pool.emplace_back(work, begin, std::min(ids.size(), begin + chunk));
        }
    }

    McResult result;
    auto& s = result.summary;
    s.n_images = ids.size();
    s.n_dropped_boxes = annotations.dropped_boxes;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        s.n_degenerate_pairs += per_image[k].degenerate_pairs;
        if (!per_image[k].mc) {
            ++s.n_skipped;
            continue;
        }
        result.records.push_back(
            {ids[k], annotations.boxes_by_image.at(ids[k]).size(), *per_image[k].mc});
    }

    s.n_records = result.records.size();
    s.histogram.counts.assign(options.bins, 0);
    for (std::size_t b = 0; b <= options.bins; ++b) {
        s.histogram.edges.push_back(static_cast<double>(b) / static_cast<double>(options.bins));
    }
    s.histogram.density.assign(options.bins, 0.0);
    s.has_data = !result.records.empty();
    if (!s.has_data) return result;

    std::vector<double> values;
    double total = 0.0;
    for (const auto& r : result.records) {
        values.push_back(r.mc);
        total += r.mc;
        auto bin = static_cast<std::size_t>(r.mc * static_cast<double>(options.bins));
        ++s.histogram.counts[std::min(bin, options.bins - 1)];
    }
    const auto n = static_cast<double>(values.size());
    s.mean = total / n;
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / n);
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    s.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
    const double width = 1.0 / static_cast<double>(options.bins);
    for (std::size_t b = 0; b < options.bins; ++b) {
        s.histogram.density[b] = static_cast<double>(s.histogram.counts[b]) / (n * width);
    }
    return result;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string records_csv(std::span<const McRecord> records) {
    std::string out = "image_id,n_objects,mc\n";
    for (const auto& r : records) {
        out += std::to_string(r.image_id);
        out += ',';
        out += std::to_string(r.n_objects);
        out += ',';
        out += format_double(r.mc);
        out += '\n';
    }
    return out;
}

nlohmann::json summary_json(const McSummary& s) {
    nlohmann::json j;
    j["has_data"] = s.has_data;
    if (!s.has_data) j["status"] = "no data";
    j["mean"] = s.has_data ? nlohmann::json(s.mean) : nlohmann::json(nullptr);
    j["median"] = s.has_data ? nlohmann::json(s.median) : nlohmann::json(nullptr);
    j["stddev"] = s.has_data ? nlohmann::json(s.stddev) : nlohmann::json(nullptr);
    j["histogram"] = {{"bin_edges", s.histogram.edges},
                      {"counts", s.histogram.counts},
                      {"density", s.histogram.density}};
    j["n_images"] = s.n_images;
    j["n_records"] = s.n_records;
    j["n_skipped"] = s.n_skipped;
    j["n_degenerate_pairs"] = s.n_degenerate_pairs;
    j["n_dropped_boxes"] = s.n_dropped_boxes;
    return j;
}

}  // namespace reldetr::mcstat
