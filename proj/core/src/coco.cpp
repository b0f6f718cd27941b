#include <fstream>
#include <string>

#include "reldetr/errors.hpp"
#include "reldetr/mcstat.hpp"

namespace reldetr::mcstat {
namespace {

using nlohmann::json;

const json& field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw InputError(where + ": missing field '" + key + "'");
    }
    return obj.at(key);
}

double number(const json& v, const std::string& where) {
    if (!v.is_number()) throw InputError(where + ": expected a number");
    return v.get<double>();
}

std::int64_t integer_id(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw InputError(where + ": expected an integer id");
    return v.get<std::int64_t>();
}

}  // namespace

AnnotationSet parse_coco(const json& doc, const std::string& source) {
    AnnotationSet out;
    const auto& images = field(doc, "images", source + " at /");
    if (!images.is_array()) throw InputError(source + " at /images: expected an array");
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto where = source + " at /images/" + std::to_string(i);
        const auto& img = images[i];
        const auto id = integer_id(field(img, "id", where), where + "/id");
        ImageInfo info{number(field(img, "width", where), where + "/width"),
                       number(field(img, "height", where), where + "/height")};
        if (!out.images.emplace(id, info).second) {
            throw InputError(where + ": duplicate image id " + std::to_string(id));
        }
    }

    const auto& anns = field(doc, "annotations", source + " at /");
    if (!anns.is_array()) throw InputError(source + " at /annotations: expected an array");
    for (std::size_t i = 0; i < anns.size(); ++i) {
        const auto where = source + " at /annotations/" + std::to_string(i);
        const auto& ann = anns[i];
        const auto id = integer_id(field(ann, "image_id", where), where + "/image_id");
        if (!out.images.count(id)) {
            throw InputError(where + "/image_id: unknown image id " + std::to_string(id));
        }
        const auto& bbox = field(ann, "bbox", where);
        if (!bbox.is_array() || bbox.size() != 4) {
            throw InputError(where + "/bbox: expected 4 numbers");
        }
        std::array<double, 4> v{};
        for (std::size_t k = 0; k < 4; ++k) {
            v[k] = number(bbox[k], where + "/bbox/" + std::to_string(k));
        }
        auto box = geom::Box::try_make(v[0] + 0.5 * v[2], v[1] + 0.5 * v[3], v[2], v[3]);
        if (!box) {
            ++out.dropped_boxes;
            continue;
        }
        out.boxes_by_image[id].push_back(*box);
    }
    return out;
}

AnnotationSet load_coco(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open annotations file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": invalid JSON at byte " + std::to_string(e.byte) +
                         ": " + e.what());
    }
    return parse_coco(doc, path.string());
}

}  // namespace reldetr::mcstat
