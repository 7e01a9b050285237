#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mgeo/catalog.hpp"
#include "mgeo/error.hpp"

namespace mgeo {

using nlohmann::json;

std::optional<std::size_t> Catalog::find(const std::string& id) const {
    for (std::size_t i = 0; i < products.size(); ++i) {
        if (products[i].id == id) return i;
    }
    return std::nullopt;
}

TargetSpec make_target_spec(const Catalog& catalog, std::size_t target_index,
                            const std::vector<std::size_t>& pre_ranking) {
    if (target_index >= catalog.size()) throw DomainError("target index out of range");
    if (pre_ranking.size() != catalog.size()) throw DomainError("pre-attack ranking has wrong length");
    TargetSpec spec;
    spec.target_id = catalog.products[target_index].id;
    spec.target_index = target_index;
    spec.desired_permutation.push_back(target_index);
    for (std::size_t idx : pre_ranking) {
        if (idx != target_index) spec.desired_permutation.push_back(idx);
    }
    return spec;
}

namespace {

std::string require_string(const json& product, const char* field, const std::string& who) {
    auto it = product.find(field);
    if (it == product.end()) {
        throw ValidationError("product " + who + ": missing required field \"" + field + "\"");
    }
    if (!it->is_string()) {
        throw ValidationError("product " + who + ": field \"" + field + "\" must be a string");
    }
    return it->get<std::string>();
}

std::string line_context(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    const std::size_t line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n');
    const std::size_t line_start = text.rfind('\n', byte == 0 ? 0 : byte - 1);
    const std::size_t begin = line_start == std::string::npos ? 0 : line_start + 1;
    const std::size_t end = text.find('\n', begin);
    std::ostringstream out;
    out << "line " << line << ", column " << (byte - begin + 1) << ": "
        << text.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
    return out.str();
}

}  // namespace

Catalog parse_catalog(const std::string& text, const std::filesystem::path& base_dir, const std::string& source) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(source + ": malformed JSON at " + line_context(text, e.byte == 0 ? 0 : e.byte - 1));
    }
    if (!doc.is_object()) throw ValidationError(source + ": top level must be an object");

    Catalog catalog;
    for (const char* field : {"category", "query"}) {
        if (!doc.contains(field) || !doc[field].is_string()) {
            throw ValidationError(source + ": missing string field \"" + field + "\"");
        }
    }
    catalog.category = doc["category"].get<std::string>();
    catalog.query = doc["query"].get<std::string>();
    if (!doc.contains("products") || !doc["products"].is_array()) {
        throw ValidationError(source + ": missing array field \"products\"");
    }

    const auto& products = doc["products"];
    for (std::size_t i = 0; i < products.size(); ++i) {
        const json& p = products[i];
        const std::string position = "#" + std::to_string(i + 1);
        if (!p.is_object()) throw ValidationError("product " + position + " is not an object");
        ProductListing listing;
        listing.id = require_string(p, "id", position);
        listing.name = require_string(p, "name", listing.id);
        listing.description = require_string(p, "description", listing.id);
        const auto image_path = base_dir / require_string(p, "image_path", listing.id);
        listing.image = read_image(image_path);
        if (p.contains("mask_path") && !p["mask_path"].is_null()) {
            listing.mask = read_mask(base_dir / require_string(p, "mask_path", listing.id));
        }
        catalog.products.push_back(std::move(listing));
    }
    validate_catalog(catalog);
    return catalog;
}

Catalog load_catalog(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open catalog " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_catalog(buffer.str(), path.parent_path(), path.string());
}

void validate_catalog(const Catalog& catalog) {
    if (catalog.size() < 2) throw ValidationError("catalog needs at least 2 products");
    std::set<std::string> seen;
    const ProductListing& first = catalog.products.front();
    for (const auto& p : catalog.products) {
        if (!seen.insert(p.id).second) throw ValidationError("duplicate product id \"" + p.id + "\"");
        if (p.image.channels != 3 || p.image.empty()) {
            throw ValidationError("product " + p.id + ": image must be non-empty RGB");
        }
        if (!p.image.same_shape(first.image)) {
            throw ValidationError("image dimensions differ: " + first.id + " is " + std::to_string(first.image.height) +
                                  "x" + std::to_string(first.image.width) + ", " + p.id + " is " +
                                  std::to_string(p.image.height) + "x" + std::to_string(p.image.width));
        }
        for (double v : p.image.data) {
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("product " + p.id + ": pixel outside [0,1]");
        }
        if (p.mask && (p.mask->height != p.image.height || p.mask->width != p.image.width || p.mask->channels != 1)) {
            throw ValidationError("product " + p.id + ": mask dimensions do not match image");
        }
    }
}

Mask estimate_mask(const Image& image, double threshold) {
    Mask mask(image.height, image.width, 1, 1.0);
    if (image.height < 3 || image.width < 3) {
        warn("image smaller than 3x3; using all-foreground mask");
        return mask;
    }
    double median[3];
    for (int c = 0; c < 3; ++c) {
        std::vector<double> ring;
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                if (y == 0 || x == 0 || y == image.height - 1 || x == image.width - 1) ring.push_back(image.at(y, x, c));
            }
        }
        std::sort(ring.begin(), ring.end());
        const std::size_t mid = ring.size() / 2;
        median[c] = ring.size() % 2 ? ring[mid] : 0.5 * (ring[mid - 1] + ring[mid]);
    }
    const double limit = threshold * threshold;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            double dist2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double diff = image.at(y, x, c) - median[c];
                dist2 += diff * diff;
            }
            mask.at(y, x) = dist2 < limit ? 0.0 : 1.0;
        }
    }
    return mask;
}

Image resize_nearest(const Image& image, int height, int width) {
    if (image.height == height && image.width == width) return image;
    if (height <= 0 || width <= 0) throw DomainError("resize target must be positive");
    Image out(height, width, image.channels);
    for (int y = 0; y < height; ++y) {
        const int sy = static_cast<int>(static_cast<long long>(y) * image.height / height);
        for (int x = 0; x < width; ++x) {
            const int sx = static_cast<int>(static_cast<long long>(x) * image.width / width);
            for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
        }
    }
    return out;
}

Catalog prepare_catalog(const Catalog& catalog, int resolution, double mask_threshold) {
    Catalog out = catalog;
    for (auto& p : out.products) {
        p.image = resize_nearest(p.image, resolution, resolution);
        p.mask = p.mask ? resize_nearest(*p.mask, resolution, resolution) : estimate_mask(p.image, mask_threshold);
    }
    return out;
}

Catalog truncate_catalog(const Catalog& catalog, std::size_t max_products) {
    Catalog out = catalog;
    if (out.products.size() > max_products) out.products.resize(max_products);
    return out;
}

namespace {
struct Fnv {
    std::uint64_t h = 1469598103934665603ull;
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    }
    void str(const std::string& s) {
        bytes(s.data(), s.size());
        bytes("\0", 1);
    }
};
}  // namespace

std::uint64_t catalog_digest(const Catalog& catalog) {
    Fnv f;
    f.str(catalog.category);
    f.str(catalog.query);
    for (const auto& p : catalog.products) {
        f.str(p.id);
        f.str(p.name);
        f.str(p.description);
        f.bytes(p.image.data.data(), p.image.data.size() * sizeof(double));
        if (p.mask) f.bytes(p.mask->data.data(), p.mask->data.size() * sizeof(double));
    }
    return f.h;
}

}  // namespace mgeo
