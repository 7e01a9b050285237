#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mgeo/image.hpp"

namespace mgeo {

struct ProductListing {
    std::string id;
    std::string name;
    std::string description;
    Image image;
    std::optional<Mask> mask;

    bool operator==(const ProductListing&) const = default;
};

struct Catalog {
    std::string category;
    std::string query;
    std::vector<ProductListing> products;

    std::size_t size() const { return products.size(); }
    /// Index of the listing with the given id, or nullopt.
    std::optional<std::size_t> find(const std::string& id) const;
    bool operator==(const Catalog&) const = default;
};

/// Target listing plus the ranking the attacker wants: target first, every
/// other listing in its pre-attack order. Indices are 0-based.
struct TargetSpec {
    std::string target_id;
    std::size_t target_index = 0;
    std::vector<std::size_t> desired_permutation;
};

/// Builds R* from the pre-attack ranking `pre_ranking` (best first).
TargetSpec make_target_spec(const Catalog& catalog, std::size_t target_index,
                            const std::vector<std::size_t>& pre_ranking);

/// Loads a catalog JSON file. Relative image/mask paths resolve against the
/// file's directory.
Catalog load_catalog(const std::filesystem::path& path);

/// Parses catalog JSON text; `base_dir` anchors relative paths, `source` names
/// the origin in error messages.
Catalog parse_catalog(const std::string& text, const std::filesystem::path& base_dir,
                      const std::string& source = "catalog");

/// Throws ValidationError if ids repeat, images differ in shape, entries leave
/// [0,1], or n < 2.
void validate_catalog(const Catalog& catalog);

// PPM (P6) / PGM (P5), 8-bit, maxval 255.
Image read_image(const std::filesystem::path& path);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
void write_image(const Image& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const Image& image);

Mask read_mask(const std::filesystem::path& path);
Mask decode_pgm(const std::vector<std::uint8_t>& bytes);
void write_mask(const Mask& mask, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const Mask& mask);

/// Lossless float sidecar: "MGEOF64\0", u32 H, u32 W (little-endian), then
/// H·W·3 little-endian doubles.
void write_float_sidecar(const Image& image, const std::filesystem::path& path);
Image read_float_sidecar(const std::filesystem::path& path);

/// Maps each entry v to round(v·255)/255. Throws DomainError outside [0,1].
Image quantize(const Image& image);
std::uint8_t to_byte(double v);

inline constexpr double kDefaultBackgroundThreshold = 0.15;

/// Border-median background heuristic. A pixel is background (0) iff its RGB
/// distance to the per-channel median of the 1-pixel border ring is strictly
/// below `threshold`. Images smaller than 3×3 get an all-foreground mask.
Mask estimate_mask(const Image& image, double threshold = kDefaultBackgroundThreshold);

/// Nearest-neighbour resample to `height`×`width`.
Image resize_nearest(const Image& image, int height, int width);

/// Copy of `catalog` with every image (and mask) resampled to the ranker's
/// working resolution and a mask estimated where none was supplied.
Catalog prepare_catalog(const Catalog& catalog, int resolution,
                        double mask_threshold = kDefaultBackgroundThreshold);

/// Keeps the first `max_products` listings in catalog order.
Catalog truncate_catalog(const Catalog& catalog, std::size_t max_products);

/// FNV-1a digest over every id, text field and pixel; used for isolation checks.
std::uint64_t catalog_digest(const Catalog& catalog);

}  // namespace mgeo
