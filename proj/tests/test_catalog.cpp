#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "mgeo/catalog.hpp"
#include "mgeo/error.hpp"
#include "support.hpp"

using namespace mgeo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("mgeo_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Image solid(int h, int w, double r, double g, double b) {
    Image img(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    return img;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string two_products(const std::string& second_id = "p2", const std::string& extra = "") {
    return R"({"category": "Mop", "query": "I am looking for a high-quality mop.", "products": [
  {"id": "p1", "name": "First", "description": "a b", "image_path": "a.ppm"},
  {"id": ")" + second_id + R"(", "name": "Second", "description": "c d", "image_path": "b.ppm")" + extra + R"(}
]})";
}

}  // namespace

TEST_CASE("catalog: minimal two-product file loads with the query verbatim") {
    TempDir dir;
    write_image(solid(4, 4, 1, 0, 0), dir.path / "a.ppm");
    write_image(solid(4, 4, 0, 1, 0), dir.path / "b.ppm");
    write_file(dir.path / "c.json", two_products());
    const Catalog c = load_catalog(dir.path / "c.json");
    CHECK(c.size() == 2);
    CHECK(c.query == "I am looking for a high-quality mop.");
    CHECK(c.products[1].image.at(0, 0, 1) == 1.0);
    CHECK_FALSE(c.products[0].mask.has_value());
    CHECK(load_catalog(dir.path / "c.json") == c);
}

TEST_CASE("catalog: schema and consistency errors") {
    TempDir dir;
    write_image(solid(4, 4, 1, 0, 0), dir.path / "a.ppm");
    write_image(solid(4, 4, 0, 1, 0), dir.path / "b.ppm");
    write_image(solid(5, 4, 0, 1, 0), dir.path / "tall.ppm");

    SUBCASE("missing description names field and id") {
        write_file(dir.path / "c.json", R"({"category": "x", "query": "q", "products": [
  {"id": "p1", "name": "A", "description": "a", "image_path": "a.ppm"},
  {"id": "p2", "name": "B", "image_path": "b.ppm"}]})");
        CHECK_THROWS_WITH_AS(load_catalog(dir.path / "c.json"), doctest::Contains("product p2: missing required field \"description\""),
                             ValidationError);
    }
    SUBCASE("duplicate id") {
        write_file(dir.path / "c.json", two_products("p1"));
        CHECK_THROWS_WITH_AS(load_catalog(dir.path / "c.json"), doctest::Contains("duplicate product id \"p1\""),
                             ValidationError);
    }
    SUBCASE("dimension mismatch names both products") {
        std::string text = two_products();
        text.replace(text.find("b.ppm"), 5, "tall.ppm");
        write_file(dir.path / "c.json", text);
        CHECK_THROWS_WITH_AS(load_catalog(dir.path / "c.json"), doctest::Contains("p1 is 4x4, p2 is 5x4"), ValidationError);
    }
    SUBCASE("malformed JSON reports line context") {
        write_file(dir.path / "c.json", "{\n  \"category\": \"x\",\n  \"query\": oops\n}");
        CHECK_THROWS_WITH_AS(load_catalog(dir.path / "c.json"), doctest::Contains("line 3"), ParseError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_catalog(dir.path / "nope.json"), IoError); }
    SUBCASE("mask file is loaded") {
        Mask m(4, 4, 1, 0.0);
        m.at(1, 1) = 1.0;
        write_mask(m, dir.path / "m.pgm");
        write_file(dir.path / "c.json", two_products("p2", R"(, "mask_path": "m.pgm")"));
        const Catalog c = load_catalog(dir.path / "c.json");
        REQUIRE(c.products[1].mask.has_value());
        CHECK(*c.products[1].mask == m);
    }
}

TEST_CASE("catalog: target spec puts the target first and keeps the rest in order") {
    Catalog c = test::random_catalog(1, 4, 4);
    const TargetSpec spec = make_target_spec(c, 2, {3, 2, 0, 1});
    CHECK(spec.target_id == "r2");
    CHECK(spec.desired_permutation == std::vector<std::size_t>{2, 3, 0, 1});
}

TEST_CASE("codec: byte mapping and quantization") {
    CHECK(to_byte(1.0) == 255);
    CHECK(to_byte(0.0) == 0);
    CHECK(to_byte(0.5) == 128);
    Image img(1, 1, 3, 0.5);
    const Image q = quantize(img);
    CHECK(q.data[0] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
    CHECK(decode_ppm(encode_ppm(img)).data[0] == 128.0 / 255.0);
    CHECK(quantize(Image(1, 1, 3, 0.0)).data[0] == 0.0);
    CHECK(quantize(Image(1, 1, 3, 1.0)).data[0] == 1.0);
    CHECK_THROWS_AS(quantize(Image(1, 1, 3, 1.5)), DomainError);
    CHECK_THROWS_AS(quantize(Image(1, 1, 3, -0.1)), DomainError);
}

TEST_CASE("codec: quantization is an idempotent projection within half a level") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(7, 5, 3);
    for (auto& v : img.data) v = u(rng);
    const Image q = quantize(img);
    CHECK(quantize(q) == q);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(q.data[i] - img.data[i]) <= 1.0 / 510.0 + 1e-15);
}

TEST_CASE("codec: PPM and PGM round trips are byte-identical") {
    std::mt19937_64 rng(9);
    std::vector<std::uint8_t> ppm = {'P', '6', '\n', '3', ' ', '2', '\n', '2', '5', '5', '\n'};
    for (int i = 0; i < 18; ++i) ppm.push_back(static_cast<std::uint8_t>(rng()));
    CHECK(encode_ppm(decode_ppm(ppm)) == ppm);

    std::vector<std::uint8_t> pgm = {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 255, 255, 0};
    CHECK(encode_pgm(decode_pgm(pgm)) == pgm);

    const Image img = decode_ppm(ppm);
    CHECK(encode_ppm(decode_ppm(encode_ppm(img))) == encode_ppm(img));
}

TEST_CASE("codec: header comments are accepted") {
    const std::string text = "P6\n# made by hand\n1 1\n# another\n255\n";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    bytes.insert(bytes.end(), {255, 0, 51});
    const Image img = decode_ppm(bytes);
    CHECK(img.data == std::vector<double>{1.0, 0.0, 0.2});
}

TEST_CASE("codec: malformed files raise codec errors") {
    auto bytes = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
    CHECK_THROWS_AS(decode_ppm(bytes("P3\n1 1\n255\n\x01\x02\x03")), CodecError);
    CHECK_THROWS_AS(decode_ppm(bytes("P6\n1 1\n65535\n\x01\x02\x03")), CodecError);
    CHECK_THROWS_AS(decode_ppm(bytes("P6\n2 2\n255\n\x01\x02\x03")), CodecError);
    CHECK_THROWS_AS(decode_pgm(bytes("P6\n1 1\n255\n\x01\x02\x03")), CodecError);
    CHECK_THROWS_AS(decode_ppm(bytes("P6\n")), CodecError);
}

TEST_CASE("codec: mask PGM maps 255 to foreground") {
    const std::string text = "P5\n3 1\n255\n";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    bytes.insert(bytes.end(), {0, 255, 200});
    const Mask m = decode_pgm(bytes);
    CHECK(m.data == std::vector<double>{0.0, 1.0, 1.0});
}

TEST_CASE("codec: float sidecar is lossless") {
    TempDir dir;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(5, 6, 3);
    for (auto& v : img.data) v = u(rng);
    write_float_sidecar(img, dir.path / "x.f64");
    CHECK(read_float_sidecar(dir.path / "x.f64") == img);
    CHECK(fs::file_size(dir.path / "x.f64") == 16 + img.size() * 8);
    std::ifstream in(dir.path / "x.f64", std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::string(magic, 8) == std::string("MGEOF64\0", 8));
}

TEST_CASE("mask: border-median heuristic") {
    SUBCASE("uniform image is all background") {
        const Mask m = estimate_mask(solid(6, 6, 0.3, 0.4, 0.5));
        for (double v : m.data) CHECK(v == 0.0);
    }
    SUBCASE("black square on white") {
        Image img = solid(8, 8, 1, 1, 1);
        for (int y = 2; y < 6; ++y)
            for (int x = 2; x < 6; ++x)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.0;
        const Mask m = estimate_mask(img, 0.2);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) CHECK(m.at(y, x) == ((y >= 2 && y < 6 && x >= 2 && x < 6) ? 1.0 : 0.0));
    }
    SUBCASE("distance exactly at the threshold is foreground") {
        Image img = solid(5, 5, 0.5, 0.5, 0.5);
        img.at(2, 2, 0) = 0.75;
        const Mask m = estimate_mask(img, 0.25);
        CHECK(m.at(2, 2) == 1.0);
        CHECK(m.at(1, 1) == 0.0);
    }
    SUBCASE("tiny image falls back to all foreground with a warning") {
        std::vector<std::string> warnings;
        set_warning_sink([&](const std::string& w) { warnings.push_back(w); });
        const Mask m = estimate_mask(solid(2, 2, 0.1, 0.1, 0.1));
        set_warning_sink(nullptr);
        for (double v : m.data) CHECK(v == 1.0);
        CHECK(warnings.size() == 1);
    }
}

TEST_CASE("mask: estimate is independent of catalog order") {
    Catalog c = test::random_catalog(11, 4, 8);
    Catalog reversed = c;
    std::reverse(reversed.products.begin(), reversed.products.end());
    const Catalog a = prepare_catalog(c, 8);
    const Catalog b = prepare_catalog(reversed, 8);
    for (std::size_t i = 0; i < 4; ++i) CHECK(*a.products[i].mask == *b.products[3 - i].mask);
}

TEST_CASE("catalog: prepare resamples to the ranker resolution") {
    const Catalog raw = load_catalog(test::fixture("s1"));
    CHECK(raw.products[0].image.height == 48);
    const Catalog c = prepare_catalog(raw, 32);
    for (const auto& p : c.products) {
        CHECK(p.image.height == 32);
        CHECK(p.image.width == 32);
        REQUIRE(p.mask.has_value());
        CHECK(p.mask->height == 32);
    }
    CHECK(resize_nearest(raw.products[0].image, 48, 48) == raw.products[0].image);
}

TEST_CASE("catalog: truncation and digest") {
    const Catalog c = test::random_catalog(2, 12, 4);
    const Catalog t = truncate_catalog(c, 10);
    CHECK(t.size() == 10);
    CHECK(t.products.back().id == "r9");
    CHECK(catalog_digest(c) == catalog_digest(c));
    Catalog changed = c;
    changed.products[3].image.data[0] += 1e-12;
    CHECK(catalog_digest(changed) != catalog_digest(c));
}
