#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mgeo/bridge.hpp"
#include "mgeo/catalog.hpp"
#include "mgeo/objective.hpp"

namespace mgeo::test {

inline std::filesystem::path fixture_dir() { return MGEO_FIXTURE_DIR; }
inline std::filesystem::path golden_dir() { return MGEO_GOLDEN_DIR; }
inline std::filesystem::path fixture(const std::string& name) { return fixture_dir() / name / "catalog.json"; }

/// Relative error with a floor on the scale so that entries that are
/// numerically zero do not blow up the ratio.
inline double rel_error(double analytic, double numeric, double floor = 1e-3) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double central_difference(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Small random catalog with a vocabulary of roughly sixty tokens.
inline Catalog random_catalog(std::uint64_t seed, int products = 5, int size = 16) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> pool;
    for (int i = 0; i < 100; ++i) pool.push_back("w" + std::to_string(i));
    std::uniform_int_distribution<std::size_t> word(0, pool.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Catalog c;
    c.category = "Random";
    c.query = pool[word(rng)] + " " + pool[word(rng)] + " " + pool[word(rng)];
    for (int p = 0; p < products; ++p) {
        ProductListing l;
        l.id = "r" + std::to_string(p);
        l.name = "item" + std::to_string(p) + " " + pool[word(rng)];
        for (int k = 0; k < 14; ++k) l.description += pool[word(rng)] + " ";
        l.image = Image(size, size, 3);
        for (auto& v : l.image.data) v = unit(rng);
        c.products.push_back(std::move(l));
    }
    return c;
}

/// In-process bridge server with the quadratic mock losses:
/// image 0.5·Σ(x − 0.5)² with gradient x − 0.5; text 0.5·Σz² with gradient z.
/// Rank requests return a numbered list in the request's target order.
class MockBridgeServer {
public:
    enum class Fault { None, WrongShape, WrongId, ErrorFrame, CloseMidFrame, Stall, Garbage };

    MockBridgeServer();
    ~MockBridgeServer();

    std::uint16_t port() const { return port_; }
    BridgeAddress address() const { return {"127.0.0.1", port_}; }
    void set_fault(Fault f) { fault_ = f; }
    int requests() const { return requests_; }

    static nlohmann::json respond(const BridgeRequest& request);
    static std::string transcript(const Catalog& catalog, const std::vector<std::size_t>& order);

private:
    void serve();
    void handle(int fd);

    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<Fault> fault_{Fault::None};
    std::atomic<int> requests_{0};
    std::atomic<bool> stop_{false};
    std::thread thread_;
};

}  // namespace mgeo::test
