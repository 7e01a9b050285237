#pragma once

#include <cstddef>
#include <vector>

namespace mgeo {

/// Dense row-major H×W×C tensor of doubles. RGB images use C=3 with entries
/// in [0,1]; masks and other scalar fields use C=1.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c = 3, double fill = 0.0)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    std::size_t index(int y, int x, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
    double at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Image& other) const {
        return height == other.height && width == other.width && channels == other.channels;
    }
    bool operator==(const Image& other) const = default;
};

/// H×W×1 field in {0,1}; 1 marks foreground.
using Mask = Image;

}  // namespace mgeo
