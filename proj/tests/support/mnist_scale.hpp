#pragma once

#include "adiff/dataset.hpp"

#include <filesystem>
#include <utility>
#include <vector>

namespace fixture {

// Pixel offsets used to grow the 5k subset to 60k images.
inline const std::vector<std::pair<int, int>> kScaleShifts{{0, 0},  {-1, 0}, {1, 0},  {0, -1},
                                                            {0, 1},  {-1, -1}, {-1, 1}, {1, -1},
                                                            {1, 1},  {-2, 0}, {2, 0},  {0, 2}};

// Every image of `base` translated by each shift, background filled with -1.
// Labels follow their source image.
inline adiff::DatasetStore shifted_copies(const adiff::DatasetStore& base,
                                          const std::vector<std::pair<int, int>>& shifts) {
    const auto shape = *base.shape();
    const int h = int(shape.height), w = int(shape.width);
    std::vector<float> data;
    data.reserve(base.size() * shifts.size() * base.dim());
    std::vector<int> labels;
    for (const auto& [dy, dx] : shifts) {
        for (std::size_t i = 0; i < base.size(); ++i) {
            const auto img = base.sample(i);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const int sy = y - dy, sx = x - dx;
                    const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
                    data.push_back(inside ? img[std::size_t(sy * w + sx)] : -1.0f);
                }
            }
            if (base.has_labels()) labels.push_back(base.label(i));
        }
    }
    return adiff::DatasetStore(std::move(data), base.dim(), std::move(labels), shape);
}

inline adiff::DatasetStore load_mnist5k(const std::filesystem::path& dir) {
    return adiff::load_idx(dir / "mnist5k-images-idx3-ubyte", dir / "mnist5k-labels-idx1-ubyte");
}

inline adiff::DatasetStore mnist_scale(const std::filesystem::path& dir) {
    return shifted_copies(load_mnist5k(dir), kScaleShifts);
}

} // namespace fixture
