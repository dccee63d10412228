#pragma once

#include "adiff/dataset.hpp"
#include "adiff/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fixture {

inline adiff::DatasetStore points(const std::vector<std::vector<double>>& rows,
                                  std::vector<int> labels = {}) {
    std::vector<float> data;
    for (const auto& r : rows) {
        for (double v : r) data.push_back(static_cast<float>(v));
    }
    return adiff::DatasetStore(std::move(data), rows.front().size(), std::move(labels));
}

inline std::vector<std::vector<double>> as_matrix(const adiff::DatasetStore& s) {
    std::vector<std::vector<double>> m;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto x = s.sample(i);
        m.emplace_back(x.begin(), x.end());
    }
    return m;
}

// n random points in [-1, 1]^dim.
inline adiff::DatasetStore random_store(std::size_t n, std::size_t dim, std::uint64_t seed) {
    adiff::CounterRng rng(seed);
    std::vector<float> data(n * dim);
    for (auto& v : data) v = static_cast<float>(2.0 * rng.uniform() - 1.0);
    return adiff::DatasetStore(std::move(data), dim);
}

inline std::vector<double> normal_vector(std::size_t dim, adiff::CounterRng& rng, double scale = 1.0) {
    std::vector<double> v(dim);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("adiff_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::filesystem::path data_dir() { return std::filesystem::path(ADIFF_DATA_DIR); }

inline double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / std::max(den, 1e-300);
}

} // namespace fixture
