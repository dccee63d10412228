#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adiff {

struct ImageShape {
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const { return channels * height * width; }
    bool operator==(const ImageShape&) const = default;
};

// Block-mean pooled copy of every sample, row-major N x d.
struct ProxyCache {
    std::size_t factor = 1;       // pooling block side; 1 means identity
    std::size_t dim = 0;          // d
    bool truncated_blocks = false; // factor did not divide H or W
    std::optional<ImageShape> pooled_shape;
    std::vector<float> values;
};

// Records which storage rows were read. Test instrumentation only.
class AccessLog {
public:
    explicit AccessLog(std::size_t rows) : hits_(rows) {}
    void touch(std::size_t row) { hits_[row].fetch_add(1, std::memory_order_relaxed); }
    std::uint64_t hits(std::size_t row) const { return hits_[row].load(); }
    std::size_t rows() const { return hits_.size(); }

private:
    std::vector<std::atomic<std::uint64_t>> hits_;
};

// ---------------------------------------------------------------------------
// DatasetStore: immutable training corpus.
//
// Sample data lives in a shared row-major float buffer. A store is a view over
// some of those rows (all of them for a freshly loaded set, one class for a
// restricted view), so class views never copy pixel data. Norms, radius and
// the proxy cache are per view.
// ---------------------------------------------------------------------------
class DatasetStore {
public:
    // Takes ownership of `data` (N x dim, row-major).
    DatasetStore(std::vector<float> data, std::size_t dim,
                 std::vector<int> labels = {},
                 std::optional<ImageShape> shape = std::nullopt);

    std::size_t size() const { return rows_.size(); }
    std::size_t dim() const { return dim_; }
    const std::optional<ImageShape>& shape() const { return shape_; }

    std::span<const float> sample(std::size_t i) const {
        const std::size_t row = rows_[i];
        if (access_log_) {
            access_log_->touch(row);
        }
        return {storage_->data() + row * dim_, dim_};
    }

    bool has_labels() const { return !labels_.empty(); }
    int label(std::size_t i) const { return labels_.at(rows_[i]); }

    // Index of sample i in the originally loaded set.
    std::size_t original_index(std::size_t i) const { return rows_[i]; }

    double norm(std::size_t i) const { return norms_[i]; }
    double radius() const { return radius_; }

    const ProxyCache* proxy() const { return proxy_.get(); }
    std::span<const float> proxy_row(std::size_t i) const {
        return {proxy_->values.data() + i * proxy_->dim, proxy_->dim};
    }
    void set_proxy(std::shared_ptr<const ProxyCache> proxy);

    void attach_access_log(std::shared_ptr<AccessLog> log) { access_log_ = std::move(log); }

    // Samples whose label equals `label`, sharing storage with this store.
    DatasetStore restrict_to_class(int label) const;

    // Raw float buffer of this view in sample order (copies).
    std::vector<float> flattened() const;

    // 64-bit FNV-1a over dim, shape and the float bytes of this view.
    std::uint64_t fingerprint() const;

private:
    DatasetStore() = default;
    void compute_norms();

    std::shared_ptr<const std::vector<float>> storage_;
    std::size_t dim_ = 0;
    std::vector<int> labels_; // indexed by storage row
    std::optional<ImageShape> shape_;
    std::vector<std::size_t> rows_;
    std::vector<double> norms_;
    double radius_ = 0.0;
    std::shared_ptr<const ProxyCache> proxy_;
    std::shared_ptr<AccessLog> access_log_;
};

double compute_radius(const DatasetStore& store);

// IDX (MNIST) images, optional labels. Pixels map b -> b / 127.5 - 1.
DatasetStore load_idx(const std::filesystem::path& images_path,
                      const std::optional<std::filesystem::path>& labels_path = std::nullopt);

// Inverse of load_idx: re-emits the byte payload of an image store.
void write_idx_images(const DatasetStore& store, const std::filesystem::path& path);
void write_idx_labels(const DatasetStore& store, const std::filesystem::path& path);

// Two interleaving half circles, first n/2 on the upper arc (cos t, sin t),
// the rest on the lower arc (1 - cos t, 0.5 - sin t), t evenly spaced on
// [0, pi] per arc. Labels 0 (upper) and 1 (lower).
DatasetStore make_moons(std::size_t n, double noise_std, std::uint64_t rng_seed);

// `x,y[,label]` rows, optional header line.
DatasetStore load_points_csv(const std::filesystem::path& path);

void write_points_csv(std::span<const std::vector<double>> points,
                      const std::filesystem::path& path);

} // namespace adiff
