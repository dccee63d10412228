#include "adiff/dataset.hpp"

#include "adiff/errors.hpp"
#include "adiff/rng.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace adiff {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::uint32_t read_be_u32(std::istream& in, const std::filesystem::path& path) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (in.gcount() != 4) {
        throw IoError("truncated IDX header in " + path.string());
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                                static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b.data(), 4);
}

std::ifstream open_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return in;
}

std::uint8_t pixel_to_byte(float v) {
    const double b = std::round((static_cast<double>(v) + 1.0) * 127.5);
    return static_cast<std::uint8_t>(std::clamp(b, 0.0, 255.0));
}

std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

} // namespace

DatasetStore::DatasetStore(std::vector<float> data, std::size_t dim, std::vector<int> labels,
                           std::optional<ImageShape> shape)
    : dim_(dim), labels_(std::move(labels)), shape_(shape) {
    if (dim == 0) {
        throw ArgumentError("dataset dimension must be positive");
    }
    if (data.empty() || data.size() % dim != 0) {
        throw ArgumentError("dataset buffer is empty or not a multiple of the dimension");
    }
    if (shape_ && shape_->size() != dim) {
        throw ArgumentError("image shape does not match dimension");
    }
    const std::size_t n = data.size() / dim;
    if (!labels_.empty() && labels_.size() != n) {
        throw ConsistencyError("label count does not match sample count");
    }
    for (float v : data) {
        if (!std::isfinite(v)) {
            throw ArgumentError("dataset contains a non-finite value");
        }
    }
    for (int l : labels_) {
        if (l < 0) throw ArgumentError("class labels must be non-negative");
    }
    storage_ = std::make_shared<const std::vector<float>>(std::move(data));
    rows_.resize(n);
    for (std::size_t i = 0; i < n; ++i) rows_[i] = i;
    compute_norms();
}

void DatasetStore::compute_norms() {
    norms_.resize(rows_.size());
    radius_ = 0.0;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const float* x = storage_->data() + rows_[i] * dim_;
        double s = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) s += double(x[j]) * double(x[j]);
        norms_[i] = std::sqrt(s);
        radius_ = std::max(radius_, norms_[i]);
    }
}

void DatasetStore::set_proxy(std::shared_ptr<const ProxyCache> proxy) {
    if (proxy && (proxy->dim == 0 || proxy->dim > dim_ ||
                  proxy->values.size() != proxy->dim * size())) {
        throw ArgumentError("proxy cache does not match the store");
    }
    proxy_ = std::move(proxy);
}

DatasetStore DatasetStore::restrict_to_class(int label) const {
    if (!has_labels()) {
        throw PreconditionError("restrict_to_class needs a labeled store");
    }
    DatasetStore view;
    view.storage_ = storage_;
    view.dim_ = dim_;
    view.labels_ = labels_;
    view.shape_ = shape_;
    view.access_log_ = access_log_;
    std::vector<std::size_t> kept; // positions in this view
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (labels_[rows_[i]] == label) {
            view.rows_.push_back(rows_[i]);
            kept.push_back(i);
        }
    }
    if (view.rows_.empty()) {
        throw EmptySelectionError("no samples with label " + std::to_string(label));
    }
    view.compute_norms();
    if (proxy_) {
        auto sub = std::make_shared<ProxyCache>(*proxy_);
        sub->values.resize(kept.size() * proxy_->dim);
        for (std::size_t j = 0; j < kept.size(); ++j) {
            std::memcpy(sub->values.data() + j * proxy_->dim,
                        proxy_->values.data() + kept[j] * proxy_->dim,
                        proxy_->dim * sizeof(float));
        }
        view.proxy_ = std::move(sub);
    }
    return view;
}

std::vector<float> DatasetStore::flattened() const {
    std::vector<float> out(size() * dim_);
    for (std::size_t i = 0; i < size(); ++i) {
        std::memcpy(out.data() + i * dim_, storage_->data() + rows_[i] * dim_,
                    dim_ * sizeof(float));
    }
    return out;
}

std::uint64_t DatasetStore::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    const std::uint64_t header[2] = {size(), dim_};
    feed(header, sizeof(header));
    for (std::size_t i = 0; i < size(); ++i) {
        feed(storage_->data() + rows_[i] * dim_, dim_ * sizeof(float));
        if (has_labels()) {
            const int l = labels_[rows_[i]];
            feed(&l, sizeof(l));
        }
    }
    return h;
}

double compute_radius(const DatasetStore& store) {
    if (store.size() == 0) {
        throw PreconditionError("compute_radius on an empty store");
    }
    double r = 0.0;
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto x = store.sample(i);
        double s = 0.0;
        for (float v : x) s += double(v) * double(v);
        r = std::max(r, std::sqrt(s));
    }
    return r;
}

DatasetStore load_idx(const std::filesystem::path& images_path,
                      const std::optional<std::filesystem::path>& labels_path) {
    auto in = open_binary(images_path);
    const std::uint32_t magic = read_be_u32(in, images_path);
    if (magic != kImageMagic) {
        throw FormatError("bad IDX image magic " + std::to_string(magic) + " in " +
                          images_path.string());
    }
    const std::size_t n = read_be_u32(in, images_path);
    const std::size_t rows = read_be_u32(in, images_path);
    const std::size_t cols = read_be_u32(in, images_path);
    const std::size_t dim = rows * cols;
    if (n == 0 || dim == 0) {
        throw FormatError("IDX image file declares an empty payload");
    }
    std::vector<unsigned char> bytes(n * dim);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
        throw IoError("truncated IDX image payload in " + images_path.string());
    }

    std::vector<int> labels;
    if (labels_path) {
        auto lin = open_binary(*labels_path);
        const std::uint32_t lmagic = read_be_u32(lin, *labels_path);
        if (lmagic != kLabelMagic) {
            throw FormatError("bad IDX label magic " + std::to_string(lmagic) + " in " +
                              labels_path->string());
        }
        const std::size_t ln = read_be_u32(lin, *labels_path);
        if (ln != n) {
            throw ConsistencyError("image count " + std::to_string(n) + " != label count " +
                                   std::to_string(ln));
        }
        std::vector<unsigned char> lb(ln);
        lin.read(reinterpret_cast<char*>(lb.data()), static_cast<std::streamsize>(ln));
        if (static_cast<std::size_t>(lin.gcount()) != ln) {
            throw IoError("truncated IDX label payload in " + labels_path->string());
        }
        labels.assign(lb.begin(), lb.end());
    }

    std::vector<float> data(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        data[i] = static_cast<float>(bytes[i] / 127.5 - 1.0);
    }
    return DatasetStore(std::move(data), dim, std::move(labels), ImageShape{1, rows, cols});
}

void write_idx_images(const DatasetStore& store, const std::filesystem::path& path) {
    if (!store.shape() || store.shape()->channels != 1) {
        throw PreconditionError("IDX output needs a single-channel image store");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_be_u32(out, kImageMagic);
    write_be_u32(out, static_cast<std::uint32_t>(store.size()));
    write_be_u32(out, static_cast<std::uint32_t>(store.shape()->height));
    write_be_u32(out, static_cast<std::uint32_t>(store.shape()->width));
    std::vector<char> row(store.dim());
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto x = store.sample(i);
        for (std::size_t j = 0; j < x.size(); ++j) row[j] = static_cast<char>(pixel_to_byte(x[j]));
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
}

void write_idx_labels(const DatasetStore& store, const std::filesystem::path& path) {
    if (!store.has_labels()) throw PreconditionError("store has no labels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_be_u32(out, kLabelMagic);
    write_be_u32(out, static_cast<std::uint32_t>(store.size()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        out.put(static_cast<char>(store.label(i)));
    }
}

DatasetStore make_moons(std::size_t n, double noise_std, std::uint64_t rng_seed) {
    if (n < 2) throw ArgumentError("make_moons needs n >= 2");
    if (!(noise_std >= 0.0)) throw ArgumentError("noise_std must be >= 0");
    const std::size_t n_upper = n / 2;
    const std::size_t n_lower = n - n_upper;
    auto theta = [](std::size_t i, std::size_t count) {
        return count == 1 ? 0.0 : std::numbers::pi * double(i) / double(count - 1);
    };
    std::vector<float> data(2 * n);
    std::vector<int> labels(n);
    CounterRng rng(rng_seed);
    for (std::size_t i = 0; i < n; ++i) {
        double x, y;
        if (i < n_upper) {
            const double t = theta(i, n_upper);
            x = std::cos(t);
            y = std::sin(t);
            labels[i] = 0;
        } else {
            const double t = theta(i - n_upper, n_lower);
            x = 1.0 - std::cos(t);
            y = 0.5 - std::sin(t);
            labels[i] = 1;
        }
        if (noise_std > 0.0) {
            x += noise_std * rng.normal();
            y += noise_std * rng.normal();
        }
        data[2 * i] = static_cast<float>(x);
        data[2 * i + 1] = static_cast<float>(y);
    }
    return DatasetStore(std::move(data), 2, std::move(labels));
}

DatasetStore load_points_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<float> data;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_commas(line);
        std::vector<double> vals;
        bool numeric = true;
        for (auto f : fields) {
            const auto v = parse_double(f);
            if (!v) {
                numeric = false;
                break;
            }
            vals.push_back(*v);
        }
        if (!numeric) {
            if (line_no == 1) continue; // header
            throw FormatError("non-numeric CSV row " + std::to_string(line_no) + " in " +
                              path.string());
        }
        if (vals.size() != 2 && vals.size() != 3) {
            throw FormatError("expected x,y[,label] at row " + std::to_string(line_no));
        }
        if (columns == 0) columns = vals.size();
        if (vals.size() != columns) {
            throw FormatError("inconsistent column count at row " + std::to_string(line_no));
        }
        data.push_back(static_cast<float>(vals[0]));
        data.push_back(static_cast<float>(vals[1]));
        if (columns == 3) {
            if (vals[2] < 0 || vals[2] != std::floor(vals[2])) {
                throw FormatError("label must be a non-negative integer at row " +
                                  std::to_string(line_no));
            }
            labels.push_back(static_cast<int>(vals[2]));
        }
    }
    if (data.empty()) throw FormatError("no points in " + path.string());
    return DatasetStore(std::move(data), 2, std::move(labels));
}

void write_points_csv(std::span<const std::vector<double>> points,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    for (const auto& p : points) {
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (j) out << ',';
            out << p[j];
        }
        out << '\n';
    }
}

} // namespace adiff
