#include "adiff/denoiser.hpp"

#include "adiff/errors.hpp"
#include "adiff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace adiff {

void SoftmaxAccumulator::rescale(double new_max) {
    if (count_ == 0) {
        max_ = new_max;
        return;
    }
    const double shift = max_ - new_max; // <= 0
    const double c = std::exp(shift);
    ent_ = c * (ent_ + shift * sum_);
    sum_ *= c;
    for (double& v : vec_) v *= c;
    max_ = new_max;
}

template <typename T>
void SoftmaxAccumulator::add_impl(double logit, std::span<const T> x) {
    if (x.size() != vec_.size()) throw ArgumentError("accumulator dimension mismatch");
    if (!std::isfinite(logit)) throw ArgumentError("non-finite logit");
    if (count_ == 0 || logit > max_) rescale(logit);
    const double shifted = logit - max_;
    const double e = std::exp(shifted);
    sum_ += e;
    ent_ += e * shifted;
    for (std::size_t j = 0; j < vec_.size(); ++j) vec_[j] += e * double(x[j]);
    ++count_;
}

void SoftmaxAccumulator::add(double logit, std::span<const float> x) { add_impl(logit, x); }
void SoftmaxAccumulator::add(double logit, std::span<const double> x) { add_impl(logit, x); }

void SoftmaxAccumulator::merge_in(const SoftmaxAccumulator& other) {
    if (other.count_ == 0) return;
    if (count_ == 0) {
        if (!vec_.empty() && vec_.size() != other.vec_.size()) {
            throw ArgumentError("accumulator dimension mismatch");
        }
        *this = other;
        return;
    }
    if (vec_.size() != other.vec_.size()) throw ArgumentError("accumulator dimension mismatch");
    const double new_max = std::max(max_, other.max_);
    rescale(new_max);
    const double shift = other.max_ - new_max;
    const double c = std::exp(shift);
    sum_ += c * other.sum_;
    ent_ += c * (other.ent_ + shift * other.sum_);
    for (std::size_t j = 0; j < vec_.size(); ++j) vec_[j] += c * other.vec_[j];
    count_ += other.count_;
}

std::vector<double> SoftmaxAccumulator::finalize() const {
    if (count_ == 0) throw PreconditionError("finalize on an empty accumulator");
    std::vector<double> out(vec_.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = vec_[j] / sum_;
    return out;
}

double SoftmaxAccumulator::entropy() const {
    if (count_ == 0) throw PreconditionError("entropy of an empty accumulator");
    return std::max(0.0, std::log(sum_) - ent_ / sum_);
}

SoftmaxAccumulator merge_accumulators(const SoftmaxAccumulator& a, const SoftmaxAccumulator& b) {
    SoftmaxAccumulator out = a;
    out.merge_in(b);
    return out;
}

double logit(std::span<const double> query, std::span<const float> sample, double alpha,
             double sigma_sq) {
    if (query.size() != sample.size()) throw ArgumentError("logit dimension mismatch");
    if (!(sigma_sq > 0.0)) throw ArgumentError("sigma_sq must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in (0, 1]");
    const double inv = 1.0 / std::sqrt(alpha);
    double s = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j) {
        const double d = query[j] * inv - double(sample[j]);
        s += d * d;
    }
    return -(s / (2.0 * sigma_sq));
}

namespace {

void check_inputs(const DatasetStore& store, std::span<const double> query, const NoiseLevel& level) {
    if (store.size() == 0) throw PreconditionError("empty store");
    if (query.size() != store.dim()) throw ArgumentError("query dimension mismatch");
    if (!(level.sigma_sq > 0.0)) throw ArgumentError("sigma_sq must be positive");
    if (!(level.alpha > 0.0 && level.alpha <= 1.0)) throw ArgumentError("alpha must lie in (0, 1]");
}

std::vector<double> scaled_query(std::span<const double> query, double alpha) {
    const double inv = 1.0 / std::sqrt(alpha);
    std::vector<double> q(query.size());
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = query[j] * inv;
    return q;
}

// Sharded accumulation over positions [0, count). row_of maps a position to
// a store index; logit_of returns its logit. Shards merge left to right.
SoftmaxAccumulator accumulate(const DatasetStore& store, std::size_t count,
                              const std::function<std::size_t(std::size_t)>& row_of,
                              const std::function<double(std::size_t)>& logit_of) {
    const std::size_t shards = shard_count(count);
    std::vector<SoftmaxAccumulator> parts(shards, SoftmaxAccumulator(store.dim()));
    parallel_for_shards(shards, [&](std::size_t s) {
        const std::size_t end = std::min(count, (s + 1) * kShardRows);
        for (std::size_t p = s * kShardRows; p < end; ++p) {
            parts[s].add(logit_of(p), store.sample(row_of(p)));
        }
    });
    SoftmaxAccumulator total(store.dim());
    for (const auto& part : parts) total.merge_in(part);
    return total;
}

DenoiseResult finish(const SoftmaxAccumulator& acc, std::vector<double> logits,
                     const DenoiseOptions& opts) {
    DenoiseResult r;
    if (opts.skip_renormalization) {
        r.x0_hat = acc.running_vec();
    } else {
        r.x0_hat = acc.finalize();
    }
    if (opts.summarize) {
        WeightsSummary w = summarize_logits(logits, opts.top_mass_k);
        // Accumulator statistics are the ones tied to the reduction order.
        w.entropy = acc.entropy();
        w.effective_support = std::exp(w.entropy);
        w.max_weight = acc.max_weight();
        r.weights = w;
    }
    if (opts.keep_logits) r.logits = std::move(logits);
    return r;
}

} // namespace

std::vector<double> posterior_weights(std::span<const double> logits) {
    if (logits.empty()) throw PreconditionError("no logits");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> w(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(logits[i] - m);
        s += w[i];
    }
    for (double& v : w) v /= s;
    return w;
}

WeightsSummary summarize_logits(std::span<const double> logits, std::size_t top_mass_k) {
    auto w = posterior_weights(logits);
    WeightsSummary s;
    s.support = w.size();
    double h = 0.0;
    for (double v : w) {
        if (v > 0.0) h -= v * std::log(v);
    }
    s.entropy = std::max(0.0, h);
    s.effective_support = std::exp(s.entropy);
    s.max_weight = *std::max_element(w.begin(), w.end());
    s.top_mass_k = std::min(top_mass_k, w.size());
    if (s.top_mass_k > 0) {
        std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(s.top_mass_k - 1), w.end(),
                         std::greater<>());
        std::sort(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(s.top_mass_k), std::greater<>());
        s.top_mass = std::accumulate(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(s.top_mass_k), 0.0);
    }
    return s;
}

std::vector<double> full_logits(const DatasetStore& store, std::span<const double> query,
                                const NoiseLevel& level) {
    check_inputs(store, query, level);
    const auto q = scaled_query(query, level.alpha);
    const double denom = 2.0 * level.sigma_sq;
    const std::size_t n = store.size();
    std::vector<double> out(n);
    parallel_for_shards(shard_count(n), [&](std::size_t s) {
        const std::size_t end = std::min(n, (s + 1) * kShardRows);
        for (std::size_t i = s * kShardRows; i < end; ++i) {
            out[i] = -(squared_distance(q, store.sample(i)) / denom);
        }
    });
    return out;
}

DenoiseResult denoise_full(const DatasetStore& store, std::span<const double> query,
                           const NoiseLevel& level, const DenoiseOptions& opts) {
    check_inputs(store, query, level);
    const auto q = scaled_query(query, level.alpha);
    const double denom = 2.0 * level.sigma_sq;
    const std::size_t n = store.size();
    std::vector<double> logits(n);
    auto acc = accumulate(
        store, n, [](std::size_t p) { return p; },
        [&](std::size_t p) {
            logits[p] = -(squared_distance(q, store.sample(p)) / denom);
            return logits[p];
        });
    return finish(acc, std::move(logits), opts);
}

DenoiseResult denoise_full(const DatasetStore& store, std::span<const double> query,
                           std::size_t t, const DiffusionSchedule& schedule,
                           const DenoiseOptions& opts) {
    return denoise_full(store, query, schedule.level(t), opts);
}

DenoiseResult denoise_indices(const DatasetStore& store, std::span<const double> query,
                              const NoiseLevel& level, std::span<const std::size_t> indices,
                              const DenoiseOptions& opts) {
    check_inputs(store, query, level);
    if (indices.empty()) throw EmptySelectionError("empty index set");
    for (auto i : indices) {
        if (i >= store.size()) throw ArgumentError("index out of range");
    }
    const auto q = scaled_query(query, level.alpha);
    const double denom = 2.0 * level.sigma_sq;
    std::vector<double> logits(indices.size());
    auto acc = accumulate(
        store, indices.size(), [&](std::size_t p) { return indices[p]; },
        [&](std::size_t p) {
            logits[p] = -(squared_distance(q, store.sample(indices[p])) / denom);
            return logits[p];
        });
    return finish(acc, std::move(logits), opts);
}

DenoiseResult denoise_subset(const DatasetStore& store, std::span<const double> query,
                             const GoldenSelection& golden, const DenoiseOptions& opts) {
    if (golden.golden.empty()) throw EmptySelectionError("empty golden set");
    if (golden.golden_logits.size() != golden.golden.size()) {
        return denoise_indices(store, query, golden.level, golden.golden, opts);
    }
    check_inputs(store, query, golden.level);
    for (auto i : golden.golden) {
        if (i >= store.size()) throw ArgumentError("golden index out of range");
    }
    auto acc = accumulate(
        store, golden.golden.size(), [&](std::size_t p) { return golden.golden[p]; },
        [&](std::size_t p) { return golden.golden_logits[p]; });
    return finish(acc, golden.golden_logits, opts);
}

DenoiseResult denoise_weighted_stream(const DatasetStore& store, std::span<const double> query,
                                      const NoiseLevel& level, std::size_t batch_size,
                                      const DenoiseOptions& opts) {
    check_inputs(store, query, level);
    if (batch_size == 0) throw ArgumentError("batch_size must be >= 1");
    const auto q = scaled_query(query, level.alpha);
    const double denom = 2.0 * level.sigma_sq;
    const std::size_t n = store.size();
    const std::size_t batches = (n + batch_size - 1) / batch_size;

    std::vector<double> logits(n);
    std::vector<SoftmaxAccumulator> parts(batches, SoftmaxAccumulator(store.dim()));
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t begin = b * batch_size;
        const std::size_t end = std::min(n, begin + batch_size);
        const std::size_t len = end - begin;
        parts[b] = accumulate(
            store, len, [&](std::size_t p) { return begin + p; },
            [&](std::size_t p) {
                logits[begin + p] = -(squared_distance(q, store.sample(begin + p)) / denom);
                return logits[begin + p];
            });
    }

    DenoiseResult r;
    r.x0_hat.assign(store.dim(), 0.0);
    for (const auto& part : parts) {
        const auto mean = opts.skip_renormalization ? part.running_vec() : part.finalize();
        for (std::size_t j = 0; j < mean.size(); ++j) r.x0_hat[j] += mean[j];
    }
    for (double& v : r.x0_hat) v /= double(batches);

    if (opts.summarize) {
        // Effective weights: batch softmax scaled by 1 / batches.
        std::vector<double> w(n);
        for (std::size_t b = 0; b < batches; ++b) {
            const auto& part = parts[b];
            const std::size_t end = std::min(n, (b + 1) * batch_size);
            for (std::size_t i = b * batch_size; i < end; ++i) {
                w[i] = std::exp(logits[i] - part.running_max()) / part.running_sum() / double(batches);
            }
        }
        WeightsSummary s;
        s.support = n;
        double h = 0.0;
        for (double v : w) {
            if (v > 0.0) h -= v * std::log(v);
        }
        s.entropy = std::max(0.0, h);
        s.effective_support = std::exp(s.entropy);
        s.max_weight = *std::max_element(w.begin(), w.end());
        s.top_mass_k = std::min(opts.top_mass_k, n);
        if (s.top_mass_k > 0) {
            std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(s.top_mass_k - 1),
                             w.end(), std::greater<>());
            s.top_mass = std::accumulate(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(s.top_mass_k), 0.0);
        }
        r.weights = s;
    }
    if (opts.keep_logits) r.logits = std::move(logits);
    return r;
}

} // namespace adiff
