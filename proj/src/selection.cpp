#include "adiff/selection.hpp"

#include "adiff/errors.hpp"
#include "adiff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace adiff {

ScheduleParams ScheduleParams::defaults(std::size_t n) {
    auto at_least_one = [](std::size_t v) { return std::max<std::size_t>(1, v); };
    ScheduleParams p;
    p.m_min = at_least_one(n / 10);
    p.k_max = p.m_min;
    p.m_max = at_least_one(n / 4);
    p.k_min = at_least_one(n / 20);
    return p;
}

void ScheduleParams::validate(std::size_t n) const {
    if (!(1 <= k_min && k_min <= k_max && k_max <= n)) {
        throw ArgumentError("need 1 <= k_min <= k_max <= N");
    }
    if (!(1 <= m_min && m_min <= m_max && m_max <= n)) {
        throw ArgumentError("need 1 <= m_min <= m_max <= N");
    }
}

void ScheduleParams::validate(std::size_t n, const DiffusionSchedule& schedule) const {
    validate(n);
    for (auto t : schedule.ddim_steps()) {
        const double g = schedule.g_at(t);
        if (k_of_t(*this, g) > m_of_t(*this, g)) {
            throw ArgumentError("k_t exceeds m_t at timestep " + std::to_string(t));
        }
    }
}

std::size_t m_of_t(const ScheduleParams& p, double g) {
    const double v = double(p.m_min) + double(p.m_max - p.m_min) * (1.0 - g);
    return static_cast<std::size_t>(std::floor(v));
}

std::size_t k_of_t(const ScheduleParams& p, double g) {
    const double v = double(p.k_min) + double(p.k_max - p.k_min) * g;
    return static_cast<std::size_t>(std::floor(v));
}

namespace {

template <typename Src, typename Dst>
void pool_blocks(const ImageShape& in, std::size_t factor, const Src* x, Dst* out) {
    const std::size_t hp = (in.height + factor - 1) / factor;
    const std::size_t wp = (in.width + factor - 1) / factor;
    for (std::size_t c = 0; c < in.channels; ++c) {
        const Src* plane = x + c * in.height * in.width;
        for (std::size_t by = 0; by < hp; ++by) {
            const std::size_t y1 = std::min(in.height, (by + 1) * factor);
            for (std::size_t bx = 0; bx < wp; ++bx) {
                const std::size_t x1 = std::min(in.width, (bx + 1) * factor);
                double s = 0.0;
                for (std::size_t y = by * factor; y < y1; ++y) {
                    for (std::size_t xx = bx * factor; xx < x1; ++xx) {
                        s += double(plane[y * in.width + xx]);
                    }
                }
                const double count = double((y1 - by * factor) * (x1 - bx * factor));
                out[(c * hp + by) * wp + bx] = static_cast<Dst>(s / count);
            }
        }
    }
}

void check_level(const NoiseLevel& level) {
    if (!(level.alpha > 0.0 && level.alpha <= 1.0)) throw ArgumentError("alpha must lie in (0, 1]");
    if (!(level.sigma_sq > 0.0)) throw ArgumentError("sigma_sq must be positive");
}

std::vector<double> scaled(std::span<const double> query, double alpha) {
    const double inv = 1.0 / std::sqrt(alpha);
    std::vector<double> q(query.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = query[i] * inv;
    return q;
}

bool ranked_less(const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) {
    return a.first < b.first || (a.first == b.first && a.second < b.second);
}

} // namespace

std::shared_ptr<const ProxyCache> build_proxy(const DatasetStore& store, std::size_t factor) {
    if (factor == 0) throw ArgumentError("pooling factor must be positive");
    auto cache = std::make_shared<ProxyCache>();
    const std::size_t n = store.size();
    if (store.dim() <= kIdentityProxyMaxDim || factor == 1) {
        cache->factor = 1;
        cache->dim = store.dim();
        cache->pooled_shape = store.shape();
        cache->values = store.flattened();
        return cache;
    }
    if (!store.shape()) {
        throw PreconditionError("proxy pooling needs an image shape when dim > " +
                                std::to_string(kIdentityProxyMaxDim));
    }
    const ImageShape& s = *store.shape();
    const ImageShape pooled{s.channels, (s.height + factor - 1) / factor,
                            (s.width + factor - 1) / factor};
    cache->factor = factor;
    cache->dim = pooled.size();
    cache->pooled_shape = pooled;
    cache->truncated_blocks = (s.height % factor != 0) || (s.width % factor != 0);
    cache->values.resize(n * cache->dim);
    for (std::size_t i = 0; i < n; ++i) {
        pool_blocks(s, factor, store.sample(i).data(), cache->values.data() + i * cache->dim);
    }
    return cache;
}

void attach_proxy(DatasetStore& store, std::size_t factor) {
    store.set_proxy(build_proxy(store, factor));
}

std::vector<double> project_to_proxy(const ProxyCache& cache, const std::optional<ImageShape>& shape,
                                     std::span<const double> x) {
    if (cache.factor == 1) return {x.begin(), x.end()};
    if (!shape || shape->size() != x.size()) {
        throw ArgumentError("projection input does not match the image shape");
    }
    std::vector<double> out(cache.dim);
    pool_blocks(*shape, cache.factor, x.data(), out.data());
    return out;
}

Ranked top_m_smallest(Ranked items, std::size_t m) {
    if (m < items.size()) {
        std::nth_element(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(m), items.end(),
                         ranked_less);
        items.resize(m);
    }
    std::sort(items.begin(), items.end(), ranked_less);
    return items;
}

Ranked merge_top_m(const Ranked& a, const Ranked& b, std::size_t m) {
    Ranked out;
    out.reserve(std::min(m, a.size() + b.size()));
    std::size_t i = 0, j = 0;
    while (out.size() < m && (i < a.size() || j < b.size())) {
        if (j == b.size() || (i < a.size() && ranked_less(a[i], b[j]))) {
            out.push_back(a[i++]);
        } else if (i < a.size() && a[i] == b[j]) {
            out.push_back(a[i++]);
            ++j;
        } else {
            out.push_back(b[j++]);
        }
    }
    return out;
}

double GoldenSelection::min_golden_logit() const {
    return golden_logits.empty() ? -std::numeric_limits<double>::infinity()
                                 : *std::min_element(golden_logits.begin(), golden_logits.end());
}

double GoldenSelection::max_logit() const {
    return candidate_logits.empty()
               ? -std::numeric_limits<double>::infinity()
               : *std::max_element(candidate_logits.begin(), candidate_logits.end());
}

CandidateSet coarse_screen(const DatasetStore& store, std::span<const double> query,
                           const NoiseLevel& level, std::size_t m_t) {
    check_level(level);
    if (query.size() != store.dim()) throw ArgumentError("query dimension mismatch");
    const ProxyCache* cache = store.proxy();
    if (!cache) throw PreconditionError("coarse_screen needs a proxy cache");
    if (m_t == 0) throw ArgumentError("m_t must be positive");
    CandidateSet out;
    const std::size_t n = store.size();
    if (m_t > n) {
        m_t = n;
        out.m_clamped = true;
    }

    const auto q = scaled(query, level.alpha);
    const auto qp = project_to_proxy(*cache, store.shape(), q);
    Ranked dist(n);
    parallel_for_shards(shard_count(n), [&](std::size_t s) {
        const std::size_t end = std::min(n, (s + 1) * kShardRows);
        for (std::size_t i = s * kShardRows; i < end; ++i) {
            dist[i] = {squared_distance(qp, store.proxy_row(i)), i};
        }
    });
    auto best = top_m_smallest(std::move(dist), m_t);
    std::sort(best.begin(), best.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    out.indices.reserve(best.size());
    out.proxy_distances.reserve(best.size());
    for (const auto& [d, i] : best) {
        out.indices.push_back(i);
        out.proxy_distances.push_back(std::sqrt(d));
    }
    return out;
}

GoldenSelection golden_select(const DatasetStore& store, std::span<const double> query,
                              const NoiseLevel& level, const CandidateSet& candidates,
                              std::size_t k_t) {
    check_level(level);
    if (query.size() != store.dim()) throw ArgumentError("query dimension mismatch");
    if (candidates.indices.empty()) throw EmptySelectionError("empty candidate set");
    if (k_t == 0) throw ArgumentError("k_t must be positive");
    GoldenSelection sel;
    sel.level = level;
    sel.candidates = candidates.indices;
    sel.proxy_distances = candidates.proxy_distances;
    sel.m_t = candidates.indices.size();
    sel.m_clamped = candidates.m_clamped;
    if (k_t > sel.m_t) {
        k_t = sel.m_t;
        sel.k_clamped = true;
    }
    sel.k_t = k_t;

    const auto q = scaled(query, level.alpha);
    const std::size_t m = sel.m_t;
    const double denom = 2.0 * level.sigma_sq;
    sel.candidate_logits.resize(m);
    parallel_for_shards(shard_count(m), [&](std::size_t s) {
        const std::size_t end = std::min(m, (s + 1) * kShardRows);
        for (std::size_t j = s * kShardRows; j < end; ++j) {
            const std::size_t i = sel.candidates[j];
            if (i >= store.size()) throw ArgumentError("candidate index out of range");
            sel.candidate_logits[j] = -(squared_distance(q, store.sample(i)) / denom);
        }
    });

    // Rank by (-logit, index) so the k largest logits come first.
    Ranked ranked(m);
    for (std::size_t j = 0; j < m; ++j) ranked[j] = {-sel.candidate_logits[j], j};
    auto top = top_m_smallest(std::move(ranked), k_t);
    std::sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    sel.golden.reserve(k_t);
    sel.golden_logits.reserve(k_t);
    for (const auto& [neg, j] : top) {
        sel.golden.push_back(sel.candidates[j]);
        sel.golden_logits.push_back(-neg);
    }
    return sel;
}

GoldenSelection select_for_step(const DatasetStore& store, std::span<const double> query,
                                std::size_t t, const DiffusionSchedule& schedule,
                                const ScheduleParams& params) {
    const double g = schedule.g_at(t);
    const std::size_t m = m_of_t(params, g);
    const std::size_t k = std::min(k_of_t(params, g), m);
    const auto level = schedule.level(t);
    auto sel = golden_select(store, query, level, coarse_screen(store, query, level, m), k);
    sel.step = t;
    sel.g = g;
    return sel;
}

} // namespace adiff
