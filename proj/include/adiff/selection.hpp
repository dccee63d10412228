#pragma once

#include "adiff/dataset.hpp"
#include "adiff/schedule.hpp"

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace adiff {

// Sizes of the candidate pool (m) and golden set (k) at the two ends of the
// noise range. m shrinks and k grows with noise.
struct ScheduleParams {
    std::size_t m_min = 1;
    std::size_t m_max = 1;
    std::size_t k_min = 1;
    std::size_t k_max = 1;

    // m_min = k_max = N/10, m_max = N/4, k_min = N/20 (each at least 1).
    static ScheduleParams defaults(std::size_t n);

    // Throws ArgumentError unless 1 <= k_min <= k_max <= N, 1 <= m_min <= m_max <= N.
    void validate(std::size_t n) const;
    // Additionally requires k_t <= m_t on every stride step of `schedule`.
    void validate(std::size_t n, const DiffusionSchedule& schedule) const;
};

std::size_t m_of_t(const ScheduleParams& params, double g);
std::size_t k_of_t(const ScheduleParams& params, double g);

// Proxy dimension used when the store has no image shape or dim <= this.
inline constexpr std::size_t kIdentityProxyMaxDim = 64;

// Pools every sample by `factor` x `factor` block means (per channel).
// Low-dimensional stores get an identity proxy. A trailing partial block
// averages only the pixels it covers and sets truncated_blocks.
std::shared_ptr<const ProxyCache> build_proxy(const DatasetStore& store, std::size_t factor = 4);

// Builds the proxy and installs it on the store.
void attach_proxy(DatasetStore& store, std::size_t factor = 4);

// Applies the proxy projection of `cache` to one vector.
std::vector<double> project_to_proxy(const ProxyCache& cache, const std::optional<ImageShape>& shape,
                                     std::span<const double> x);

// (distance, index) pairs ordered by distance then index.
using Ranked = std::vector<std::pair<double, std::size_t>>;

// The m smallest entries, sorted. Ties broken by lower index.
Ranked top_m_smallest(Ranked items, std::size_t m);
// top-m of the union of two top-m lists. Associative and commutative.
Ranked merge_top_m(const Ranked& a, const Ranked& b, std::size_t m);

struct GoldenSelection {
    std::optional<std::size_t> step;
    double g = 0.0;
    NoiseLevel level;
    std::size_t m_t = 0;
    std::size_t k_t = 0;
    std::vector<std::size_t> candidates;   // C_t, ascending
    std::vector<double> proxy_distances;   // aligned with candidates
    std::vector<double> candidate_logits;  // aligned with candidates
    std::vector<std::size_t> golden;       // S_t, ascending
    std::vector<double> golden_logits;     // aligned with golden
    bool m_clamped = false;
    bool k_clamped = false;

    double min_golden_logit() const;
    double max_logit() const;
};

struct CandidateSet {
    std::vector<std::size_t> indices; // ascending
    std::vector<double> proxy_distances;
    bool m_clamped = false;
};

// The m_t proxy-nearest samples to x_t / sqrt(alpha).
CandidateSet coarse_screen(const DatasetStore& store, std::span<const double> query,
                           const NoiseLevel& level, std::size_t m_t);

// Exact logits over the candidates; S_t = the k_t largest (ties: lower index).
GoldenSelection golden_select(const DatasetStore& store, std::span<const double> query,
                              const NoiseLevel& level, const CandidateSet& candidates,
                              std::size_t k_t);

// Full pipeline for one sampling step: g -> (m_t, k_t) -> screen -> select.
GoldenSelection select_for_step(const DatasetStore& store, std::span<const double> query,
                                std::size_t t, const DiffusionSchedule& schedule,
                                const ScheduleParams& params);

} // namespace adiff
