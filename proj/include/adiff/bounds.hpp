#pragma once

#include "adiff/dataset.hpp"
#include "adiff/schedule.hpp"
#include "adiff/selection.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace adiff {

// Sorted-logit quantities behind the truncation bound
//   |f_D - f_S| <= 2R * Z_tail / Z <= 2R (N - k) exp(-gap),  gap = l_(1) - l_(k+1).
// Partition functions are stored relative to exp(l_(1)), so z_total >= 1.
struct BoundDiagnostics {
    double top_logit = 0.0;
    double kth_plus_one_logit = 0.0;
    double logit_gap = 0.0;
    double radius = 0.0;
    std::size_t n_total = 0;
    std::size_t k_used = 0;
    double bound = 0.0;
    double z_total = 0.0;
    double z_support = 0.0;
    double z_tail = 0.0;
    double tail_ratio = 0.0;
    double ratio_bound = 0.0;
    std::optional<double> actual_error;
    std::optional<bool> recall_ok; // S equals the true top-k of the full set
    bool degenerate = false;       // k >= N, nothing truncated
    bool heuristic = false;        // candidate audit: tail estimated, not measured

    // actual <= ratio_bound <= bound, each with absolute slack.
    bool chain_holds(double slack = 1e-9) const;
};

// Bound for truncating to the top-k of `logits`.
BoundDiagnostics compute_bound(std::span<const double> logits, std::size_t k, double radius);

// Same quantities for an arbitrary retained set `support` (indices into
// logits). The exponential bound still uses the sorted gap at k = |support|.
BoundDiagnostics compute_bound_for_support(std::span<const double> logits,
                                           std::span<const std::size_t> support, double radius);

enum class AuditMode { full_audit, candidate_audit };

BoundDiagnostics certify_step(const DatasetStore& store, std::span<const double> query,
                              const GoldenSelection& golden, AuditMode mode);

struct GapPathPoint {
    std::vector<double> query; // x_t
    NoiseLevel level;
    std::size_t t = 0;
};

struct GapPoint {
    std::size_t t = 0;
    double sigma_sq = 0.0;
    double delta_k = 0.0;
};

std::vector<GapPoint> gap_trajectory(const DatasetStore& store, std::span<const GapPathPoint> path,
                                     std::size_t k);

// l_(1) - l_(k+1) of an unsorted logit list.
double logit_gap(std::span<const double> logits, std::size_t k);

} // namespace adiff
