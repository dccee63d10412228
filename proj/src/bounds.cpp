#include "adiff/bounds.hpp"

#include "adiff/denoiser.hpp"
#include "adiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace adiff {

bool BoundDiagnostics::chain_holds(double slack) const {
    if (actual_error && *actual_error > ratio_bound + slack) return false;
    return ratio_bound <= bound + slack;
}

double logit_gap(std::span<const double> logits, std::size_t k) {
    if (k == 0 || k >= logits.size()) throw ArgumentError("logit_gap needs 1 <= k < N");
    std::vector<double> v(logits.begin(), logits.end());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), std::greater<>());
    const double kth1 = v[k];
    const double top = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
    return top - kth1;
}

namespace {

BoundDiagnostics gap_terms(std::span<const double> logits, std::size_t k, double radius) {
    const std::size_t n = logits.size();
    if (n == 0) throw PreconditionError("no logits");
    if (k == 0) throw ArgumentError("k must be >= 1");
    for (double l : logits) {
        if (!std::isfinite(l)) throw ArgumentError("non-finite logit");
    }
    BoundDiagnostics d;
    d.radius = radius;
    d.n_total = n;
    d.k_used = std::min(k, n);
    d.top_logit = *std::max_element(logits.begin(), logits.end());
    if (k >= n) {
        d.degenerate = true;
        d.kth_plus_one_logit = -std::numeric_limits<double>::infinity();
        d.logit_gap = std::numeric_limits<double>::infinity();
        d.bound = 0.0;
        return d;
    }
    d.logit_gap = logit_gap(logits, k);
    d.kth_plus_one_logit = d.top_logit - d.logit_gap;
    d.bound = 2.0 * radius * double(n - k) * std::exp(-d.logit_gap);
    return d;
}

// Z terms relative to exp(top), given which entries are retained.
void partition_terms(BoundDiagnostics& d, std::span<const double> logits,
                     const std::vector<char>& retained) {
    double z_s = 0.0;
    double z_tail = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double e = std::exp(logits[i] - d.top_logit);
        (retained[i] ? z_s : z_tail) += e;
    }
    d.z_support = z_s;
    d.z_tail = z_tail;
    d.z_total = z_s + z_tail;
    d.tail_ratio = z_tail / d.z_total;
    d.ratio_bound = 2.0 * d.radius * d.tail_ratio;
}

std::vector<std::size_t> top_k_indices(std::span<const double> logits, std::size_t k) {
    std::vector<std::size_t> idx(logits.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto better = [&](std::size_t a, std::size_t b) {
        return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
    };
    if (k < idx.size()) {
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
        idx.resize(k);
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace

BoundDiagnostics compute_bound(std::span<const double> logits, std::size_t k, double radius) {
    BoundDiagnostics d = gap_terms(logits, k, radius);
    std::vector<char> retained(logits.size(), 0);
    for (auto i : top_k_indices(logits, k)) retained[i] = 1;
    partition_terms(d, logits, retained);
    d.recall_ok = true;
    return d;
}

BoundDiagnostics compute_bound_for_support(std::span<const double> logits,
                                           std::span<const std::size_t> support, double radius) {
    if (support.empty()) throw EmptySelectionError("empty support");
    BoundDiagnostics d = gap_terms(logits, support.size(), radius);
    std::vector<char> retained(logits.size(), 0);
    for (auto i : support) {
        if (i >= logits.size()) throw ArgumentError("support index out of range");
        retained[i] = 1;
    }
    partition_terms(d, logits, retained);
    // Recall holds when no dropped logit beats a retained one.
    double min_in = std::numeric_limits<double>::infinity();
    double max_out = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (retained[i]) {
            min_in = std::min(min_in, logits[i]);
        } else {
            max_out = std::max(max_out, logits[i]);
        }
    }
    d.recall_ok = min_in >= max_out;
    return d;
}

BoundDiagnostics certify_step(const DatasetStore& store, std::span<const double> query,
                              const GoldenSelection& golden, AuditMode mode) {
    if (golden.golden.empty()) throw EmptySelectionError("empty golden set");
    const double radius = store.radius();
    if (mode == AuditMode::full_audit) {
        const auto logits = full_logits(store, query, golden.level);
        BoundDiagnostics d = compute_bound_for_support(logits, golden.golden, radius);
        const auto full = denoise_full(store, query, golden.level);
        const auto sub = denoise_subset(store, query, golden);
        double e = 0.0;
        for (std::size_t j = 0; j < full.x0_hat.size(); ++j) {
            const double diff = full.x0_hat[j] - sub.x0_hat[j];
            e += diff * diff;
        }
        d.actual_error = std::sqrt(e);
        return d;
    }

    // Candidate audit: only C_t logits are known. Every unscanned sample is
    // assumed to sit at the worst candidate logit.
    const auto& cl = golden.candidate_logits;
    if (cl.size() != golden.candidates.size() || cl.empty()) {
        throw PreconditionError("candidate audit needs candidate logits");
    }
    const std::size_t n = store.size();
    const std::size_t m = cl.size();
    const std::size_t k = golden.golden.size();
    BoundDiagnostics d;
    d.heuristic = true;
    d.radius = radius;
    d.n_total = n;
    d.k_used = k;
    d.top_logit = *std::max_element(cl.begin(), cl.end());
    const double worst = *std::min_element(cl.begin(), cl.end());
    if (k >= n) {
        d.degenerate = true;
        d.logit_gap = std::numeric_limits<double>::infinity();
        d.kth_plus_one_logit = -std::numeric_limits<double>::infinity();
        d.bound = 0.0;
    } else {
        d.kth_plus_one_logit = worst;
        if (k < m) {
            std::vector<double> v(cl);
            std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(),
                             std::greater<>());
            d.kth_plus_one_logit = v[k];
        }
        d.logit_gap = d.top_logit - d.kth_plus_one_logit;
        d.bound = 2.0 * radius * double(n - k) * std::exp(-d.logit_gap);
    }
    std::vector<char> in_golden(m, 0);
    {
        std::size_t g = 0;
        for (std::size_t j = 0; j < m && g < golden.golden.size(); ++j) {
            if (golden.candidates[j] == golden.golden[g]) {
                in_golden[j] = 1;
                ++g;
            }
        }
    }
    double z_s = 0.0, z_tail = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double e = std::exp(cl[j] - d.top_logit);
        (in_golden[j] ? z_s : z_tail) += e;
    }
    z_tail += double(n - m) * std::exp(worst - d.top_logit);
    d.z_support = z_s;
    d.z_tail = z_tail;
    d.z_total = z_s + z_tail;
    d.tail_ratio = z_tail / d.z_total;
    d.ratio_bound = 2.0 * radius * d.tail_ratio;
    return d;
}

std::vector<GapPoint> gap_trajectory(const DatasetStore& store, std::span<const GapPathPoint> path,
                                     std::size_t k) {
    if (path.empty()) throw PreconditionError("empty query path");
    std::vector<GapPoint> out;
    out.reserve(path.size());
    for (const auto& p : path) {
        const auto logits = full_logits(store, p.query, p.level);
        out.push_back({p.t, p.level.sigma_sq, logit_gap(logits, k)});
    }
    return out;
}

} // namespace adiff
