#pragma once

#include "adiff/dataset.hpp"
#include "adiff/schedule.hpp"
#include "adiff/selection.hpp"

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace adiff {

// ---------------------------------------------------------------------------
// SoftmaxAccumulator: single-pass, max-shifted softmax aggregation.
//
//   running_max  m = max logit seen
//   running_sum  S = sum exp(l_i - m)
//   running_vec  V = sum exp(l_i - m) x_i
//   running_ent  T = sum exp(l_i - m) (l_i - m)
//
// The weighted mean is V / S, divided once in finalize(). Entropy of the
// implied weights is ln S - T / S and the largest weight is 1 / S.
// Accumulators over disjoint index sets merge into the accumulator of the
// union.
// ---------------------------------------------------------------------------
class SoftmaxAccumulator {
public:
    explicit SoftmaxAccumulator(std::size_t dim = 0) : vec_(dim, 0.0) {}

    void add(double logit, std::span<const float> x);
    void add(double logit, std::span<const double> x);
    void merge_in(const SoftmaxAccumulator& other);

    bool empty() const { return count_ == 0; }
    std::size_t dim() const { return vec_.size(); }
    std::size_t count() const { return count_; }
    double running_max() const { return max_; }
    double running_sum() const { return sum_; }
    const std::vector<double>& running_vec() const { return vec_; }

    std::vector<double> finalize() const;
    double entropy() const;
    double max_weight() const { return 1.0 / sum_; }

private:
    template <typename T>
    void add_impl(double logit, std::span<const T> x);
    void rescale(double new_max);

    double max_ = -std::numeric_limits<double>::infinity();
    double sum_ = 0.0;
    double ent_ = 0.0;
    std::size_t count_ = 0;
    std::vector<double> vec_;
};

SoftmaxAccumulator merge_accumulators(const SoftmaxAccumulator& a, const SoftmaxAccumulator& b);

// -|x / sqrt(alpha) - sample|^2 / (2 sigma_sq)
double logit(std::span<const double> query, std::span<const float> sample, double alpha,
             double sigma_sq);

struct WeightsSummary {
    std::size_t support = 0; // number of samples aggregated
    double entropy = 0.0;
    double effective_support = 1.0; // exp(entropy)
    double max_weight = 1.0;
    std::size_t top_mass_k = 0;
    double top_mass = 1.0; // mass of the top_mass_k largest weights
};

struct DenoiseOptions {
    bool summarize = false;
    std::size_t top_mass_k = 10;
    bool keep_logits = false;
    // Fault injection for the verifier: return V instead of V / S.
    bool skip_renormalization = false;
};

struct DenoiseResult {
    std::vector<double> x0_hat;
    std::optional<WeightsSummary> weights;
    std::vector<double> logits; // per aggregated sample, if keep_logits
};

// Posterior mean over the whole store.
DenoiseResult denoise_full(const DatasetStore& store, std::span<const double> query,
                           const NoiseLevel& level, const DenoiseOptions& opts = {});
DenoiseResult denoise_full(const DatasetStore& store, std::span<const double> query,
                           std::size_t t, const DiffusionSchedule& schedule,
                           const DenoiseOptions& opts = {});

// Posterior mean renormalized over an explicit index set.
DenoiseResult denoise_indices(const DatasetStore& store, std::span<const double> query,
                              const NoiseLevel& level, std::span<const std::size_t> indices,
                              const DenoiseOptions& opts = {});

// Posterior mean renormalized over the golden set S_t. Reuses the logits
// stored in the selection.
DenoiseResult denoise_subset(const DatasetStore& store, std::span<const double> query,
                             const GoldenSelection& golden, const DenoiseOptions& opts = {});

inline constexpr std::size_t kDefaultWssBatch = 1024;

// Biased variant: softmax mean within each consecutive batch, then the plain
// average of the batch means.
DenoiseResult denoise_weighted_stream(const DatasetStore& store, std::span<const double> query,
                                      const NoiseLevel& level,
                                      std::size_t batch_size = kDefaultWssBatch,
                                      const DenoiseOptions& opts = {});

// All N logits of x_t against the store, index order.
std::vector<double> full_logits(const DatasetStore& store, std::span<const double> query,
                                const NoiseLevel& level);

// softmax(logits), max-shifted.
std::vector<double> posterior_weights(std::span<const double> logits);

// Entropy, max weight and top-k mass of softmax(logits).
WeightsSummary summarize_logits(std::span<const double> logits, std::size_t top_mass_k);

} // namespace adiff
