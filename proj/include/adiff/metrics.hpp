#pragma once

#include "adiff/dataset.hpp"
#include "adiff/rng.hpp"
#include "adiff/sampler.hpp"
#include "adiff/schedule.hpp"
#include "adiff/selection.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace adiff {

using SampleSet = std::vector<std::vector<double>>;

// Mean over samples and coordinates of squared differences.
double mse(std::span<const std::vector<double>> a, std::span<const std::vector<double>> b);

// 1 - SS_res / SS_tot, SS_tot about the mean of all reference coordinates.
double r_squared(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> ref);

struct ComparisonReport {
    double mse = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};

ComparisonReport compare(std::span<const std::vector<double>> pred,
                         std::span<const std::vector<double>> ref);

// Multiply-add counts per denoising step:
//   full   = N * D
//   golden = N * d + m_t * D
struct FlopModel {
    std::uint64_t full = 0;
    std::uint64_t golden = 0;
    double ratio() const { return double(full) / double(golden); }
};

FlopModel flop_model(std::size_t n, std::size_t dim, std::size_t proxy_dim, std::size_t m_t);

// Store + proxy cache + the largest per-step transient buffers for one query.
std::uint64_t peak_bytes_estimate(const DatasetStore& store, SamplerMode mode, std::size_t m_t);

struct PerfReport {
    SamplerMode mode = SamplerMode::full_scan;
    std::size_t n = 0;
    std::size_t dim = 0;
    std::size_t proxy_dim = 0;
    std::size_t m_t = 0;
    std::size_t k_t = 0;
    std::size_t stride_index = 0;
    std::size_t repeats = 0;
    std::size_t threads = 0;
    double mean_step_ms = 0.0;
    double median_step_ms = 0.0;
    std::uint64_t flops = 0;
    std::uint64_t peak_bytes = 0;
};

struct TimingConfig {
    std::size_t warmup = 3;
    std::size_t repeats = 10;
    std::uint64_t seed = 0;
    std::size_t wss_batch = kDefaultWssBatch;
    std::optional<ScheduleParams> schedule_params;
    // Stride position to time; defaults to the middle of the stride.
    std::optional<std::size_t> stride_index;
};

// Times one denoising step (selection included for golden) on noisy copies
// of training samples at a fixed noise level. Throws if repeats == 0.
// The store must carry a proxy cache for golden mode.
PerfReport time_denoise_step(const DatasetStore& store, const DiffusionSchedule& schedule,
                             SamplerMode mode, const TimingConfig& config);

// `mode,N,D,d,m_t,k_t,step_time_ms,flops_model,peak_bytes,speedup`. Speedup
// is relative to the full_scan row when present.
void write_bench_csv(std::span<const PerfReport> rows, const std::filesystem::path& path);

// k distinct indices drawn uniformly from [0, n), ascending.
std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, CounterRng& rng);

struct SensitivityPoint {
    std::size_t requested = 0;
    std::size_t size = 0; // after clamping to N
    double mse = 0.0;     // per coordinate, averaged over probes
};

// Mean squared difference between full-scan denoising and denoising over a
// fresh random subset, at one noise level. Probe p noises training sample
// below(N) with stream p of `seed`.
std::vector<SensitivityPoint> subset_sensitivity(const DatasetStore& store, const NoiseLevel& level,
                                                 std::span<const std::size_t> sizes, std::size_t probes,
                                                 std::uint64_t seed);

} // namespace adiff
