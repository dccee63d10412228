#include "adiff/metrics.hpp"

#include "adiff/denoiser.hpp"
#include "adiff/errors.hpp"
#include "adiff/kernels.hpp"
#include "adiff/rng.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>

namespace adiff {

namespace {

void check_shapes(std::span<const std::vector<double>> a, std::span<const std::vector<double>> b) {
    if (a.size() != b.size() || a.empty()) throw ArgumentError("sample sets differ in count or are empty");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size() || a[i].empty()) {
            throw ArgumentError("sample " + std::to_string(i) + " differs in dimension");
        }
        if (a[i].size() != a[0].size()) throw ArgumentError("ragged sample set");
    }
}

} // namespace

double mse(std::span<const std::vector<double>> a, std::span<const std::vector<double>> b) {
    check_shapes(a, b);
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a[i].size(); ++j) {
            const double d = a[i][j] - b[i][j];
            s += d * d;
        }
        count += a[i].size();
    }
    return s / double(count);
}

double r_squared(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> ref) {
    check_shapes(pred, ref);
    double mean = 0.0;
    std::size_t count = 0;
    for (const auto& r : ref) {
        for (double v : r) mean += v;
        count += r.size();
    }
    mean /= double(count);
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        for (std::size_t j = 0; j < ref[i].size(); ++j) {
            ss_tot += (ref[i][j] - mean) * (ref[i][j] - mean);
            ss_res += (ref[i][j] - pred[i][j]) * (ref[i][j] - pred[i][j]);
        }
    }
    if (ss_tot == 0.0) throw ArgumentError("r_squared is undefined for a constant reference");
    return 1.0 - ss_res / ss_tot;
}

ComparisonReport compare(std::span<const std::vector<double>> pred,
                         std::span<const std::vector<double>> ref) {
    return {mse(pred, ref), r_squared(pred, ref), pred.size()};
}

FlopModel flop_model(std::size_t n, std::size_t dim, std::size_t proxy_dim, std::size_t m_t) {
    FlopModel f;
    f.full = std::uint64_t(n) * dim;
    f.golden = std::uint64_t(n) * proxy_dim + std::uint64_t(m_t) * dim;
    return f;
}

std::uint64_t peak_bytes_estimate(const DatasetStore& store, SamplerMode mode, std::size_t m_t) {
    const std::uint64_t n = store.size();
    const std::uint64_t d = store.dim();
    const std::uint64_t shards = shard_count(store.size());
    std::uint64_t bytes = n * d * sizeof(float) + n * sizeof(double); // samples + norms
    if (store.has_labels()) bytes += n * sizeof(int);
    if (store.proxy()) bytes += store.proxy()->values.size() * sizeof(float);
    switch (mode) {
    case SamplerMode::full_scan:
        bytes += n * sizeof(double) + shards * d * sizeof(double);
        break;
    case SamplerMode::golden:
        // (distance, index) pairs for the screen, then per-candidate logits,
        // distances and indices, plus shard accumulators.
        bytes += n * (sizeof(double) + sizeof(std::size_t)) +
                 std::uint64_t(m_t) * (2 * sizeof(double) + 2 * sizeof(std::size_t)) +
                 shard_count(m_t) * d * sizeof(double);
        break;
    case SamplerMode::wss_ablation:
        bytes += n * sizeof(double) + ((n + kDefaultWssBatch - 1) / kDefaultWssBatch + shards) * d *
                                          sizeof(double);
        break;
    }
    return bytes;
}

PerfReport time_denoise_step(const DatasetStore& store, const DiffusionSchedule& schedule,
                             SamplerMode mode, const TimingConfig& config) {
    if (config.repeats == 0) throw ArgumentError("time_denoise_step needs at least one timed repeat");
    const auto& stride = schedule.ddim_steps();
    const std::size_t pos = config.stride_index.value_or(stride.size() / 2);
    if (pos >= stride.size()) throw ArgumentError("stride index out of range");
    const std::size_t t = stride[pos];
    const NoiseLevel level = schedule.level(t);
    const std::size_t n = store.size();
    const ScheduleParams params = config.schedule_params.value_or(ScheduleParams::defaults(n));
    if (mode == SamplerMode::golden) {
        params.validate(n);
        if (!store.proxy()) throw PreconditionError("golden timing needs a proxy cache");
    }

    const std::size_t total = config.warmup + config.repeats;
    CounterRng rng(config.seed);
    std::vector<std::vector<double>> queries;
    queries.reserve(total);
    for (std::size_t r = 0; r < total; ++r) {
        const auto x0 = store.sample(rng.below(n));
        std::vector<double> eps(store.dim());
        for (double& e : eps) e = rng.normal();
        queries.push_back(forward_noise(x0, level.alpha, eps));
    }

    PerfReport rep;
    rep.mode = mode;
    rep.n = n;
    rep.dim = store.dim();
    rep.proxy_dim = store.proxy() ? store.proxy()->dim : store.dim();
    rep.stride_index = pos;
    rep.repeats = config.repeats;
    rep.threads = thread_count();
    const double g = schedule.g_at(t);
    if (mode == SamplerMode::golden) {
        rep.m_t = m_of_t(params, g);
        rep.k_t = std::min(k_of_t(params, g), rep.m_t);
        rep.flops = flop_model(n, rep.dim, rep.proxy_dim, rep.m_t).golden;
    } else {
        rep.m_t = n;
        rep.k_t = n;
        rep.flops = flop_model(n, rep.dim, rep.proxy_dim, n).full;
    }
    rep.peak_bytes = peak_bytes_estimate(store, mode, rep.m_t);

    std::vector<double> times;
    double sink = 0.0;
    for (std::size_t r = 0; r < total; ++r) {
        const auto start = std::chrono::steady_clock::now();
        DenoiseResult res;
        switch (mode) {
        case SamplerMode::golden:
            res = denoise_subset(store, queries[r],
                                 golden_select(store, queries[r], level,
                                               coarse_screen(store, queries[r], level, rep.m_t), rep.k_t));
            break;
        case SamplerMode::full_scan:
            res = denoise_full(store, queries[r], level);
            break;
        case SamplerMode::wss_ablation:
            res = denoise_weighted_stream(store, queries[r], level, config.wss_batch);
            break;
        }
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        sink += res.x0_hat.front();
        if (r >= config.warmup) times.push_back(ms);
    }
    (void)sink;
    rep.mean_step_ms = std::accumulate(times.begin(), times.end(), 0.0) / double(times.size());
    std::sort(times.begin(), times.end());
    const std::size_t h = times.size() / 2;
    rep.median_step_ms = times.size() % 2 ? times[h] : 0.5 * (times[h - 1] + times[h]);
    return rep;
}

void write_bench_csv(std::span<const PerfReport> rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(10);
    double full_ms = 0.0;
    for (const auto& r : rows) {
        if (r.mode == SamplerMode::full_scan) full_ms = r.median_step_ms;
    }
    out << "mode,N,D,d,m_t,k_t,step_time_ms,flops_model,peak_bytes,speedup\n";
    for (const auto& r : rows) {
        out << to_string(r.mode) << ',' << r.n << ',' << r.dim << ',' << r.proxy_dim << ',' << r.m_t << ','
            << r.k_t << ',' << r.median_step_ms << ',' << r.flops << ',' << r.peak_bytes << ',';
        if (full_ms > 0.0) out << full_ms / r.median_step_ms;
        out << '\n';
    }
}

std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, CounterRng& rng) {
    if (k > n) throw ArgumentError("subset larger than the population");
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::vector<SensitivityPoint> subset_sensitivity(const DatasetStore& store, const NoiseLevel& level,
                                                 std::span<const std::size_t> sizes, std::size_t probes,
                                                 std::uint64_t seed) {
    if (probes == 0) throw ArgumentError("subset_sensitivity needs at least one probe");
    const std::size_t n = store.size();
    std::vector<SensitivityPoint> out;
    for (std::size_t s : sizes) {
        if (s == 0) throw ArgumentError("subset sizes must be positive");
        out.push_back({s, std::min(s, n), 0.0});
    }
    const CounterRng root(seed);
    for (std::size_t p = 0; p < probes; ++p) {
        CounterRng rng = root.split(p);
        const auto x0 = store.sample(rng.below(n));
        std::vector<double> eps(store.dim());
        for (double& e : eps) e = rng.normal();
        const auto q = forward_noise(x0, level.alpha, eps);
        const auto full = denoise_full(store, q, level).x0_hat;
        for (auto& pt : out) {
            const auto idx = random_subset(n, pt.size, rng);
            const auto sub = denoise_indices(store, q, level, idx).x0_hat;
            double e = 0.0;
            for (std::size_t j = 0; j < full.size(); ++j) e += (full[j] - sub[j]) * (full[j] - sub[j]);
            pt.mse += e / double(full.size());
        }
    }
    for (auto& pt : out) pt.mse /= double(probes);
    return out;
}

} // namespace adiff
