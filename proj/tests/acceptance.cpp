// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "adiff/bounds.hpp"
#include "adiff/denoiser.hpp"
#include "adiff/metrics.hpp"
#include "adiff/sampler.hpp"
#include "cli.hpp"
#include "support/fixtures.hpp"
#include "support/mnist_scale.hpp"
#include "support/oracles.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

using namespace adiff;
namespace fs = std::filesystem;

namespace {

// Tolerances and frozen thresholds.
constexpr double kChainSlack = 1e-9;          // AC1 absolute slack
constexpr double kAc1TimeLimitS = 120.0;      // AC1 runtime budget
constexpr double kHighNoiseFloor = 0.99;      // AC2 exp(-gap) at the largest stride sigma
constexpr double kLowNoiseTail = 1e-6;        // AC2 tail ratio at the smallest stride sigma
constexpr double kQueryOffset = 0.01;         // AC2 data-space query jitter
constexpr double kStreamingTol = 1e-10;       // AC3 relative
constexpr double kMergeTol = 1e-12;           // AC3 relative
constexpr double kFinalSupportFraction = 0.1; // AC5
constexpr std::size_t kAllowedViolations = 1; // AC5
constexpr double kAc7MseThreshold = 0.25;     // AC7 frozen from the pilot run (0.2234)
constexpr double kMinFlopRatio = 4.0;         // AC8
constexpr double kMinSpeedup = 2.0;           // AC8
constexpr double kAc8TimeLimitS = 300.0;      // AC8 benchmark budget
constexpr double kWssBiasMargin = 0.01;       // AC9 frozen from the pilot run (0.0223)

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
    return std::sqrt(oracle::sq_dist(a, b));
}

std::vector<double> noisy_query(const DatasetStore& store, const NoiseLevel& level, CounterRng& rng) {
    const auto x0 = store.sample(rng.below(store.size()));
    std::vector<double> eps(store.dim());
    for (double& e : eps) e = rng.normal();
    return forward_noise(x0, level.alpha, eps);
}

DiffusionSchedule default_schedule(std::size_t steps = 10) {
    return DiffusionSchedule::linear_beta(1000, 1e-4, 0.02, steps);
}

// ---------------------------------------------------------------------------

Outcome ac1_bound_chain() {
    const auto t0 = Clock::now();
    auto moons = make_moons(2000, 0.05, 0);
    auto idx = fixture::load_mnist5k(fixture::data_dir());
    attach_proxy(moons);
    attach_proxy(idx);
    const auto sched = default_schedule();
    const auto& stride = sched.ddim_steps();
    const std::size_t positions[3] = {0, stride.size() / 2, stride.size() - 1};

    std::size_t run = 0, passed = 0;
    double worst_excess = -1e300;
    std::uint64_t config = 0;
    for (const DatasetStore* store : {&moons, &idx}) {
        const std::size_t n = store->size();
        for (std::size_t pos : positions) {
            const NoiseLevel level = sched.level(stride[pos]);
            for (std::size_t k : {n / 20, n / 10}) {
                CounterRng rng(1000 + config++);
                for (int i = 0; i < 100; ++i) {
                    const auto q = noisy_query(*store, level, rng);
                    const auto sel = golden_select(*store, q, level, coarse_screen(*store, q, level, n), k);
                    const auto d = certify_step(*store, q, sel, AuditMode::full_audit);
                    ++run;
                    worst_excess = std::max({worst_excess, *d.actual_error - d.ratio_bound, d.ratio_bound - d.bound});
                    if (d.chain_holds(kChainSlack) && d.recall_ok.value_or(false)) ++passed;
                }
            }
        }
    }
    const double secs = seconds_since(t0);
    return {passed == run && secs <= kAc1TimeLimitS,
            fmt("%zu/%zu instances hold the chain, worst excess %.3g, %.1f s (limit %.0f s)", passed, run,
                worst_excess, secs, kAc1TimeLimitS)};
}

Outcome ac2_asymptotic() {
    const auto store = make_moons(2000, 0.05, 0);
    const auto data = fixture::as_matrix(store);
    const auto sched = default_schedule();
    const auto& stride = sched.ddim_steps();
    const std::size_t n = store.size();
    CounterRng rng(2);
    bool exact = true;
    double worst_high = 1.0, worst_tail = 0.0;
    bool distinct = true;
    for (int trial = 0; trial < 32; ++trial) {
        auto q = data[rng.below(n)];
        for (double& v : q) v += kQueryOffset * rng.normal();
        auto d2 = oracle::logits(data, q, 1.0, 0.5); // -squared distance
        std::sort(d2.begin(), d2.end());
        distinct = distinct && std::adjacent_find(d2.begin(), d2.end()) == d2.end();
        auto state = [&](double alpha) {
            std::vector<double> x(q);
            for (double& v : x) v *= std::sqrt(alpha);
            return x;
        };
        for (auto t : stride) {
            const NoiseLevel lv = sched.level(t);
            const auto x = state(lv.alpha);
            const double g1 = logit_gap(full_logits(store, x, lv), n / 20);
            const double g2 = logit_gap(full_logits(store, x, NoiseLevel{lv.alpha, 2.0 * lv.sigma_sq}), n / 20);
            exact = exact && g2 == g1 / 2.0;
        }
        const NoiseLevel hi = sched.level(stride.front());
        worst_high = std::min(worst_high, std::exp(-logit_gap(full_logits(store, state(hi.alpha), hi), n / 2)));
        const NoiseLevel lo = sched.level(stride.back());
        worst_tail = std::max(worst_tail,
                              compute_bound(full_logits(store, state(lo.alpha), lo), n / 20, store.radius()).tail_ratio);
    }
    return {exact && distinct && worst_high >= kHighNoiseFloor && worst_tail <= kLowNoiseTail,
            fmt("gap halving exact=%s over 32 queries x %zu levels; min exp(-gap_N/2)=%.6f (>= %.2f); "
                "max tail ratio=%.3g (<= %.0e)",
                exact ? "yes" : "no", stride.size(), worst_high, kHighNoiseFloor, worst_tail, kLowNoiseTail)};
}

Outcome ac3_streaming() {
    CounterRng rng(3);
    std::size_t ok = 0, merge_ok = 0;
    double worst = 0.0, worst_merge = 0.0;
    for (int i = 0; i < 50; ++i) {
        const std::size_t n = 1 + rng.below(10000);
        const std::size_t d = 1 + rng.below(1024);
        const auto store = fixture::random_store(n, d, 5000 + i);
        const auto data = fixture::as_matrix(store);
        const NoiseLevel level = NoiseLevel::from_sigma_sq(std::exp(-4.0 + 8.0 * rng.uniform()));
        const auto q = fixture::normal_vector(d, rng, 0.8);
        const auto got = denoise_full(store, q, level).x0_hat;
        const double e = fixture::rel_diff(got, oracle::posterior_mean(data, q, level.alpha, level.sigma_sq));
        worst = std::max(worst, e);
        ok += e <= kStreamingTol;

        const auto logits = oracle::logits(data, q, level.alpha, level.sigma_sq);
        const std::size_t c1 = rng.below(n + 1);
        const std::size_t c2 = c1 + rng.below(n - c1 + 1);
        SoftmaxAccumulator a(d), b(d), c(d);
        for (std::size_t j = 0; j < n; ++j) {
            (j < c1 ? a : j < c2 ? b : c).add(logits[j], std::span<const double>(data[j]));
        }
        const auto left = merge_accumulators(merge_accumulators(a, b), c).finalize();
        const auto right = merge_accumulators(a, merge_accumulators(b, c)).finalize();
        const double em = fixture::rel_diff(left, right);
        worst_merge = std::max(worst_merge, em);
        merge_ok += em <= kMergeTol;
    }
    return {ok == 50 && merge_ok == 50,
            fmt("streaming %zu/50 (worst rel %.2g <= %.0e); merge %zu/50 (worst rel %.2g <= %.0e)", ok, worst,
                kStreamingTol, merge_ok, worst_merge, kMergeTol)};
}

Outcome ac4_schedule() {
    CounterRng rng(4);
    std::size_t bad = 0, checks = 0;
    for (std::size_t n : {1000u, 2000u, 5000u, 60000u}) {
        const auto p = ScheduleParams::defaults(n);
        checks += 4;
        bad += m_of_t(p, 1.0) != p.m_min;
        bad += m_of_t(p, 0.0) != p.m_max;
        bad += k_of_t(p, 0.0) != p.k_min;
        bad += k_of_t(p, 1.0) != p.k_max;
    }
    for (int i = 0; i < 1000; ++i) {
        const auto p = ScheduleParams::defaults(100 + rng.below(100000));
        double g1 = rng.uniform(), g2 = rng.uniform();
        if (g1 > g2) std::swap(g1, g2);
        checks += 2;
        bad += m_of_t(p, g1) < m_of_t(p, g2);
        bad += k_of_t(p, g1) > k_of_t(p, g2);
    }
    return {bad == 0, fmt("%zu/%zu endpoint and monotonicity checks exact", checks - bad, checks)};
}

Outcome ac5_concentration() {
    const auto store = make_moons(2000, 0.05, 0);
    SamplerConfig cfg;
    cfg.record_states = false;
    cfg.timing = false;
    const auto trajs = sample_batch(store, default_schedule(), cfg, 32);
    const auto med = median_effective_support(trajs);
    std::size_t violations = 0;
    for (std::size_t s = 1; s < med.size(); ++s) violations += med[s] > med[s - 1];
    const double ratio = med.back() / med.front();
    std::string series;
    for (double v : med) series += fmt("%.1f ", v);
    return {violations <= kAllowedViolations && ratio <= kFinalSupportFraction,
            fmt("median eff. support [%s] violations=%zu (<= %zu), final/first=%.4f (<= %.2f)", series.c_str(),
                violations, kAllowedViolations, ratio, kFinalSupportFraction)};
}

Outcome ac6_sensitivity(const DatasetStore& mnist60k) {
    const auto sched = default_schedule();
    const std::size_t pos = 1;
    const std::vector<std::size_t> sizes{10, 100, 1000, 5000};
    const auto pts = subset_sensitivity(mnist60k, sched.level(sched.ddim_steps()[pos]), sizes, 64, 6);
    bool decreasing = true;
    std::string series;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        series += fmt("%zu:%.4g ", pts[i].size, pts[i].mse);
        if (i > 0) decreasing = decreasing && pts[i].mse < pts[i - 1].mse;
    }
    return {decreasing, fmt("N=%zu, stride step %zu (t=%zu), 64 probes, MSE %s", mnist60k.size(), pos,
                            sched.ddim_steps()[pos], series.c_str())};
}

Outcome ac7_fidelity() {
    const auto store = make_moons(2000, 0.05, 0);
    const auto sched = default_schedule();
    double mse = 0.0, tol_mse = 0.0;
    std::size_t within = 0;
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
        SamplerConfig g;
        g.rng_seed = seed;
        g.audit_every = 1;
        g.timing = false;
        SamplerConfig f = g;
        f.mode = SamplerMode::full_scan;
        f.audit_every = 0;
        const auto gt = sample(store, sched, g);
        const auto ft = sample(store, sched, f);
        const double dist = norm_diff(gt.x0, ft.x0);
        const double tol = propagated_tolerance(gt);
        within += dist <= tol;
        mse += dist * dist / double(store.dim());
        tol_mse += tol * tol / double(store.dim());
    }
    mse /= 64.0;
    tol_mse /= 64.0;
    return {mse <= tol_mse && mse <= kAc7MseThreshold,
            fmt("MSE(golden, full)=%.4g <= propagated tolerance %.4g and <= frozen %.3g; %zu/64 trajectories "
                "inside their own tolerance",
                mse, tol_mse, kAc7MseThreshold, within)};
}

Outcome ac8_performance(DatasetStore& mnist60k) {
    const auto t0 = Clock::now();
    const auto sched = default_schedule();
    attach_proxy(mnist60k);
    const std::size_t n = mnist60k.size(), dim = mnist60k.dim(), d = mnist60k.proxy()->dim;
    const auto p = ScheduleParams::defaults(n);
    double m_bar = 0.0;
    for (auto t : sched.ddim_steps()) m_bar += double(m_of_t(p, sched.g_at(t)));
    m_bar /= double(sched.ddim_steps().size());
    const auto flops = flop_model(n, dim, d, std::size_t(std::llround(m_bar)));

    TimingConfig tc;
    tc.warmup = 2;
    tc.repeats = 10;
    tc.seed = 8;
    const auto full = time_denoise_step(mnist60k, sched, SamplerMode::full_scan, tc);
    const auto golden = time_denoise_step(mnist60k, sched, SamplerMode::golden, tc);
    const double speedup = full.median_step_ms / golden.median_step_ms;
    const double secs = seconds_since(t0);
    return {flops.ratio() >= kMinFlopRatio && speedup >= kMinSpeedup && secs <= kAc8TimeLimitS,
            fmt("N=%zu D=%zu d=%zu m_bar=%.0f: flop ratio %.2f (>= %.0f); median step %.2f ms full vs %.2f ms "
                "golden, speedup %.2fx (>= %.0fx) on %zu thread(s); %.0f s",
                n, dim, d, m_bar, flops.ratio(), kMinFlopRatio, full.median_step_ms, golden.median_step_ms, speedup,
                kMinSpeedup, full.threads, secs)};
}

Outcome ac9_wss() {
    const auto base = make_moons(2000, 0.05, 0);
    const auto data = fixture::as_matrix(base);
    const auto sched = default_schedule();
    const NoiseLevel level = sched.level(sched.ddim_steps()[5]);
    CounterRng rng(9);
    double bias = 0.0;
    for (int probe = 0; probe < 64; ++probe) {
        const std::size_t src = rng.below(base.size());
        std::vector<double> eps(2);
        for (double& e : eps) e = rng.normal();
        const auto q = forward_noise(base.sample(src), level.alpha, eps);
        // Adversarial layout: rows sorted by distance to the query, so the
        // near neighbours fill the first batch.
        std::vector<double> qs(q);
        for (double& v : qs) v /= std::sqrt(level.alpha);
        std::vector<std::size_t> order(base.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return oracle::sq_dist(data[a], qs) < oracle::sq_dist(data[b], qs);
        });
        std::vector<std::vector<double>> rows;
        for (auto i : order) rows.push_back(data[i]);
        const auto store = fixture::points(rows);
        const auto wss = denoise_weighted_stream(store, q, level, kDefaultWssBatch).x0_hat;
        const auto full = denoise_full(store, q, level).x0_hat;
        bias += oracle::sq_dist(wss, full) / 2.0;
    }
    bias /= 64.0;

    // Trajectories: both aggregation rules run over rows sorted by x, so each
    // batch covers one horizontal slice of the moons. References are
    // full-scan runs over the original row order.
    std::vector<std::size_t> order(base.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data[a][0] < data[b][0]; });
    std::vector<std::vector<double>> rows;
    for (auto i : order) rows.push_back(data[i]);
    const auto sliced = fixture::points(rows);

    double mse_ss = 0.0, mse_wss = 0.0, mse_golden = 0.0;
    for (std::uint64_t seed = 0; seed < 32; ++seed) {
        SamplerConfig c;
        c.rng_seed = seed;
        c.timing = false;
        c.mode = SamplerMode::full_scan;
        const auto ref = sample(base, sched, c).x0;
        mse_ss += oracle::sq_dist(sample(sliced, sched, c).x0, ref) / 2.0;
        c.mode = SamplerMode::wss_ablation;
        mse_wss += oracle::sq_dist(sample(sliced, sched, c).x0, ref) / 2.0;
        c.mode = SamplerMode::golden;
        mse_golden += oracle::sq_dist(sample(base, sched, c).x0, ref) / 2.0;
    }
    mse_ss /= 32.0;
    mse_wss /= 32.0;
    mse_golden /= 32.0;
    return {bias > kWssBiasMargin && mse_ss < mse_wss,
            fmt("adversarial-layout MSE(wss, full)=%.4g (> %.3g); 32 trajectories, MSE to full-scan references: "
                "ss %.3g < wss %.4g (golden, not gated: %.4g)",
                bias, kWssBiasMargin, mse_ss, mse_wss, mse_golden)};
}

std::map<std::string, std::string> output_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return out;
}

Outcome ac10_determinism() {
    const auto root = fixture::temp_dir("acceptance_rerun");
    const auto d = fixture::data_dir();
    const std::string idx = "idx:" + (d / "mnist5k-images-idx3-ubyte").string() + ",labels:" +
                            (d / "mnist5k-labels-idx1-ubyte").string();
    const std::vector<std::vector<std::string>> commands{
        {"sample", "--n", "8", "--audit-every", "1", "--snapshots"},
        {"sample", "--n", "8", "--mode", "full"},
        {"sample", "--n", "8", "--mode", "wss", "--seed", "3"},
        {"sample", "--dataset", idx, "--class-id", "7", "--n", "3", "--snapshots"},
        {"analyze", "--moons-n", "1000", "--n", "8", "--queries", "8"},
        {"verify", "--instances", "30"},
    };
    std::size_t ok = 0, files = 0;
    std::string failed;
    for (std::size_t i = 0; i < commands.size(); ++i) {
        const auto a = root / ("run" + std::to_string(i));
        const auto b = root / ("rerun" + std::to_string(i));
        auto args = commands[i];
        args.push_back("--out");
        args.push_back(a.string());
        const int first = cli::run(args);
        const int second = cli::run({"rerun", (a / "manifest.json").string(), "--out", b.string()});
        const auto fa = output_files(a);
        if (first == 0 && second == 0 && !fa.empty() && fa == output_files(b)) {
            ++ok;
            files += fa.size();
        } else {
            failed += " " + commands[i][0];
        }
    }
    return {ok == commands.size(),
            fmt("%zu/%zu commands reproduced %zu CSV/PGM files bitwise from their manifests%s", ok, commands.size(),
                files, failed.empty() ? "" : (" (failed:" + failed + ")").c_str())};
}

} // namespace

int main() {
    std::size_t failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("AC%-2d %s  %-28s %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    };
    report(1, "bound-chain certification", ac1_bound_chain);
    report(2, "asymptotic regimes", ac2_asymptotic);
    report(3, "streaming softmax", ac3_streaming);
    report(4, "schedule endpoints", ac4_schedule);
    report(5, "progressive concentration", ac5_concentration);
    auto mnist60k = fixture::mnist_scale(fixture::data_dir());
    report(6, "subset-size sensitivity", [&] { return ac6_sensitivity(mnist60k); });
    report(7, "golden fidelity", ac7_fidelity);
    report(8, "performance", [&] { return ac8_performance(mnist60k); });
    report(9, "wss ablation", ac9_wss);
    report(10, "determinism", ac10_determinism);
    std::printf("%zu/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
