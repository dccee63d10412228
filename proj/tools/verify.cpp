#include "verify.hpp"

#include "adiff/bounds.hpp"
#include "adiff/denoiser.hpp"
#include "adiff/errors.hpp"
#include "adiff/rng.hpp"
#include "adiff/selection.hpp"

#include <algorithm>
#include <cmath>

namespace adiff::cli {

namespace {

constexpr double kChainSlack = 1e-9;
constexpr double kStreamingTol = 1e-10;
constexpr double kMergeTol = 1e-12;
constexpr double kHighNoiseFloor = 0.99;
constexpr double kLowNoiseTail = 1e-6;
constexpr double kQueryOffset = 0.01;

std::size_t suite_id(const std::string& suite) {
    const auto it = std::find(kVerifySuites.begin(), kVerifySuites.end(), suite);
    if (it == kVerifySuites.end()) throw ArgumentError("unknown verify suite '" + suite + "'");
    return std::size_t(it - kVerifySuites.begin());
}

double norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / std::max(den, 1e-300);
}

struct Probe {
    std::size_t stride_pos = 0;
    std::size_t t = 0;
    std::size_t source = 0;
    NoiseLevel level;
    std::vector<double> query;
};

Probe noisy_probe(const DatasetStore& store, const DiffusionSchedule& schedule, CounterRng& rng,
                  std::optional<std::size_t> stride_pos = std::nullopt) {
    Probe p;
    const auto& stride = schedule.ddim_steps();
    p.stride_pos = stride_pos.value_or(rng.below(stride.size()));
    p.t = stride[p.stride_pos];
    p.level = schedule.level(p.t);
    p.source = rng.below(store.size());
    std::vector<double> eps(store.dim());
    for (double& e : eps) e = rng.normal();
    p.query = forward_noise(store.sample(p.source), p.level.alpha, eps);
    return p;
}

InstanceResult bound_chain(const DatasetStore& store, const DiffusionSchedule& schedule,
                           const VerifyConfig& cfg, CounterRng& rng) {
    InstanceResult r;
    const std::size_t n = store.size();
    const auto p = noisy_probe(store, schedule, rng);
    const std::size_t k = std::min(n, 1 + rng.below(std::max<std::size_t>(1, n / 10)));
    const auto sel = golden_select(store, p.query, p.level, coarse_screen(store, p.query, p.level, n), k);
    const auto logits = full_logits(store, p.query, p.level);
    const auto d = compute_bound_for_support(logits, sel.golden, store.radius());
    DenoiseOptions opts;
    opts.skip_renormalization = cfg.inject_fault;
    const double actual = norm_diff(denoise_full(store, p.query, p.level, opts).x0_hat,
                                    denoise_subset(store, p.query, sel, opts).x0_hat);
    r.pass = actual <= d.ratio_bound + kChainSlack && d.ratio_bound <= d.bound + kChainSlack &&
             d.recall_ok.value_or(false);
    r.details = {{"stride_pos", p.stride_pos}, {"t", p.t},           {"sigma_sq", p.level.sigma_sq},
                 {"source", p.source},         {"k", k},             {"logit_gap", d.logit_gap},
                 {"actual_error", actual},     {"ratio_bound", d.ratio_bound}, {"bound", d.bound},
                 {"recall_ok", d.recall_ok.value_or(false)}};
    return r;
}

// A query fixed in data space: a training point plus a small offset, so
// distances are distinct and do not change with the noise level.
std::vector<double> data_space_query(const DatasetStore& store, CounterRng& rng, std::size_t& source) {
    source = rng.below(store.size());
    const auto x = store.sample(source);
    std::vector<double> q(x.begin(), x.end());
    for (double& v : q) v += kQueryOffset * rng.normal();
    return q;
}

std::vector<double> as_state(const std::vector<double>& q, double alpha) {
    std::vector<double> x(q);
    for (double& v : x) v *= std::sqrt(alpha);
    return x;
}

InstanceResult asymptotic(const DatasetStore& store, const DiffusionSchedule& schedule,
                          const VerifyConfig& cfg, CounterRng& rng) {
    InstanceResult r;
    const std::size_t n = store.size();
    if (n < 2) throw PreconditionError("asymptotic suite needs N >= 2");
    const std::size_t k_half = std::max<std::size_t>(1, n / 2);
    const std::size_t k_twentieth = std::max<std::size_t>(1, n / 20);
    std::size_t source = 0;
    const auto q = data_space_query(store, rng, source);
    const auto& stride = schedule.ddim_steps();

    // Same distances at sigma^2 and 2 sigma^2: the gap halves exactly.
    const std::size_t t = stride[rng.below(stride.size())];
    const NoiseLevel level = schedule.level(t);
    const NoiseLevel doubled{level.alpha, 2.0 * level.sigma_sq};
    const auto x = as_state(q, level.alpha);
    const double gap = logit_gap(full_logits(store, x, level), k_twentieth);
    const double gap2 = logit_gap(full_logits(store, x, doubled), k_twentieth);
    const bool halving = gap2 == gap / 2.0;

    const NoiseLevel hi = schedule.level(stride.front());
    const double high_factor =
        std::exp(-logit_gap(full_logits(store, as_state(q, hi.alpha), hi), k_half));
    const NoiseLevel lo = schedule.level(stride.back());
    const auto lo_logits = full_logits(store, as_state(q, lo.alpha), lo);
    const double tail = compute_bound(lo_logits, k_twentieth, store.radius()).tail_ratio;

    r.pass = halving;
    if (cfg.regime_thresholds) {
        r.pass = r.pass && high_factor >= kHighNoiseFloor && tail <= kLowNoiseTail;
    }
    r.details = {{"source", source},
                 {"t", t},
                 {"sigma_sq", level.sigma_sq},
                 {"gap", gap},
                 {"gap_doubled_sigma_sq", gap2},
                 {"halving_exact", halving},
                 {"high_noise_exp_neg_gap", high_factor},
                 {"low_noise_tail_ratio", tail},
                 {"thresholds_applied", cfg.regime_thresholds}};
    return r;
}

// Independent two-pass reference: max, then normalized weights.
std::vector<double> two_pass_mean(const std::vector<double>& data, std::size_t dim,
                                  const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double w = std::exp(logits[i] - mx) / z;
        for (std::size_t j = 0; j < dim; ++j) out[j] += w * data[i * dim + j];
    }
    return out;
}

InstanceResult streaming(const VerifyConfig& cfg, CounterRng& rng) {
    InstanceResult r;
    const std::size_t n = 1 + rng.below(3000);
    const std::size_t dim = 1 + rng.below(64);
    std::vector<float> data(n * dim);
    for (auto& v : data) v = static_cast<float>(2.0 * rng.uniform() - 1.0);
    const std::vector<double> data_d(data.begin(), data.end());
    const DatasetStore store(std::move(data), dim);
    const NoiseLevel level = NoiseLevel::from_sigma_sq(std::exp(-5.0 + 7.0 * rng.uniform()));
    std::vector<double> q(dim);
    for (double& v : q) v = rng.normal();

    DenoiseOptions opts;
    opts.skip_renormalization = cfg.inject_fault;
    opts.keep_logits = true;
    const auto res = denoise_full(store, q, level, opts);
    const double stream_err = rel_diff(res.x0_hat, two_pass_mean(data_d, dim, res.logits));

    const std::size_t c1 = rng.below(n + 1);
    const std::size_t c2 = c1 + rng.below(n - c1 + 1);
    SoftmaxAccumulator a(dim), b(dim), c(dim), whole(dim);
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const float> row(store.sample(i));
        (i < c1 ? a : i < c2 ? b : c).add(res.logits[i], row);
        whole.add(res.logits[i], row);
    }
    const auto left = merge_accumulators(merge_accumulators(a, b), c).finalize();
    const auto right = merge_accumulators(a, merge_accumulators(b, c)).finalize();
    const double merge_err = std::max(rel_diff(left, right), rel_diff(left, whole.finalize()));

    r.pass = stream_err <= kStreamingTol && merge_err <= kMergeTol;
    r.details = {{"n", n},           {"dim", dim},
                 {"sigma_sq", level.sigma_sq}, {"split", {c1, c2}},
                 {"streaming_rel_error", stream_err}, {"merge_rel_error", merge_err}};
    return r;
}

} // namespace

InstanceResult run_instance(const DatasetStore& store, const DiffusionSchedule& schedule,
                            const VerifyConfig& config, const std::string& suite,
                            std::size_t instance) {
    CounterRng rng = CounterRng(config.seed).split(suite_id(suite)).split(instance);
    InstanceResult r;
    if (suite == "bound_chain") {
        r = bound_chain(store, schedule, config, rng);
    } else if (suite == "asymptotic") {
        r = asymptotic(store, schedule, config, rng);
    } else {
        r = streaming(config, rng);
    }
    r.suite = suite;
    r.instance = instance;
    return r;
}

std::vector<SuiteSummary> run_verify(const DatasetStore& store, const DiffusionSchedule& schedule,
                                     const VerifyConfig& config) {
    std::vector<SuiteSummary> out;
    for (const auto& suite : kVerifySuites) {
        if (config.suite && *config.suite != suite) continue;
        SuiteSummary s;
        s.suite = suite;
        for (std::size_t i = 0; i < config.instances; ++i) {
            if (config.instance && *config.instance != i) continue;
            auto r = run_instance(store, schedule, config, suite, i);
            ++s.run;
            if (!r.pass) {
                ++s.failed;
                if (!s.first_failure) s.first_failure = std::move(r);
            }
        }
        out.push_back(std::move(s));
    }
    if (config.suite) suite_id(*config.suite);
    return out;
}

} // namespace adiff::cli
