#include "adiff/sampler.hpp"

#include "adiff/errors.hpp"
#include "adiff/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>

namespace adiff {

std::string to_string(SamplerMode mode) {
    switch (mode) {
    case SamplerMode::golden: return "golden";
    case SamplerMode::full_scan: return "full";
    case SamplerMode::wss_ablation: return "wss";
    }
    return "unknown";
}

SamplerMode parse_sampler_mode(const std::string& name) {
    if (name == "golden") return SamplerMode::golden;
    if (name == "full" || name == "full_scan") return SamplerMode::full_scan;
    if (name == "wss" || name == "wss_ablation") return SamplerMode::wss_ablation;
    throw ArgumentError("unknown mode '" + name + "' (expected golden, full or wss)");
}

std::vector<double> initial_noise_for_seed(std::uint64_t seed, std::size_t dim) {
    CounterRng rng = CounterRng(seed).split(0);
    std::vector<double> x(dim);
    for (double& v : x) v = rng.normal();
    return x;
}

namespace {

SelectionSummary summarize_selection(const GoldenSelection& sel) {
    SelectionSummary s;
    s.min_logit_in_s = sel.min_golden_logit();
    s.max_logit = sel.max_logit();
    if (sel.k_t < sel.candidate_logits.size()) {
        std::vector<double> v(sel.candidate_logits);
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(sel.k_t), v.end(),
                         std::greater<>());
        s.logit_gap = s.max_logit - v[sel.k_t];
    }
    return s;
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace

Trajectory sample(const DatasetStore& store_in, const DiffusionSchedule& schedule,
                  const SamplerConfig& config, std::optional<std::span<const double>> initial_noise) {
    const auto& stride = schedule.ddim_steps();
    if (config.n_steps != stride.size()) {
        throw ArgumentError("n_steps does not match the schedule stride length");
    }
    if (!(config.eta >= 0.0 && config.eta <= 1.0)) throw ArgumentError("eta must lie in [0, 1]");
    const std::size_t dim = store_in.dim();
    if (initial_noise && initial_noise->size() != dim) {
        throw ArgumentError("initial noise dimension mismatch");
    }

    const std::size_t n = store_in.size();
    const ScheduleParams params = config.schedule_params.value_or(ScheduleParams::defaults(n));
    std::optional<DatasetStore> with_proxy;
    if (config.mode == SamplerMode::golden) {
        params.validate(n, schedule);
        if (!store_in.proxy()) {
            with_proxy = store_in;
            attach_proxy(*with_proxy);
        }
    }
    const DatasetStore& store = with_proxy ? *with_proxy : store_in;

    Trajectory traj;
    traj.seed = config.rng_seed;
    std::vector<double> x = initial_noise ? std::vector<double>(initial_noise->begin(), initial_noise->end())
                                          : initial_noise_for_seed(config.rng_seed, dim);
    CounterRng step_rng = CounterRng(config.rng_seed).split(1);

    DenoiseOptions opts;
    opts.summarize = config.summarize;

    for (std::size_t i = 0; i < stride.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        const std::size_t t = stride[i];
        const NoiseLevel level = schedule.level(t);
        StepRecord rec;
        rec.t = t;
        rec.alpha = level.alpha;
        rec.sigma_sq = level.sigma_sq;
        rec.g = schedule.g_at(t);

        if (!all_finite(x)) {
            throw NumericalError("non-finite state entering step " + std::to_string(i), i);
        }
        DenoiseResult res;
        switch (config.mode) {
        case SamplerMode::golden: {
            const auto sel = select_for_step(store, x, t, schedule, params);
            rec.m_t = sel.m_t;
            rec.k_t = sel.k_t;
            res = denoise_subset(store, x, sel, opts);
            rec.selection = summarize_selection(sel);
            if (config.audit_every > 0 && i % config.audit_every == 0) {
                rec.audit = certify_step(store, x, sel, config.audit_mode);
            }
            break;
        }
        case SamplerMode::full_scan:
            rec.m_t = n;
            rec.k_t = n;
            res = denoise_full(store, x, level, opts);
            break;
        case SamplerMode::wss_ablation:
            rec.m_t = n;
            rec.k_t = n;
            res = denoise_weighted_stream(store, x, level, config.wss_batch, opts);
            break;
        }
        if (!all_finite(res.x0_hat)) {
            throw NumericalError("non-finite x0 estimate at step " + std::to_string(i), i);
        }
        rec.weights = res.weights;

        std::vector<double> next;
        if (i + 1 < stride.size()) {
            const NoiseLevel nl = schedule.level(stride[i + 1]);
            const double sa = std::sqrt(level.alpha);
            const double s1a = std::sqrt(1.0 - level.alpha);
            const double sa_next = std::sqrt(nl.alpha);
            double sigma_eta = 0.0;
            if (config.eta > 0.0) {
                sigma_eta = config.eta * std::sqrt((1.0 - nl.alpha) / (1.0 - level.alpha)) *
                            std::sqrt(std::max(0.0, 1.0 - level.alpha / nl.alpha));
            }
            const double dir = std::sqrt(std::max(0.0, 1.0 - nl.alpha - sigma_eta * sigma_eta));
            next.resize(dim);
            for (std::size_t j = 0; j < dim; ++j) {
                const double eps_hat = (x[j] - sa * res.x0_hat[j]) / s1a;
                next[j] = sa_next * res.x0_hat[j] + dir * eps_hat;
                if (sigma_eta > 0.0) next[j] += sigma_eta * step_rng.normal();
            }
            if (!all_finite(next)) {
                throw NumericalError("non-finite state after step " + std::to_string(i), i);
            }
        } else {
            next = res.x0_hat;
        }

        if (config.record_states) {
            rec.x_t = x;
            rec.x0_hat = res.x0_hat;
        }
        if (config.timing) {
            rec.step_time_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        }
        traj.steps.push_back(std::move(rec));
        x = std::move(next);
    }
    traj.x0 = std::move(x);
    return traj;
}

std::vector<Trajectory> sample_batch(const DatasetStore& store, const DiffusionSchedule& schedule,
                                     const SamplerConfig& config, std::size_t count) {
    if (count == 0) throw ArgumentError("sample_batch needs count >= 1");
    std::optional<DatasetStore> with_proxy;
    if (config.mode == SamplerMode::golden && !store.proxy()) {
        with_proxy = store;
        attach_proxy(*with_proxy);
    }
    const DatasetStore& s = with_proxy ? *with_proxy : store;
    std::vector<Trajectory> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        SamplerConfig c = config;
        c.rng_seed = config.rng_seed + i;
        out.push_back(sample(s, schedule, c));
    }
    return out;
}

std::vector<StepStats> denoise_trajectory_stats(const Trajectory& traj) {
    std::vector<StepStats> out;
    out.reserve(traj.steps.size());
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        const auto& r = traj.steps[i];
        if (!r.weights) throw PreconditionError("trajectory has no weight summaries");
        out.push_back({i, r.t, r.weights->entropy, r.weights->effective_support, r.weights->max_weight,
                       r.weights->top_mass, r.m_t, r.k_t, r.step_time_ms});
    }
    return out;
}

std::vector<double> median_effective_support(std::span<const Trajectory> trajs) {
    if (trajs.empty()) return {};
    const std::size_t steps = trajs.front().steps.size();
    std::vector<double> med(steps);
    std::vector<double> col;
    for (std::size_t s = 0; s < steps; ++s) {
        col.clear();
        for (const auto& t : trajs) {
            const auto stats = denoise_trajectory_stats(t);
            col.push_back(stats.at(s).effective_support);
        }
        std::sort(col.begin(), col.end());
        const std::size_t h = col.size() / 2;
        med[s] = col.size() % 2 ? col[h] : 0.5 * (col[h - 1] + col[h]);
    }
    return med;
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path,
                          bool include_timing) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "step,entropy,eff_support,max_weight,m_t,k_t,step_time_ms\n";
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        const auto& r = traj.steps[i];
        const WeightsSummary w = r.weights.value_or(WeightsSummary{});
        out << i << ',' << w.entropy << ',' << w.effective_support << ',' << w.max_weight << ','
            << r.m_t << ',' << r.k_t << ',' << (include_timing ? r.step_time_ms : 0.0) << '\n';
    }
}

void write_audit_csv(const Trajectory& traj, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "step,sigma_sq,k,delta_k,bound,ratio_bound,actual_error,recall_ok\n";
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        const auto& r = traj.steps[i];
        if (!r.audit) continue;
        const auto& a = *r.audit;
        out << i << ',' << r.sigma_sq << ',' << a.k_used << ',' << a.logit_gap << ',' << a.bound << ','
            << a.ratio_bound << ',';
        if (a.actual_error) out << *a.actual_error;
        out << ',' << (a.recall_ok ? (*a.recall_ok ? "1" : "0") : "") << '\n';
    }
}

void write_selection_csv(const Trajectory& traj, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "step,g,m_t,k_t,min_logit_in_S,max_logit,logit_gap\n";
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        const auto& r = traj.steps[i];
        if (!r.selection) continue;
        out << i << ',' << r.g << ',' << r.m_t << ',' << r.k_t << ',' << r.selection->min_logit_in_s
            << ',' << r.selection->max_logit << ',' << r.selection->logit_gap << '\n';
    }
}

double propagated_tolerance(const Trajectory& traj) {
    if (traj.steps.empty()) return 0.0;
    double drift = 0.0; // bound on |x_t(golden) - x_t(full)|
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        const auto& r = traj.steps[i];
        if (!r.audit) throw PreconditionError("propagated_tolerance needs an audit at every step");
        const double b = r.audit->ratio_bound;
        if (i + 1 == traj.steps.size()) return drift + b;
        const auto& nx = traj.steps[i + 1];
        const double c_x = std::sqrt(1.0 - nx.alpha) / std::sqrt(1.0 - r.alpha);
        const double c_0 = std::sqrt(nx.alpha) - c_x * std::sqrt(r.alpha);
        drift = (c_x + std::abs(c_0)) * drift + std::abs(c_0) * b;
    }
    return drift;
}

} // namespace adiff
