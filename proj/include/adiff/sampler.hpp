#pragma once

#include "adiff/bounds.hpp"
#include "adiff/dataset.hpp"
#include "adiff/denoiser.hpp"
#include "adiff/schedule.hpp"
#include "adiff/selection.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adiff {

enum class SamplerMode { golden, full_scan, wss_ablation };

std::string to_string(SamplerMode mode);
SamplerMode parse_sampler_mode(const std::string& name); // golden | full | wss

struct SamplerConfig {
    std::size_t n_steps = 10;
    double eta = 0.0;
    SamplerMode mode = SamplerMode::golden;
    std::optional<ScheduleParams> schedule_params; // defaults(N) when empty
    std::size_t audit_every = 0;                   // 0 = off
    AuditMode audit_mode = AuditMode::full_audit;
    std::uint64_t rng_seed = 0;
    std::size_t wss_batch = kDefaultWssBatch;
    bool record_states = true;
    bool summarize = true;
    bool timing = true;
};

// Logit extremes of one golden selection, over the candidate pool.
struct SelectionSummary {
    double min_logit_in_s = 0.0;
    double max_logit = 0.0;
    double logit_gap = 0.0; // max_logit - (k_t + 1)-th candidate logit; 0 if k_t == m_t
};

struct StepRecord {
    std::size_t t = 0;
    double alpha = 1.0;
    double sigma_sq = 0.0;
    double g = 0.0;
    std::size_t m_t = 0;
    std::size_t k_t = 0;
    std::vector<double> x_t;
    std::vector<double> x0_hat;
    std::optional<WeightsSummary> weights;
    std::optional<SelectionSummary> selection;
    std::optional<BoundDiagnostics> audit;
    double step_time_ms = 0.0;
};

struct Trajectory {
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;
    std::vector<double> x0;
};

// Deterministic DDIM (eta = 0) in the x0-prediction form; the last stride
// step returns x0_hat directly.
Trajectory sample(const DatasetStore& store, const DiffusionSchedule& schedule,
                  const SamplerConfig& config,
                  std::optional<std::span<const double>> initial_noise = std::nullopt);

// Trajectory i uses seed config.rng_seed + i.
std::vector<Trajectory> sample_batch(const DatasetStore& store, const DiffusionSchedule& schedule,
                                     const SamplerConfig& config, std::size_t count);

// Standard normal x_T for a seed; what sample() uses when no noise is given.
std::vector<double> initial_noise_for_seed(std::uint64_t seed, std::size_t dim);

struct StepStats {
    std::size_t step = 0;
    std::size_t t = 0;
    double entropy = 0.0;
    double effective_support = 0.0;
    double max_weight = 0.0;
    double top_mass = 0.0;
    std::size_t m_t = 0;
    std::size_t k_t = 0;
    double step_time_ms = 0.0;
};

std::vector<StepStats> denoise_trajectory_stats(const Trajectory& traj);

// Per-step median of effective support across trajectories.
std::vector<double> median_effective_support(std::span<const Trajectory> trajs);

// `step,entropy,eff_support,max_weight,m_t,k_t,step_time_ms`. Timing is
// written as 0 unless include_timing.
void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path,
                          bool include_timing);

// `step,sigma_sq,k,delta_k,bound,ratio_bound,actual_error,recall_ok` for
// audited steps.
void write_audit_csv(const Trajectory& traj, const std::filesystem::path& path);

// `step,g,m_t,k_t,min_logit_in_S,max_logit,logit_gap` for golden-mode steps.
void write_selection_csv(const Trajectory& traj, const std::filesystem::path& path);

// Distance by which a golden trajectory may drift from the full-scan one,
// obtained by pushing each step's certified ratio bound through the linear
// DDIM coefficients. Treats the denoiser as 1-Lipschitz in x_t, so it is a
// heuristic tolerance. Requires an audit at every step.
double propagated_tolerance(const Trajectory& golden_traj);

} // namespace adiff
