#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace adiff {

// Signal coefficient and noise-to-signal ratio at one noise level.
// sigma_sq is kept separately so callers can probe arbitrary levels.
struct NoiseLevel {
    double alpha = 1.0;
    double sigma_sq = 0.0;

    static NoiseLevel from_alpha(double alpha) { return {alpha, (1.0 - alpha) / alpha}; }
    static NoiseLevel from_sigma_sq(double sigma_sq) { return {1.0 / (1.0 + sigma_sq), sigma_sq}; }
};

// ---------------------------------------------------------------------------
// DiffusionSchedule: linear-beta forward process with a strided DDIM grid.
//
// Timesteps are 0-based: alphas[t] = prod_{s <= t} (1 - beta_s). The sampling
// stride runs from high noise to t = 0. g(sigma) interpolates log sigma
// between the smallest and largest sigma on the stride.
// ---------------------------------------------------------------------------
class DiffusionSchedule {
public:
    static DiffusionSchedule linear_beta(std::size_t T, double beta_min, double beta_max,
                                         std::size_t n_sample_steps);

    std::size_t num_timesteps() const { return alphas_.size(); }
    double alpha(std::size_t t) const { return alphas_.at(t); }
    double sigma_sq(std::size_t t) const { return sigmas_sq_.at(t); }
    NoiseLevel level(std::size_t t) const { return {alpha(t), sigma_sq(t)}; }

    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& sigmas_sq() const { return sigmas_sq_; }
    const std::vector<std::size_t>& ddim_steps() const { return ddim_steps_; }

    double sigma_lo() const { return sigma_lo_; }
    double sigma_hi() const { return sigma_hi_; }
    // True when the stride has a single noise level; g is then 0 everywhere.
    bool degenerate_stride() const { return sigma_lo_ == sigma_hi_; }

    double g_of_sigma(double sigma) const;
    double g_at(std::size_t t) const;

    // `t,alpha,sigma_sq,g` over the full timestep grid.
    void write_csv(const std::filesystem::path& path) const;

private:
    std::vector<double> alphas_;
    std::vector<double> sigmas_sq_;
    std::vector<std::size_t> ddim_steps_;
    double sigma_lo_ = 0.0;
    double sigma_hi_ = 0.0;
};

// sqrt(alpha) * x0 + sqrt(1 - alpha) * eps
std::vector<double> forward_noise(std::span<const float> x0, double alpha,
                                  std::span<const double> eps);
std::vector<double> forward_noise(std::span<const float> x0, std::size_t t,
                                  std::span<const double> eps, const DiffusionSchedule& schedule);

} // namespace adiff
