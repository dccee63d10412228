#include "adiff/schedule.hpp"

#include "adiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace adiff {

DiffusionSchedule DiffusionSchedule::linear_beta(std::size_t T, double beta_min, double beta_max,
                                                 std::size_t n_sample_steps) {
    if (n_sample_steps < 1 || T < n_sample_steps) {
        throw ArgumentError("need T >= n_sample_steps >= 1");
    }
    if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
        throw ArgumentError("need 0 < beta_min <= beta_max < 1");
    }
    DiffusionSchedule s;
    s.alphas_.resize(T);
    s.sigmas_sq_.resize(T);
    double prod = 1.0;
    for (std::size_t t = 0; t < T; ++t) {
        const double beta =
            T == 1 ? beta_min : beta_min + (beta_max - beta_min) * double(t) / double(T - 1);
        prod *= 1.0 - beta;
        s.alphas_[t] = prod;
        s.sigmas_sq_[t] = (1.0 - prod) / prod;
    }
    for (std::size_t t = 1; t < T; ++t) {
        if (!(s.alphas_[t] < s.alphas_[t - 1])) {
            throw ArgumentError("alpha underflowed; schedule is not strictly decreasing");
        }
    }

    if (n_sample_steps == 1) {
        s.ddim_steps_.push_back(T - 1);
    } else {
        for (std::size_t i = 0; i < n_sample_steps; ++i) {
            const double pos = double(T - 1) * double(n_sample_steps - 1 - i) /
                               double(n_sample_steps - 1);
            s.ddim_steps_.push_back(static_cast<std::size_t>(std::llround(pos)));
        }
    }
    s.sigma_lo_ = std::numeric_limits<double>::infinity();
    s.sigma_hi_ = 0.0;
    for (auto t : s.ddim_steps_) {
        const double sigma = std::sqrt(s.sigmas_sq_[t]);
        s.sigma_lo_ = std::min(s.sigma_lo_, sigma);
        s.sigma_hi_ = std::max(s.sigma_hi_, sigma);
    }
    return s;
}

double DiffusionSchedule::g_of_sigma(double sigma) const {
    if (!(sigma > 0.0)) throw ArgumentError("g_of_sigma needs sigma > 0");
    if (degenerate_stride()) return 0.0;
    if (sigma <= sigma_lo_) return 0.0;
    if (sigma >= sigma_hi_) return 1.0;
    const double g = (std::log(sigma) - std::log(sigma_lo_)) /
                     (std::log(sigma_hi_) - std::log(sigma_lo_));
    return std::clamp(g, 0.0, 1.0);
}

double DiffusionSchedule::g_at(std::size_t t) const { return g_of_sigma(std::sqrt(sigma_sq(t))); }

void DiffusionSchedule::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "t,alpha,sigma_sq,g\n";
    for (std::size_t t = 0; t < alphas_.size(); ++t) {
        out << t << ',' << alphas_[t] << ',' << sigmas_sq_[t] << ',' << g_at(t) << '\n';
    }
}

std::vector<double> forward_noise(std::span<const float> x0, double alpha,
                                  std::span<const double> eps) {
    if (x0.size() != eps.size()) throw ArgumentError("forward_noise dimension mismatch");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in (0, 1]");
    const double a = std::sqrt(alpha);
    const double b = std::sqrt(1.0 - alpha);
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * double(x0[i]) + b * eps[i];
    return out;
}

std::vector<double> forward_noise(std::span<const float> x0, std::size_t t,
                                  std::span<const double> eps, const DiffusionSchedule& schedule) {
    if (t >= schedule.num_timesteps()) throw ArgumentError("timestep out of range");
    return forward_noise(x0, schedule.alpha(t), eps);
}

} // namespace adiff
