#include "doctest.h"

#include "adiff/errors.hpp"
#include "adiff/rng.hpp"
#include "adiff/schedule.hpp"
#include "support/fixtures.hpp"

#include <cmath>
#include <fstream>

using namespace adiff;

TEST_CASE("single-step schedule") {
    const auto s = DiffusionSchedule::linear_beta(1, 0.1, 0.1, 1);
    CHECK(s.alpha(0) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.sigma_sq(0) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    CHECK(s.ddim_steps() == std::vector<std::size_t>{0});
    CHECK(s.degenerate_stride());
    CHECK(s.g_of_sigma(0.3) == 0.0);
}

TEST_CASE("default linear schedule: stride, monotonicity, endpoints") {
    const auto s = DiffusionSchedule::linear_beta(1000, 1e-4, 0.02, 10);
    const auto& steps = s.ddim_steps();
    REQUIRE(steps.size() == 10);
    CHECK(steps.front() == 999);
    CHECK(steps.back() == 0);
    for (std::size_t i = 1; i < steps.size(); ++i) CHECK(steps[i] < steps[i - 1]);
    for (std::size_t t = 1; t < 1000; ++t) {
        CHECK(s.alpha(t) < s.alpha(t - 1));
        CHECK(s.sigma_sq(t) > s.sigma_sq(t - 1));
    }
    // Independent log-space product.
    double log_alpha = 0.0;
    for (int t = 0; t < 1000; ++t) log_alpha += std::log1p(-(1e-4 + (0.02 - 1e-4) * t / 999.0));
    CHECK(s.alpha(999) == doctest::Approx(std::exp(log_alpha)).epsilon(1e-10));
    CHECK(s.alpha(0) == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
    for (std::size_t t = 0; t < 1000; ++t) {
        CHECK(s.sigma_sq(t) == doctest::Approx((1.0 - s.alpha(t)) / s.alpha(t)).epsilon(1e-15));
    }
}

TEST_CASE("schedule argument validation") {
    CHECK_THROWS_AS(DiffusionSchedule::linear_beta(5, 1e-4, 0.02, 6), ArgumentError);
    CHECK_THROWS_AS(DiffusionSchedule::linear_beta(5, 1e-4, 0.02, 0), ArgumentError);
    CHECK_THROWS_AS(DiffusionSchedule::linear_beta(5, 0.0, 0.02, 2), ArgumentError);
    CHECK_THROWS_AS(DiffusionSchedule::linear_beta(5, 0.03, 0.02, 2), ArgumentError);
    CHECK_THROWS_AS(DiffusionSchedule::linear_beta(5, 0.01, 1.0, 2), ArgumentError);
}

TEST_CASE("g_of_sigma endpoints, log-midpoint and monotonicity") {
    const auto s = DiffusionSchedule::linear_beta(1000, 1e-4, 0.02, 10);
    const double lo = s.sigma_lo(), hi = s.sigma_hi();
    CHECK(lo == doctest::Approx(std::sqrt(s.sigma_sq(0))));
    CHECK(hi == doctest::Approx(std::sqrt(s.sigma_sq(999))));
    CHECK(s.g_of_sigma(hi) == 1.0);
    CHECK(s.g_of_sigma(lo) == 0.0);
    CHECK(s.g_of_sigma(std::sqrt(lo * hi)) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.g_of_sigma(hi * 10) == 1.0);
    CHECK(s.g_of_sigma(lo / 10) == 0.0);
    CHECK(s.g_at(999) == 1.0);
    CHECK(s.g_at(0) == 0.0);
    CHECK_THROWS_AS(s.g_of_sigma(0.0), ArgumentError);

    CounterRng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double a = std::exp(std::log(lo / 2) + rng.uniform() * std::log(4 * hi / lo));
        const double b = std::exp(std::log(lo / 2) + rng.uniform() * std::log(4 * hi / lo));
        const double g_a = s.g_of_sigma(a), g_b = s.g_of_sigma(b);
        CHECK(g_a >= 0.0);
        CHECK(g_a <= 1.0);
        if (a <= b) {
            CHECK(g_a <= g_b);
        } else {
            CHECK(g_b <= g_a);
        }
    }
}

TEST_CASE("forward_noise") {
    const std::vector<float> x0{1.0f, -2.0f, 0.5f};
    const std::vector<double> zero(3, 0.0);
    const auto a = forward_noise(x0, 0.64, zero);
    CHECK(a[0] == doctest::Approx(0.8));
    CHECK(a[1] == doctest::Approx(-1.6));
    const std::vector<double> e{0.3, -0.7, 2.0};
    const auto b = forward_noise(x0, 1.0, e);
    for (int j = 0; j < 3; ++j) CHECK(b[j] == double(x0[j]));
    const std::vector<float> zeros(3, 0.0f);
    const auto c = forward_noise(zeros, 0.5, e);
    for (int j = 0; j < 3; ++j) CHECK(c[j] == doctest::Approx(e[j] / std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(forward_noise(x0, 0.5, std::vector<double>(2)), ArgumentError);

    const auto s = DiffusionSchedule::linear_beta(1000, 1e-4, 0.02, 10);
    CHECK_THROWS_AS(forward_noise(x0, 1000, e, s), ArgumentError);
}

TEST_CASE("forward_noise variance matches 1 - alpha") {
    const auto s = DiffusionSchedule::linear_beta(1000, 1e-4, 0.02, 10);
    const std::size_t t = 300;
    const double target = 1.0 - s.alpha(t);
    const std::size_t draws = 100000, dim = 4;
    const std::vector<float> x0(dim, 0.0f);
    CounterRng rng(17);
    std::vector<double> sum(dim, 0.0), sum2(dim, 0.0);
    for (std::size_t k = 0; k < draws; ++k) {
        const auto eps = fixture::normal_vector(dim, rng);
        const auto x = forward_noise(x0, t, eps, s);
        for (std::size_t j = 0; j < dim; ++j) {
            sum[j] += x[j];
            sum2[j] += x[j] * x[j];
        }
    }
    const double sd_of_var = target * std::sqrt(2.0 / double(draws - 1));
    for (std::size_t j = 0; j < dim; ++j) {
        const double mean = sum[j] / draws;
        const double var = (sum2[j] - draws * mean * mean) / double(draws - 1);
        CHECK(std::abs(var - target) <= 3.0 * sd_of_var);
    }
}

TEST_CASE("schedule CSV dump") {
    const auto dir = fixture::temp_dir("schedule_csv");
    const auto s = DiffusionSchedule::linear_beta(20, 1e-3, 0.05, 4);
    s.write_csv(dir / "s.csv");
    std::ifstream in(dir / "s.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,alpha,sigma_sq,g");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 20);
}
