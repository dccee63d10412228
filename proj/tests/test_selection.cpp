#include "doctest.h"

#include "adiff/errors.hpp"
#include "adiff/selection.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <set>

using namespace adiff;

TEST_CASE("default schedule parameters") {
    const auto p = ScheduleParams::defaults(1000);
    CHECK(p.m_min == 100);
    CHECK(p.k_max == 100);
    CHECK(p.m_max == 250);
    CHECK(p.k_min == 50);
    const auto tiny = ScheduleParams::defaults(5);
    CHECK(tiny.k_min == 1);
    CHECK_NOTHROW(tiny.validate(5));
}

TEST_CASE("m_of_t and k_of_t endpoints and arithmetic") {
    const ScheduleParams p{100, 250, 50, 100};
    CHECK(m_of_t(p, 1.0) == p.m_min);
    CHECK(m_of_t(p, 0.0) == p.m_max);
    CHECK(k_of_t(p, 0.0) == p.k_min);
    CHECK(k_of_t(p, 1.0) == p.k_max);
    CHECK(m_of_t(p, 0.5) == 175);
    CHECK(k_of_t(p, 0.3) == 65);
}

TEST_CASE("counter-monotonic schedules") {
    CounterRng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 20 + rng.below(100000);
        const auto p = ScheduleParams::defaults(n);
        double a = rng.uniform(), b = rng.uniform();
        if (a > b) std::swap(a, b);
        CHECK(m_of_t(p, a) >= m_of_t(p, b));
        CHECK(k_of_t(p, a) <= k_of_t(p, b));
        CHECK(k_of_t(p, a) <= m_of_t(p, a));
    }
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS((ScheduleParams{10, 5, 1, 2}.validate(100)), ArgumentError);
    CHECK_THROWS_AS((ScheduleParams{10, 20, 0, 2}.validate(100)), ArgumentError);
    CHECK_THROWS_AS((ScheduleParams{10, 200, 1, 2}.validate(100)), ArgumentError);
    const auto s = DiffusionSchedule::linear_beta(1000, 1e-4, 0.02, 10);
    CHECK_THROWS_AS((ScheduleParams{10, 100, 5, 50}.validate(1000, s)), ArgumentError);
    CHECK_NOTHROW(ScheduleParams::defaults(1000).validate(1000, s));
}

TEST_CASE("build_proxy pooling") {
    SUBCASE("constant 4x4 image pools to one value") {
        DatasetStore s(std::vector<float>(2 * 4 * 4 * 5, 1.0f), 80, {}, ImageShape{5, 4, 4});
        const auto cache = build_proxy(s, 4);
        CHECK(cache->dim == 5);
        for (float v : cache->values) CHECK(v == 1.0f);
    }
    SUBCASE("low-dimensional data uses the identity") {
        const auto moons = make_moons(50, 0.1, 1);
        const auto cache = build_proxy(moons, 4);
        CHECK(cache->factor == 1);
        CHECK(cache->values == moons.flattened());
    }
    SUBCASE("28x28 pooling matches a naive block loop") {
        const auto store = load_idx(fixture::data_dir() / "mnist5k-images-idx3-ubyte");
        const auto cache = build_proxy(store, 4);
        CHECK(cache->dim == 49);
        CHECK_FALSE(cache->truncated_blocks);
        for (std::size_t i : {0u, 17u, 4999u}) {
            const auto x = store.sample(i);
            const auto ref = oracle::pool({x.begin(), x.end()}, 28, 28, 4);
            for (std::size_t j = 0; j < 49; ++j) {
                CHECK(cache->values[i * 49 + j] == doctest::Approx(ref[j]).epsilon(1e-6));
            }
        }
    }
    SUBCASE("non-dividing factor truncates trailing blocks") {
        CounterRng rng(2);
        std::vector<float> data(30 * 30);
        for (auto& v : data) v = float(rng.uniform());
        DatasetStore s(data, 900, {}, ImageShape{1, 30, 30});
        const auto cache = build_proxy(s, 4);
        CHECK(cache->truncated_blocks);
        CHECK(cache->dim == 64);
        const auto ref = oracle::pool({data.begin(), data.end()}, 30, 30, 4);
        for (std::size_t j = 0; j < 64; ++j) CHECK(cache->values[j] == doctest::Approx(ref[j]).epsilon(1e-6));
    }
    SUBCASE("high-dimensional data without a shape is rejected") {
        const auto s = fixture::random_store(4, 100, 1);
        CHECK_THROWS_AS(build_proxy(s, 4), PreconditionError);
    }
}

TEST_CASE("coarse_screen") {
    auto store = fixture::random_store(10, 2, 8);
    attach_proxy(store);
    const NoiseLevel level = NoiseLevel::from_alpha(0.7);
    CounterRng rng(4);

    SUBCASE("m = N returns every index") {
        const auto c = coarse_screen(store, fixture::normal_vector(2, rng), level, 10);
        CHECK(c.indices.size() == 10);
        CHECK_FALSE(c.m_clamped);
    }
    SUBCASE("m > N is clamped") {
        const auto c = coarse_screen(store, fixture::normal_vector(2, rng), level, 50);
        CHECK(c.indices.size() == 10);
        CHECK(c.m_clamped);
    }
    SUBCASE("brute-force agreement on random queries") {
        const auto data = fixture::as_matrix(store);
        for (int trial = 0; trial < 50; ++trial) {
            const auto q = fixture::normal_vector(2, rng);
            std::vector<double> qs{q[0] / std::sqrt(level.alpha), q[1] / std::sqrt(level.alpha)};
            std::vector<double> d;
            for (const auto& x : data) d.push_back(oracle::sq_dist(qs, x));
            const auto c = coarse_screen(store, q, level, 3);
            CHECK(c.indices == oracle::bottom_k(d, 3));
        }
    }
    SUBCASE("a training sample at low noise screens itself in") {
        const NoiseLevel low = NoiseLevel::from_sigma_sq(1e-8);
        for (std::size_t j = 0; j < store.size(); ++j) {
            std::vector<double> q{std::sqrt(low.alpha) * store.sample(j)[0], std::sqrt(low.alpha) * store.sample(j)[1]};
            const auto c = coarse_screen(store, q, low, 1);
            CHECK(c.indices == std::vector<std::size_t>{j});
        }
    }
    SUBCASE("ties go to the lower index") {
        auto dup = fixture::points({{1, 1}, {0, 0}, {1, 1}, {0, 0}, {1, 1}});
        attach_proxy(dup);
        const auto c = coarse_screen(dup, std::vector<double>{1, 1}, NoiseLevel{1.0, 1.0}, 2);
        CHECK(c.indices == std::vector<std::size_t>{0, 2});
    }
    SUBCASE("missing proxy") {
        const auto bare = fixture::random_store(5, 2, 1);
        CHECK_THROWS_AS(coarse_screen(bare, std::vector<double>{0, 0}, level, 2), PreconditionError);
    }
}

TEST_CASE("golden_select small fixtures") {
    auto store = fixture::points({{-1.0}, {1.0}, {3.0}});
    attach_proxy(store);
    const NoiseLevel level{0.5, 1.0};
    const std::vector<double> q{0.0};
    const auto all = coarse_screen(store, q, level, 3);
    const auto sel = golden_select(store, q, level, all, 2);
    CHECK(sel.golden == std::vector<std::size_t>{0, 1});
    REQUIRE(sel.candidate_logits.size() == 3);
    CHECK(sel.candidate_logits[0] == -0.5);
    CHECK(sel.candidate_logits[1] == -0.5);
    CHECK(sel.candidate_logits[2] == -4.5);

    CandidateSet single{{2}, {0.0}, false};
    const auto one = golden_select(store, q, level, single, 1);
    CHECK(one.golden == std::vector<std::size_t>{2});

    const auto clamped = golden_select(store, q, level, single, 3);
    CHECK(clamped.k_clamped);
    CHECK(clamped.golden.size() == 1);
}

TEST_CASE("golden_select equals brute-force top-k") {
    CounterRng rng(21);
    for (std::size_t n : {37u, 1000u, 10000u}) {
        auto store = fixture::random_store(n, 8, n);
        attach_proxy(store);
        const auto data = fixture::as_matrix(store);
        for (int trial = 0; trial < 5; ++trial) {
            const NoiseLevel level = NoiseLevel::from_sigma_sq(0.01 + rng.uniform());
            const auto q = fixture::normal_vector(8, rng, 0.7);
            const std::size_t m = 1 + rng.below(n);
            const std::size_t k = 1 + rng.below(m);
            const auto cand = coarse_screen(store, q, level, m);
            const auto sel = golden_select(store, q, level, cand, k);
            const auto ref_logits = oracle::logits(data, q, level.alpha, level.sigma_sq);
            std::vector<double> sub;
            for (auto i : sel.candidates) sub.push_back(ref_logits[i]);
            std::vector<std::size_t> expect;
            for (auto j : oracle::top_k_desc(sub, k)) expect.push_back(sel.candidates[j]);
            CHECK(sel.golden == expect);
            std::set<std::size_t> cset(sel.candidates.begin(), sel.candidates.end());
            CHECK(cset.size() == m);
            for (auto g : sel.golden) CHECK(cset.count(g) == 1);
        }
    }
}

TEST_CASE("golden_select on image data matches brute force") {
    auto store = load_idx(fixture::data_dir() / "mnist5k-images-idx3-ubyte");
    attach_proxy(store);
    const auto data = fixture::as_matrix(store);
    const auto s = DiffusionSchedule::linear_beta(1000, 1e-4, 0.02, 10);
    const auto params = ScheduleParams::defaults(store.size());
    CounterRng rng(5);
    for (std::size_t t : s.ddim_steps()) {
        const auto x0 = store.sample(rng.below(store.size()));
        const auto q = forward_noise(x0, t, fixture::normal_vector(784, rng), s);
        const auto sel = select_for_step(store, q, t, s, params);
        CHECK(sel.m_t == m_of_t(params, s.g_at(t)));
        const auto ref = oracle::logits(data, q, s.alpha(t), s.sigma_sq(t));
        std::vector<double> sub;
        for (auto i : sel.candidates) sub.push_back(ref[i]);
        std::vector<std::size_t> expect;
        for (auto j : oracle::top_k_desc(sub, sel.k_t)) expect.push_back(sel.candidates[j]);
        CHECK(sel.golden == expect);
    }
}

TEST_CASE("recall at low noise and determinism") {
    auto store = make_moons(2000, 0.05, 1);
    attach_proxy(store);
    const auto s = DiffusionSchedule::linear_beta(1000, 1e-4, 0.02, 10);
    const auto params = ScheduleParams::defaults(store.size());
    const std::size_t t0 = s.ddim_steps().back();
    CHECK(s.g_at(t0) == 0.0);
    for (std::size_t j = 0; j < store.size(); j += 97) {
        const auto x = store.sample(j);
        std::vector<double> q{std::sqrt(s.alpha(t0)) * x[0], std::sqrt(s.alpha(t0)) * x[1]};
        const auto sel = select_for_step(store, q, t0, s, params);
        CHECK(std::binary_search(sel.golden.begin(), sel.golden.end(), j));
        const auto again = select_for_step(store, q, t0, s, params);
        CHECK(again.golden == sel.golden);
        CHECK(again.candidates == sel.candidates);
    }
}

TEST_CASE("top-m merge is associative, commutative and equals the union's top-m") {
    CounterRng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        Ranked all;
        const std::size_t n = 1 + rng.below(60);
        for (std::size_t i = 0; i < n; ++i) all.push_back({double(rng.below(10)), i});
        const std::size_t m = 1 + rng.below(20);
        const std::size_t c1 = rng.below(n + 1), c2 = c1 + rng.below(n - c1 + 1);
        const Ranked a = top_m_smallest(Ranked(all.begin(), all.begin() + c1), m);
        const Ranked b = top_m_smallest(Ranked(all.begin() + c1, all.begin() + c2), m);
        const Ranked c = top_m_smallest(Ranked(all.begin() + c2, all.end()), m);
        const Ranked expect = top_m_smallest(all, m);
        CHECK(merge_top_m(merge_top_m(a, b, m), c, m) == expect);
        CHECK(merge_top_m(a, merge_top_m(b, c, m), m) == expect);
        CHECK(merge_top_m(a, b, m) == merge_top_m(b, a, m));
    }
}
