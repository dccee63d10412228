#pragma once

#include "adiff/dataset.hpp"
#include "adiff/schedule.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace adiff::cli {

inline const std::vector<std::string> kVerifySuites{"bound_chain", "asymptotic", "streaming"};

struct VerifyConfig {
    std::uint64_t seed = 0;
    std::size_t instances = 100;
    bool inject_fault = false; // skip softmax renormalization in the denoiser
    bool regime_thresholds = true;
    std::optional<std::string> suite;
    std::optional<std::size_t> instance;
};

struct InstanceResult {
    std::string suite;
    std::size_t instance = 0;
    bool pass = true;
    nlohmann::ordered_json details;
};

struct SuiteSummary {
    std::string suite;
    std::size_t run = 0;
    std::size_t failed = 0;
    std::optional<InstanceResult> first_failure;
};

// Instance i of a suite draws everything from stream (suite, i) of the seed,
// so any single instance can be replayed on its own. The store must carry a
// proxy cache.
InstanceResult run_instance(const DatasetStore& store, const DiffusionSchedule& schedule,
                            const VerifyConfig& config, const std::string& suite,
                            std::size_t instance);

std::vector<SuiteSummary> run_verify(const DatasetStore& store, const DiffusionSchedule& schedule,
                                     const VerifyConfig& config);

} // namespace adiff::cli
