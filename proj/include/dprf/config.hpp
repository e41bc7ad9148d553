#pragma once

#include <string>
#include <vector>

#include "dprf/encoder.hpp"
#include "dprf/retrieval.hpp"
#include "dprf/synthetic.hpp"
#include "dprf/trainer.hpp"

namespace dprf {

// Carries every violation so a bad config reports all problems at once.
struct ConfigError : std::runtime_error {
    explicit ConfigError(std::vector<std::string> problems);
    std::vector<std::string> violations;
};

// One sectioned key-value file configures the whole toolkit. The single
// [run] seed drives the synthetic generator and both training phases.
struct RunConfig {
    std::string out_dir = "out";
    std::uint64_t seed = 42;
    int threads = 1;

    SyntheticSpec synthetic;
    EncoderConfig model;  // vocab_size is derived from the built vocabulary
    std::size_t vocab_min_count = 1;
    TrainConfig baseline_train;
    TrainConfig prf_train;
    PrfConfig retrieval;
    std::vector<std::size_t> prf_ks = {0, 3};

    // Pushes seed/threads into the per-phase configs and cross-checks.
    void finalize();
};

RunConfig default_run_config();
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Canonical resolved form; its FNV-1a hash identifies every artifact the
// run produces.
std::string serialize_run_config(const RunConfig& config);
std::string config_hash(const RunConfig& config);

}  // namespace dprf
