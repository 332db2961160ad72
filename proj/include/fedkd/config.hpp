#pragma once

// Flat key=value experiment configuration. Every key has a default,
// unknown keys are rejected, and the fully-resolved config renders back
// to text so each output directory carries an exact re-run recipe.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedkd/aggregation.hpp"
#include "fedkd/datagen.hpp"
#include "fedkd/federation.hpp"

namespace fedkd {

struct ExperimentConfig {
    DataGenConfig data;  // data.seed drives generation and the validation experiment

    std::vector<int> hidden = {64, 32, 16};

    int rounds = 100;
    int clients = 5;
    double participation_fraction = 1.0;
    int local_epochs = 5;
    int local_batch = 64;
    double local_lr = 1e-4;
    double local_weight_decay = 1e-5;
    OptimizerKind local_optimizer = OptimizerKind::kAdam;
    int eval_every = 1;
    std::uint64_t fed_seed = 1;

    AggregationMethod method;

    std::vector<std::uint64_t> compare_seeds = {1, 2, 3, 4, 5};
    std::vector<PartitionMode> compare_modes = {PartitionMode::kIid, PartitionMode::kNonIid};

    int validate_epochs = 30;
    double validate_private_fraction = 0.9;

    // Protocol config for one federation run with the given method and
    // seed; everything else comes from this config.
    FedConfig fed_config(AggKind kind, std::uint64_t seed) const;
};

// Parses key=value lines ('#' starts a comment). Throws ConfigError on
// unknown or duplicate keys and on malformed values.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Every key, current values, stable order; reusable as an input config.
std::string render_config(const ExperimentConfig& cfg);

}  // namespace fedkd
