#pragma once

// The experiment commands behind the CLI: dataset generation, the
// divergence-validation experiment (loss/entropy grids and the two
// hypotheses), the three-method comparison, and learning-curve
// extraction. Every command echoes the fully-resolved config into its
// output directory and writes files atomically.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fedkd/config.hpp"
#include "fedkd/datagen.hpp"

namespace fedkd {

struct GenDataResult {
    std::filesystem::path dataset_path;
    std::filesystem::path manifest_path;
    Dataset dataset;
};

GenDataResult cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct ValidateEntropyResult {
    // (model i, public j) grids, trips x trips
    Matrix loss;
    Matrix entropy_normalized;
    Matrix entropy_raw;
    Matrix excluded_normalized;  // +inf rows dropped from each cell's mean
    Matrix excluded_raw;
    std::vector<int> loss_argmin;     // per public column
    std::vector<int> entropy_argmin;  // per public column, normalized mode
    int hypothesis1_columns = 0;      // columns where the diagonal is minimal
    int hypothesis2_columns = 0;      // columns where entropy argmin == loss argmin
};

ValidateEntropyResult cmd_validate_entropy(const Dataset& data, const ExperimentConfig& cfg,
                                           const std::filesystem::path& out_dir);

struct MethodSummary {
    double mean_final_rmse = 0.0;
    double min_final_rmse = 0.0;
    double max_final_rmse = 0.0;
};

struct CompareResult {
    // mode name -> method name -> final-round summary over seeds
    std::map<std::string, std::map<std::string, MethodSummary>> summary;
    std::map<std::string, std::filesystem::path> metrics_paths;  // per mode
};

CompareResult cmd_compare(const Dataset& data, const ExperimentConfig& cfg,
                          const std::filesystem::path& out_dir);

// One curve file per method found in the metrics CSV:
// round,mean_test_rmse,min_test_rmse,max_test_rmse over seeds.
std::vector<std::filesystem::path> cmd_plotdata(const std::filesystem::path& metrics_csv,
                                                const std::filesystem::path& out_dir);

}  // namespace fedkd
