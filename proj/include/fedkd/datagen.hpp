#pragma once

// Synthetic multi-trip regression data. Each trip is a Gaussian input
// cluster; all trips share one ground-truth function, so the non-i.i.d.
// regime is pure covariate shift. Splits are 7:2:1 train/test/public
// with largest-remainder rounding, assigned per trip by seeded shuffle.

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "fedkd/federation.hpp"
#include "fedkd/matrix.hpp"
#include "fedkd/rng.hpp"

namespace fedkd {

struct TripSpec {
    int trip_id = 0;
    int input_dim = 8;
    Eigen::RowVectorXd cluster_mean;
    double cluster_stddev = 0.5;
    int n_samples = 2000;
    double noise_stddev = 0.05;
};

struct TargetFunction {
    enum class Kind { kSinProj } kind = Kind::kSinProj;
    Eigen::RowVectorXd projection;
    double scale = 1.0;

    // scale * sin(projection . x); bounded in [-scale, scale].
    double eval(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

enum class PartitionMode { kIid, kNonIid };

PartitionMode partition_mode_from_name(const std::string& name);
std::string partition_mode_name(PartitionMode mode);

enum class Split { kTrain, kTest, kPublic };

// Row-aligned columns; public rows carry no target.
struct Dataset {
    int input_dim = 0;
    std::vector<std::int64_t> ids;
    std::vector<int> trip;
    std::vector<Split> split;
    Matrix features;                     // (n x input_dim)
    std::vector<double> targets;         // 0.0 where absent
    std::vector<std::uint8_t> has_target;

    Index size() const { return features.rows(); }
    int num_trips() const;
    bool operator==(const Dataset& other) const;
};

struct DataGenConfig {
    int input_dim = 8;
    int trips = 5;
    int samples_per_trip = 2000;
    double cluster_stddev = 0.5;
    double cluster_mean_scale = 2.0;  // means are scale * e_(k mod d)
    double noise_stddev = 0.05;
    double target_scale = 1.0;
    double target_proj_stddev = 0.75;
    std::uint64_t seed = 42;
};

// inputs ~ Normal(cluster_mean, cluster_stddev^2 I), targets =
// f(x) + Normal(0, noise_stddev^2). Returns (inputs, targets as n x 1).
std::pair<Matrix, Matrix> generate_trip(const TripSpec& spec, const TargetFunction& f,
                                        SeededRng& rng);

std::vector<TripSpec> default_trip_specs(const DataGenConfig& cfg);
TargetFunction make_target_function(const DataGenConfig& cfg, SeededRng& rng);

// Distinct trips' cluster means must be >= 4 * cluster_stddev apart;
// this is what makes the divergence experiment meaningful.
void validate_trip_separation(const std::vector<TripSpec>& specs);

// 7:2:1 largest-remainder counts for n samples (train, test, public).
std::array<Index, 3> split_counts(Index n);

// Full pipeline: per-trip generation, per-trip 7:2:1 split assignment,
// globally unique ids in trip order. Deterministic from (specs, f, seed).
Dataset build_dataset(const std::vector<TripSpec>& specs, const TargetFunction& f,
                      std::uint64_t seed);
// Default pipeline with separation validation; everything derived from
// cfg.seed.
Dataset build_dataset(const DataGenConfig& cfg);

// non_iid: client k <- trip k's train rows. iid: all train rows pooled,
// shuffled, dealt round-robin. Public pool: union of public rows,
// targets dropped. Test pool: union of test rows.
FederationData partition(const Dataset& data, PartitionMode mode, int num_clients,
                         SeededRng& rng);

// Text format (one sample per line after two header lines):
//   fedkd-dataset v1 input_dim=<d> samples=<n>
//   id,trip,split,x0,...,x<d-1>,target
//   <id>,<trip>,<train|test|public>,<features...>,<target or NA>
// Values render with full round-trip precision, so save -> load is exact
// and identical inputs produce byte-identical files.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace fedkd
