#pragma once

// Round-based orchestration: broadcast, local training, aggregation
// dispatch, evaluation. Every random stream is keyed by (seed, purpose,
// round, client), never by execution order, so client updates commute
// and whole runs replay bit-identically from the config seed.

#include <cstdint>
#include <string>
#include <vector>

#include "fedkd/aggregation.hpp"
#include "fedkd/matrix.hpp"
#include "fedkd/mlp.hpp"
#include "fedkd/rng.hpp"

namespace fedkd {

struct FedConfig {
    int rounds = 100;
    int clients = 5;
    double participation_fraction = 1.0;
    int local_epochs = 5;
    int local_batch = 64;
    double local_lr = 1e-4;
    double local_weight_decay = 1e-5;
    OptimizerKind local_optimizer = OptimizerKind::kAdam;
    AggregationMethod method;
    std::uint64_t seed = 1;
    int eval_every = 1;
    std::vector<int> hidden = {64, 32, 16};
};

struct ClientState {
    int client_id = 0;
    Matrix inputs;
    Matrix targets;  // (n x 1)
};

struct FederationData {
    std::vector<ClientState> clients;
    Matrix public_inputs;  // unlabeled pool for distillation
    Matrix test_inputs;
    Matrix test_targets;
};

struct RoundMetrics {
    int round = 0;
    std::string method;
    std::uint64_t seed = 0;
    double test_rmse = 0.0;
    std::vector<double> client_train_loss;  // per sampled client, last-epoch mean
    std::vector<long> teacher_histogram;    // distillation methods only
    double wall_ms = 0.0;                   // measured; persisted CSVs zero this field
};

// Stream labels used to derive every child rng from the config seed.
namespace streams {
inline constexpr std::uint64_t kModelInit = 1;
inline constexpr std::uint64_t kClientSampling = 2;
inline constexpr std::uint64_t kClientUpdate = 3;
inline constexpr std::uint64_t kDistillBatches = 4;
inline constexpr std::uint64_t kPartition = 5;
inline constexpr std::uint64_t kGlobalData = 6;
inline constexpr std::uint64_t kValidation = 7;
}  // namespace streams

// The rng a client uses for its local epochs in a given round; depends
// only on (seed, round, client_id).
SeededRng client_round_rng(std::uint64_t seed, int round, int client_id);

struct ClientUpdateResult {
    MlpModel model;
    double train_loss = 0.0;  // mean pre-step batch loss over the final epoch
};

// Copies the global model and runs local_epochs of seeded mini-batch
// training (last partial batch kept) against the client's private
// targets. Optimizer state starts fresh each call.
ClientUpdateResult client_update(const ClientState& state, const MlpModel& global_model,
                                 const FedConfig& cfg, SeededRng rng);

// ceil(fraction * num_clients) distinct indices, uniform without
// replacement, returned sorted.
std::vector<int> sample_clients(int num_clients, double fraction, SeededRng& rng);

// RMSE of the model's scalar outputs over the full pool, single pass.
double evaluate(const MlpModel& model, const Matrix& test_inputs, const Matrix& test_targets);

struct FederationRun {
    MlpModel final_model;
    std::vector<RoundMetrics> metrics;
};

FederationRun run_federation(const FederationData& data, const FedConfig& cfg);

}  // namespace fedkd
