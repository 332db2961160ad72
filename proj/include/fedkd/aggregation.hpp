#pragma once

// Server-side aggregation: parameter averaging (fedavg), mean-teacher
// distillation (feddf), and confidence-based distillation that picks the
// lowest-entropy teacher per sample. Both distillation variants start
// from the uniform parameter average and take one sgd step per public
// batch on the RMSE between the student's and the teachers' penultimate
// activations; the final layer keeps its averaged weights.

#include <span>
#include <string>
#include <vector>

#include "fedkd/confidence.hpp"
#include "fedkd/matrix.hpp"
#include "fedkd/mlp.hpp"
#include "fedkd/rng.hpp"

namespace fedkd {

enum class AggKind { kFedAvg, kFedDf, kConfidenceDistill };

std::string agg_kind_name(AggKind kind);
AggKind agg_kind_from_name(const std::string& name);

struct AggregationMethod {
    AggKind kind = AggKind::kConfidenceDistill;
    int distill_steps = 0;  // 0 = one full pass over the public pool
    double distill_lr = 0.05;
    int distill_batch = 64;
    EntropyMode entropy_mode;
};

struct DistillReport {
    std::vector<double> step_losses;      // post-step loss per distillation step
    std::vector<long> teacher_histogram;  // per client, confidence distillation only
};

// Weighted parameter average; weights must be nonnegative and sum to 1
// within 1e-9. All models must share identical specs.
MlpModel fedavg_average(std::span<const MlpModel> models, std::span<const double> weights);
MlpModel fedavg_average(std::span<const MlpModel> models);  // uniform 1/K

// One sgd step on the student minimizing
// rmse_loss(penultimate(student, batch), teacher_targets). Teachers are
// constants; only the student moves. Returns the post-step loss.
double distill_step(MlpModel& student, const Matrix& teacher_targets, const Matrix& batch,
                    double lr);

// Batches for one round of distillation: a seeded shuffle of the public
// pool consumed cyclically, so every batch has exactly batch_size rows.
// steps == 0 selects ceil(pool / batch_size), one full pass.
std::vector<Matrix> draw_public_batches(const Matrix& public_inputs, int batch_size, int steps,
                                        SeededRng& rng);

struct AggregationResult {
    MlpModel model;
    DistillReport report;
};

// Teacher target per step: uniform mean of the client penultimates.
AggregationResult feddf_aggregate(std::span<const MlpModel> local_models,
                                  std::span<const Matrix> public_batches,
                                  const AggregationMethod& method);

// Teacher target per step: per-sample penultimate of the lowest-entropy
// client (Eq. driven selection via select_teachers/assemble_targets).
AggregationResult confidence_distill_aggregate(std::span<const MlpModel> local_models,
                                               std::span<const Matrix> public_batches,
                                               const AggregationMethod& method);

}  // namespace fedkd
