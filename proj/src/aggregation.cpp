#include "fedkd/aggregation.hpp"

#include <cmath>
#include <stdexcept>

#include "fedkd/errors.hpp"

namespace fedkd {

std::string agg_kind_name(AggKind kind) {
    switch (kind) {
        case AggKind::kFedAvg: return "fedavg";
        case AggKind::kFedDf: return "feddf";
        case AggKind::kConfidenceDistill: return "confidence_distill";
    }
    throw std::logic_error("unknown aggregation kind");
}

AggKind agg_kind_from_name(const std::string& name) {
    if (name == "fedavg") return AggKind::kFedAvg;
    if (name == "feddf") return AggKind::kFedDf;
    if (name == "confidence_distill") return AggKind::kConfidenceDistill;
    throw ConfigError("unknown aggregation method '" + name +
                      "' (expected fedavg, feddf, or confidence_distill)");
}

namespace {

void require_same_specs(std::span<const MlpModel> models) {
    if (models.empty()) {
        throw ConfigError("aggregation needs at least one model");
    }
    for (std::size_t k = 1; k < models.size(); ++k) {
        const auto& a = models[0].specs;
        const auto& b = models[k].specs;
        bool same = a.size() == b.size();
        for (std::size_t l = 0; same && l < a.size(); ++l) {
            same = a[l].in_dim == b[l].in_dim && a[l].out_dim == b[l].out_dim &&
                   a[l].activation == b[l].activation;
        }
        if (!same) {
            throw ConfigError("model " + std::to_string(k) + " specs differ from model 0");
        }
    }
}

}  // namespace

MlpModel fedavg_average(std::span<const MlpModel> models, std::span<const double> weights) {
    require_same_specs(models);
    if (weights.size() != models.size()) {
        throw ConfigError("fedavg_average: " + std::to_string(weights.size()) +
                          " weights for " + std::to_string(models.size()) + " models");
    }
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) {
            throw ConfigError("fedavg_average: negative weight");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("fedavg_average: weights sum to " + std::to_string(total) +
                          ", expected 1");
    }
    Matrix acc = weights[0] * flatten_params(models[0]);
    for (std::size_t k = 1; k < models.size(); ++k) {
        acc += weights[k] * flatten_params(models[k]);
    }
    return unflatten_params(models[0].specs, acc);
}

MlpModel fedavg_average(std::span<const MlpModel> models) {
    if (models.empty()) {
        throw ConfigError("aggregation needs at least one model");
    }
    const std::vector<double> uniform(models.size(), 1.0 / static_cast<double>(models.size()));
    return fedavg_average(models, uniform);
}

double distill_step(MlpModel& student, const Matrix& teacher_targets, const Matrix& batch,
                    double lr) {
    const ForwardTrace trace = forward(student, batch);
    const RmseLoss loss = rmse_loss(trace.penultimate(), teacher_targets);
    const Gradients grads = backward_from_penultimate(student, trace, loss.grad);
    OptimizerState opt = OptimizerState::sgd(lr);
    apply_update(student, grads, opt);
    return rmse_loss(forward(student, batch).penultimate(), teacher_targets).loss;
}

std::vector<Matrix> draw_public_batches(const Matrix& public_inputs, int batch_size, int steps,
                                        SeededRng& rng) {
    const Index pool = public_inputs.rows();
    if (pool < 1) {
        throw ConfigError("draw_public_batches: empty public pool");
    }
    if (batch_size < 1) {
        throw ConfigError("draw_public_batches: batch_size must be >= 1");
    }
    const int num_steps =
        steps > 0 ? steps
                  : static_cast<int>((pool + batch_size - 1) / batch_size);
    const std::vector<int> order = rng.permutation(static_cast<int>(pool));
    std::vector<Matrix> batches;
    batches.reserve(static_cast<std::size_t>(num_steps));
    std::size_t cursor = 0;
    for (int s = 0; s < num_steps; ++s) {
        Matrix batch(batch_size, public_inputs.cols());
        for (int i = 0; i < batch_size; ++i) {
            batch.row(i) = public_inputs.row(order[cursor]);
            cursor = (cursor + 1) % order.size();
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

namespace {

AggregationResult distill_aggregate(std::span<const MlpModel> local_models,
                                    std::span<const Matrix> public_batches,
                                    const AggregationMethod& method, bool confidence_based) {
    require_same_specs(local_models);
    if (public_batches.empty()) {
        throw ConfigError("distillation needs at least one public batch");
    }
    if (method.distill_lr <= 0.0) {
        throw ConfigError("distill_lr must be > 0");
    }
    AggregationResult result;
    result.model = fedavg_average(local_models);
    if (confidence_based) {
        result.report.teacher_histogram.assign(local_models.size(), 0);
    }
    std::vector<Matrix> penultimates(local_models.size());
    for (const Matrix& batch : public_batches) {
        for (std::size_t k = 0; k < local_models.size(); ++k) {
            penultimates[k] = forward(local_models[k], batch).penultimate();
        }
        Matrix targets;
        if (confidence_based) {
            const TeacherSelection selection =
                select_teachers(penultimates, method.entropy_mode);
            targets = assemble_targets(penultimates, selection);
            for (std::size_t k = 0; k < selection.histogram.size(); ++k) {
                result.report.teacher_histogram[k] += selection.histogram[k];
            }
        } else {
            targets = penultimates[0];
            for (std::size_t k = 1; k < penultimates.size(); ++k) {
                targets += penultimates[k];
            }
            targets /= static_cast<double>(penultimates.size());
        }
        result.report.step_losses.push_back(
            distill_step(result.model, targets, batch, method.distill_lr));
    }
    return result;
}

}  // namespace

AggregationResult feddf_aggregate(std::span<const MlpModel> local_models,
                                  std::span<const Matrix> public_batches,
                                  const AggregationMethod& method) {
    return distill_aggregate(local_models, public_batches, method, false);
}

AggregationResult confidence_distill_aggregate(std::span<const MlpModel> local_models,
                                               std::span<const Matrix> public_batches,
                                               const AggregationMethod& method) {
    return distill_aggregate(local_models, public_batches, method, true);
}

}  // namespace fedkd
