#include "fedkd/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fedkd/errors.hpp"

namespace fedkd {

SeededRng client_round_rng(std::uint64_t seed, int round, int client_id) {
    return SeededRng(seed)
        .split(streams::kClientUpdate)
        .split(static_cast<std::uint64_t>(round))
        .split(static_cast<std::uint64_t>(client_id));
}

ClientUpdateResult client_update(const ClientState& state, const MlpModel& global_model,
                                 const FedConfig& cfg, SeededRng rng) {
    const Index n = state.inputs.rows();
    if (n < 1) {
        throw ConfigError("client_update: client " + std::to_string(state.client_id) +
                          " has no private data");
    }
    if (state.targets.rows() != n) {
        throw ShapeError("client_update: inputs " + shape_str(state.inputs) +
                         " vs targets " + shape_str(state.targets));
    }
    ClientUpdateResult result;
    result.model = global_model;
    OptimizerState opt =
        cfg.local_optimizer == OptimizerKind::kAdam
            ? OptimizerState::adam(cfg.local_lr, cfg.local_weight_decay, result.model)
            : OptimizerState::sgd(cfg.local_lr, cfg.local_weight_decay);

    const int batch_size = cfg.local_batch;
    double last_epoch_loss = 0.0;
    long last_epoch_batches = 0;
    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        const std::vector<int> order = rng.permutation(static_cast<int>(n));
        const bool final_epoch = epoch == cfg.local_epochs - 1;
        for (Index start = 0; start < n; start += batch_size) {
            const Index rows = std::min<Index>(batch_size, n - start);
            Matrix batch(rows, state.inputs.cols());
            Matrix target(rows, 1);
            for (Index i = 0; i < rows; ++i) {
                const int src = order[static_cast<std::size_t>(start + i)];
                batch.row(i) = state.inputs.row(src);
                target(i, 0) = state.targets(src, 0);
            }
            const ForwardTrace trace = forward(result.model, batch);
            const RmseLoss loss = rmse_loss(trace.output(), target);
            const Gradients grads = backward(result.model, trace, loss.grad);
            apply_update(result.model, grads, opt);
            if (final_epoch) {
                last_epoch_loss += loss.loss;
                ++last_epoch_batches;
            }
        }
    }
    result.train_loss =
        last_epoch_batches > 0 ? last_epoch_loss / static_cast<double>(last_epoch_batches) : 0.0;
    return result;
}

std::vector<int> sample_clients(int num_clients, double fraction, SeededRng& rng) {
    if (fraction <= 0.0 || fraction > 1.0) {
        throw ConfigError("participation fraction must be in (0, 1]");
    }
    // the small slack keeps fp noise in fraction * K from bumping the count
    int count = static_cast<int>(std::ceil(fraction * num_clients - 1e-9));
    count = std::clamp(count, 1, num_clients);
    std::vector<int> pool = rng.permutation(num_clients);
    std::vector<int> sampled(pool.begin(), pool.begin() + count);
    std::sort(sampled.begin(), sampled.end());
    return sampled;
}

double evaluate(const MlpModel& model, const Matrix& test_inputs, const Matrix& test_targets) {
    if (test_inputs.rows() < 1) {
        throw ConfigError("evaluate: empty test pool");
    }
    const ForwardTrace trace = forward(model, test_inputs);
    return rmse_loss(trace.output(), test_targets).loss;
}

namespace {

void validate_fed_config(const FederationData& data, const FedConfig& cfg) {
    if (cfg.rounds < 1 || cfg.clients < 1 || cfg.local_epochs < 1 || cfg.local_batch < 1 ||
        cfg.eval_every < 1) {
        throw ConfigError("rounds, clients, local_epochs, local_batch, and eval_every must "
                          "all be >= 1");
    }
    if (data.clients.size() != static_cast<std::size_t>(cfg.clients)) {
        throw ConfigError("config expects " + std::to_string(cfg.clients) + " clients, data has " +
                          std::to_string(data.clients.size()));
    }
    if (data.test_inputs.rows() < 1) {
        throw ConfigError("run_federation: empty test pool");
    }
}

}  // namespace

FederationRun run_federation(const FederationData& data, const FedConfig& cfg) {
    validate_fed_config(data, cfg);
    const auto input_dim = static_cast<int>(data.clients[0].inputs.cols());
    const SeededRng root(cfg.seed);

    SeededRng init_rng = root.split(streams::kModelInit);
    MlpModel global = init_model(make_regression_specs(input_dim, cfg.hidden), init_rng);

    FederationRun run;
    const std::string method_name = agg_kind_name(cfg.method.kind);
    for (int round = 1; round <= cfg.rounds; ++round) {
        const auto round_start = std::chrono::steady_clock::now();

        SeededRng sampling_rng =
            root.split(streams::kClientSampling).split(static_cast<std::uint64_t>(round));
        const std::vector<int> sampled =
            sample_clients(cfg.clients, cfg.participation_fraction, sampling_rng);

        std::vector<MlpModel> updates;
        std::vector<double> train_losses;
        updates.reserve(sampled.size());
        for (int client_id : sampled) {
            ClientUpdateResult res =
                client_update(data.clients[static_cast<std::size_t>(client_id)], global, cfg,
                              client_round_rng(cfg.seed, round, client_id));
            updates.push_back(std::move(res.model));
            train_losses.push_back(res.train_loss);
        }

        DistillReport report;
        if (cfg.method.kind == AggKind::kFedAvg) {
            global = fedavg_average(updates);
        } else {
            if (data.public_inputs.rows() < 1) {
                throw ConfigError("distillation methods need a non-empty public pool");
            }
            SeededRng batch_rng =
                root.split(streams::kDistillBatches).split(static_cast<std::uint64_t>(round));
            const std::vector<Matrix> batches = draw_public_batches(
                data.public_inputs, cfg.method.distill_batch, cfg.method.distill_steps,
                batch_rng);
            AggregationResult agg =
                cfg.method.kind == AggKind::kFedDf
                    ? feddf_aggregate(updates, batches, cfg.method)
                    : confidence_distill_aggregate(updates, batches, cfg.method);
            global = std::move(agg.model);
            report = std::move(agg.report);
        }

        if (round % cfg.eval_every == 0 || round == cfg.rounds) {
            RoundMetrics metrics;
            metrics.round = round;
            metrics.method = method_name;
            metrics.seed = cfg.seed;
            metrics.test_rmse = evaluate(global, data.test_inputs, data.test_targets);
            if (!std::isfinite(metrics.test_rmse)) {
                throw NumericError("test RMSE is not finite at round " + std::to_string(round));
            }
            metrics.client_train_loss = train_losses;
            metrics.teacher_histogram = report.teacher_histogram;
            metrics.wall_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - round_start)
                                  .count();
            run.metrics.push_back(std::move(metrics));
        }
    }
    run.final_model = std::move(global);
    return run;
}

}  // namespace fedkd
