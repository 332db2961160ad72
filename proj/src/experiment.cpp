#include "fedkd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#include "fedkd/confidence.hpp"
#include "fedkd/errors.hpp"
#include "fedkd/federation.hpp"
#include "fedkd/text_io.hpp"

namespace fedkd {

namespace {

void write_config_echo(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    atomic_write_file(out_dir / "config_resolved.cfg", render_config(cfg));
}

Matrix gather_rows(const Matrix& source, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), source.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Index>(i)) = source.row(rows[i]);
    }
    return out;
}

std::string divergence_grid_csv(const Matrix& grid) {
    std::ostringstream out;
    for (Index j = 0; j < grid.cols(); ++j) out << ",Public_" << (j + 1);
    out << "\n";
    for (Index i = 0; i < grid.rows(); ++i) {
        out << "Model_" << (i + 1);
        for (Index j = 0; j < grid.cols(); ++j) out << "," << format_double(grid(i, j));
        out << "\n";
    }
    return out.str();
}

int column_argmin(const Matrix& grid, Index col) {
    int best = 0;
    for (Index i = 1; i < grid.rows(); ++i) {
        if (grid(i, col) < grid(best, col)) best = static_cast<int>(i);
    }
    return best;
}

}  // namespace

GenDataResult cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    write_config_echo(cfg, out_dir);
    GenDataResult result;
    result.dataset = build_dataset(cfg.data);
    result.dataset_path = out_dir / "dataset.csv";
    save_dataset(result.dataset, result.dataset_path);

    const std::vector<TripSpec> specs = default_trip_specs(cfg.data);
    SeededRng fn_rng = SeededRng(cfg.data.seed).split(103);  // same stream as build_dataset
    const TargetFunction f = make_target_function(cfg.data, fn_rng);

    std::ostringstream manifest;
    manifest << "fedkd dataset manifest\n";
    manifest << "seed " << cfg.data.seed << "\n";
    manifest << "input_dim " << cfg.data.input_dim << "\n";
    manifest << "samples " << result.dataset.size() << "\n";
    manifest << "target_function sin_proj scale=" << format_double(f.scale) << " projection=";
    for (Eigen::Index j = 0; j < f.projection.size(); ++j) {
        if (j > 0) manifest << ",";
        manifest << format_double(f.projection[j]);
    }
    manifest << "\n";
    for (const TripSpec& spec : specs) {
        const auto counts = split_counts(spec.n_samples);
        manifest << "trip " << spec.trip_id << " samples=" << spec.n_samples
                 << " train=" << counts[0] << " test=" << counts[1] << " public=" << counts[2]
                 << " cluster_stddev=" << format_double(spec.cluster_stddev)
                 << " noise_stddev=" << format_double(spec.noise_stddev) << " mean=";
        for (Eigen::Index j = 0; j < spec.cluster_mean.size(); ++j) {
            if (j > 0) manifest << ",";
            manifest << format_double(spec.cluster_mean[j]);
        }
        manifest << "\n";
    }
    result.manifest_path = out_dir / "manifest.txt";
    atomic_write_file(result.manifest_path, manifest.str());
    return result;
}

ValidateEntropyResult cmd_validate_entropy(const Dataset& data, const ExperimentConfig& cfg,
                                           const std::filesystem::path& out_dir) {
    const int trips = data.num_trips();
    if (trips < 2) {
        throw ConfigError("validate-entropy needs at least 2 trips, dataset has " +
                          std::to_string(trips));
    }
    write_config_echo(cfg, out_dir);

    // Per-trip 90/10 private/public resplit over the labeled rows (the
    // file's public rows carry no targets, and this experiment needs
    // ground truth on its public side).
    std::vector<Matrix> public_inputs(static_cast<std::size_t>(trips));
    std::vector<Matrix> public_targets(static_cast<std::size_t>(trips));
    std::vector<MlpModel> models;
    const SeededRng root = SeededRng(cfg.data.seed).split(streams::kValidation);
    for (int t = 0; t < trips; ++t) {
        std::vector<Index> labeled;
        for (Index i = 0; i < data.size(); ++i) {
            if (data.trip[static_cast<std::size_t>(i)] == t &&
                data.has_target[static_cast<std::size_t>(i)]) {
                labeled.push_back(i);
            }
        }
        const auto n = static_cast<long>(labeled.size());
        if (n < 2) {
            throw ConfigError("trip " + std::to_string(t) + " has too few labeled samples");
        }
        SeededRng trip_rng = root.split(static_cast<std::uint64_t>(t));
        SeededRng shuffle_rng = trip_rng.split(0);
        const std::vector<int> order = shuffle_rng.permutation(static_cast<int>(n));
        long n_private = std::lround(cfg.validate_private_fraction * static_cast<double>(n));
        n_private = std::clamp(n_private, 1L, n - 1);

        std::vector<Index> private_rows, public_rows;
        for (long i = 0; i < n; ++i) {
            const Index row = labeled[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
            (i < n_private ? private_rows : public_rows).push_back(row);
        }

        ClientState trainer;
        trainer.client_id = t;
        trainer.inputs = gather_rows(data.features, private_rows);
        trainer.targets.resize(static_cast<Index>(private_rows.size()), 1);
        for (std::size_t i = 0; i < private_rows.size(); ++i) {
            trainer.targets(static_cast<Index>(i), 0) =
                data.targets[static_cast<std::size_t>(private_rows[i])];
        }

        FedConfig train_cfg = cfg.fed_config(cfg.method.kind, cfg.data.seed);
        train_cfg.local_epochs = cfg.validate_epochs;
        SeededRng init_rng = trip_rng.split(1);
        const MlpModel init =
            init_model(make_regression_specs(data.input_dim, cfg.hidden), init_rng);
        models.push_back(client_update(trainer, init, train_cfg, trip_rng.split(2)).model);

        public_inputs[static_cast<std::size_t>(t)] = gather_rows(data.features, public_rows);
        Matrix targets(static_cast<Index>(public_rows.size()), 1);
        for (std::size_t i = 0; i < public_rows.size(); ++i) {
            targets(static_cast<Index>(i), 0) =
                data.targets[static_cast<std::size_t>(public_rows[i])];
        }
        public_targets[static_cast<std::size_t>(t)] = std::move(targets);
    }

    ValidateEntropyResult result;
    result.loss.resize(trips, trips);
    result.entropy_normalized.resize(trips, trips);
    result.entropy_raw.resize(trips, trips);
    result.excluded_normalized = Matrix::Zero(trips, trips);
    result.excluded_raw = Matrix::Zero(trips, trips);

    const EntropyMode norm_mode{true, cfg.method.entropy_mode.epsilon};
    const EntropyMode raw_mode{false, cfg.method.entropy_mode.epsilon};
    for (int i = 0; i < trips; ++i) {
        for (int j = 0; j < trips; ++j) {
            const auto sj = static_cast<std::size_t>(j);
            const ForwardTrace trace =
                forward(models[static_cast<std::size_t>(i)], public_inputs[sj]);
            result.loss(i, j) = rmse_loss(trace.output(), public_targets[sj]).loss;
            const Matrix& penult = trace.penultimate();
            for (const bool normalized : {true, false}) {
                const EntropyMode& mode = normalized ? norm_mode : raw_mode;
                double sum = 0.0;
                long kept = 0, dropped = 0;
                for (Index s = 0; s < penult.rows(); ++s) {
                    const double h = entropy(penult.row(s), mode);
                    if (std::isinf(h)) {
                        ++dropped;
                    } else {
                        sum += h;
                        ++kept;
                    }
                }
                const double mean =
                    kept > 0 ? sum / static_cast<double>(kept)
                             : std::numeric_limits<double>::infinity();
                if (normalized) {
                    result.entropy_normalized(i, j) = mean;
                    result.excluded_normalized(i, j) = static_cast<double>(dropped);
                } else {
                    result.entropy_raw(i, j) = mean;
                    result.excluded_raw(i, j) = static_cast<double>(dropped);
                }
            }
        }
    }

    for (int j = 0; j < trips; ++j) {
        const int loss_arg = column_argmin(result.loss, j);
        const int entropy_arg = column_argmin(result.entropy_normalized, j);
        result.loss_argmin.push_back(loss_arg);
        result.entropy_argmin.push_back(entropy_arg);
        if (loss_arg == j) ++result.hypothesis1_columns;
        if (entropy_arg == loss_arg) ++result.hypothesis2_columns;
    }

    atomic_write_file(out_dir / "loss_matrix.csv", divergence_grid_csv(result.loss));
    atomic_write_file(out_dir / "entropy_matrix_normalized.csv",
                      divergence_grid_csv(result.entropy_normalized));
    atomic_write_file(out_dir / "entropy_matrix_raw.csv",
                      divergence_grid_csv(result.entropy_raw));

    std::ostringstream summary;
    summary << "validate-entropy summary\n";
    summary << "trips " << trips << "\n";
    summary << "entropy_mode_scored normalized epsilon="
            << format_double(cfg.method.entropy_mode.epsilon) << "\n";
    for (int j = 0; j < trips; ++j) {
        summary << "column Public_" << (j + 1) << ": loss_argmin=Model_"
                << (result.loss_argmin[static_cast<std::size_t>(j)] + 1)
                << " diagonal_min=" << (result.loss_argmin[static_cast<std::size_t>(j)] == j
                                            ? "yes"
                                            : "no")
                << " entropy_argmin=Model_"
                << (result.entropy_argmin[static_cast<std::size_t>(j)] + 1) << " match="
                << (result.entropy_argmin[static_cast<std::size_t>(j)] ==
                            result.loss_argmin[static_cast<std::size_t>(j)]
                        ? "yes"
                        : "no")
                << "\n";
    }
    summary << "hypothesis1 " << result.hypothesis1_columns << "/" << trips
            << " columns diagonal-minimal\n";
    summary << "hypothesis2 " << result.hypothesis2_columns << "/" << trips
            << " columns entropy argmin == loss argmin (normalized mode)\n";
    summary << "excluded_rows_normalized " << result.excluded_normalized.sum() << "\n";
    summary << "excluded_rows_raw " << result.excluded_raw.sum() << "\n";
    atomic_write_file(out_dir / "summary.txt", summary.str());
    return result;
}

namespace {

struct RunSpec {
    PartitionMode mode;
    AggKind kind;
    std::uint64_t seed;
};

constexpr AggKind kAllMethods[] = {AggKind::kFedAvg, AggKind::kFedDf,
                                   AggKind::kConfidenceDistill};

std::vector<FederationRun> execute_runs(const Dataset& data, const ExperimentConfig& cfg,
                                        const std::vector<RunSpec>& runs) {
    std::vector<FederationRun> results(runs.size());
    std::vector<std::exception_ptr> failures(runs.size());
    std::atomic<std::size_t> cursor{0};
    const std::size_t workers =
        std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), runs.size());
    auto worker = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= runs.size()) return;
            try {
                const RunSpec& spec = runs[i];
                SeededRng partition_rng = SeededRng(spec.seed).split(streams::kPartition);
                const FederationData fed =
                    partition(data, spec.mode, cfg.clients, partition_rng);
                const auto start = std::chrono::steady_clock::now();
                results[i] = run_federation(fed, cfg.fed_config(spec.kind, spec.seed));
                const double ms = std::chrono::duration<double, std::milli>(
                                      std::chrono::steady_clock::now() - start)
                                      .count();
                std::ostringstream note;
                note << "ran " << partition_mode_name(spec.mode) << "/"
                     << agg_kind_name(spec.kind) << " seed=" << spec.seed << " in "
                     << static_cast<long>(ms) << " ms\n";
                std::cerr << note.str();
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    for (const auto& failure : failures) {
        if (failure) std::rethrow_exception(failure);
    }
    return results;
}

}  // namespace

CompareResult cmd_compare(const Dataset& data, const ExperimentConfig& cfg,
                          const std::filesystem::path& out_dir) {
    if (data.size() < 1) {
        throw ConfigError("compare: empty dataset");
    }
    write_config_echo(cfg, out_dir);

    std::vector<RunSpec> runs;
    for (PartitionMode mode : cfg.compare_modes) {
        for (AggKind kind : kAllMethods) {
            for (std::uint64_t seed : cfg.compare_seeds) {
                runs.push_back({mode, kind, seed});
            }
        }
    }
    const std::vector<FederationRun> results = execute_runs(data, cfg, runs);

    CompareResult out;
    std::ostringstream summary;
    summary << "compare summary\n";
    summary << "entropy_mode "
            << (cfg.method.entropy_mode.normalize ? "normalized" : "raw")
            << " epsilon=" << format_double(cfg.method.entropy_mode.epsilon) << "\n";
    summary << "rounds " << cfg.rounds << "\n";
    summary << "seeds ";
    for (std::size_t i = 0; i < cfg.compare_seeds.size(); ++i) {
        if (i > 0) summary << ",";
        summary << cfg.compare_seeds[i];
    }
    summary << "\n";

    for (PartitionMode mode : cfg.compare_modes) {
        const std::string mode_name = partition_mode_name(mode);
        std::ostringstream metrics;
        metrics << "round,method,seed,test_rmse,wall_ms\n";
        std::ostringstream hist;
        hist << "round,method,seed,client,count\n";
        summary << "mode " << mode_name << "\n";
        for (AggKind kind : kAllMethods) {
            const std::string method_name = agg_kind_name(kind);
            MethodSummary ms;
            ms.min_final_rmse = std::numeric_limits<double>::infinity();
            ms.max_final_rmse = -std::numeric_limits<double>::infinity();
            double sum = 0.0;
            for (std::uint64_t seed : cfg.compare_seeds) {
                const auto it = std::find_if(runs.begin(), runs.end(), [&](const RunSpec& r) {
                    return r.mode == mode && r.kind == kind && r.seed == seed;
                });
                const FederationRun& run =
                    results[static_cast<std::size_t>(it - runs.begin())];
                for (const RoundMetrics& m : run.metrics) {
                    // wall_ms is measured, so the persisted value is
                    // pinned to 0 to keep re-runs byte-identical
                    metrics << m.round << "," << m.method << "," << m.seed << ","
                            << format_double(m.test_rmse) << ",0\n";
                    for (std::size_t c = 0; c < m.teacher_histogram.size(); ++c) {
                        hist << m.round << "," << m.method << "," << m.seed << "," << c << ","
                             << m.teacher_histogram[c] << "\n";
                    }
                }
                const double final_rmse = run.metrics.back().test_rmse;
                sum += final_rmse;
                ms.min_final_rmse = std::min(ms.min_final_rmse, final_rmse);
                ms.max_final_rmse = std::max(ms.max_final_rmse, final_rmse);
            }
            ms.mean_final_rmse = sum / static_cast<double>(cfg.compare_seeds.size());
            out.summary[mode_name][method_name] = ms;
            summary << "  " << method_name << " mean_final_rmse="
                    << format_double(ms.mean_final_rmse)
                    << " min=" << format_double(ms.min_final_rmse)
                    << " max=" << format_double(ms.max_final_rmse) << "\n";
        }
        const auto& by_method = out.summary[mode_name];
        const double conf = by_method.at("confidence_distill").mean_final_rmse;
        for (const char* baseline : {"fedavg", "feddf"}) {
            const double base = by_method.at(baseline).mean_final_rmse;
            const double improvement = base > 0.0 ? (base - conf) / base * 100.0 : 0.0;
            summary << "  improvement_of_confidence_distill_vs_" << baseline << " "
                    << format_double(improvement) << "%\n";
        }

        const std::filesystem::path metrics_path = out_dir / ("metrics_" + mode_name + ".csv");
        atomic_write_file(metrics_path, metrics.str());
        atomic_write_file(out_dir / ("teacher_hist_" + mode_name + ".csv"), hist.str());
        out.metrics_paths[mode_name] = metrics_path;
    }
    atomic_write_file(out_dir / "summary.txt", summary.str());
    return out;
}

std::vector<std::filesystem::path> cmd_plotdata(const std::filesystem::path& metrics_csv,
                                                const std::filesystem::path& out_dir) {
    const std::string content = read_file(metrics_csv);
    std::istringstream in(content);
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line) || line != "round,method,seed,test_rmse,wall_ms") {
        throw ParseError(metrics_csv.string() +
                         ": row 1: expected header 'round,method,seed,test_rmse,wall_ms'");
    }
    ++line_no;

    std::vector<std::string> method_order;
    std::map<std::string, std::map<int, std::vector<double>>> curves;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 5) {
            throw ParseError(metrics_csv.string() + ": row " + std::to_string(line_no) +
                             ": expected 5 fields, got " + std::to_string(fields.size()));
        }
        const std::string where = "row " + std::to_string(line_no);
        const int round = static_cast<int>(parse_int(fields[0], where + " round"));
        const std::string method(fields[1]);
        parse_int(fields[2], where + " seed");
        const double rmse = parse_double(fields[3], where + " test_rmse");
        if (curves.find(method) == curves.end()) {
            method_order.push_back(method);
        }
        curves[method][round].push_back(rmse);
    }

    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    if (curves.empty()) {
        std::cerr << "plotdata: no data rows in " << metrics_csv << ", nothing to write\n";
        return written;
    }
    for (const std::string& method : method_order) {
        std::ostringstream out;
        out << "round,mean_test_rmse,min_test_rmse,max_test_rmse\n";
        for (const auto& [round, values] : curves[method]) {
            double sum = 0.0;
            double lo = values[0], hi = values[0];
            for (double v : values) {
                sum += v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            out << round << "," << format_double(sum / static_cast<double>(values.size()))
                << "," << format_double(lo) << "," << format_double(hi) << "\n";
        }
        const std::filesystem::path path = out_dir / ("curve_" + method + ".csv");
        atomic_write_file(path, out.str());
        written.push_back(path);
    }
    return written;
}

}  // namespace fedkd
