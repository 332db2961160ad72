#include "fedkd/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedkd/errors.hpp"
#include "fedkd/text_io.hpp"

namespace fedkd {

namespace {

constexpr std::uint64_t kTripGenStream = 101;
constexpr std::uint64_t kSplitAssignStream = 102;
constexpr std::uint64_t kTargetFnStream = 103;

const char* split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kTest: return "test";
        case Split::kPublic: return "public";
    }
    return "?";
}

Split split_from_name(std::string_view name, long line_no) {
    if (name == "train") return Split::kTrain;
    if (name == "test") return Split::kTest;
    if (name == "public") return Split::kPublic;
    throw ParseError("line " + std::to_string(line_no) + ": unknown split '" +
                     std::string(name) + "'");
}

}  // namespace

double TargetFunction::eval(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (x.size() != projection.size()) {
        throw ShapeError("target function: input has " + std::to_string(x.size()) +
                         " features, projection has " + std::to_string(projection.size()));
    }
    return scale * std::sin(projection.dot(x));
}

PartitionMode partition_mode_from_name(const std::string& name) {
    if (name == "iid") return PartitionMode::kIid;
    if (name == "non_iid") return PartitionMode::kNonIid;
    throw ConfigError("unknown partition mode '" + name + "' (expected iid or non_iid)");
}

std::string partition_mode_name(PartitionMode mode) {
    return mode == PartitionMode::kIid ? "iid" : "non_iid";
}

int Dataset::num_trips() const {
    int max_trip = -1;
    for (int t : trip) max_trip = std::max(max_trip, t);
    return max_trip + 1;
}

bool Dataset::operator==(const Dataset& other) const {
    return input_dim == other.input_dim && ids == other.ids && trip == other.trip &&
           split == other.split && targets == other.targets &&
           has_target == other.has_target && features.rows() == other.features.rows() &&
           features.cols() == other.features.cols() && features == other.features;
}

std::pair<Matrix, Matrix> generate_trip(const TripSpec& spec, const TargetFunction& f,
                                        SeededRng& rng) {
    if (spec.n_samples < 10) {
        throw ConfigError("trip " + std::to_string(spec.trip_id) +
                          ": n_samples must be >= 10");
    }
    if (spec.cluster_mean.size() != spec.input_dim) {
        throw ConfigError("trip " + std::to_string(spec.trip_id) + ": cluster_mean has " +
                          std::to_string(spec.cluster_mean.size()) + " components, input_dim is " +
                          std::to_string(spec.input_dim));
    }
    Matrix inputs = rng_normal(rng, spec.n_samples, spec.input_dim, 0.0, spec.cluster_stddev);
    inputs.rowwise() += spec.cluster_mean;
    Matrix targets(spec.n_samples, 1);
    for (Index i = 0; i < spec.n_samples; ++i) {
        targets(i, 0) = f.eval(inputs.row(i)) + rng.next_normal(0.0, spec.noise_stddev);
    }
    return {std::move(inputs), std::move(targets)};
}

std::vector<TripSpec> default_trip_specs(const DataGenConfig& cfg) {
    std::vector<TripSpec> specs;
    for (int k = 0; k < cfg.trips; ++k) {
        TripSpec spec;
        spec.trip_id = k;
        spec.input_dim = cfg.input_dim;
        spec.cluster_mean = Eigen::RowVectorXd::Zero(cfg.input_dim);
        spec.cluster_mean[k % cfg.input_dim] = cfg.cluster_mean_scale;
        spec.cluster_stddev = cfg.cluster_stddev;
        spec.n_samples = cfg.samples_per_trip;
        spec.noise_stddev = cfg.noise_stddev;
        specs.push_back(std::move(spec));
    }
    return specs;
}

TargetFunction make_target_function(const DataGenConfig& cfg, SeededRng& rng) {
    TargetFunction f;
    f.kind = TargetFunction::Kind::kSinProj;
    f.scale = cfg.target_scale;
    f.projection = rng_normal(rng, 1, cfg.input_dim, 0.0, cfg.target_proj_stddev).row(0);
    return f;
}

void validate_trip_separation(const std::vector<TripSpec>& specs) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
        for (std::size_t j = i + 1; j < specs.size(); ++j) {
            const double dist = (specs[i].cluster_mean - specs[j].cluster_mean).norm();
            const double required = 4.0 * std::max(specs[i].cluster_stddev,
                                                   specs[j].cluster_stddev);
            if (dist < required) {
                throw ConfigError("trips " + std::to_string(specs[i].trip_id) + " and " +
                                  std::to_string(specs[j].trip_id) + " cluster means are " +
                                  std::to_string(dist) + " apart, need >= " +
                                  std::to_string(required));
            }
        }
    }
}

std::array<Index, 3> split_counts(Index n) {
    // exact 7:2:1 largest-remainder in integer arithmetic
    const std::array<std::int64_t, 3> weights = {7, 2, 1};
    std::array<Index, 3> counts{};
    std::array<std::int64_t, 3> remainders{};
    Index assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        counts[i] = static_cast<Index>(n * weights[i] / 10);
        remainders[i] = n * weights[i] % 10;
        assigned += counts[i];
    }
    Index leftover = n - assigned;
    while (leftover > 0) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < 3; ++i) {
            if (remainders[i] > remainders[best]) best = i;
        }
        counts[best] += 1;
        remainders[best] = -1;
        --leftover;
    }
    return counts;
}

Dataset build_dataset(const std::vector<TripSpec>& specs, const TargetFunction& f,
                      std::uint64_t seed) {
    if (specs.empty()) {
        throw ConfigError("build_dataset: no trips");
    }
    const int input_dim = specs[0].input_dim;
    Index total = 0;
    for (const TripSpec& spec : specs) {
        if (spec.input_dim != input_dim) {
            throw ConfigError("all trips must share input_dim");
        }
        total += spec.n_samples;
    }

    Dataset data;
    data.input_dim = input_dim;
    data.features.resize(total, input_dim);
    data.ids.reserve(static_cast<std::size_t>(total));
    data.trip.reserve(static_cast<std::size_t>(total));
    data.split.reserve(static_cast<std::size_t>(total));
    data.targets.reserve(static_cast<std::size_t>(total));
    data.has_target.reserve(static_cast<std::size_t>(total));

    const SeededRng root(seed);
    std::int64_t next_id = 0;
    Index row = 0;
    for (std::size_t t = 0; t < specs.size(); ++t) {
        const TripSpec& spec = specs[t];
        SeededRng trip_rng = root.split(kTripGenStream).split(t);
        auto [inputs, targets] = generate_trip(spec, f, trip_rng);

        const auto counts = split_counts(spec.n_samples);
        SeededRng split_rng = root.split(kSplitAssignStream).split(t);
        const std::vector<int> order = split_rng.permutation(spec.n_samples);
        std::vector<Split> assignment(static_cast<std::size_t>(spec.n_samples));
        for (Index i = 0; i < spec.n_samples; ++i) {
            const Split s = i < counts[0]               ? Split::kTrain
                            : i < counts[0] + counts[1] ? Split::kTest
                                                        : Split::kPublic;
            assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = s;
        }

        for (Index i = 0; i < spec.n_samples; ++i) {
            data.features.row(row) = inputs.row(i);
            data.ids.push_back(next_id++);
            data.trip.push_back(spec.trip_id);
            const Split s = assignment[static_cast<std::size_t>(i)];
            data.split.push_back(s);
            const bool labeled = s != Split::kPublic;
            data.has_target.push_back(labeled ? 1 : 0);
            data.targets.push_back(labeled ? targets(i, 0) : 0.0);
            ++row;
        }
    }
    return data;
}

Dataset build_dataset(const DataGenConfig& cfg) {
    const std::vector<TripSpec> specs = default_trip_specs(cfg);
    validate_trip_separation(specs);
    SeededRng fn_rng = SeededRng(cfg.seed).split(kTargetFnStream);
    const TargetFunction f = make_target_function(cfg, fn_rng);
    return build_dataset(specs, f, cfg.seed);
}

namespace {

Matrix gather_rows(const Matrix& source, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), source.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Index>(i)) = source.row(rows[i]);
    }
    return out;
}

}  // namespace

FederationData partition(const Dataset& data, PartitionMode mode, int num_clients,
                         SeededRng& rng) {
    if (num_clients < 1) {
        throw ConfigError("partition: need at least one client");
    }
    const int trips = data.num_trips();
    if (mode == PartitionMode::kNonIid && trips < num_clients) {
        throw ConfigError("non_iid partition: " + std::to_string(trips) + " trips for " +
                          std::to_string(num_clients) + " clients");
    }

    std::vector<Index> train_rows;
    std::vector<Index> test_rows;
    std::vector<Index> public_rows;
    for (Index i = 0; i < data.size(); ++i) {
        switch (data.split[static_cast<std::size_t>(i)]) {
            case Split::kTrain: train_rows.push_back(i); break;
            case Split::kTest: test_rows.push_back(i); break;
            case Split::kPublic: public_rows.push_back(i); break;
        }
    }

    std::vector<std::vector<Index>> per_client(static_cast<std::size_t>(num_clients));
    if (mode == PartitionMode::kNonIid) {
        for (Index i : train_rows) {
            const int t = data.trip[static_cast<std::size_t>(i)];
            if (t < num_clients) {
                per_client[static_cast<std::size_t>(t)].push_back(i);
            }
        }
    } else {
        const std::vector<int> order = rng.permutation(static_cast<int>(train_rows.size()));
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            per_client[pos % static_cast<std::size_t>(num_clients)].push_back(
                train_rows[static_cast<std::size_t>(order[pos])]);
        }
    }

    FederationData fed;
    for (int k = 0; k < num_clients; ++k) {
        const auto& rows = per_client[static_cast<std::size_t>(k)];
        if (rows.empty()) {
            throw ConfigError("partition: client " + std::to_string(k) +
                              " received no training data");
        }
        ClientState client;
        client.client_id = k;
        client.inputs = gather_rows(data.features, rows);
        client.targets.resize(static_cast<Index>(rows.size()), 1);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            client.targets(static_cast<Index>(i), 0) =
                data.targets[static_cast<std::size_t>(rows[i])];
        }
        fed.clients.push_back(std::move(client));
    }

    fed.public_inputs = gather_rows(data.features, public_rows);
    fed.test_inputs = gather_rows(data.features, test_rows);
    fed.test_targets.resize(static_cast<Index>(test_rows.size()), 1);
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
        fed.test_targets(static_cast<Index>(i), 0) =
            data.targets[static_cast<std::size_t>(test_rows[i])];
    }
    return fed;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "fedkd-dataset v1 input_dim=" << data.input_dim << " samples=" << data.size()
        << "\n";
    out << "id,trip,split";
    for (int j = 0; j < data.input_dim; ++j) out << ",x" << j;
    out << ",target\n";
    for (Index i = 0; i < data.size(); ++i) {
        const auto si = static_cast<std::size_t>(i);
        out << data.ids[si] << "," << data.trip[si] << ","
            << split_name(data.split[si]);
        for (Index j = 0; j < data.features.cols(); ++j) {
            out << "," << format_double(data.features(i, j));
        }
        if (data.has_target[si]) {
            out << "," << format_double(data.targets[si]);
        } else {
            out << ",NA";
        }
        out << "\n";
    }
    atomic_write_file(path, out.str());
}

Dataset load_dataset(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    std::istringstream in(content);
    std::string line;
    long line_no = 0;

    if (!std::getline(in, line)) {
        throw ParseError(path.string() + ": empty file, missing header");
    }
    ++line_no;
    const auto header = split(line, ' ');
    if (header.size() != 4 || header[0] != "fedkd-dataset" || header[1] != "v1" ||
        !header[2].starts_with("input_dim=") || !header[3].starts_with("samples=")) {
        throw ParseError(path.string() + ": missing or malformed 'fedkd-dataset v1' header");
    }
    const int input_dim = static_cast<int>(
        parse_int(header[2].substr(std::string_view("input_dim=").size()), "input_dim"));
    const auto samples = parse_int(header[3].substr(std::string_view("samples=").size()),
                                   "samples");
    if (input_dim < 1 || samples < 1) {
        throw ParseError(path.string() + ": non-positive input_dim or samples in header");
    }

    if (!std::getline(in, line)) {
        throw ParseError(path.string() + ": missing column header line");
    }
    ++line_no;

    Dataset data;
    data.input_dim = input_dim;
    data.features.resize(samples, input_dim);
    const std::size_t expected_fields = static_cast<std::size_t>(input_dim) + 4;
    for (std::int64_t i = 0; i < samples; ++i) {
        if (!std::getline(in, line)) {
            throw ParseError(path.string() + ": truncated file, expected " +
                             std::to_string(samples) + " samples but data ends after line " +
                             std::to_string(line_no) + " (" + std::to_string(i) +
                             " complete samples)");
        }
        ++line_no;
        const auto fields = split(line, ',');
        if (fields.size() != expected_fields) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(expected_fields));
        }
        const std::string where = "line " + std::to_string(line_no);
        data.ids.push_back(parse_int(fields[0], where + " id"));
        data.trip.push_back(static_cast<int>(parse_int(fields[1], where + " trip")));
        const Split s = split_from_name(fields[2], line_no);
        data.split.push_back(s);
        for (int j = 0; j < input_dim; ++j) {
            data.features(i, j) =
                parse_double(fields[static_cast<std::size_t>(3 + j)], where + " feature");
        }
        const auto target_field = fields[expected_fields - 1];
        if (target_field == "NA") {
            if (s != Split::kPublic) {
                throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                                 ": NA target on a non-public row");
            }
            data.has_target.push_back(0);
            data.targets.push_back(0.0);
        } else {
            if (s == Split::kPublic) {
                throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                                 ": public row carries a target value");
            }
            data.has_target.push_back(1);
            data.targets.push_back(parse_double(target_field, where + " target"));
        }
    }
    if (std::getline(in, line) && !line.empty()) {
        throw ParseError(path.string() + ": unexpected trailing content at line " +
                         std::to_string(line_no + 1));
    }
    return data;
}

}  // namespace fedkd
