#include "fedkd/config.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

#include "fedkd/errors.hpp"
#include "fedkd/text_io.hpp"

namespace fedkd {

FedConfig ExperimentConfig::fed_config(AggKind kind, std::uint64_t seed) const {
    FedConfig fc;
    fc.rounds = rounds;
    fc.clients = clients;
    fc.participation_fraction = participation_fraction;
    fc.local_epochs = local_epochs;
    fc.local_batch = local_batch;
    fc.local_lr = local_lr;
    fc.local_weight_decay = local_weight_decay;
    fc.local_optimizer = local_optimizer;
    fc.eval_every = eval_every;
    fc.seed = seed;
    fc.hidden = hidden;
    fc.method = method;
    fc.method.kind = kind;
    return fc;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

bool parse_bool(std::string_view v, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + std::string(v) +
                      "'");
}

std::vector<int> parse_int_list(std::string_view v, const std::string& key) {
    std::vector<int> out;
    for (auto part : split(v, ',')) {
        out.push_back(static_cast<int>(parse_int(trim(part), key)));
    }
    return out;
}

std::vector<std::uint64_t> parse_u64_list(std::string_view v, const std::string& key) {
    std::vector<std::uint64_t> out;
    for (auto part : split(v, ',')) {
        out.push_back(static_cast<std::uint64_t>(parse_int(trim(part), key)));
    }
    return out;
}

template <typename T>
std::string join_list(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) out += ",";
        out += std::to_string(values[i]);
    }
    return out;
}

struct Binding {
    const char* key;
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Binding>& bindings() {
    auto as_int = [](std::string_view v, const char* key) {
        return static_cast<int>(parse_int(v, key));
    };
    static const std::vector<Binding> table = {
        {"seed",
         [](ExperimentConfig& c, std::string_view v) {
             c.data.seed = static_cast<std::uint64_t>(parse_int(v, "seed"));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.data.seed); }},
        {"data.input_dim",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.data.input_dim = as_int(v, "data.input_dim");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.data.input_dim); }},
        {"data.trips",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.data.trips = as_int(v, "data.trips");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.data.trips); }},
        {"data.samples_per_trip",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.data.samples_per_trip = as_int(v, "data.samples_per_trip");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.data.samples_per_trip); }},
        {"data.cluster_stddev",
         [](ExperimentConfig& c, std::string_view v) {
             c.data.cluster_stddev = parse_double(v, "data.cluster_stddev");
         },
         [](const ExperimentConfig& c) { return format_double(c.data.cluster_stddev); }},
        {"data.cluster_mean_scale",
         [](ExperimentConfig& c, std::string_view v) {
             c.data.cluster_mean_scale = parse_double(v, "data.cluster_mean_scale");
         },
         [](const ExperimentConfig& c) { return format_double(c.data.cluster_mean_scale); }},
        {"data.noise_stddev",
         [](ExperimentConfig& c, std::string_view v) {
             c.data.noise_stddev = parse_double(v, "data.noise_stddev");
         },
         [](const ExperimentConfig& c) { return format_double(c.data.noise_stddev); }},
        {"data.target_scale",
         [](ExperimentConfig& c, std::string_view v) {
             c.data.target_scale = parse_double(v, "data.target_scale");
         },
         [](const ExperimentConfig& c) { return format_double(c.data.target_scale); }},
        {"data.target_proj_stddev",
         [](ExperimentConfig& c, std::string_view v) {
             c.data.target_proj_stddev = parse_double(v, "data.target_proj_stddev");
         },
         [](const ExperimentConfig& c) { return format_double(c.data.target_proj_stddev); }},
        {"model.hidden",
         [](ExperimentConfig& c, std::string_view v) {
             c.hidden = parse_int_list(v, "model.hidden");
         },
         [](const ExperimentConfig& c) { return join_list(c.hidden); }},
        {"fed.rounds",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.rounds = as_int(v, "fed.rounds");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.rounds); }},
        {"fed.clients",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.clients = as_int(v, "fed.clients");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.clients); }},
        {"fed.participation_fraction",
         [](ExperimentConfig& c, std::string_view v) {
             c.participation_fraction = parse_double(v, "fed.participation_fraction");
         },
         [](const ExperimentConfig& c) { return format_double(c.participation_fraction); }},
        {"fed.local_epochs",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.local_epochs = as_int(v, "fed.local_epochs");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.local_epochs); }},
        {"fed.local_batch",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.local_batch = as_int(v, "fed.local_batch");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.local_batch); }},
        {"fed.local_lr",
         [](ExperimentConfig& c, std::string_view v) {
             c.local_lr = parse_double(v, "fed.local_lr");
         },
         [](const ExperimentConfig& c) { return format_double(c.local_lr); }},
        {"fed.local_weight_decay",
         [](ExperimentConfig& c, std::string_view v) {
             c.local_weight_decay = parse_double(v, "fed.local_weight_decay");
         },
         [](const ExperimentConfig& c) { return format_double(c.local_weight_decay); }},
        {"fed.local_optimizer",
         [](ExperimentConfig& c, std::string_view v) {
             if (v == "adam") {
                 c.local_optimizer = OptimizerKind::kAdam;
             } else if (v == "sgd") {
                 c.local_optimizer = OptimizerKind::kSgd;
             } else {
                 throw ConfigError("fed.local_optimizer: expected adam or sgd, got '" +
                                   std::string(v) + "'");
             }
         },
         [](const ExperimentConfig& c) {
             return c.local_optimizer == OptimizerKind::kAdam ? "adam" : "sgd";
         }},
        {"fed.eval_every",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.eval_every = as_int(v, "fed.eval_every");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.eval_every); }},
        {"fed.seed",
         [](ExperimentConfig& c, std::string_view v) {
             c.fed_seed = static_cast<std::uint64_t>(parse_int(v, "fed.seed"));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.fed_seed); }},
        {"agg.method",
         [](ExperimentConfig& c, std::string_view v) {
             c.method.kind = agg_kind_from_name(std::string(v));
         },
         [](const ExperimentConfig& c) { return agg_kind_name(c.method.kind); }},
        {"agg.distill_steps",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.method.distill_steps = as_int(v, "agg.distill_steps");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.method.distill_steps); }},
        {"agg.distill_lr",
         [](ExperimentConfig& c, std::string_view v) {
             c.method.distill_lr = parse_double(v, "agg.distill_lr");
         },
         [](const ExperimentConfig& c) { return format_double(c.method.distill_lr); }},
        {"agg.distill_batch",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.method.distill_batch = as_int(v, "agg.distill_batch");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.method.distill_batch); }},
        {"agg.entropy_normalize",
         [](ExperimentConfig& c, std::string_view v) {
             c.method.entropy_mode.normalize = parse_bool(v, "agg.entropy_normalize");
         },
         [](const ExperimentConfig& c) {
             return c.method.entropy_mode.normalize ? "true" : "false";
         }},
        {"agg.entropy_epsilon",
         [](ExperimentConfig& c, std::string_view v) {
             c.method.entropy_mode.epsilon = parse_double(v, "agg.entropy_epsilon");
         },
         [](const ExperimentConfig& c) { return format_double(c.method.entropy_mode.epsilon); }},
        {"compare.seeds",
         [](ExperimentConfig& c, std::string_view v) {
             c.compare_seeds = parse_u64_list(v, "compare.seeds");
         },
         [](const ExperimentConfig& c) { return join_list(c.compare_seeds); }},
        {"compare.modes",
         [](ExperimentConfig& c, std::string_view v) {
             std::vector<PartitionMode> modes;
             for (auto part : split(v, ',')) {
                 modes.push_back(partition_mode_from_name(std::string(trim(part))));
             }
             c.compare_modes = modes;
         },
         [](const ExperimentConfig& c) {
             std::string out;
             for (std::size_t i = 0; i < c.compare_modes.size(); ++i) {
                 if (i > 0) out += ",";
                 out += partition_mode_name(c.compare_modes[i]);
             }
             return out;
         }},
        {"validate.epochs",
         [as_int](ExperimentConfig& c, std::string_view v) {
             c.validate_epochs = as_int(v, "validate.epochs");
         },
         [](const ExperimentConfig& c) { return std::to_string(c.validate_epochs); }},
        {"validate.private_fraction",
         [](ExperimentConfig& c, std::string_view v) {
             c.validate_private_fraction = parse_double(v, "validate.private_fraction");
         },
         [](const ExperimentConfig& c) { return format_double(c.validate_private_fraction); }},
    };
    return table;
}

void validate_config(const ExperimentConfig& c) {
    if (c.data.input_dim < 1 || c.data.trips < 1 || c.data.samples_per_trip < 10) {
        throw ConfigError("data.input_dim and data.trips must be >= 1, "
                          "data.samples_per_trip >= 10");
    }
    if (c.data.cluster_stddev <= 0.0 || c.data.noise_stddev < 0.0) {
        throw ConfigError("data.cluster_stddev must be > 0 and data.noise_stddev >= 0");
    }
    if (c.hidden.empty()) {
        throw ConfigError("model.hidden needs at least one hidden width");
    }
    for (int w : c.hidden) {
        if (w < 1) throw ConfigError("model.hidden widths must be >= 1");
    }
    if (c.rounds < 1 || c.clients < 1 || c.local_epochs < 1 || c.local_batch < 1 ||
        c.eval_every < 1) {
        throw ConfigError("fed.rounds, fed.clients, fed.local_epochs, fed.local_batch, and "
                          "fed.eval_every must be >= 1");
    }
    if (c.participation_fraction <= 0.0 || c.participation_fraction > 1.0) {
        throw ConfigError("fed.participation_fraction must be in (0, 1]");
    }
    if (c.local_lr < 0.0) {
        throw ConfigError("fed.local_lr must be >= 0");
    }
    if (c.method.distill_steps < 0 || c.method.distill_lr <= 0.0 ||
        c.method.distill_batch < 1) {
        throw ConfigError("agg.distill_steps must be >= 0, agg.distill_lr > 0, "
                          "agg.distill_batch >= 1");
    }
    if (c.method.entropy_mode.epsilon <= 0.0) {
        throw ConfigError("agg.entropy_epsilon must be > 0");
    }
    if (c.compare_seeds.empty() || c.compare_modes.empty()) {
        throw ConfigError("compare.seeds and compare.modes must be non-empty");
    }
    if (c.validate_epochs < 1) {
        throw ConfigError("validate.epochs must be >= 1");
    }
    if (c.validate_private_fraction <= 0.0 || c.validate_private_fraction >= 1.0) {
        throw ConfigError("validate.private_fraction must be in (0, 1)");
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + std::string(line) + "'");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        const auto& table = bindings();
        const auto it = std::find_if(table.begin(), table.end(),
                                     [&](const Binding& b) { return key == b.key; });
        if (it == table.end()) {
            throw ConfigError("unknown config key '" + key + "' (line " +
                              std::to_string(line_no) + ")");
        }
        if (!seen.insert(key).second) {
            throw ConfigError("duplicate config key '" + key + "' (line " +
                              std::to_string(line_no) + ")");
        }
        it->set(cfg, value);
    }
    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config_text(read_file(path));
}

std::string render_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const Binding& b : bindings()) {
        out += b.key;
        out += "=";
        out += b.get(cfg);
        out += "\n";
    }
    return out;
}

}  // namespace fedkd
