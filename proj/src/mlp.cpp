#include "fedkd/mlp.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "fedkd/errors.hpp"
#include "fedkd/text_io.hpp"

namespace fedkd {

void validate_specs(const std::vector<LayerSpec>& specs) {
    if (specs.empty()) {
        throw ConfigError("model needs at least one layer");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].in_dim < 1 || specs[i].out_dim < 1) {
            throw ConfigError("layer " + std::to_string(i) + " has non-positive dimensions");
        }
        if (i + 1 < specs.size() && specs[i].out_dim != specs[i + 1].in_dim) {
            throw ConfigError("layer " + std::to_string(i) + " out_dim " +
                              std::to_string(specs[i].out_dim) + " does not chain into layer " +
                              std::to_string(i + 1) + " in_dim " +
                              std::to_string(specs[i + 1].in_dim));
        }
    }
    const LayerSpec& last = specs.back();
    if (last.activation != Activation::kIdentity || last.out_dim != 1) {
        throw ConfigError("final layer must be identity with out_dim 1");
    }
    if (specs.size() >= 2 && specs[specs.size() - 2].activation != Activation::kRelu) {
        throw ConfigError("penultimate layer must use relu");
    }
}

std::vector<LayerSpec> make_regression_specs(int input_dim, const std::vector<int>& hidden) {
    std::vector<LayerSpec> specs;
    int in = input_dim;
    for (int width : hidden) {
        specs.push_back({in, width, Activation::kRelu});
        in = width;
    }
    specs.push_back({in, 1, Activation::kIdentity});
    validate_specs(specs);
    return specs;
}

MlpModel init_model(const std::vector<LayerSpec>& specs, SeededRng& rng) {
    validate_specs(specs);
    MlpModel model;
    model.specs = specs;
    for (const LayerSpec& spec : specs) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(spec.in_dim));
        model.weights.push_back(rng_normal(rng, spec.in_dim, spec.out_dim, 0.0, stddev));
        model.biases.push_back(Matrix::Zero(1, spec.out_dim));
    }
    return model;
}

ForwardTrace forward(const MlpModel& model, const Matrix& batch) {
    if (batch.cols() != model.specs.front().in_dim) {
        throw ShapeError("forward: batch " + shape_str(batch) + " does not match input dim " +
                         std::to_string(model.specs.front().in_dim));
    }
    ForwardTrace trace;
    trace.input = batch;
    trace.pre.reserve(model.specs.size());
    trace.act.reserve(model.specs.size());
    const Matrix* current = &trace.input;
    for (std::size_t l = 0; l < model.specs.size(); ++l) {
        Matrix pre = *current * model.weights[l];
        pre.rowwise() += model.biases[l].row(0);
        if (model.specs[l].activation == Activation::kRelu) {
            trace.act.push_back(relu(pre));
        } else {
            trace.act.push_back(pre);
        }
        trace.pre.push_back(std::move(pre));
        current = &trace.act.back();
    }
    return trace;
}

namespace {

// Propagates delta (gradient at the activation output of layer `top`)
// down to layer 0, filling grads for layers 0..top.
void backprop_from(const MlpModel& model, const ForwardTrace& trace, Matrix delta, int top,
                   Gradients& grads) {
    for (int l = top; l >= 0; --l) {
        const std::size_t li = static_cast<std::size_t>(l);
        if (model.specs[li].activation == Activation::kRelu) {
            delta = hadamard(delta, relu_grad(trace.pre[li]));
        }
        const Matrix& below = (l == 0) ? trace.input : trace.act[li - 1];
        grads.weights[li] = below.transpose() * delta;
        grads.biases[li] = delta.colwise().sum();
        if (l > 0) {
            delta = delta * model.weights[li].transpose();
        }
    }
}

Gradients zero_gradients(const MlpModel& model) {
    Gradients grads;
    for (std::size_t l = 0; l < model.specs.size(); ++l) {
        grads.weights.push_back(Matrix::Zero(model.specs[l].in_dim, model.specs[l].out_dim));
        grads.biases.push_back(Matrix::Zero(1, model.specs[l].out_dim));
    }
    return grads;
}

}  // namespace

Gradients backward(const MlpModel& model, const ForwardTrace& trace, const Matrix& output_grad) {
    if (output_grad.rows() != trace.output().rows() ||
        output_grad.cols() != trace.output().cols()) {
        throw ShapeError("backward: output_grad " + shape_str(output_grad) +
                         " does not match output " + shape_str(trace.output()));
    }
    Gradients grads = zero_gradients(model);
    backprop_from(model, trace, output_grad, model.num_layers() - 1, grads);
    return grads;
}

Gradients backward_from_penultimate(const MlpModel& model, const ForwardTrace& trace,
                                    const Matrix& penultimate_grad) {
    if (model.num_layers() < 2) {
        throw ConfigError("backward_from_penultimate: model needs at least two layers");
    }
    const Matrix& penult = trace.penultimate();
    if (penultimate_grad.rows() != penult.rows() || penultimate_grad.cols() != penult.cols()) {
        throw ShapeError("backward_from_penultimate: grad " + shape_str(penultimate_grad) +
                         " does not match penultimate " + shape_str(penult));
    }
    Gradients grads = zero_gradients(model);
    backprop_from(model, trace, penultimate_grad, model.num_layers() - 2, grads);
    return grads;
}

RmseLoss rmse_loss(const Matrix& pred, const Matrix& target) {
    if (pred.size() == 0) {
        throw DomainError("rmse_loss: empty input");
    }
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw ShapeError("rmse_loss: shape mismatch " + shape_str(pred) + " vs " +
                         shape_str(target));
    }
    const Matrix diff = pred - target;
    const double n = static_cast<double>(diff.size());
    const double loss = std::sqrt(diff.squaredNorm() / n);
    RmseLoss out;
    out.loss = loss;
    if (loss == 0.0) {
        out.grad = Matrix::Zero(pred.rows(), pred.cols());
    } else {
        out.grad = diff / (n * loss);
    }
    return out;
}

OptimizerState OptimizerState::sgd(double lr, double weight_decay) {
    OptimizerState opt;
    opt.kind = OptimizerKind::kSgd;
    opt.learning_rate = lr;
    opt.weight_decay = weight_decay;
    return opt;
}

OptimizerState OptimizerState::adam(double lr, double weight_decay, const MlpModel& model) {
    OptimizerState opt;
    opt.kind = OptimizerKind::kAdam;
    opt.learning_rate = lr;
    opt.weight_decay = weight_decay;
    for (std::size_t l = 0; l < model.specs.size(); ++l) {
        opt.m_weights.push_back(Matrix::Zero(model.specs[l].in_dim, model.specs[l].out_dim));
        opt.v_weights.push_back(Matrix::Zero(model.specs[l].in_dim, model.specs[l].out_dim));
        opt.m_biases.push_back(Matrix::Zero(1, model.specs[l].out_dim));
        opt.v_biases.push_back(Matrix::Zero(1, model.specs[l].out_dim));
    }
    return opt;
}

namespace {

void adam_step(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v,
               const OptimizerState& opt, double bias1, double bias2) {
    m = opt.beta1 * m + (1.0 - opt.beta1) * grad;
    v = opt.beta2 * v + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
    const Matrix m_hat = m / bias1;
    const Matrix v_hat = v / bias2;
    // decay is decoupled and uses the pre-update parameter
    const Matrix decay = (opt.learning_rate * opt.weight_decay) * param;
    param -= opt.learning_rate *
             (m_hat.array() / (v_hat.array().sqrt() + opt.epsilon)).matrix();
    param -= decay;
}

}  // namespace

void apply_update(MlpModel& model, const Gradients& grads, OptimizerState& opt) {
    const auto layers = static_cast<std::size_t>(model.num_layers());
    if (grads.weights.size() != layers || grads.biases.size() != layers) {
        throw ShapeError("apply_update: gradient layer count mismatch");
    }
    for (std::size_t l = 0; l < layers; ++l) {
        if (grads.weights[l].rows() != model.weights[l].rows() ||
            grads.weights[l].cols() != model.weights[l].cols() ||
            grads.biases[l].cols() != model.biases[l].cols()) {
            throw ShapeError("apply_update: gradient shape mismatch in layer " +
                             std::to_string(l));
        }
        if (!all_finite(grads.weights[l]) || !all_finite(grads.biases[l])) {
            throw NumericError("apply_update: non-finite gradient in layer " +
                               std::to_string(l));
        }
    }
    opt.step += 1;
    if (opt.kind == OptimizerKind::kSgd) {
        for (std::size_t l = 0; l < layers; ++l) {
            const Matrix w_decay = (opt.learning_rate * opt.weight_decay) * model.weights[l];
            const Matrix b_decay = (opt.learning_rate * opt.weight_decay) * model.biases[l];
            model.weights[l] -= opt.learning_rate * grads.weights[l];
            model.weights[l] -= w_decay;
            model.biases[l] -= opt.learning_rate * grads.biases[l];
            model.biases[l] -= b_decay;
        }
        return;
    }
    const double bias1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bias2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t l = 0; l < layers; ++l) {
        adam_step(model.weights[l], grads.weights[l], opt.m_weights[l], opt.v_weights[l], opt,
                  bias1, bias2);
        adam_step(model.biases[l], grads.biases[l], opt.m_biases[l], opt.v_biases[l], opt,
                  bias1, bias2);
    }
}

double grad_check(const MlpModel& model, const Matrix& batch, const Matrix& target) {
    const ForwardTrace trace = forward(model, batch);
    const RmseLoss base = rmse_loss(trace.output(), target);
    const Gradients analytic = backward(model, trace, base.grad);

    MlpModel probe = model;
    const double h = 1e-5;
    double max_rel = 0.0;
    auto probe_param = [&](Matrix& param, const Matrix& grad) {
        for (Index i = 0; i < param.rows(); ++i) {
            for (Index j = 0; j < param.cols(); ++j) {
                const double saved = param(i, j);
                param(i, j) = saved + h;
                const double up = rmse_loss(forward(probe, batch).output(), target).loss;
                param(i, j) = saved - h;
                const double down = rmse_loss(forward(probe, batch).output(), target).loss;
                param(i, j) = saved;
                const double fd = (up - down) / (2.0 * h);
                const double ga = grad(i, j);
                const double rel =
                    std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
                max_rel = std::max(max_rel, rel);
            }
        }
    };
    for (std::size_t l = 0; l < probe.weights.size(); ++l) {
        probe_param(probe.weights[l], analytic.weights[l]);
        probe_param(probe.biases[l], analytic.biases[l]);
    }
    return max_rel;
}

std::int64_t param_count(const std::vector<LayerSpec>& specs) {
    std::int64_t total = 0;
    for (const LayerSpec& spec : specs) {
        total += static_cast<std::int64_t>(spec.in_dim) * spec.out_dim + spec.out_dim;
    }
    return total;
}

Matrix flatten_params(const MlpModel& model) {
    Matrix flat(1, param_count(model.specs));
    Index pos = 0;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        const Matrix& w = model.weights[l];
        // row-major storage, so the flat copy is in row-major order
        flat.block(0, pos, 1, w.size()) =
            Eigen::Map<const Eigen::RowVectorXd>(w.data(), w.size());
        pos += w.size();
        const Matrix& b = model.biases[l];
        flat.block(0, pos, 1, b.size()) =
            Eigen::Map<const Eigen::RowVectorXd>(b.data(), b.size());
        pos += b.size();
    }
    return flat;
}

MlpModel unflatten_params(const std::vector<LayerSpec>& specs, const Matrix& flat) {
    validate_specs(specs);
    const std::int64_t expected = param_count(specs);
    if (flat.size() != expected) {
        throw ShapeError("unflatten_params: got " + std::to_string(flat.size()) +
                         " values, expected " + std::to_string(expected));
    }
    const Eigen::Map<const Eigen::RowVectorXd> v(flat.data(), flat.size());
    MlpModel model;
    model.specs = specs;
    Index pos = 0;
    for (const LayerSpec& spec : specs) {
        Matrix w(spec.in_dim, spec.out_dim);
        Eigen::Map<Eigen::RowVectorXd>(w.data(), w.size()) = v.segment(pos, w.size());
        pos += w.size();
        Matrix b(1, spec.out_dim);
        Eigen::Map<Eigen::RowVectorXd>(b.data(), b.size()) = v.segment(pos, b.size());
        pos += b.size();
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    return model;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "fedkd-model v1\n";
    out << "layers " << model.num_layers() << "\n";
    for (const LayerSpec& spec : model.specs) {
        out << "layer " << spec.in_dim << " " << spec.out_dim << " "
            << (spec.activation == Activation::kRelu ? "relu" : "identity") << "\n";
    }
    const Matrix flat = flatten_params(model);
    out << "params " << flat.size() << "\n";
    for (Index i = 0; i < flat.size(); ++i) {
        out << format_double(flat(0, i)) << "\n";
    }
    atomic_write_file(path, out.str());
}

MlpModel load_model(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    std::istringstream in(content);
    std::string line;
    long line_no = 0;
    auto next_line = [&]() -> std::string& {
        if (!std::getline(in, line)) {
            throw ParseError(path.string() + ": unexpected end of file after line " +
                             std::to_string(line_no));
        }
        ++line_no;
        return line;
    };

    if (next_line() != "fedkd-model v1") {
        throw ParseError(path.string() + ": missing 'fedkd-model v1' header");
    }
    auto header_fields = split(next_line(), ' ');
    if (header_fields.size() != 2 || header_fields[0] != "layers") {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected 'layers <L>'");
    }
    const auto num_layers = parse_int(header_fields[1], "layer count");
    std::vector<LayerSpec> specs;
    for (std::int64_t l = 0; l < num_layers; ++l) {
        auto fields = split(next_line(), ' ');
        if (fields.size() != 4 || fields[0] != "layer") {
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": expected 'layer <in> <out> <activation>'");
        }
        LayerSpec spec;
        spec.in_dim = static_cast<int>(parse_int(fields[1], "in_dim"));
        spec.out_dim = static_cast<int>(parse_int(fields[2], "out_dim"));
        if (fields[3] == "relu") {
            spec.activation = Activation::kRelu;
        } else if (fields[3] == "identity") {
            spec.activation = Activation::kIdentity;
        } else {
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": unknown activation '" + std::string(fields[3]) + "'");
        }
        specs.push_back(spec);
    }
    auto params_fields = split(next_line(), ' ');
    if (params_fields.size() != 2 || params_fields[0] != "params") {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected 'params <P>'");
    }
    const auto num_params = parse_int(params_fields[1], "param count");
    Matrix flat(1, num_params);
    for (std::int64_t i = 0; i < num_params; ++i) {
        flat(0, i) = parse_double(next_line(), "parameter " + std::to_string(i));
    }
    return unflatten_params(specs, flat);
}

}  // namespace fedkd
