#pragma once

// Multilayer perceptron for scalar regression with manual
// backpropagation. The forward pass captures the penultimate activation
// (the input to the final linear layer), which is both the entropy
// carrier and the distillation target. Models are plain values: copying
// one yields a fully independent model.

#include <filesystem>
#include <vector>

#include "fedkd/matrix.hpp"
#include "fedkd/rng.hpp"

namespace fedkd {

enum class Activation { kRelu, kIdentity };

struct LayerSpec {
    int in_dim = 0;
    int out_dim = 0;
    Activation activation = Activation::kRelu;
};

// Consecutive layers must chain, the final layer must be identity with
// out_dim == 1, and the layer before it (when present) must be relu so
// penultimate activations are nonnegative. Throws ConfigError.
void validate_specs(const std::vector<LayerSpec>& specs);

// Hidden relu layers of the given widths followed by an identity output
// layer of width 1.
std::vector<LayerSpec> make_regression_specs(int input_dim, const std::vector<int>& hidden);

struct MlpModel {
    std::vector<LayerSpec> specs;
    std::vector<Matrix> weights;  // per layer, (in_dim x out_dim)
    std::vector<Matrix> biases;   // per layer, (1 x out_dim)

    int num_layers() const { return static_cast<int>(specs.size()); }
};

struct ForwardTrace {
    Matrix input;
    std::vector<Matrix> pre;  // pre-activations per layer
    std::vector<Matrix> act;  // activations per layer

    const Matrix& output() const { return act.back(); }
    // Input to the final layer: the activation of layer L-2, or the batch
    // itself for a single-layer model.
    const Matrix& penultimate() const {
        return act.size() >= 2 ? act[act.size() - 2] : input;
    }
};

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
};

// He-normal weights (stddev sqrt(2 / in_dim)), zero biases.
MlpModel init_model(const std::vector<LayerSpec>& specs, SeededRng& rng);

ForwardTrace forward(const MlpModel& model, const Matrix& batch);

// Reverse-mode gradients of whatever scalar produced output_grad
// (= d loss / d output).
Gradients backward(const MlpModel& model, const ForwardTrace& trace, const Matrix& output_grad);

// Gradients when the loss is defined on the penultimate activation. The
// final layer receives zero gradients and is left untouched by updates.
Gradients backward_from_penultimate(const MlpModel& model, const ForwardTrace& trace,
                                    const Matrix& penultimate_grad);

struct RmseLoss {
    double loss = 0.0;
    Matrix grad;  // d loss / d pred; all zeros when loss == 0
};

// loss = sqrt(sum((pred - target)^2) / N) over all N elements.
RmseLoss rmse_loss(const Matrix& pred, const Matrix& target);

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::kSgd;
    double learning_rate = 0.01;
    double weight_decay = 0.0;  // decoupled: applied to the update, not the loss
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    std::vector<Matrix> m_weights, v_weights;  // adam first/second moments
    std::vector<Matrix> m_biases, v_biases;

    static OptimizerState sgd(double lr, double weight_decay = 0.0);
    static OptimizerState adam(double lr, double weight_decay, const MlpModel& model);
};

// In-place parameter update; increments opt.step. Throws NumericError
// naming the layer when a gradient entry is non-finite.
void apply_update(MlpModel& model, const Gradients& grads, OptimizerState& opt);

// Central finite differences (h = 1e-5) on every parameter against the
// analytic gradient of rmse_loss(forward(model, batch), target). Returns
// max over parameters of |ga - gf| / max(1e-8, |ga| + |gf|).
double grad_check(const MlpModel& model, const Matrix& batch, const Matrix& target);

std::int64_t param_count(const std::vector<LayerSpec>& specs);

// Flatten order: layer-major, weights (row-major) before biases.
Matrix flatten_params(const MlpModel& model);
MlpModel unflatten_params(const std::vector<LayerSpec>& specs, const Matrix& flat);

// Text checkpoint; reload is bit-exact. Format (one value per line after
// the header block):
//   fedkd-model v1
//   layers <L>
//   layer <in> <out> <relu|identity>   (x L)
//   params <P>
//   <P parameter values in flatten order>
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace fedkd
