#include "slicekit/classify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slicekit::classify {

const char* activation_name(Activation a) { return a == Activation::Sigmoid ? "sigmoid" : "relu"; }

const char* head_name(Head h) { return h == Head::Softmax ? "softmax" : "regression"; }

void MlpSpec::validate() const {
    if (input_dim == 0 || outputs == 0) {
        throw std::invalid_argument("MlpSpec: input and output sizes must be positive");
    }
    if (hidden.size() < 2) {
        throw std::invalid_argument("MlpSpec: at least two hidden layers are required");
    }
    for (const std::size_t h : hidden) {
        if (h == 0) {
            throw std::invalid_argument("MlpSpec: hidden layer sizes must be positive");
        }
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw std::invalid_argument("MlpSpec: dropout rate must lie in [0, 1)");
    }
    if (head == Head::Softmax && outputs < 1) {
        throw std::invalid_argument("MlpSpec: softmax head needs at least one class");
    }
}

void MlpModel::validate() const {
    spec.validate();
    if (layers.size() != spec.hidden.size() + 1) {
        throw std::invalid_argument("MlpModel: layer count does not match MlpSpec");
    }
    std::size_t in = spec.input_dim;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::size_t out = l < spec.hidden.size() ? spec.hidden[l] : spec.outputs;
        const Layer& layer = layers[l];
        if (static_cast<std::size_t>(layer.weights.rows()) != in ||
            static_cast<std::size_t>(layer.weights.cols()) != out ||
            static_cast<std::size_t>(layer.bias.size()) != out) {
            throw std::invalid_argument("MlpModel: layer " + std::to_string(l) + " has the wrong shape");
        }
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
            throw std::invalid_argument("MlpModel: non-finite parameters");
        }
        in = out;
    }
    if (static_cast<std::size_t>(input_mean.size()) != spec.input_dim ||
        static_cast<std::size_t>(input_scale.size()) != spec.input_dim) {
        throw std::invalid_argument("MlpModel: normalization size does not match the input");
    }
    if (labels.size() != spec.outputs) {
        throw std::invalid_argument("MlpModel: label count does not match the outputs");
    }
}

MlpModel init_model(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    MlpModel model;
    model.spec = spec;
    Rng rng(derive_seed(seed, "init"));
    std::size_t in = spec.input_dim;
    for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
        const std::size_t out = l < spec.hidden.size() ? spec.hidden[l] : spec.outputs;
        Layer layer;
        layer.weights.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
        const double limit = std::sqrt(3.0 / static_cast<double>(in));
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
                layer.weights(r, c) = rng.uniform(-limit, limit);
            }
        }
        layer.bias = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(out));
        model.layers.push_back(std::move(layer));
        in = out;
    }
    model.input_mean = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(spec.input_dim));
    model.input_scale = Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(spec.input_dim));
    if (spec.head == Head::Regression) {
        model.target_mean = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(spec.outputs));
        model.target_scale = Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(spec.outputs));
    }
    for (std::size_t i = 0; i < spec.outputs; ++i) {
        model.labels.push_back("output" + std::to_string(i));
    }
    model.training.seed = seed;
    return model;
}

namespace {

struct ForwardCache {
    std::vector<Eigen::MatrixXd> activations;  // input, then each hidden output (after dropout)
    std::vector<Eigen::MatrixXd> pre;          // pre-activations of hidden layers
    Eigen::MatrixXd dropout_mask;              // empty when no dropout was applied
    std::size_t dropout_layer = 0;             // index into activations that was masked
    Eigen::MatrixXd output;
};

void activate(Activation a, const Eigen::MatrixXd& z, Eigen::MatrixXd& out) {
    if (a == Activation::Sigmoid) {
        out = (1.0 + (-z.array()).exp()).inverse().matrix();
    } else {
        out = z.cwiseMax(0.0);
    }
}

void softmax_rows(Eigen::MatrixXd& z) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double top = z.row(r).maxCoeff();
        z.row(r) = (z.row(r).array() - top).exp().matrix();
        z.row(r) /= z.row(r).sum();
    }
}

void run_forward(const MlpModel& model, const Eigen::MatrixXd& x, Mode mode, Rng* rng, ForwardCache& cache) {
    if (static_cast<std::size_t>(x.cols()) != model.spec.input_dim) {
        throw std::invalid_argument("forward: expected " + std::to_string(model.spec.input_dim) + " features, got " +
                                    std::to_string(x.cols()));
    }
    const std::size_t hidden = model.spec.hidden.size();
    // Dropout sits on the input of the last hidden layer.
    const std::size_t drop_at = hidden - 1;
    const bool use_dropout = mode == Mode::Train && model.spec.dropout_rate > 0.0;
    if (use_dropout && rng == nullptr) {
        throw std::invalid_argument("forward: train mode with dropout needs a random source");
    }
    cache.activations.assign(1, x);
    cache.pre.clear();
    cache.dropout_mask.resize(0, 0);
    for (std::size_t l = 0; l < hidden; ++l) {
        Eigen::MatrixXd input = cache.activations.back();
        if (use_dropout && l == drop_at) {
            const double keep = 1.0 - model.spec.dropout_rate;
            Eigen::MatrixXd mask(input.rows(), input.cols());
            for (Eigen::Index r = 0; r < mask.rows(); ++r) {
                for (Eigen::Index c = 0; c < mask.cols(); ++c) {
                    mask(r, c) = rng->uniform() < keep ? 1.0 / keep : 0.0;
                }
            }
            cache.activations.back() = input.cwiseProduct(mask);
            cache.dropout_mask = std::move(mask);
            cache.dropout_layer = cache.activations.size() - 1;
            input = cache.activations.back();
        }
        Eigen::MatrixXd z = input * model.layers[l].weights;
        z.rowwise() += model.layers[l].bias;
        Eigen::MatrixXd a;
        activate(model.spec.hidden_activation, z, a);
        cache.pre.push_back(std::move(z));
        cache.activations.push_back(std::move(a));
    }
    Eigen::MatrixXd out = cache.activations.back() * model.layers.back().weights;
    out.rowwise() += model.layers.back().bias;
    if (model.spec.head == Head::Softmax) {
        softmax_rows(out);
    }
    cache.output = std::move(out);
}

}  // namespace

Eigen::MatrixXd forward_standardized(const MlpModel& model, const Eigen::MatrixXd& x, Mode mode, Rng* rng) {
    ForwardCache cache;
    run_forward(model, x, mode, rng, cache);
    return cache.output;
}

Eigen::VectorXd forward(const MlpModel& model, std::span<const double> features, Mode mode, Rng* rng) {
    if (features.size() != model.spec.input_dim) {
        throw std::invalid_argument("forward: expected " + std::to_string(model.spec.input_dim) + " features, got " +
                                    std::to_string(features.size()));
    }
    Eigen::MatrixXd x(1, static_cast<Eigen::Index>(features.size()));
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        x(0, c) = (features[i] - model.input_mean(c)) / model.input_scale(c);
    }
    Eigen::MatrixXd out = forward_standardized(model, x, mode, rng);
    if (model.spec.head == Head::Regression) {
        out = (out.array().rowwise() * model.target_scale.array()).matrix();
        out.rowwise() += model.target_mean;
    }
    return out.row(0).transpose();
}

LossAndGradients loss_and_gradients(const MlpModel& model, const Batch& batch, Rng* rng) {
    const auto n = batch.x.rows();
    if (n == 0) {
        throw std::invalid_argument("loss_and_gradients: empty batch");
    }
    ForwardCache cache;
    run_forward(model, batch.x, rng != nullptr ? Mode::Train : Mode::Infer, rng, cache);
    const Eigen::MatrixXd& out = cache.output;

    LossAndGradients result;
    Eigen::MatrixXd delta;
    if (model.spec.head == Head::Softmax) {
        if (static_cast<Eigen::Index>(batch.labels.size()) != n) {
            throw std::invalid_argument("loss_and_gradients: label count does not match the batch");
        }
        delta = out;
        double loss = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) {
            const int y = batch.labels[static_cast<std::size_t>(r)];
            if (y < 0 || static_cast<std::size_t>(y) >= model.spec.outputs) {
                throw std::invalid_argument("loss_and_gradients: label index " + std::to_string(y) + " out of range");
            }
            loss -= std::log(std::max(out(r, y), 1e-300));
            delta(r, y) -= 1.0;
        }
        result.loss = loss / static_cast<double>(n);
        delta /= static_cast<double>(n);
    } else {
        if (batch.targets.rows() != n || batch.targets.cols() != out.cols()) {
            throw std::invalid_argument("loss_and_gradients: target shape does not match the batch");
        }
        const Eigen::MatrixXd diff = out - batch.targets;
        const double count = static_cast<double>(diff.size());
        result.loss = diff.squaredNorm() / count;
        delta = 2.0 * diff / count;
    }

    const std::size_t hidden = model.spec.hidden.size();
    result.grads.layers.resize(hidden + 1);
    for (std::size_t l = hidden + 1; l-- > 0;) {
        const Eigen::MatrixXd& input = cache.activations[l];
        Layer& g = result.grads.layers[l];
        g.weights = input.transpose() * delta;
        g.bias = delta.colwise().sum();
        if (l == 0) {
            break;
        }
        Eigen::MatrixXd da = delta * model.layers[l].weights.transpose();
        // activations[l] is the output of hidden layer l-1, possibly masked.
        if (cache.dropout_mask.size() > 0 && cache.dropout_layer == l) {
            da = da.cwiseProduct(cache.dropout_mask);
        }
        const Eigen::MatrixXd& z = cache.pre[l - 1];
        if (model.spec.hidden_activation == Activation::Sigmoid) {
            const Eigen::ArrayXXd s = (1.0 + (-z.array()).exp()).inverse();
            delta = (da.array() * s * (1.0 - s)).matrix();
        } else {
            delta = (da.array() * (z.array() > 0.0).cast<double>()).matrix();
        }
    }
    return result;
}

AdamState AdamState::for_model(const MlpModel& model) {
    AdamState s;
    for (const Layer& l : model.layers) {
        s.m.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                       Eigen::RowVectorXd::Zero(l.bias.size())});
    }
    s.v = s.m;
    return s;
}

void adam_step(std::vector<Layer>& params, const Gradients& grads, AdamState& state) {
    if (grads.layers.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw std::invalid_argument("adam_step: parameter, gradient and state shapes differ");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        if (p.rows() != g.rows() || p.cols() != g.cols()) {
            throw std::invalid_argument("adam_step: gradient shape mismatch");
        }
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        p.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
    };
    for (std::size_t l = 0; l < params.size(); ++l) {
        update(params[l].weights, grads.layers[l].weights, state.m[l].weights, state.v[l].weights);
        update(params[l].bias, grads.layers[l].bias, state.m[l].bias, state.v[l].bias);
    }
}

}  // namespace slicekit::classify
