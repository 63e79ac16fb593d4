#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xling/matrix.hpp"
#include "xling/rng.hpp"
#include "xling/text_io.hpp"

namespace xling {

enum class Activation { identity, relu, tanh };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "identity";
}

inline Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation: " + name);
}

struct DenseLayer {
    Matrix weights;  // in_dim x out_dim, row-vector convention y = x W + b
    std::vector<double> bias;
    Activation activation = Activation::identity;

    std::size_t in_dim() const { return weights.rows; }
    std::size_t out_dim() const { return weights.cols; }
};

inline constexpr std::size_t kNoDropout = std::numeric_limits<std::size_t>::max();

struct FeedForwardNet {
    std::vector<DenseLayer> layers;
    double dropout_rate = 0.0;
    // Inverted dropout is applied to the input of layers[dropout_position]
    // in train mode; kNoDropout disables it.
    std::size_t dropout_position = kNoDropout;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    bool dropout_active() const {
        return dropout_rate > 0.0 && dropout_position != kNoDropout;
    }

    void validate() const {
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw std::invalid_argument("net: dropout_rate must lie in [0,1)");
        if (dropout_position != kNoDropout && dropout_position >= layers.size())
            throw std::invalid_argument("net: dropout_position out of range");
        for (std::size_t l = 0; l + 1 < layers.size(); ++l)
            if (layers[l].out_dim() != layers[l + 1].in_dim())
                throw std::invalid_argument("net: layer dimensions do not chain at layer " +
                                            std::to_string(l));
        for (const auto& layer : layers) {
            if (layer.bias.size() != layer.out_dim())
                throw std::invalid_argument("net: bias length != out_dim");
            for (double w : layer.weights.data)
                if (!std::isfinite(w)) throw std::invalid_argument("net: non-finite weight");
            for (double b : layer.bias)
                if (!std::isfinite(b)) throw std::invalid_argument("net: non-finite bias");
        }
    }
};

inline FeedForwardNet make_net(const std::vector<std::size_t>& dims,
                               const std::vector<Activation>& activations,
                               double dropout_rate = 0.0,
                               std::size_t dropout_position = kNoDropout) {
    if (dims.size() < 2) throw std::invalid_argument("make_net: need at least one layer");
    if (activations.size() != dims.size() - 1)
        throw std::invalid_argument("make_net: one activation per layer required");
    FeedForwardNet net;
    net.dropout_rate = dropout_rate;
    net.dropout_position = dropout_position;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.weights = Matrix(dims[l], dims[l + 1]);
        layer.bias.assign(dims[l + 1], 0.0);
        layer.activation = activations[l];
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

inline void init_glorot(FeedForwardNet& net, std::mt19937_64& rng) {
    for (auto& layer : net.layers) {
        const double limit =
            std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
        for (double& w : layer.weights.data) w = uniform_range(rng, -limit, limit);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
}

inline std::size_t count_params(const FeedForwardNet& net) {
    std::size_t n = 0;
    for (const auto& layer : net.layers)
        n += layer.in_dim() * layer.out_dim() + layer.out_dim();
    return n;
}

enum class Mode { train, infer };

struct ForwardCache {
    std::vector<std::vector<double>> layer_inputs;  // post-dropout input per layer
    std::vector<std::vector<double>> pre_activations;
    std::vector<double> dropout_scale;  // per-unit factor applied at dropout_position
    std::vector<double> output;
};

namespace detail {

inline double activate(double x, Activation a) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
    }
    return x;
}

inline double activate_grad(double pre, Activation a) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

}  // namespace detail

inline ForwardCache forward(const FeedForwardNet& net, std::span<const double> input, Mode mode,
                            std::mt19937_64* rng = nullptr) {
    if (net.layers.empty()) throw std::invalid_argument("forward: empty network");
    if (input.size() != net.input_dim())
        throw std::invalid_argument("forward: input length != first layer in_dim");
    for (double v : input)
        if (!std::isfinite(v)) throw std::invalid_argument("forward: non-finite input");

    ForwardCache cache;
    cache.layer_inputs.resize(net.layers.size());
    cache.pre_activations.resize(net.layers.size());
    std::vector<double> current(input.begin(), input.end());

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (mode == Mode::train && net.dropout_active() && l == net.dropout_position) {
            if (!rng) throw std::invalid_argument("forward: train-mode dropout requires an rng");
            cache.dropout_scale.resize(current.size());
            const double keep = 1.0 - net.dropout_rate;
            for (std::size_t i = 0; i < current.size(); ++i) {
                // inverted dropout: surviving units scale by 1/keep so the
                // expected activation matches inference
                const double scale = uniform01(*rng) >= net.dropout_rate ? 1.0 / keep : 0.0;
                cache.dropout_scale[i] = scale;
                current[i] *= scale;
            }
        }
        const auto& layer = net.layers[l];
        cache.layer_inputs[l] = current;
        std::vector<double> pre = apply_row(current, layer.weights);
        for (std::size_t j = 0; j < pre.size(); ++j) pre[j] += layer.bias[j];
        cache.pre_activations[l] = pre;
        current.resize(pre.size());
        for (std::size_t j = 0; j < pre.size(); ++j)
            current[j] = detail::activate(pre[j], layer.activation);
    }
    cache.output = current;
    return cache;
}

inline ForwardCache forward(const FeedForwardNet& net, std::span<const double> input, Mode mode,
                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return forward(net, input, mode, &rng);
}

struct NetGradients {
    std::vector<Matrix> d_weights;
    std::vector<std::vector<double>> d_bias;
    std::vector<double> d_input;

    static NetGradients zeros_like(const FeedForwardNet& net) {
        NetGradients g;
        for (const auto& layer : net.layers) {
            g.d_weights.emplace_back(layer.in_dim(), layer.out_dim());
            g.d_bias.emplace_back(layer.out_dim(), 0.0);
        }
        return g;
    }

    void add_scaled(const NetGradients& other, double scale) {
        for (std::size_t l = 0; l < d_weights.size(); ++l) {
            for (std::size_t i = 0; i < d_weights[l].data.size(); ++i)
                d_weights[l].data[i] += scale * other.d_weights[l].data[i];
            for (std::size_t i = 0; i < d_bias[l].size(); ++i)
                d_bias[l][i] += scale * other.d_bias[l][i];
        }
    }
};

// Exact analytic gradients for every weight and bias, given d(loss)/d(output).
inline NetGradients backward(const FeedForwardNet& net, const ForwardCache& cache,
                             std::span<const double> loss_gradient) {
    if (cache.layer_inputs.size() != net.layers.size())
        throw std::invalid_argument("backward: cache does not match network");
    if (loss_gradient.size() != net.output_dim())
        throw std::invalid_argument("backward: loss gradient length != output dim");

    NetGradients grads = NetGradients::zeros_like(net);
    std::vector<double> grad(loss_gradient.begin(), loss_gradient.end());

    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        const auto& pre = cache.pre_activations[l];
        const auto& in = cache.layer_inputs[l];
        if (in.size() != layer.in_dim() || pre.size() != layer.out_dim())
            throw std::invalid_argument("backward: stale cache shape at layer " +
                                        std::to_string(l));

        std::vector<double> g_pre(layer.out_dim());
        for (std::size_t j = 0; j < g_pre.size(); ++j)
            g_pre[j] = grad[j] * detail::activate_grad(pre[j], layer.activation);

        auto& dw = grads.d_weights[l];
        for (std::size_t i = 0; i < layer.in_dim(); ++i) {
            const double xi = in[i];
            if (xi != 0.0) {
                double* row = dw.data.data() + i * dw.cols;
                for (std::size_t j = 0; j < layer.out_dim(); ++j) row[j] += xi * g_pre[j];
            }
        }
        grads.d_bias[l] = g_pre;

        std::vector<double> g_in(layer.in_dim(), 0.0);
        for (std::size_t i = 0; i < layer.in_dim(); ++i) {
            const double* row = layer.weights.data.data() + i * layer.weights.cols;
            double s = 0.0;
            for (std::size_t j = 0; j < layer.out_dim(); ++j) s += row[j] * g_pre[j];
            g_in[i] = s;
        }
        if (!cache.dropout_scale.empty() && l == net.dropout_position)
            for (std::size_t i = 0; i < g_in.size(); ++i) g_in[i] *= cache.dropout_scale[i];
        grad = std::move(g_in);
    }
    grads.d_input = std::move(grad);
    return grads;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

enum class LossKind { softmax_cross_entropy, mse_of_cosine };

struct TrainSpec {
    LossKind loss = LossKind::softmax_cross_entropy;
    int epochs = 3;
    int batch_size = 32;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    }
};

inline std::vector<double> softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

struct LossGrad {
    double loss = 0.0;
    std::vector<double> d_output;
};

inline LossGrad softmax_cross_entropy(std::span<const double> logits, std::size_t target) {
    if (target >= logits.size())
        throw std::invalid_argument("softmax_cross_entropy: target class out of range");
    LossGrad lg;
    lg.d_output = softmax(logits);
    // clamp the log argument: probabilities are strictly positive but may
    // underflow for extreme logits
    lg.loss = -std::log(std::max(lg.d_output[target], 1e-300));
    lg.d_output[target] -= 1.0;
    return lg;
}

struct CosinePairGrad {
    double loss = 0.0;
    double cosine = 0.0;
    std::vector<double> d_a;
    std::vector<double> d_b;
};

// Squared error between cos(a, b) and a target value; gradients flow into
// both encodings. Zero-norm sides get cosine 0 and zero gradient.
inline CosinePairGrad cosine_mse(std::span<const double> a, std::span<const double> b,
                                 double target) {
    CosinePairGrad out;
    out.d_a.assign(a.size(), 0.0);
    out.d_b.assign(b.size(), 0.0);
    const double na2 = norm2(a), nb2 = norm2(b);
    if (na2 == 0.0 || nb2 == 0.0) {
        out.loss = target * target;
        return out;
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    const double c = dot(a, b) / (na * nb);
    out.cosine = c;
    const double diff = c - target;
    out.loss = diff * diff;
    const double dcos = 2.0 * diff;
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.d_a[i] = dcos * (b[i] / (na * nb) - c * a[i] / na2);
        out.d_b[i] = dcos * (a[i] / (na * nb) - c * b[i] / nb2);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training (classification) and gradient checking
// ---------------------------------------------------------------------------

struct LabeledVector {
    std::vector<double> input;
    std::size_t target = 0;
};

struct TrainResult {
    std::vector<double> loss_trace;  // mean loss per epoch
};

// Minibatch SGD with per-epoch shuffling. Deterministic under spec.seed.
inline TrainResult train(FeedForwardNet& net, const std::vector<LabeledVector>& dataset,
                         const TrainSpec& spec) {
    spec.validate();
    net.validate();
    if (spec.loss != LossKind::softmax_cross_entropy)
        throw std::invalid_argument("train: dataset of labeled vectors requires "
                                    "softmax_cross_entropy");
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

    TrainResult result;
    std::mt19937_64 rng(spec.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        shuffle_inplace(order, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(spec.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
            NetGradients batch = NetGradients::zeros_like(net);
            for (std::size_t i = start; i < end; ++i) {
                const auto& sample = dataset[order[i]];
                const auto cache = forward(net, sample.input, Mode::train, &rng);
                const auto lg = softmax_cross_entropy(cache.output, sample.target);
                epoch_loss += lg.loss;
                batch.add_scaled(backward(net, cache, lg.d_output), 1.0);
            }
            const double step = spec.learning_rate / static_cast<double>(end - start);
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                auto& layer = net.layers[l];
                for (std::size_t i = 0; i < layer.weights.data.size(); ++i)
                    layer.weights.data[i] -= step * batch.d_weights[l].data[i];
                for (std::size_t i = 0; i < layer.bias.size(); ++i)
                    layer.bias[i] -= step * batch.d_bias[l][i];
            }
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    return result;
}

// One gradient-check sample; which fields matter depends on the loss kind.
struct GradCheckSample {
    std::vector<double> input_a;
    std::vector<double> input_b;   // cosine loss only
    std::size_t target_class = 0;  // softmax loss only
    double target_score = 0.0;     // cosine loss only
};

namespace detail {

inline double total_loss(const FeedForwardNet& net, const std::vector<GradCheckSample>& batch,
                         LossKind loss) {
    double total = 0.0;
    for (const auto& s : batch) {
        if (loss == LossKind::softmax_cross_entropy) {
            const auto cache = forward(net, s.input_a, Mode::infer);
            total += softmax_cross_entropy(cache.output, s.target_class).loss;
        } else {
            const auto ca = forward(net, s.input_a, Mode::infer);
            const auto cb = forward(net, s.input_b, Mode::infer);
            total += cosine_mse(ca.output, cb.output, s.target_score).loss;
        }
    }
    return total;
}

}  // namespace detail

// Central finite differences over every parameter against the analytic
// gradients; returns the largest relative error. Dropout is a random mask,
// not a differentiable function, so checking demands it be disabled.
inline double grad_check(FeedForwardNet& net, const std::vector<GradCheckSample>& batch,
                         LossKind loss, double epsilon = 1e-5) {
    net.validate();
    if (net.dropout_active())
        throw std::invalid_argument("grad_check: disable dropout before checking");
    if (batch.empty()) throw std::invalid_argument("grad_check: empty batch");

    NetGradients analytic = NetGradients::zeros_like(net);
    for (const auto& s : batch) {
        if (loss == LossKind::softmax_cross_entropy) {
            const auto cache = forward(net, s.input_a, Mode::infer);
            const auto lg = softmax_cross_entropy(cache.output, s.target_class);
            analytic.add_scaled(backward(net, cache, lg.d_output), 1.0);
        } else {
            const auto ca = forward(net, s.input_a, Mode::infer);
            const auto cb = forward(net, s.input_b, Mode::infer);
            const auto pg = cosine_mse(ca.output, cb.output, s.target_score);
            analytic.add_scaled(backward(net, ca, pg.d_a), 1.0);
            analytic.add_scaled(backward(net, cb, pg.d_b), 1.0);
        }
    }

    double max_rel = 0.0;
    const auto check_param = [&](double& param, double g_analytic) {
        const double saved = param;
        param = saved + epsilon;
        const double up = detail::total_loss(net, batch, loss);
        param = saved - epsilon;
        const double down = detail::total_loss(net, batch, loss);
        param = saved;
        const double g_numeric = (up - down) / (2.0 * epsilon);
        const double rel = std::abs(g_analytic - g_numeric) /
                           std::max({std::abs(g_analytic), std::abs(g_numeric), 1e-12});
        max_rel = std::max(max_rel, rel);
    };

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        for (std::size_t i = 0; i < layer.weights.data.size(); ++i)
            check_param(layer.weights.data[i], analytic.d_weights[l].data[i]);
        for (std::size_t i = 0; i < layer.bias.size(); ++i)
            check_param(layer.bias[i], analytic.d_bias[l][i]);
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// Serialization: JSON manifest + matrix blocks in the shared text format
// ---------------------------------------------------------------------------

inline void save_net(const FeedForwardNet& net, const std::filesystem::path& basename) {
    nlohmann::json j;
    j["dropout_rate"] = net.dropout_rate;
    j["dropout_position"] = net.dropout_position == kNoDropout
                                ? nlohmann::json(nullptr)
                                : nlohmann::json(net.dropout_position);
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& layer : net.layers) {
        layers.push_back({{"in", layer.in_dim()},
                          {"out", layer.out_dim()},
                          {"activation", activation_name(layer.activation)}});
    }
    atomic_write(basename.string() + ".json", j.dump(2) + "\n");

    std::string blocks;
    for (const auto& layer : net.layers) {
        write_matrix(blocks, layer.weights);
        Matrix bias(1, layer.out_dim());
        std::copy(layer.bias.begin(), layer.bias.end(), bias.data.begin());
        write_matrix(blocks, bias);
    }
    atomic_write(basename.string() + ".params.txt", blocks);
}

inline FeedForwardNet load_net(const std::filesystem::path& basename) {
    const auto j = nlohmann::json::parse(read_file(basename.string() + ".json"));
    FeedForwardNet net;
    net.dropout_rate = j.at("dropout_rate").get<double>();
    net.dropout_position = j.at("dropout_position").is_null()
                               ? kNoDropout
                               : j.at("dropout_position").get<std::size_t>();

    const std::string params = read_file(basename.string() + ".params.txt");
    const auto lines = split_lines(params);
    std::size_t pos = 0;
    for (const auto& lj : j.at("layers")) {
        DenseLayer layer;
        layer.activation = activation_from_name(lj.at("activation").get<std::string>());
        layer.weights = read_matrix(lines, pos, basename.string() + ".params.txt");
        const Matrix bias = read_matrix(lines, pos, basename.string() + ".params.txt");
        if (layer.weights.rows != lj.at("in").get<std::size_t>() ||
            layer.weights.cols != lj.at("out").get<std::size_t>() || bias.rows != 1 ||
            bias.cols != layer.weights.cols)
            throw parse_error(basename.string() + ": parameter blocks disagree with manifest");
        layer.bias = bias.data;
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

}  // namespace xling
