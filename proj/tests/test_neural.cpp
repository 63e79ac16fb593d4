#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "xling/nn.hpp"

using namespace xling;

namespace {

FeedForwardNet random_net(const std::vector<std::size_t>& dims,
                          const std::vector<Activation>& acts, std::uint64_t seed) {
    auto net = make_net(dims, acts);
    std::mt19937_64 rng(seed);
    init_glorot(net, rng);
    for (auto& layer : net.layers)
        for (double& b : layer.bias) b = 0.1 * (2.0 * uniform01(rng) - 1.0);
    return net;
}

}  // namespace

TEST_CASE("identity single layer passes input through") {
    auto net = make_net({3, 3}, {Activation::identity});
    net.layers[0].weights = Matrix::identity(3);
    const std::vector<double> x{0.5, -1.25, 2.0};
    const auto cache = forward(net, x, Mode::infer);
    REQUIRE(cache.output == x);
}

TEST_CASE("zero dropout makes train and infer passes identical") {
    auto net = random_net({4, 6, 2}, {Activation::tanh, Activation::identity}, 3);
    std::mt19937_64 rng(1);
    const std::vector<double> x{0.2, -0.4, 0.8, 1.1};
    const auto train_out = forward(net, x, Mode::train, &rng).output;
    const auto infer_out = forward(net, x, Mode::infer).output;
    REQUIRE(train_out == infer_out);
}

TEST_CASE("inverted dropout preserves the expected output") {
    // dropout sits before the final identity layer, so the expectation over
    // masks equals the inference output exactly; biases keep the outputs
    // well away from zero so the 2% relative bound is meaningful
    auto net = random_net({4, 8, 2}, {Activation::tanh, Activation::identity}, 7);
    net.dropout_rate = 0.5;
    net.dropout_position = 1;
    net.layers[1].bias = {2.0, -2.5};
    const std::vector<double> x{0.9, -0.3, 0.5, 1.4};
    const auto infer_out = forward(net, x, Mode::infer).output;

    std::vector<double> mean(2, 0.0);
    const int trials = 10000;
    for (int seed = 0; seed < trials; ++seed) {
        const auto out = forward(net, x, Mode::train, static_cast<std::uint64_t>(seed)).output;
        for (std::size_t j = 0; j < 2; ++j) mean[j] += out[j];
    }
    for (std::size_t j = 0; j < 2; ++j) {
        mean[j] /= trials;
        REQUIRE(std::abs(mean[j] - infer_out[j]) <= 0.02 * std::abs(infer_out[j]));
    }
}

TEST_CASE("forward argument validation") {
    auto net = random_net({3, 2}, {Activation::identity}, 11);
    REQUIRE_THROWS_AS(forward(net, std::vector<double>{1.0}, Mode::infer), std::invalid_argument);
    const std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN(), 0.0};
    REQUIRE_THROWS_AS(forward(net, bad, Mode::infer), std::invalid_argument);
}

TEST_CASE("backward matches the closed-form least-squares gradient") {
    // single identity layer, squared-error loss L = sum_j (o_j - y_j)^2
    auto net = random_net({3, 2}, {Activation::identity}, 13);
    const std::vector<double> x{0.7, -1.2, 0.4};
    const std::vector<double> y{0.3, -0.5};
    const auto cache = forward(net, x, Mode::infer);
    std::vector<double> dL(2);
    for (std::size_t j = 0; j < 2; ++j) dL[j] = 2.0 * (cache.output[j] - y[j]);
    const auto grads = backward(net, cache, dL);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            REQUIRE(grads.d_weights[0](i, j) ==
                    Catch::Approx(x[i] * 2.0 * (cache.output[j] - y[j])).margin(1e-10));
    for (std::size_t j = 0; j < 2; ++j)
        REQUIRE(grads.d_bias[0][j] == Catch::Approx(dL[j]).margin(1e-12));
}

TEST_CASE("zero loss gradient yields zero parameter gradients") {
    auto net = random_net({3, 4, 2}, {Activation::relu, Activation::identity}, 17);
    const auto cache = forward(net, std::vector<double>{1.0, 2.0, 3.0}, Mode::infer);
    const auto grads = backward(net, cache, std::vector<double>{0.0, 0.0});
    for (const auto& dw : grads.d_weights)
        for (const double g : dw.data) REQUIRE(g == 0.0);
    for (const auto& db : grads.d_bias)
        for (const double g : db) REQUIRE(g == 0.0);
}

TEST_CASE("gradient check passes on random 3-layer nets for both losses") {
    std::mt19937_64 rng(19);
    for (int rep = 0; rep < 4; ++rep) {
        auto net = random_net({8, 16, 16, 2},
                              {Activation::tanh, Activation::relu, Activation::identity},
                              100 + rep);
        SECTION("softmax cross-entropy, net " + std::to_string(rep)) {
            std::vector<GradCheckSample> batch;
            for (int i = 0; i < 3; ++i) {
                GradCheckSample s;
                s.input_a.resize(8);
                for (double& v : s.input_a) v = normal01(rng);
                s.target_class = i % 2;
                batch.push_back(std::move(s));
            }
            REQUIRE(grad_check(net, batch, LossKind::softmax_cross_entropy) < 1e-4);
        }
        SECTION("cosine mse, net " + std::to_string(rep)) {
            std::vector<GradCheckSample> batch;
            for (int i = 0; i < 3; ++i) {
                GradCheckSample s;
                s.input_a.resize(8);
                s.input_b.resize(8);
                for (double& v : s.input_a) v = normal01(rng);
                for (double& v : s.input_b) v = normal01(rng);
                s.target_score = uniform01(rng);
                batch.push_back(std::move(s));
            }
            REQUIRE(grad_check(net, batch, LossKind::mse_of_cosine) < 1e-4);
        }
    }
}

TEST_CASE("finite differences are near-exact for a linear layer with squared error") {
    // quadratic loss in the parameters: the central difference is exact up
    // to rounding, so analytic and numeric gradients agree to ~1e-8
    auto net = random_net({3, 2}, {Activation::identity}, 23);
    const std::vector<double> x{0.4, -0.8, 1.5};
    const std::vector<double> y{1.0, -1.0};

    const auto loss_of = [&]() {
        const auto out = forward(net, x, Mode::infer).output;
        double s = 0.0;
        for (std::size_t j = 0; j < 2; ++j) s += (out[j] - y[j]) * (out[j] - y[j]);
        return s;
    };
    const auto cache = forward(net, x, Mode::infer);
    std::vector<double> dL(2);
    for (std::size_t j = 0; j < 2; ++j) dL[j] = 2.0 * (cache.output[j] - y[j]);
    const auto grads = backward(net, cache, dL);

    double max_rel = 0.0;
    const double eps = 1e-5;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            double& p = net.layers[0].weights(i, j);
            const double saved = p;
            p = saved + eps;
            const double up = loss_of();
            p = saved - eps;
            const double down = loss_of();
            p = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = grads.d_weights[0](i, j);
            max_rel = std::max(max_rel, std::abs(numeric - analytic) /
                                            std::max({std::abs(numeric), std::abs(analytic),
                                                      1e-12}));
        }
    }
    REQUIRE(max_rel < 1e-8);
}

TEST_CASE("grad_check refuses active dropout") {
    auto net = random_net({4, 4, 2}, {Activation::relu, Activation::identity}, 29);
    net.dropout_rate = 0.5;
    net.dropout_position = 1;
    std::vector<GradCheckSample> batch(1);
    batch[0].input_a = {1.0, 2.0, 3.0, 4.0};
    REQUIRE_THROWS_AS(grad_check(net, batch, LossKind::softmax_cross_entropy),
                      std::invalid_argument);
}

TEST_CASE("count_params matches the layer arithmetic") {
    SECTION("the 100-300-300-2 classifier has 121,202 parameters") {
        const auto net = make_net({100, 300, 300, 2},
                                  {Activation::relu, Activation::relu, Activation::identity});
        REQUIRE(count_params(net) == 121202);
    }
    SECTION("single 1x1 layer") {
        const auto net = make_net({1, 1}, {Activation::identity});
        REQUIRE(count_params(net) == 2);
    }
    SECTION("empty net") {
        FeedForwardNet net;
        REQUIRE(count_params(net) == 0);
    }
}

TEST_CASE("softmax is a strictly positive distribution") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> logits(5);
        for (double& v : logits) v = 40.0 * (uniform01(rng) - 0.5);
        const auto p = softmax(logits);
        double sum = 0.0;
        for (const double v : p) {
            REQUIRE(v > 0.0);
            sum += v;
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("train separates two Gaussian blobs") {
    std::mt19937_64 rng(37);
    std::vector<LabeledVector> data;
    for (int i = 0; i < 200; ++i) {
        LabeledVector sample;
        sample.target = i % 2;
        const double cx = sample.target == 0 ? -2.0 : 2.0;
        sample.input = {cx + 0.3 * normal01(rng), 0.3 * normal01(rng)};
        data.push_back(std::move(sample));
    }
    auto net = random_net({2, 8, 2}, {Activation::relu, Activation::identity}, 41);
    TrainSpec spec;
    spec.epochs = 3;
    spec.learning_rate = 0.05;
    spec.seed = 7;
    const auto result = train(net, data, spec);
    REQUIRE(result.loss_trace.size() == 3);

    std::size_t correct = 0;
    for (const auto& sample : data) {
        const auto out = forward(net, sample.input, Mode::infer).output;
        if ((out[1] > out[0] ? 1u : 0u) == sample.target) ++correct;
    }
    REQUIRE(static_cast<double>(correct) / data.size() >= 0.99);
}

TEST_CASE("training with zero epochs changes nothing") {
    auto net = random_net({3, 3, 2}, {Activation::tanh, Activation::identity}, 43);
    const auto before = net;
    TrainSpec spec;
    spec.epochs = 0;
    const auto result = train(net, {{{1.0, 2.0, 3.0}, 0}, {{0.0, 1.0, 0.0}, 1}}, spec);
    REQUIRE(result.loss_trace.empty());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        REQUIRE(net.layers[l].weights.data == before.layers[l].weights.data);
        REQUIRE(net.layers[l].bias == before.layers[l].bias);
    }
}

TEST_CASE("training is deterministic under a fixed seed") {
    std::mt19937_64 rng(47);
    std::vector<LabeledVector> data;
    for (int i = 0; i < 64; ++i)
        data.push_back({{normal01(rng), normal01(rng)}, static_cast<std::size_t>(i % 2)});

    TrainSpec spec;
    spec.epochs = 4;
    spec.seed = 99;
    auto net1 = random_net({2, 6, 2}, {Activation::relu, Activation::identity}, 53);
    auto net2 = net1;
    const auto r1 = train(net1, data, spec);
    const auto r2 = train(net2, data, spec);
    REQUIRE(r1.loss_trace == r2.loss_trace);
    for (std::size_t l = 0; l < net1.layers.size(); ++l)
        REQUIRE(net1.layers[l].weights.data == net2.layers[l].weights.data);
}

TEST_CASE("train rejects an empty dataset") {
    auto net = random_net({2, 2}, {Activation::identity}, 59);
    REQUIRE_THROWS_AS(train(net, {}, TrainSpec{}), std::invalid_argument);
}

TEST_CASE("networks round-trip through serialization") {
    testsupport::TempDir dir("net-io");
    auto net = random_net({5, 7, 3}, {Activation::relu, Activation::tanh}, 61);
    net.dropout_rate = 0.25;
    net.dropout_position = 1;
    save_net(net, dir.file("net"));
    const auto loaded = load_net(dir.file("net"));
    REQUIRE(loaded.layers.size() == net.layers.size());
    REQUIRE(loaded.dropout_rate == net.dropout_rate);
    REQUIRE(loaded.dropout_position == net.dropout_position);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        REQUIRE(loaded.layers[l].weights.data == net.layers[l].weights.data);
        REQUIRE(loaded.layers[l].bias == net.layers[l].bias);
        REQUIRE(loaded.layers[l].activation == net.layers[l].activation);
    }
}
