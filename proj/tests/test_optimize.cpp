#include <gtest/gtest.h>

#include <set>

#include "ignet/optimize.hpp"
#include "test_util.hpp"

using namespace ignet;
using ignet::testing::random_map;

namespace {

Network single_weight(double w, bool learn_bias = false)
{
    LayerSpec spec = LayerSpec::dense(1);
    spec.learn_biases(learn_bias);
    Network net = build_network({spec}, Loss::MSE, {1, 1, 1});
    net.layers[0].bank.weights = {w};
    return net;
}

Gradients constant_gradient(const Network& net, double g)
{
    Gradients grads = Gradients::zeros_like(net);
    for (auto& l : grads.layers) {
        std::fill(l.weights.begin(), l.weights.end(), g);
        std::fill(l.biases.begin(), l.biases.end(), g);
    }
    return grads;
}

std::vector<std::vector<double>> trajectory(OptimizerKind kind, double momentum, std::uint64_t seed)
{
    Rng rng(seed);
    Network net = build_network(shallow_preset(2, false, 2, 3), Loss::MSE, {1, 6, 6});
    ignet::testing::randomize(net, rng);
    OptimizerConfig config;
    config.kind = kind;
    config.momentum = momentum;
    config.learning_rate = 0.05;
    OptimizerState state = OptimizerState::zeros_like(net);
    std::vector<std::vector<double>> path;
    for (int s = 0; s < 20; ++s) {
        const FeatureMap x = random_map(net.input_shape, rng);
        step(net, backward(net, forward(net, x), std::vector<double>{0.5, -0.5}), state, config);
        path.push_back(net.layers[1].bank.weights);
        path.push_back(net.layers[0].bank.weights);
    }
    return path;
}

} // namespace

TEST(Step, PlainSingleStep)
{
    Network net = single_weight(1.0);
    OptimizerState state = OptimizerState::zeros_like(net);
    OptimizerConfig config;
    config.learning_rate = 0.1;
    step(net, constant_gradient(net, 0.5), state, config);
    EXPECT_DOUBLE_EQ(net.layers[0].bank.weights[0], 0.95);
}

TEST(Step, MomentumHandIteration)
{
    Network net = single_weight(0.0);
    OptimizerState state = OptimizerState::zeros_like(net);
    OptimizerConfig config;
    config.kind = OptimizerKind::Momentum;
    config.learning_rate = 0.1;
    config.momentum = 0.9;
    step(net, constant_gradient(net, 1.0), state, config);
    EXPECT_DOUBLE_EQ(net.layers[0].bank.weights[0], -0.1);
    step(net, constant_gradient(net, 1.0), state, config);
    EXPECT_DOUBLE_EQ(state.velocity[0].weights[0], -0.19);
    EXPECT_DOUBLE_EQ(net.layers[0].bank.weights[0], -0.29);
}

TEST(Step, NagHandIteration)
{
    Network net = single_weight(0.0);
    OptimizerState state = OptimizerState::zeros_like(net);
    OptimizerConfig config;
    config.kind = OptimizerKind::Nag;
    config.learning_rate = 0.1;
    config.momentum = 0.9;
    step(net, constant_gradient(net, 1.0), state, config);
    // v = -0.1, w = 0.9 * -0.1 - 0.1
    EXPECT_DOUBLE_EQ(net.layers[0].bank.weights[0], -0.19);
}

TEST(Step, ZeroMomentumReproducesPlain)
{
    const auto plain = trajectory(OptimizerKind::Plain, 0.9, 5);
    EXPECT_EQ(trajectory(OptimizerKind::Momentum, 0.0, 5), plain);
    EXPECT_EQ(trajectory(OptimizerKind::Nag, 0.0, 5), plain);
    EXPECT_NE(trajectory(OptimizerKind::Momentum, 0.5, 5), plain);
}

TEST(Step, NonLearningBiasesAndFrozenWeightsStay)
{
    Network net = build_network({LayerSpec::conv(2, 2, 2), LayerSpec::dense(2).learn_biases()}, Loss::MSE, {1, 4, 4});
    Rng rng(6);
    ignet::testing::randomize(net, rng);
    const Network init = net;
    FreezeMasks masks(net.layers.size());
    masks[1] = WeightMask(net.layers[1].bank.weight_count());
    masks[1].selected[0] = 1;
    masks[1].selected[3] = 1;
    OptimizerState state = OptimizerState::zeros_like(net);
    OptimizerConfig config;
    config.kind = OptimizerKind::Nag;
    for (int s = 0; s < 1000; ++s)
        step(net, constant_gradient(net, 0.01 * (s % 7 - 3)), state, config, masks);
    EXPECT_EQ(net.layers[0].bank.biases, init.layers[0].bank.biases);
    EXPECT_NE(net.layers[1].bank.biases, init.layers[1].bank.biases);
    EXPECT_EQ(net.layers[1].bank.weights[0], init.layers[1].bank.weights[0]);
    EXPECT_EQ(net.layers[1].bank.weights[3], init.layers[1].bank.weights[3]);
    EXPECT_NE(net.layers[1].bank.weights[1], init.layers[1].bank.weights[1]);
    EXPECT_EQ(state.velocity[1].weights[0], 0.0);
    EXPECT_EQ(state.velocity[0].biases[0], 0.0);
}

TEST(Step, ShapeMismatchRejected)
{
    Network net = single_weight(1.0);
    Network other = build_network({LayerSpec::dense(2)}, Loss::MSE, {1, 1, 1});
    OptimizerState state = OptimizerState::zeros_like(net);
    EXPECT_THROW(step(net, Gradients::zeros_like(other), state, {}), ShapeError);
    EXPECT_THROW(step(net, Gradients::zeros_like(net), state, {}, FreezeMasks(3)), ShapeError);
}

TEST(Step, PlainStepDecreasesConvexLoss)
{
    // Loss w^2 has curvature 2; any lr below 1/2 must decrease it.
    for (double lr : {0.01, 0.1, 0.3, 0.49}) {
        Network net = single_weight(2.0);
        const FeatureMap x({1, 1, 1}, {1.0});
        const std::vector<double> target{0.0};
        const double before = sample_loss(net, x, target);
        OptimizerState state = OptimizerState::zeros_like(net);
        OptimizerConfig config;
        config.learning_rate = lr;
        step(net, backward(net, forward(net, x), target), state, config);
        EXPECT_LT(sample_loss(net, x, target), before);
    }
}

TEST(Config, Validation)
{
    OptimizerConfig c;
    EXPECT_EQ(c.batch_size, 32u);
    EXPECT_NO_THROW(c.validate());
    c.momentum = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.momentum = 0.5;
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.batch_size = 1;
    c.learning_rate = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Minibatch, PartitionArithmetic)
{
    Rng rng(7);
    const auto batches = minibatch_iter(100, 32, rng);
    ASSERT_EQ(batches.size(), 4u);
    EXPECT_EQ(batches[0].size(), 32u);
    EXPECT_EQ(batches[3].size(), 4u);
    std::set<std::size_t> seen;
    for (const auto& b : batches)
        seen.insert(b.begin(), b.end());
    EXPECT_EQ(seen.size(), 100u);
    EXPECT_EQ(*seen.rbegin(), 99u);
    EXPECT_EQ(minibatch_iter(10, 64, rng).size(), 1u);
    EXPECT_THROW(minibatch_iter(0, 4, rng), DataError);
}

TEST(Minibatch, SeededReplay)
{
    Rng a(8), b(8);
    for (int epoch = 0; epoch < 2; ++epoch)
        EXPECT_EQ(minibatch_iter(50, 8, a), minibatch_iter(50, 8, b));
}

TEST(Gradients, BatchGradientIsMeanOfSamples)
{
    Network net = build_network(shallow_preset(2, false, 2, 3), Loss::MSE, {1, 6, 6});
    Rng rng(9);
    ignet::testing::randomize(net, rng);
    std::vector<Gradients> per;
    for (int i = 0; i < 7; ++i)
        per.push_back(backward(net, forward(net, random_map({1, 6, 6}, rng)), std::vector<double>{1.0, 0.0}));
    const Gradients mean = mean_gradient(net, per);
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        for (std::size_t i = 0; i < mean.layers[l].weights.size(); ++i) {
            double sum = 0.0;
            for (const auto& g : per)
                sum += g.layers[l].weights[i];
            EXPECT_NEAR(mean.layers[l].weights[i], sum / 7.0, 1e-12 * std::max(1.0, std::abs(sum)));
        }
}
