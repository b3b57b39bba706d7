#include "tabattack/model.hpp"

#include <cstdio>
#include <random>

#include "doctest.h"
#include "test_helpers.hpp"

using namespace tabattack;
using helpers::vec;

namespace {

Classifier random_model(const std::vector<int>& dims, std::uint64_t seed, double scale_w = 0.8) {
    Classifier m = Classifier::make(dims);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale_w);
    for (auto& w : m.weights) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = normal(rng);
        }
    }
    for (auto& b : m.biases) {
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.1 * normal(rng);
    }
    m.scaler.min = Eigen::VectorXd::Zero(dims.front());
    m.scaler.max = Eigen::VectorXd::Ones(dims.front());
    return m;
}

ConstraintSet empty_set() { return ConstraintSet({}, {}, 1e-6); }

}  // namespace

TEST_CASE("forward: zero-weight model gives uniform probabilities") {
    Classifier m = Classifier::make({3, 8, 4});
    m.scaler.min = Eigen::VectorXd::Zero(3);
    m.scaler.max = Eigen::VectorXd::Ones(3);
    Eigen::VectorXd probs = forward(m, vec({0.3, 0.1, 0.9}));
    for (int c = 0; c < 4; ++c) CHECK(probs[c] == doctest::Approx(0.25));
}

TEST_CASE("forward: probabilities sum to one") {
    Classifier m = random_model({5, 16, 8, 3}, 1);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd x(5);
        for (int j = 0; j < 5; ++j) x[j] = unif(rng);
        Eigen::VectorXd probs = forward(m, x);
        CHECK(probs.sum() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(probs.minCoeff() >= 0.0);
    }
}

TEST_CASE("forward: single-logit dominance matches the closed form") {
    // one linear layer producing logits (10, 0) at x = (1)
    Classifier m = Classifier::make({1, 2});
    m.weights[0] << 10.0, 0.0;
    m.scaler.min = vec({0.0});
    m.scaler.max = vec({1.0});
    Eigen::VectorXd probs = forward(m, vec({1.0}));
    CHECK(probs[0] == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-12));
}

TEST_CASE("forward: adding a constant to all logits leaves probs unchanged") {
    Classifier m = random_model({4, 8, 2}, 3);
    Classifier shifted = m;
    shifted.biases.back().array() += 7.5;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXd x(4);
        for (int j = 0; j < 4; ++j) x[j] = unif(rng);
        CHECK((forward(m, x) - forward(shifted, x)).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("attack_loss: empty constraint set reduces to cross-entropy") {
    Classifier m = random_model({4, 8, 2}, 5);
    Eigen::VectorXd x = vec({0.2, 0.4, 0.6, 0.8});
    auto omega = empty_set();
    LossBreakdown b = attack_loss(m, x, x, 1, omega);
    CHECK(b.penalty_sum == 0.0);
    CHECK(b.total == b.task_loss);
    CHECK(b.task_loss == doctest::Approx(-std::log(forward(m, x)[1])));
}

TEST_CASE("attack_loss_and_grad: strictly satisfied constraints leave the task gradient") {
    Classifier m = random_model({4, 8, 2}, 6);
    auto specs = helpers::plain_specs(4, 0, 1);
    auto omega = parse_constraints("f1 <= f2", specs);
    Eigen::VectorXd x = vec({0.1, 0.9, 0.5, 0.5});
    auto [b, grad] = attack_loss_and_grad(m, x, x, 0, omega);
    CHECK(b.penalty_sum == 0.0);
    CHECK((grad - input_gradient(m, x, 0)).norm() == 0.0);
}

TEST_CASE("attack_loss_and_grad: LossBreakdown invariant total = task - penalty") {
    Classifier m = random_model({4, 8, 2}, 7);
    auto specs = helpers::plain_specs(4, 0, 1);
    auto omega = parse_constraints("f1 <= f2\nf3 = f4", specs);
    Eigen::VectorXd x = vec({0.9, 0.1, 0.5, 0.2});
    LossBreakdown b = attack_loss(m, x, x, 1, omega);
    CHECK(b.total == b.task_loss - b.penalty_sum);
    CHECK(b.penalty_sum > 0.0);
}

TEST_CASE("attack gradient matches central differences on 100 random points") {
    // non-identity scaler to exercise the unscale chain rule
    Classifier m = random_model({4, 16, 8, 2}, 8);
    m.scaler.min = vec({-1.0, 0.0, 2.0, -3.0});
    m.scaler.max = vec({1.0, 5.0, 4.0, 3.0});
    std::vector<FeatureSpec> specs = helpers::plain_specs(4, -10, 10);
    auto omega = parse_constraints("f1 <= f2\nf3 = f1 + f2\nf4 in {0, 1}", specs);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    int accepted = 0;
    while (accepted < 100) {
        Eigen::VectorXd x(4), x_orig(4);
        for (int j = 0; j < 4; ++j) {
            x[j] = unif(rng);
            x_orig[j] = unif(rng);
        }
        int y = accepted % 2;
        Eigen::VectorXd xo = unscale(x, m.scaler);
        // keep clear of hinge kinks and membership ties in original units
        if (std::abs(xo[0] - xo[1]) < 1e-2) continue;
        if (std::abs(xo[2] - (xo[0] + xo[1])) < 1e-2) continue;
        if (std::abs(std::abs(xo[3]) - std::abs(xo[3] - 1.0)) < 1e-2) continue;
        ++accepted;
        auto [b, analytic] = attack_loss_and_grad(m, x, x_orig, y, omega);
        Eigen::VectorXd numeric = helpers::finite_difference(
            [&](const Eigen::VectorXd& p) { return attack_loss(m, p, x_orig, y, omega).total; }, x, 1e-6);
        double rel = (analytic - numeric).norm() / std::max(analytic.norm(), 1e-12);
        CAPTURE(x.transpose());
        REQUIRE(rel < 1e-4);
    }
}

TEST_CASE("train: deterministic per seed and records accuracies") {
    auto [data, text] = generate_synthetic({4, 150, 1}, 21);
    auto [train_set, test_set] = split(data, 0.25, 21);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 33;
    Classifier a = Classifier::make({4, 64, 32, 16, 2});
    Classifier b = Classifier::make({4, 64, 32, 16, 2});
    train(a, train_set, cfg, &test_set);
    train(b, train_set, cfg, &test_set);
    for (size_t l = 0; l < a.weights.size(); ++l) {
        CHECK(a.weights[l] == b.weights[l]);
        CHECK(a.biases[l] == b.biases[l]);
    }
    CHECK(a.train_accuracy >= 0.0);
    CHECK(a.clean_accuracy >= 0.0);

    Classifier c = Classifier::make({4, 64, 32, 16, 2});
    cfg.seed = 34;
    train(c, train_set, cfg, &test_set);
    bool any_diff = false;
    for (size_t l = 0; l < a.weights.size(); ++l) any_diff |= (a.weights[l] != c.weights[l]);
    CHECK(any_diff);
}

TEST_CASE("train: bad configs are precondition errors") {
    auto [data, text] = generate_synthetic({4, 120, 1}, 22);
    Classifier m = Classifier::make({4, 8, 2});
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(m, data, cfg), std::invalid_argument);
    cfg.epochs = 1;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(m, data, cfg), std::invalid_argument);
}

TEST_CASE("train: divergence reports the epoch") {
    auto [data, text] = generate_synthetic({4, 120, 1}, 23);
    Classifier m = Classifier::make({4, 16, 2});
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.optimizer = TrainConfig::Optimizer::sgd;
    cfg.learning_rate = 1e300;  // drives weights to inf, forward to NaN
    CHECK_THROWS_WITH_AS(train(m, data, cfg), doctest::Contains("epoch"), std::runtime_error);
}

TEST_CASE("training oracle: default synthetic config reaches 0.90 test accuracy") {
    auto [data, text] = generate_synthetic({}, 1);
    auto [train_set, test_set] = split(data, 0.25, 1);
    Classifier m = Classifier::make({6, 64, 32, 16, 2});
    TrainConfig cfg;
    cfg.seed = 1;
    train(m, train_set, cfg, &test_set);
    CHECK(m.clean_accuracy >= 0.90);
}

TEST_CASE("train_adversarial: zero attack steps is bit-identical to train") {
    auto [data, text] = generate_synthetic({4, 150, 1}, 25);
    auto [train_set, test_set] = split(data, 0.25, 25);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 9;
    PgdConfig atk;
    atk.steps = 0;
    Classifier plain = Classifier::make({4, 32, 16, 2});
    Classifier adv = Classifier::make({4, 32, 16, 2});
    train(plain, train_set, cfg, &test_set);
    train_adversarial(adv, train_set, cfg, atk, &test_set);
    for (size_t l = 0; l < plain.weights.size(); ++l) {
        CHECK(plain.weights[l] == adv.weights[l]);
        CHECK(plain.biases[l] == adv.biases[l]);
    }
}

TEST_CASE("model JSON round-trip preserves everything") {
    Classifier m = random_model({3, 8, 4, 2}, 10);
    m.seed = 77;
    m.clean_accuracy = 0.93;
    m.train_accuracy = 0.99;
    m.logit_step = 0.5;
    m.scaler.min = vec({-1, 0, 3});
    m.scaler.max = vec({2, 1, 8});
    std::string path = "model_roundtrip_test.json";
    save_model(path, m);
    Classifier back = load_model(path);
    CHECK(back.dims == m.dims);
    for (size_t l = 0; l < m.weights.size(); ++l) {
        CHECK(back.weights[l] == m.weights[l]);
        CHECK(back.biases[l] == m.biases[l]);
    }
    CHECK(back.scaler.min == m.scaler.min);
    CHECK(back.scaler.max == m.scaler.max);
    CHECK(back.seed == 77);
    CHECK(back.clean_accuracy == 0.93);
    CHECK(back.logit_step == 0.5);
    std::remove(path.c_str());
}

TEST_CASE("quantized logits: piecewise-constant output with zero input gradient") {
    Classifier m = random_model({4, 16, 2}, 11);
    m.logit_step = 1.0;
    Eigen::VectorXd x = vec({0.4, 0.6, 0.2, 0.8});
    CHECK(input_gradient(m, x, 0).norm() == 0.0);
    Eigen::VectorXd nearby = x + Eigen::VectorXd::Constant(4, 1e-7);
    CHECK(forward(m, x) == forward(m, nearby));
    auto [b, grad] = attack_loss_and_grad(m, x, x, 0, empty_set());
    CHECK(grad.norm() == 0.0);
}
