#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tabattack/constraints.hpp"
#include "tabattack/feature_space.hpp"

namespace tabattack {

/// ReLU MLP with softmax output. Inputs are min-max scaled through `scaler`,
/// which travels with the model. A positive `logit_step` quantizes logits to
/// that step before softmax, making the output piecewise constant with
/// exactly-zero input gradients (gradient-masked benchmark model).
struct Classifier {
    std::vector<int> dims;  // {d, hidden..., C}
    std::vector<Eigen::MatrixXd> weights;  // weights[l]: dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> biases;
    Scaler scaler;
    double logit_step = 0.0;

    // metadata
    std::uint64_t seed = 0;
    double clean_accuracy = -1.0;
    double train_accuracy = -1.0;

    static Classifier make(const std::vector<int>& dims);  // zero-initialized
    Eigen::Index input_dim() const { return dims.front(); }
    int num_classes() const { return dims.back(); }
};

struct TrainConfig {
    int epochs = 80;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    enum class Optimizer { sgd, adam } optimizer = Optimizer::adam;
};

/// Inner attack for Madry adversarial training: plain L2 PGD on the task
/// loss, mutable features only, no constraint term.
struct PgdConfig {
    double epsilon = 0.5;
    int steps = 10;
    double step_size = 0.1;
};

struct LossBreakdown {
    double task_loss = 0.0;
    double penalty_sum = 0.0;
    double total = 0.0;  // task_loss - penalty_sum
};

/// Softmax probabilities for one scaled input.
Eigen::VectorXd forward(const Classifier& model, const Eigen::VectorXd& x);
/// Row-wise softmax probabilities for a batch of scaled inputs.
Eigen::MatrixXd forward_batch(const Classifier& model, const Eigen::MatrixXd& X);
int predict(const Classifier& model, const Eigen::VectorXd& x);
std::vector<int> predict_batch(const Classifier& model, const Eigen::MatrixXd& X);

/// Eq.-style attack objective: cross-entropy(h(x), y) minus the constraint
/// penalty evaluated in original units. Returns the breakdown and the
/// gradient of the total w.r.t. the scaled input x.
std::pair<LossBreakdown, Eigen::VectorXd> attack_loss_and_grad(const Classifier& model,
                                                               const Eigen::VectorXd& x,
                                                               const Eigen::VectorXd& x_orig, int y,
                                                               const ConstraintSet& omega);

/// Value-only variant of attack_loss_and_grad.
LossBreakdown attack_loss(const Classifier& model, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig,
                          int y, const ConstraintSet& omega);

/// Cross-entropy gradient of one scaled input (backprop).
Eigen::VectorXd input_gradient(const Classifier& model, const Eigen::VectorXd& x, int y);

/// Mini-batch training on data (original units; scaled internally with
/// model.scaler, fit from data when empty). Deterministic per cfg.seed.
/// Throws on divergence with the epoch index.
void train(Classifier& model, const Dataset& data, const TrainConfig& cfg, const Dataset* eval = nullptr);

/// Madry adversarial training: every minibatch is replaced by PGD
/// perturbations before the weight update. atk.steps == 0 degenerates to
/// plain train (bit-identical).
void train_adversarial(Classifier& model, const Dataset& data, const TrainConfig& cfg, const PgdConfig& atk,
                       const Dataset* eval = nullptr);

double accuracy(const Classifier& model, const Dataset& data);

void save_model(const std::string& path, const Classifier& model);
Classifier load_model(const std::string& path);

}  // namespace tabattack
