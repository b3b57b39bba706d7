#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tabattack/attack_result.hpp"
#include "tabattack/constraints.hpp"
#include "tabattack/gradient_attacks.hpp"
#include "tabattack/model.hpp"
#include "tabattack/moeva.hpp"
#include "tabattack/perturbation.hpp"

namespace tabattack {

/// Validity oracle: constraints satisfied (original units), prediction
/// flipped, and perturbation within the budget (1e-9 headroom on the norm).
bool is_adv_single(const Classifier& model, const ConstraintSet& omega, const Budget& budget,
                   const Eigen::VectorXd& x_i, const Eigen::VectorXd& x_c, int y_c);

/// Row-wise is_adv over candidate rows X_i against attacked rows X_c.
std::vector<std::uint8_t> is_adv(const Eigen::MatrixXd& X_i, const Eigen::MatrixXd& X_c,
                                 const std::vector<int>& Y_c, const Classifier& model,
                                 const ConstraintSet& omega, const Budget& budget);

struct CaaConfig {
    std::vector<std::string> stages = {"capgd", "moeva"};
    CapgdConfig capgd;
    MoevaConfig moeva;
};

/// Sequential ensemble: pass through already-adversarial rows, then run each
/// stage only on the examples every earlier stage failed on. Failed
/// candidates are returned unchanged, so |output| == |input|.
AttackResult caa(const Classifier& model, const Eigen::MatrixXd& X, const std::vector<int>& Y,
                 const ConstraintSet& omega, const std::vector<FeatureSpec>& specs, const CaaConfig& cfg,
                 const Budget& budget, const AttackOptions& options = {});

}  // namespace tabattack
