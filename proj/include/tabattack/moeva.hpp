#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "tabattack/attack_result.hpp"
#include "tabattack/constraints.hpp"
#include "tabattack/model.hpp"
#include "tabattack/perturbation.hpp"

namespace tabattack {

struct MoevaConfig {
    int n_gen = 100;
    int n_off = 100;
    int n_pop = 200;
    std::uint64_t seed = 0;
    double crossover_prob = 0.9;
    double mutation_sigma_factor = 0.1;  // sigma = epsilon * factor
    /// Optional scaled candidates injected into every example's initial
    /// population (test hook for elitism checks).
    std::vector<Eigen::VectorXd> seed_points;
};

/// (true-class probability, scaled L2 distance, constraint penalty) — all minimized.
std::array<double, 3> objectives(const Classifier& model, const Eigen::VectorXd& candidate,
                                 const Eigen::VectorXd& x_orig, int y, const ConstraintSet& omega);

/// Gradient-free multi-objective search: NSGA-II style survival over the
/// three objectives with project/round/repair applied to every candidate.
AttackResult moeva(const Classifier& model, const Eigen::MatrixXd& X, const std::vector<int>& Y,
                   const ConstraintSet& omega, const std::vector<FeatureSpec>& specs, const MoevaConfig& cfg,
                   const Budget& budget, const AttackOptions& options = {});

}  // namespace tabattack
