#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "tabattack/feature_space.hpp"

namespace tabattack {

enum class Norm { L2, Linf };

std::string to_string(Norm p);
Norm norm_from_string(const std::string& s);

/// Perturbation budget in scaled [0,1] space. epsilon == 0 is accepted for
/// degenerate runs; attack-config loading enforces epsilon > 0.
struct Budget {
    double epsilon = 0.5;
    Norm p = Norm::L2;
};

struct MutabilityMask {
    std::vector<std::uint8_t> movable;

    static MutabilityMask from_specs(const std::vector<FeatureSpec>& specs);
    Eigen::Index count_mutable() const;
};

/// Projection onto the feasible set: immutable coordinates reset to x_orig,
/// delta shrunk to the budget (radial for L2, per-coordinate clamp for Linf),
/// then clipped to scaled bounds [0,1]. Idempotent.
Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig, const Budget& budget,
                        const MutabilityMask& mask);

/// Discrete features to the nearest in-bounds integer, categoricals to the
/// nearest category (ties toward the lower value); continuous untouched.
/// Scaled in, scaled out; original units via the scaler internally.
Eigen::VectorXd round_types(const Eigen::VectorXd& x, const std::vector<FeatureSpec>& specs, const Scaler& scaler);

/// Uniform sample from the budget ball restricted to mutable coordinates,
/// clipped to [0,1]. Deterministic per seed.
Eigen::VectorXd sample_in_ball(const Eigen::VectorXd& x_orig, const Budget& budget, const MutabilityMask& mask,
                               std::uint64_t rng_seed);

double delta_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig, Norm p);

}  // namespace tabattack
