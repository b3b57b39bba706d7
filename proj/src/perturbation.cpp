#include "tabattack/perturbation.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace tabattack {

std::string to_string(Norm p) { return p == Norm::L2 ? "l2" : "linf"; }

Norm norm_from_string(const std::string& s) {
    if (s == "l2" || s == "L2") return Norm::L2;
    if (s == "linf" || s == "Linf" || s == "LINF") return Norm::Linf;
    throw std::invalid_argument("unknown norm \"" + s + "\" (expected l2|linf)");
}

MutabilityMask MutabilityMask::from_specs(const std::vector<FeatureSpec>& specs) {
    MutabilityMask m;
    m.movable.reserve(specs.size());
    for (const auto& s : specs) m.movable.push_back(s.is_mutable ? 1 : 0);
    return m;
}

Eigen::Index MutabilityMask::count_mutable() const {
    Eigen::Index c = 0;
    for (auto v : movable) c += v;
    return c;
}

double delta_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig, Norm p) {
    Eigen::VectorXd d = x - x_orig;
    return p == Norm::L2 ? d.norm() : d.cwiseAbs().maxCoeff();
}

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig, const Budget& budget,
                        const MutabilityMask& mask) {
    if (x.size() != x_orig.size() || static_cast<size_t>(x.size()) != mask.movable.size()) {
        throw std::invalid_argument("project: dimension mismatch");
    }
    Eigen::VectorXd delta = x - x_orig;
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
        if (!mask.movable[static_cast<size_t>(i)]) delta[i] = 0.0;
    }
    if (budget.p == Norm::L2) {
        double n = delta.norm();
        if (n > budget.epsilon && n > 0.0) delta *= budget.epsilon / n;
    } else {
        delta = delta.cwiseMax(-budget.epsilon).cwiseMin(budget.epsilon);
    }
    Eigen::VectorXd y = x_orig + delta;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (mask.movable[static_cast<size_t>(i)]) y[i] = std::clamp(y[i], 0.0, 1.0);
    }
    return y;
}

Eigen::VectorXd round_types(const Eigen::VectorXd& x, const std::vector<FeatureSpec>& specs, const Scaler& scaler) {
    if (static_cast<size_t>(x.size()) != specs.size() || x.size() != scaler.d()) {
        throw std::invalid_argument("round_types: dimension mismatch");
    }
    Eigen::VectorXd y = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const auto& spec = specs[static_cast<size_t>(i)];
        if (spec.ftype == FeatureType::continuous) continue;
        double range = scaler.max[i] - scaler.min[i];
        double v = scaler.min[i] + x[i] * range;
        if (spec.ftype == FeatureType::discrete) {
            v = std::clamp(std::round(v), spec.lower, spec.upper);
        } else {
            double best = spec.categories.front();
            double best_dist = std::abs(v - best);
            for (double c : spec.categories) {
                double dist = std::abs(v - c);
                if (dist < best_dist || (dist == best_dist && c < best)) {
                    best = c;
                    best_dist = dist;
                }
            }
            v = best;
        }
        y[i] = (v - scaler.min[i]) / range;
    }
    return y;
}

Eigen::VectorXd sample_in_ball(const Eigen::VectorXd& x_orig, const Budget& budget, const MutabilityMask& mask,
                               std::uint64_t rng_seed) {
    if (static_cast<size_t>(x_orig.size()) != mask.movable.size()) {
        throw std::invalid_argument("sample_in_ball: dimension mismatch");
    }
    Eigen::Index m = mask.count_mutable();
    if (m == 0 || budget.epsilon <= 0.0) return x_orig;

    std::mt19937_64 rng(rng_seed);
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(x_orig.size());
    if (budget.p == Norm::L2) {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        Eigen::VectorXd dir = Eigen::VectorXd::Zero(x_orig.size());
        double norm_sq = 0.0;
        for (Eigen::Index i = 0; i < x_orig.size(); ++i) {
            if (!mask.movable[static_cast<size_t>(i)]) continue;
            dir[i] = normal(rng);
            norm_sq += dir[i] * dir[i];
        }
        if (norm_sq == 0.0) return x_orig;
        double radius = budget.epsilon * std::pow(unif(rng), 1.0 / static_cast<double>(m));
        delta = dir * (radius / std::sqrt(norm_sq));
    } else {
        std::uniform_real_distribution<double> unif(-budget.epsilon, budget.epsilon);
        for (Eigen::Index i = 0; i < x_orig.size(); ++i) {
            if (mask.movable[static_cast<size_t>(i)]) delta[i] = unif(rng);
        }
    }
    Eigen::VectorXd y = x_orig + delta;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (mask.movable[static_cast<size_t>(i)]) y[i] = std::clamp(y[i], 0.0, 1.0);
    }
    return y;
}

}  // namespace tabattack
