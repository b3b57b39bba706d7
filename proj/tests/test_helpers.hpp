#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "tabattack/constraints.hpp"
#include "tabattack/feature_space.hpp"

namespace helpers {

using namespace tabattack;

/// d continuous mutable features named f1..fd with wide bounds.
inline std::vector<FeatureSpec> plain_specs(int d, double lower = -100.0, double upper = 100.0) {
    std::vector<FeatureSpec> specs(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) {
        specs[static_cast<size_t>(j)].name = "f" + std::to_string(j + 1);
        specs[static_cast<size_t>(j)].lower = lower;
        specs[static_cast<size_t>(j)].upper = upper;
    }
    return specs;
}

inline Eigen::VectorXd vec(std::initializer_list<double> vals) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double x : vals) v[i++] = x;
    return v;
}

/// Random constraint AST generator for round-trip and soundness properties.
class AstGen {
public:
    AstGen(std::uint64_t seed, int num_features) : rng_(seed), d_(num_features) {}

    NumExprPtr expr(int depth) {
        int pick = depth <= 0 ? choice(3) : choice(5);
        switch (pick) {
            case 0: return NumExpr::constant(constant());
            case 1: return NumExpr::feat(choice(d_));
            case 2: return NumExpr::orig(choice(d_));
            case 3: return NumExpr::binop(op(), expr(depth - 1), expr(depth - 1));
            default: return NumExpr::binop(op(), expr(depth - 1), NumExpr::constant(constant()));
        }
    }

    AstPtr constraint(int depth) {
        int pick = depth <= 0 ? 2 + choice(2) : choice(4);
        switch (pick) {
            case 0: return ConstraintAst::conj(constraint(depth - 1), constraint(depth - 1));
            case 1: return ConstraintAst::disj(constraint(depth - 1), constraint(depth - 1));
            case 2: {
                auto cmp = static_cast<CmpOp>(choice(6));
                return ConstraintAst::cmp(cmp, expr(std::max(0, depth - 1)), expr(std::max(0, depth - 1)));
            }
            default: {
                int count = 1 + choice(4);
                std::vector<NumExprPtr> members;
                for (int i = 0; i < count; ++i) members.push_back(NumExpr::constant(constant()));
                return ConstraintAst::member(choice(d_), std::move(members));
            }
        }
    }

    Eigen::VectorXd point(double radius = 3.0) {
        Eigen::VectorXd x(d_);
        std::uniform_real_distribution<double> unif(-radius, radius);
        for (int j = 0; j < d_; ++j) x[j] = unif(rng_);
        return x;
    }

private:
    int choice(int n) {
        std::uniform_int_distribution<int> dist(0, n - 1);
        return dist(rng_);
    }
    double constant() {
        std::uniform_real_distribution<double> unif(-4.0, 4.0);
        double v = unif(rng_);
        return std::round(v * 16.0) / 16.0;  // dyadic, prints and reparses exactly
    }
    char op() {
        const char ops[4] = {'+', '-', '*', '/'};
        return ops[choice(4)];
    }

    std::mt19937_64 rng_;
    int d_;
};

/// Central-difference gradient of any scalar function of x.
template <typename F>
Eigen::VectorXd finite_difference(const F& f, const Eigen::VectorXd& x, double h = 1e-6) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd hi = x, lo = x;
        hi[i] += h;
        lo[i] -= h;
        g[i] = (f(hi) - f(lo)) / (2.0 * h);
    }
    return g;
}

}  // namespace helpers
