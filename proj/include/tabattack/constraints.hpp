#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tabattack/feature_space.hpp"

namespace tabattack {

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

struct NumExpr;
using NumExprPtr = std::shared_ptr<const NumExpr>;

/// Numeric expression: constant | feature | expr (+|-|*|/) expr | orig(feature).
struct NumExpr {
    enum class Kind { constant, feature, orig_feature, binop };
    Kind kind = Kind::constant;
    double value = 0.0;  // constant
    int feature = -1;    // feature / orig_feature
    char op = '+';       // binop
    NumExprPtr lhs, rhs;

    static NumExprPtr constant(double v);
    static NumExprPtr feat(int index);
    static NumExprPtr orig(int index);
    static NumExprPtr binop(char op, NumExprPtr l, NumExprPtr r);
};

enum class CmpOp { lt, le, eq, ne, ge, gt };

struct ConstraintAst;
using AstPtr = std::shared_ptr<const ConstraintAst>;

/// Constraint formula: and | or | comparison | membership.
struct ConstraintAst {
    enum class Kind { conj, disj, cmp, member };
    Kind kind = Kind::cmp;
    AstPtr lhs, rhs;  // conj / disj
    CmpOp op = CmpOp::le;
    NumExprPtr a, b;           // cmp
    int member_feature = -1;   // member
    std::vector<NumExprPtr> members;

    static AstPtr conj(AstPtr l, AstPtr r);
    static AstPtr disj(AstPtr l, AstPtr r);
    static AstPtr cmp(CmpOp op, NumExprPtr a, NumExprPtr b);
    static AstPtr member(int feature, std::vector<NumExprPtr> members);
};

bool equal(const NumExpr& a, const NumExpr& b);
bool equal(const ConstraintAst& a, const ConstraintAst& b);

// ---------------------------------------------------------------------------
// Constraint set
// ---------------------------------------------------------------------------

/// Immutable after construction; check/penalty/gradient/repair are pure and
/// safe to call concurrently. Building validates the repair plan (equality
/// assignments in dependency order; cycles and duplicate targets rejected).
class ConstraintSet {
public:
    ConstraintSet() = default;
    ConstraintSet(std::vector<AstPtr> constraints, std::vector<std::string> feature_names,
                  double tolerance = 1e-6);
    ConstraintSet(const ConstraintSet& other);
    ConstraintSet& operator=(const ConstraintSet& other);

    const std::vector<AstPtr>& constraints() const { return constraints_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }
    double tolerance() const { return tolerance_; }

    struct Assignment {
        int feature;
        NumExprPtr expr;
    };
    const std::vector<Assignment>& repair_plan() const { return repair_plan_; }

    /// Count of near-zero-denominator divisions hit during evaluation.
    std::uint64_t division_guard_count() const { return division_guards_.load(std::memory_order_relaxed); }
    void note_division_guard() const { division_guards_.fetch_add(1, std::memory_order_relaxed); }

private:
    void build_repair_plan();

    std::vector<AstPtr> constraints_;
    std::vector<std::string> feature_names_;
    double tolerance_ = 1e-6;
    std::vector<Assignment> repair_plan_;
    mutable std::atomic<std::uint64_t> division_guards_{0};
};

struct ConstraintParseError : std::runtime_error {
    ConstraintParseError(int line, int column, const std::string& message);
    int line;
    int column;
};

/// Parses the DSL (one constraint per line, '#' comments). Identifiers must
/// name features from `specs`; `orig(name)` references the unperturbed input.
ConstraintSet parse_constraints(const std::string& text, const std::vector<FeatureSpec>& specs,
                                double tolerance = 1e-6);

std::string print_expr(const NumExpr& e, const std::vector<std::string>& names);
std::string print_constraint(const ConstraintAst& c, const std::vector<std::string>& names);
std::string print_constraints(const ConstraintSet& set);

// ---------------------------------------------------------------------------
// Evaluation (all vectors in original feature units)
// ---------------------------------------------------------------------------

double eval_expr(const NumExpr& e, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig,
                 const ConstraintSet& set, bool* guard_hit = nullptr);

/// True iff every constraint holds. Equality within tolerance; strict
/// comparisons require a tau = 1e-6 margin (the penalty-zero surface).
/// A division guard makes the enclosing comparison unsatisfied.
bool check(const ConstraintSet& set, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig);

/// >= 0; zero exactly when check() passes. Hinge translation per constraint:
/// sums conjunctions, mins disjunctions, distance-to-set for membership.
double penalty(const ConstraintSet& set, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig);

/// Subgradient of penalty w.r.t. x.
Eigen::VectorXd penalty_gradient(const ConstraintSet& set, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& x_orig);

/// Forces every acyclic equality target f = psi to eval(psi); other
/// coordinates untouched. Idempotent.
Eigen::VectorXd repair(const ConstraintSet& set, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig);

}  // namespace tabattack
