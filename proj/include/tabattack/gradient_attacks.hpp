#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tabattack/attack_result.hpp"
#include "tabattack/constraints.hpp"
#include "tabattack/model.hpp"
#include "tabattack/perturbation.hpp"

namespace tabattack {

struct CpgdConfig {
    int n_iter = 10;
    int m_schedule = 7;  // M in the decay schedule
};

enum class Ablation { nrep, nini, nran, nada };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct CapgdConfig {
    int n_iter = 10;
    double alpha = 0.75;
    double rho = 0.75;
    std::set<Ablation> ablation;
    std::uint64_t seed = 0;
};

/// Fixed decay schedule eta(k) = eps * 10^-(1 + floor(k / floor(K/M))),
/// with floor(K/M) clamped to 1 when K < M.
double cpgd_schedule(int k, int K, int M, double epsilon);

/// Checkpoint iterations w_j = ceil(p_j * n_iter) from the recurrence
/// p_0 = 0, p_1 = 0.22, p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06),
/// stopped past 1, capped with n_iter, deduplicated ascending.
std::vector<int> capgd_checkpoints(int n_iter);

/// Adaptive-step bookkeeping for one CAPGD run. Losses are recorded per
/// iterate; eta / best-loss snapshots at every checkpoint visit.
struct StepController {
    double eta = 0.0;
    double rho = 0.75;
    std::vector<int> checkpoints;
    std::vector<double> loss_history;        // L'(x^(i)), i = 0..k
    double best_loss = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x;
    std::vector<double> eta_at_checkpoint;   // snapshot on arrival at W[j]
    std::vector<double> lmax_at_checkpoint;

    void observe(double loss, const Eigen::VectorXd& x);
};

/// Halving test at checkpoint index j (>= 1): too few loss increases in the
/// window (Condition 1) or no step change and no best-loss progress since the
/// previous checkpoint (Condition 2).
bool should_halve(const StepController& controller, int j);

/// Eq.-3 iteration: ascend task-loss-minus-penalty, project, round, repair;
/// returns the final iterate per example.
AttackResult cpgd(const Classifier& model, const Eigen::MatrixXd& X, const std::vector<int>& Y,
                  const ConstraintSet& omega, const std::vector<FeatureSpec>& specs, const CpgdConfig& cfg,
                  const Budget& budget, const AttackOptions& options = {});

/// Momentum + adaptive-step attack, run from the clean example and from a
/// random in-ball start (ablations may drop either); best outcome kept.
AttackResult capgd(const Classifier& model, const Eigen::MatrixXd& X, const std::vector<int>& Y,
                   const ConstraintSet& omega, const std::vector<FeatureSpec>& specs, const CapgdConfig& cfg,
                   const Budget& budget, const AttackOptions& options = {});

}  // namespace tabattack
