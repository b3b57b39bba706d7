#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabattack/caa.hpp"
#include "tabattack/constraints.hpp"
#include "tabattack/model.hpp"

namespace tabattack {

/// One attack run specification as read from a JSON config file.
struct AttackSpec {
    std::string name = "caa";  // cpgd | capgd | moeva | caa
    Budget budget{0.5, Norm::L2};
    std::uint64_t seed = 0;
    CpgdConfig cpgd;
    CapgdConfig capgd;
    MoevaConfig moeva;
    std::vector<std::string> caa_stages = {"capgd", "moeva"};
    nlohmann::ordered_json echo;  // config as given
};

/// Parses {attack, epsilon, norm, seed, ...} with per-attack fields; enforces
/// epsilon > 0 and known attack names.
AttackSpec parse_attack_config(const nlohmann::json& config, const std::string& name_override = "");

AttackResult run_attack(const Classifier& model, const Eigen::MatrixXd& X, const std::vector<int>& Y,
                        const ConstraintSet& omega, const std::vector<FeatureSpec>& specs,
                        const AttackSpec& spec, const AttackOptions& options = {});

/// Critical-class evaluation slice of a test set, scaled to attack space.
struct EvaluationSlice {
    Eigen::MatrixXd X;               // scaled critical-class rows
    std::vector<int> Y;
    std::vector<std::int64_t> ids;   // row indices within the test set
    double clean_accuracy = 0.0;     // model accuracy on this slice
};

EvaluationSlice critical_slice(const Classifier& model, const Dataset& test);

/// Robust-accuracy protocol: a row errs iff misclassified clean or a valid
/// (is_adv) adversarial exists for it; invalid outputs count as correct.
double robust_accuracy(const Classifier& model, const Eigen::MatrixXd& X_eval, const Eigen::MatrixXd& X_adv,
                       const std::vector<int>& Y, const ConstraintSet& omega, const Budget& budget);

std::set<std::int64_t> success_set(const AttackResult& result, const std::vector<std::int64_t>& ids);
std::set<std::int64_t> union_sets(const std::vector<std::set<std::int64_t>>& sets);

/// |C_B| / |C_A u C_B|; 1.0 when both are empty (logged).
double coverage(const std::set<std::int64_t>& c_a, const std::set<std::int64_t>& c_b);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& values);

struct AttackSummary {
    std::string name;
    nlohmann::ordered_json config;
    MeanStd robust_accuracy;
    MeanStd duration_s;
    std::vector<double> per_seed_robust_accuracy;
    std::set<std::int64_t> success_union;
};

struct CoverageEntry {
    std::string covered;   // attack A
    std::string covering;  // attack B
    double value = 0.0;
};

struct EvaluationReport {
    std::string dataset;
    std::string model_file;
    double clean_accuracy = 0.0;
    std::vector<std::uint64_t> seeds;
    nlohmann::ordered_json config;
    std::vector<AttackSummary> attacks;
    std::vector<CoverageEntry> coverage_pairs;

    nlohmann::ordered_json to_json(bool include_timing) const;
    std::string to_csv() const;  // flat per-attack table
};

/// Runs one attack per seed and aggregates robust accuracy, duration and the
/// union success set against the given evaluation slice.
AttackSummary run_attack_over_seeds(const Classifier& model, const EvaluationSlice& slice,
                                    const ConstraintSet& omega, const std::vector<FeatureSpec>& specs,
                                    AttackSpec spec, const std::vector<std::uint64_t>& seeds,
                                    const AttackOptions& options = {});

enum class SweepAxis { epsilon, capgd_iters, moeva_iters };
std::string to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

/// One CAA run per grid value (all else fixed), per seed. Rejects epsilon
/// values <= 0.
EvaluationReport budget_sweep(const Classifier& model, const EvaluationSlice& slice, const ConstraintSet& omega,
                              const std::vector<FeatureSpec>& specs, SweepAxis axis,
                              const std::vector<double>& values, const AttackSpec& base,
                              const std::vector<std::uint64_t>& seeds, const AttackOptions& options = {});

/// CAPGD plus its four single-removal variants; robust accuracy per variant
/// and the pairwise coverage matrix over the union success sets.
EvaluationReport ablation_matrix(const Classifier& model, const EvaluationSlice& slice,
                                 const ConstraintSet& omega, const std::vector<FeatureSpec>& specs,
                                 const AttackSpec& base, const std::vector<std::uint64_t>& seeds,
                                 const AttackOptions& options = {});

/// Minimal standalone SVG line chart (robust accuracy vs budget).
void write_svg_line_chart(const std::string& path, const std::string& title,
                          const std::vector<std::string>& x_labels, const std::vector<double>& mean,
                          const std::vector<double>& std_dev);

}  // namespace tabattack
