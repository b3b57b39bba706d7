#include "tabattack/caa.hpp"

#include <chrono>
#include <stdexcept>

#include "tabattack/logging.hpp"

namespace tabattack {

bool is_adv_single(const Classifier& model, const ConstraintSet& omega, const Budget& budget,
                   const Eigen::VectorXd& x_i, const Eigen::VectorXd& x_c, int y_c) {
    if (x_i.size() != x_c.size()) throw std::invalid_argument("is_adv: dimension mismatch");
    if (delta_norm(x_i, x_c, budget.p) > budget.epsilon + 1e-9) return false;
    Eigen::VectorXd xo = unscale(x_i, model.scaler);
    Eigen::VectorXd xo_orig = unscale(x_c, model.scaler);
    if (!check(omega, xo, xo_orig)) return false;
    return predict(model, x_i) != y_c;
}

std::vector<std::uint8_t> is_adv(const Eigen::MatrixXd& X_i, const Eigen::MatrixXd& X_c,
                                 const std::vector<int>& Y_c, const Classifier& model,
                                 const ConstraintSet& omega, const Budget& budget) {
    if (X_i.rows() != X_c.rows() || X_i.rows() != static_cast<Eigen::Index>(Y_c.size())) {
        throw std::invalid_argument("is_adv: X_i, X_c, Y_c must have equal length");
    }
    std::vector<std::uint8_t> mask(static_cast<size_t>(X_i.rows()), 0);
    for (Eigen::Index k = 0; k < X_i.rows(); ++k) {
        mask[static_cast<size_t>(k)] = is_adv_single(model, omega, budget, X_i.row(k).transpose(),
                                                     X_c.row(k).transpose(), Y_c[static_cast<size_t>(k)])
                                           ? 1
                                           : 0;
    }
    return mask;
}

AttackResult caa(const Classifier& model, const Eigen::MatrixXd& X, const std::vector<int>& Y,
                 const ConstraintSet& omega, const std::vector<FeatureSpec>& specs, const CaaConfig& cfg,
                 const Budget& budget, const AttackOptions& options) {
    if (X.rows() != static_cast<Eigen::Index>(Y.size())) throw std::invalid_argument("caa: rows/labels mismatch");
    for (const auto& s : cfg.stages) {
        if (s != "capgd" && s != "moeva") {
            throw std::invalid_argument("caa: unknown stage \"" + s + "\" (expected capgd|moeva)");
        }
    }
    auto t0 = std::chrono::steady_clock::now();

    AttackResult result;
    result.rows = X;  // failed candidates stay unchanged
    result.success.assign(static_cast<size_t>(X.rows()), 0);
    result.iterations.assign(static_cast<size_t>(X.rows()), 0);

    // Stage 0: clean rows that are already adversarial pass straight through.
    std::vector<std::uint8_t> already = is_adv(X, X, Y, model, omega, budget);
    StageReport pass_through{"pass_through", 0.0, {}};
    std::vector<Eigen::Index> remaining;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        if (already[static_cast<size_t>(i)]) {
            result.success[static_cast<size_t>(i)] = 1;
            pass_through.success_ids.push_back(options.id_of(i));
        } else {
            remaining.push_back(i);
        }
    }
    pass_through.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.stages.push_back(std::move(pass_through));

    for (const auto& stage_name : cfg.stages) {
        if (remaining.empty()) {
            result.stages.push_back({stage_name, 0.0, {}});
            continue;
        }
        Eigen::MatrixXd Xc(static_cast<Eigen::Index>(remaining.size()), X.cols());
        std::vector<int> Yc(remaining.size());
        AttackOptions stage_options;
        stage_options.threads = options.threads;
        stage_options.example_ids.resize(remaining.size());
        for (size_t k = 0; k < remaining.size(); ++k) {
            Xc.row(static_cast<Eigen::Index>(k)) = X.row(remaining[k]);
            Yc[k] = Y[static_cast<size_t>(remaining[k])];
            stage_options.example_ids[k] = options.id_of(remaining[k]);
        }

        AttackResult stage_result;
        if (stage_name == "capgd") {
            stage_result = capgd(model, Xc, Yc, omega, specs, cfg.capgd, budget, stage_options);
        } else {
            stage_result = moeva(model, Xc, Yc, omega, specs, cfg.moeva, budget, stage_options);
        }

        StageReport report{stage_name, stage_result.seconds, {}};
        std::vector<Eigen::Index> still_remaining;
        for (size_t k = 0; k < remaining.size(); ++k) {
            Eigen::Index i = remaining[k];
            result.iterations[static_cast<size_t>(i)] += stage_result.iterations[k];
            if (stage_result.success[k]) {
                result.rows.row(i) = stage_result.rows.row(static_cast<Eigen::Index>(k));
                result.success[static_cast<size_t>(i)] = 1;
                report.success_ids.push_back(options.id_of(i));
            } else {
                still_remaining.push_back(i);
            }
        }
        result.stages.push_back(std::move(report));
        remaining = std::move(still_remaining);
        log::debug("caa stage " + stage_name + ": " + std::to_string(result.stages.back().success_ids.size()) +
                   " new successes, " + std::to_string(remaining.size()) + " candidates left");
    }

    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace tabattack
