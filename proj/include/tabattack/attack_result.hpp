#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace tabattack {

struct StageReport {
    std::string name;
    double seconds = 0.0;
    std::vector<std::int64_t> success_ids;  // original example ids
};

/// Per-example attack outputs in scaled space. success[i] is the is_adv
/// verdict for rows.row(i) against the attacked example.
struct AttackResult {
    Eigen::MatrixXd rows;
    std::vector<std::uint8_t> success;
    std::vector<int> iterations;
    double seconds = 0.0;
    std::vector<StageReport> stages;

    std::int64_t success_count() const {
        std::int64_t c = 0;
        for (auto s : success) c += s;
        return c;
    }
};

/// Shared knobs for attack execution: worker threads and the original ids of
/// the attacked examples (per-example RNG keys; defaults to 0..n-1).
struct AttackOptions {
    int threads = 1;
    std::vector<std::int64_t> example_ids;

    std::int64_t id_of(Eigen::Index i) const {
        return example_ids.empty() ? static_cast<std::int64_t>(i) : example_ids[static_cast<size_t>(i)];
    }
};

}  // namespace tabattack
