#pragma once

#include "tabattack/evaluation.hpp"
#include "tabattack/feature_space.hpp"
#include "tabattack/model.hpp"

namespace bench {

using namespace tabattack;

/// Synthetic constrained benchmark: d=6, n=1000, 3 relation constraints,
/// MLP trained to >= 0.90 clean accuracy. Built once per test binary.
struct Benchmark {
    Dataset full;
    Dataset train_set;
    Dataset test_set;
    ConstraintSet omega;
    Classifier model;
    EvaluationSlice slice;
};

inline const Benchmark& get() {
    static Benchmark b = [] {
        Benchmark out;
        auto [data, text] = generate_synthetic({}, 1);
        out.full = std::move(data);
        auto [train_part, test_part] = split(out.full, 0.25, 1);
        out.train_set = std::move(train_part);
        out.test_set = std::move(test_part);
        out.omega = parse_constraints(text, out.full.specs);
        out.model = Classifier::make({static_cast<int>(out.full.d()), 64, 32, 16, out.full.num_classes()});
        TrainConfig cfg;
        cfg.seed = 1;
        train(out.model, out.train_set, cfg, &out.test_set);
        out.slice = critical_slice(out.model, out.test_set);
        return out;
    }();
    return b;
}

/// First n rows of the critical evaluation slice (cheap attack targets).
inline EvaluationSlice head(const EvaluationSlice& slice, Eigen::Index n) {
    EvaluationSlice out;
    n = std::min(n, slice.X.rows());
    out.X = slice.X.topRows(n);
    out.Y.assign(slice.Y.begin(), slice.Y.begin() + n);
    out.ids.assign(slice.ids.begin(), slice.ids.begin() + n);
    out.clean_accuracy = slice.clean_accuracy;
    return out;
}

}  // namespace bench
