// Acceptance suite: runs every criterion on the synthetic constrained
// benchmark and prints one pass/fail line per criterion.

#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "constraint_margins.hpp"
#include "tabattack/caa.hpp"
#include "tabattack/evaluation.hpp"
#include "tabattack/gradient_attacks.hpp"
#include "tabattack/moeva.hpp"

using namespace tabattack;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << ". " << name;
    if (!o.detail.empty()) std::cout << " — " << o.detail;
    std::cout << "\n" << std::flush;
    if (!o.pass) ++failures;
}

double now_minus(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

struct Benchmark {
    Dataset full, train_set, test_set;
    ConstraintSet omega;
    Classifier model;
    EvaluationSlice slice;
};

Benchmark build_benchmark() {
    Benchmark b;
    auto [data, text] = generate_synthetic({6, 1000, 3}, 1);
    b.full = std::move(data);
    auto [train_part, test_part] = split(b.full, 0.25, 1);
    b.train_set = std::move(train_part);
    b.test_set = std::move(test_part);
    b.omega = parse_constraints(text, b.full.specs);
    b.model = Classifier::make({6, 64, 32, 16, 2});
    TrainConfig cfg;
    cfg.seed = 1;
    train(b.model, b.train_set, cfg, &b.test_set);
    b.slice = critical_slice(b.model, b.test_set);
    return b;
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3};
const Budget kBudget{0.5, Norm::L2};

struct BatteryRun {
    AttackResult result;
    double robust_acc;
};

/// All four attacks at paper-default budgets, one entry per seed.
struct Battery {
    std::map<std::string, std::vector<BatteryRun>> runs;
    double seconds = 0.0;
};

Battery run_battery(const Benchmark& b) {
    Battery battery;
    auto t0 = std::chrono::steady_clock::now();
    AttackOptions opts;
    opts.example_ids = b.slice.ids;
    for (std::uint64_t seed : kSeeds) {
        {
            CpgdConfig cfg;  // n_iter 10, M 7
            AttackResult r = cpgd(b.model, b.slice.X, b.slice.Y, b.omega, b.full.specs, cfg, kBudget, opts);
            double ra = robust_accuracy(b.model, b.slice.X, r.rows, b.slice.Y, b.omega, kBudget);
            battery.runs["cpgd"].push_back({std::move(r), ra});
        }
        {
            CapgdConfig cfg;  // n_iter 10, alpha .75, rho .75
            cfg.seed = seed;
            AttackResult r = capgd(b.model, b.slice.X, b.slice.Y, b.omega, b.full.specs, cfg, kBudget, opts);
            double ra = robust_accuracy(b.model, b.slice.X, r.rows, b.slice.Y, b.omega, kBudget);
            battery.runs["capgd"].push_back({std::move(r), ra});
        }
        {
            MoevaConfig cfg;  // n_gen 100, n_off 100, n_pop 200
            cfg.seed = seed;
            AttackResult r = moeva(b.model, b.slice.X, b.slice.Y, b.omega, b.full.specs, cfg, kBudget, opts);
            double ra = robust_accuracy(b.model, b.slice.X, r.rows, b.slice.Y, b.omega, kBudget);
            battery.runs["moeva"].push_back({std::move(r), ra});
        }
        {
            CaaConfig cfg;  // capgd + moeva, same defaults
            cfg.capgd.seed = seed;
            cfg.moeva.seed = seed;
            AttackResult r = caa(b.model, b.slice.X, b.slice.Y, b.omega, b.full.specs, cfg, kBudget, opts);
            double ra = robust_accuracy(b.model, b.slice.X, r.rows, b.slice.Y, b.omega, kBudget);
            battery.runs["caa"].push_back({std::move(r), ra});
        }
    }
    battery.seconds = now_minus(t0);
    return battery;
}

double mean_ra(const Battery& battery, const std::string& attack) {
    double sum = 0.0;
    for (const auto& run : battery.runs.at(attack)) sum += run.robust_acc;
    return sum / static_cast<double>(battery.runs.at(attack).size());
}

// --------------------------------------------------------------------------
// criteria
// --------------------------------------------------------------------------

Outcome criterion_validity(const Benchmark& b, const Battery& battery) {
    long long successes = 0, violations = 0;
    for (const auto& [name, runs] : battery.runs) {
        for (const auto& run : runs) {
            for (Eigen::Index i = 0; i < run.result.rows.rows(); ++i) {
                if (!run.result.success[static_cast<size_t>(i)]) continue;
                ++successes;
                Eigen::VectorXd adv = run.result.rows.row(i).transpose();
                Eigen::VectorXd orig = b.slice.X.row(i).transpose();
                int y = b.slice.Y[static_cast<size_t>(i)];
                bool ball_ok = (adv - orig).norm() <= kBudget.epsilon + 1e-9;
                Eigen::VectorXd xo = unscale(adv, b.model.scaler);
                Eigen::VectorXd xo_orig = unscale(orig, b.model.scaler);
                bool omega_ok = check(b.omega, xo, xo_orig);
                bool flipped = predict(b.model, adv) != y;
                if (!(ball_ok && omega_ok && flipped)) ++violations;
            }
        }
    }
    bool time_ok = battery.seconds < 300.0;
    Outcome o;
    o.pass = violations == 0 && successes > 0 && time_ok;
    o.detail = std::to_string(successes) + " successes across 4 attacks x 3 seeds, " +
               std::to_string(violations) + " violations, battery " + fmt(battery.seconds, 1) + "s (< 300s)";
    return o;
}

Outcome criterion_penalty_soundness() {
    auto t0 = std::chrono::steady_clock::now();
    auto specs = [] {
        std::vector<FeatureSpec> s(4);
        for (int j = 0; j < 4; ++j) {
            s[static_cast<size_t>(j)].name = "f" + std::to_string(j + 1);
            s[static_cast<size_t>(j)].lower = -100;
            s[static_cast<size_t>(j)].upper = 100;
        }
        return s;
    }();
    const std::vector<std::string> constructs = {
        "f1 < f2",          "f1 <= f2",          "f1 = f2 + f3",         "f1 != f2",
        "f1 >= f2 * f3",    "f1 > f2",           "f1 in {0, 1, 2.5}",    "f1 <= f2 and f3 <= f4",
        "f1 <= f2 or f3 <= f4", "f1 / f2 <= f3",
    };
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    long long mismatches = 0, tested = 0;
    for (const auto& text : constructs) {
        auto set = parse_constraints(text, specs);
        int accepted = 0;
        while (accepted < 1000) {
            Eigen::VectorXd x(4);
            for (int j = 0; j < 4; ++j) x[j] = unif(rng);
            if (margins::guard_hits(set, x, x)) continue;
            if (margins::kink_margin(set, x, x) < 1e-9) continue;  // boundary band excluded
            ++accepted;
            ++tested;
            if ((penalty(set, x, x) == 0.0) != check(set, x, x)) ++mismatches;
        }
    }
    double secs = now_minus(t0);
    Outcome o;
    o.pass = mismatches == 0 && secs < 10.0;
    o.detail = std::to_string(tested) + " points across " + std::to_string(constructs.size()) + " constructs, " +
               std::to_string(mismatches) + " mismatches, " + fmt(secs, 2) + "s (< 10s)";
    return o;
}

Outcome criterion_gradient_oracle(const Benchmark& b) {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<double> unif(0.02, 0.98);
    int accepted = 0;
    double worst = 0.0;
    long long bad = 0;
    while (accepted < 100) {
        Eigen::VectorXd x(6), x_orig(6);
        for (int j = 0; j < 6; ++j) {
            x[j] = unif(rng);
            x_orig[j] = unif(rng);
        }
        Eigen::VectorXd xo = unscale(x, b.model.scaler);
        // off hinge kinks: margins in original units must exceed 1e-3
        if (std::abs(xo[0] - xo[1]) < 1e-2) continue;
        if (std::abs(xo[2] - (xo[0] + xo[1])) < 1e-2) continue;
        double best = 1e9, second = 1e9;
        for (double c : {0.0, 1.0, 2.0}) {
            double dist = std::abs(xo[3] - c);
            if (dist < best) {
                second = best;
                best = dist;
            } else {
                second = std::min(second, dist);
            }
        }
        if (best < 1e-2 || std::abs(second - best) < 1e-2) continue;
        int y = accepted % 2;
        ++accepted;
        auto [breakdown, analytic] = attack_loss_and_grad(b.model, x, x_orig, y, b.omega);
        Eigen::VectorXd numeric(6);
        for (int j = 0; j < 6; ++j) {
            Eigen::VectorXd hi = x, lo = x;
            hi[j] += 1e-6;
            lo[j] -= 1e-6;
            numeric[j] = (attack_loss(b.model, hi, x_orig, y, b.omega).total -
                          attack_loss(b.model, lo, x_orig, y, b.omega).total) /
                         2e-6;
        }
        double rel = (analytic - numeric).norm() / std::max(analytic.norm(), 1e-12);
        worst = std::max(worst, rel);
        if (rel >= 1e-4) ++bad;
    }
    double secs = now_minus(t0);
    Outcome o;
    o.pass = bad == 0 && secs < 10.0;
    o.detail = "100 points, max rel err " + fmt(worst, 8) + " (< 1e-4), " + fmt(secs, 2) + "s (< 10s)";
    return o;
}

Outcome criterion_checkpoints() {
    std::vector<int> expected{0, 22, 41, 57, 70, 80, 87, 93, 99, 100};
    bool frozen_ok = capgd_checkpoints(100) == expected;
    long long mismatches = 0;
    for (int n = 1; n <= 1000; ++n) {
        std::vector<int> oracle{0};
        long long prev = 0, cur = 22;  // recurrence in exact hundredths
        while (cur <= 100) {
            oracle.push_back(static_cast<int>((cur * n + 99) / 100));
            long long next = cur + std::max(cur - prev - 3, 6ll);
            prev = cur;
            cur = next;
        }
        oracle.push_back(n);
        std::sort(oracle.begin(), oracle.end());
        oracle.erase(std::unique(oracle.begin(), oracle.end()), oracle.end());
        if (capgd_checkpoints(n) != oracle) ++mismatches;
    }
    Outcome o;
    o.pass = frozen_ok && mismatches == 0;
    o.detail = std::string("capgd_checkpoints(100) ") + (frozen_ok ? "matches" : "differs") + ", " +
               std::to_string(mismatches) + "/1000 recurrence mismatches";
    return o;
}

Outcome criterion_schedule() {
    long long mismatches = 0;
    for (int k = 0; k < 10; ++k) {
        double got = cpgd_schedule(k, 10, 7, 0.5);
        double expected = 0.5 * std::pow(10.0, -(1.0 + k));
        if (got != expected) ++mismatches;
    }
    Outcome o;
    o.pass = mismatches == 0;
    o.detail = "k=0..9 vs 0.5*10^-(1+k), " + std::to_string(mismatches) + " mismatches (exact)";
    return o;
}

Outcome criterion_subsumption(const Benchmark& b, const Battery& battery) {
    long long missing = 0;
    bool ra_ok = true;
    for (size_t s = 0; s < kSeeds.size(); ++s) {
        const auto& caa_run = battery.runs.at("caa")[s];
        auto caa_set = success_set(caa_run.result, b.slice.ids);
        for (const auto& stage : caa_run.result.stages) {
            if (stage.name != "capgd") continue;
            for (auto id : stage.success_ids) {
                if (!caa_set.count(id)) ++missing;
            }
        }
        if (caa_run.robust_acc > battery.runs.at("capgd")[s].robust_acc + 1e-12) ra_ok = false;
    }
    Outcome o;
    o.pass = missing == 0 && ra_ok;
    o.detail = std::to_string(missing) + " capgd-stage successes missing from CAA; per-seed RA(CAA) <= RA(CAPGD): " +
               (ra_ok ? "yes" : "no");
    return o;
}

Outcome criterion_directional(const Battery& battery) {
    double ra_cpgd = mean_ra(battery, "cpgd");
    double ra_capgd = mean_ra(battery, "capgd");
    Outcome o;
    o.pass = ra_capgd <= ra_cpgd - 0.05;
    o.detail = "mean RA over 3 seeds: CPGD " + fmt(ra_cpgd) + ", CAPGD " + fmt(ra_capgd) +
               " (need margin >= 0.05)";
    return o;
}

Outcome criterion_gradient_free(const Benchmark& b) {
    Classifier masked = b.model;
    masked.logit_step = 4.0;  // piecewise-constant output regions
    EvaluationSlice slice = critical_slice(masked, b.test_set);
    AttackOptions opts;
    opts.example_ids = slice.ids;

    long long capgd_successes = 0;
    for (std::uint64_t seed : kSeeds) {
        CapgdConfig cfg;
        cfg.seed = seed;
        AttackResult r = capgd(masked, slice.X, slice.Y, b.omega, b.full.specs, cfg, kBudget, opts);
        capgd_successes += r.success_count();
    }
    MoevaConfig mcfg;
    mcfg.seed = 1;
    AttackResult m = moeva(masked, slice.X, slice.Y, b.omega, b.full.specs, mcfg, kBudget, opts);
    long long moeva_successes = m.success_count();

    Outcome o;
    o.pass = capgd_successes == 0 && moeva_successes > 0;
    o.detail = "masked model (logit step 4.0): CAPGD successes " + std::to_string(capgd_successes) +
               " (need 0), MOEVA successes " + std::to_string(moeva_successes) + "/" +
               std::to_string(slice.Y.size()) + " (need > 0)";
    return o;
}

Outcome criterion_efficiency(const Battery& battery, double total_runtime) {
    double caa_time = 0.0, moeva_time = 0.0;
    double stage_success_fraction = 1.0;
    for (size_t s = 0; s < kSeeds.size(); ++s) {
        const auto& caa_run = battery.runs.at("caa")[s];
        caa_time += caa_run.result.seconds;
        moeva_time += battery.runs.at("moeva")[s].result.seconds;
        long long pass_through = 0, capgd_ok = 0;
        for (const auto& stage : caa_run.result.stages) {
            if (stage.name == "pass_through") pass_through = static_cast<long long>(stage.success_ids.size());
            if (stage.name == "capgd") capgd_ok = static_cast<long long>(stage.success_ids.size());
        }
        long long candidates = static_cast<long long>(caa_run.result.success.size()) - pass_through;
        if (candidates > 0) {
            stage_success_fraction =
                std::min(stage_success_fraction, static_cast<double>(capgd_ok) / static_cast<double>(candidates));
        }
    }
    bool gated = stage_success_fraction >= 0.20;
    bool time_ok = caa_time <= 1.1 * moeva_time;
    Outcome o;
    o.pass = (!gated || time_ok) && total_runtime < 600.0;
    o.detail = "CAA " + fmt(caa_time, 1) + "s vs MOEVA " + fmt(moeva_time, 1) + "s over 3 seeds (capgd stage success " +
               fmt(100 * stage_success_fraction, 1) + "%" + (gated ? "" : ", gate < 20%: comparison not binding") +
               "); total benchmark " + fmt(total_runtime, 1) + "s (< 600s)";
    return o;
}

Outcome criterion_ablation(const Benchmark& b) {
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    AttackSpec base;
    base.name = "capgd";
    base.budget = kBudget;
    base.echo["attack"] = "capgd";
    EvaluationReport report = ablation_matrix(b.model, b.slice, b.omega, b.full.specs, base, seeds);

    std::map<std::string, std::set<std::int64_t>> sets;
    for (const auto& a : report.attacks) sets[a.name] = a.success_union;
    const auto& full = sets.at("capgd");
    bool ok = true;
    std::ostringstream detail;
    detail << "coverage(variant, CAPGD) over 5 seeds:";
    for (const auto& name : {"capgd-nrep", "capgd-nini", "capgd-nran", "capgd-nada"}) {
        double c = coverage(sets.at(name), full);
        detail << " " << name << "=" << fmt(c);
        if (c < 0.95) ok = false;
    }
    Outcome o;
    o.pass = ok;
    o.detail = detail.str() + " (need >= 0.95 each)";
    return o;
}

Outcome criterion_determinism(const Benchmark& b, const Battery& battery) {
    CaaConfig cfg;
    cfg.capgd.seed = kSeeds[0];
    cfg.moeva.seed = kSeeds[0];
    AttackOptions opts;
    opts.example_ids = b.slice.ids;
    opts.threads = 2;  // thread count must not matter
    AttackResult rerun = caa(b.model, b.slice.X, b.slice.Y, b.omega, b.full.specs, cfg, kBudget, opts);
    const auto& first = battery.runs.at("caa")[0].result;
    bool rows_equal = rerun.rows == first.rows;
    bool mask_equal = rerun.success == first.success;

    auto report_of = [&](const AttackResult& r) {
        EvaluationReport report;
        report.dataset = "synthetic";
        report.model_file = "benchmark";
        report.clean_accuracy = b.slice.clean_accuracy;
        report.seeds = {kSeeds[0]};
        AttackSummary summary;
        summary.name = "caa";
        summary.robust_accuracy.mean = robust_accuracy(b.model, b.slice.X, r.rows, b.slice.Y, b.omega, kBudget);
        summary.success_union = success_set(r, b.slice.ids);
        report.attacks.push_back(summary);
        return report.to_json(false).dump();
    };
    bool bytes_equal = report_of(rerun) == report_of(first);
    Outcome o;
    o.pass = rows_equal && mask_equal && bytes_equal;
    o.detail = std::string("rerun with identical seeds: rows ") + (rows_equal ? "identical" : "differ") +
               ", masks " + (mask_equal ? "identical" : "differ") + ", report bytes " +
               (bytes_equal ? "identical" : "differ");
    return o;
}

}  // namespace

int main() {
    auto t0 = std::chrono::steady_clock::now();
    std::cout << "building benchmark (synthetic d=6 n=1000 k=3, MLP)\n" << std::flush;
    Benchmark b = build_benchmark();
    std::cout << "clean accuracy: test " << fmt(accuracy(b.model, b.test_set)) << ", critical slice "
              << fmt(b.slice.clean_accuracy) << " over " << b.slice.Y.size() << " rows\n"
              << std::flush;
    if (b.model.clean_accuracy < 0.90) {
        std::cout << "[FAIL] benchmark precondition: clean accuracy < 0.90\n";
        return 1;
    }

    std::cout << "running attack battery (cpgd, capgd, moeva, caa x seeds {1,2,3})\n" << std::flush;
    Battery battery = run_battery(b);
    for (const auto& name : {"cpgd", "capgd", "moeva", "caa"}) {
        std::cout << "  " << name << ": mean robust accuracy " << fmt(mean_ra(battery, name)) << "\n";
    }

    report(1, "validity of success-masked outputs (exact)", criterion_validity(b, battery));
    report(2, "penalty soundness (penalty==0 iff check)", criterion_penalty_soundness());
    report(3, "gradient oracle (analytic vs central differences)", criterion_gradient_oracle(b));
    report(4, "checkpoint recurrence", criterion_checkpoints());
    report(5, "CPGD decay schedule", criterion_schedule());
    report(6, "CAA subsumes its CAPGD stage", criterion_subsumption(b, battery));
    report(7, "directional effectiveness CAPGD vs CPGD", criterion_directional(battery));
    report(8, "gradient-free complement on a masked model", criterion_gradient_free(b));
    report(9, "efficiency of CAA vs MOEVA-alone", criterion_efficiency(battery, now_minus(t0)));
    report(10, "ablation coverage", criterion_ablation(b));
    report(11, "determinism of repeated runs", criterion_determinism(b, battery));

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
              << " in " << fmt(now_minus(t0), 1) << "s\n";
    return failures == 0 ? 0 : 1;
}
