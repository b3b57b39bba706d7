#include "tabattack/moeva.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "tabattack/caa.hpp"
#include "tabattack/parallel.hpp"

namespace tabattack {

std::array<double, 3> objectives(const Classifier& model, const Eigen::VectorXd& candidate,
                                 const Eigen::VectorXd& x_orig, int y, const ConstraintSet& omega) {
    Eigen::VectorXd probs = forward(model, candidate);
    double f1 = probs[y];
    double f2 = (candidate - x_orig).norm();
    Eigen::VectorXd xo = unscale(candidate, model.scaler);
    Eigen::VectorXd xo_orig = unscale(x_orig, model.scaler);
    double f3 = penalty(omega, xo, xo_orig);
    return {f1, f2, f3};
}

namespace {

struct Individual {
    Eigen::VectorXd x;  // full scaled vector (immutables pinned by projection)
    std::array<double, 3> f{0, 0, 0};
    int pred = -1;
    bool valid = false;  // constraints hold
    bool adv = false;    // is_adv verdict
};

bool dominates(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    bool strictly = false;
    for (int i = 0; i < 3; ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strictly = true;
    }
    return strictly;
}

bool lex_less(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

/// Deb's fast non-dominated sort; returns front index per individual.
std::vector<int> nondominated_ranks(const std::vector<Individual>& pool) {
    const size_t n = pool.size();
    std::vector<std::vector<size_t>> dominated(n);
    std::vector<int> dom_count(n, 0);
    std::vector<int> rank(n, -1);
    std::vector<size_t> front;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            if (dominates(pool[i].f, pool[j].f)) {
                dominated[i].push_back(j);
                ++dom_count[j];
            } else if (dominates(pool[j].f, pool[i].f)) {
                dominated[j].push_back(i);
                ++dom_count[i];
            }
        }
        if (dom_count[i] == 0) {
            rank[i] = 0;
            front.push_back(i);
        }
    }
    int level = 0;
    while (!front.empty()) {
        std::vector<size_t> next;
        for (size_t i : front) {
            for (size_t j : dominated[i]) {
                if (--dom_count[j] == 0) {
                    rank[j] = level + 1;
                    next.push_back(j);
                }
            }
        }
        ++level;
        front = std::move(next);
    }
    return rank;
}

std::vector<double> crowding_distances(const std::vector<Individual>& pool, const std::vector<size_t>& front) {
    std::vector<double> dist(front.size(), 0.0);
    if (front.size() <= 2) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        return dist;
    }
    std::vector<size_t> order(front.size());
    for (int m = 0; m < 3; ++m) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            double fa = pool[front[a]].f[static_cast<size_t>(m)];
            double fb = pool[front[b]].f[static_cast<size_t>(m)];
            if (fa != fb) return fa < fb;
            return front[a] < front[b];
        });
        double lo = pool[front[order.front()]].f[static_cast<size_t>(m)];
        double hi = pool[front[order.back()]].f[static_cast<size_t>(m)];
        dist[order.front()] = std::numeric_limits<double>::infinity();
        dist[order.back()] = std::numeric_limits<double>::infinity();
        if (hi == lo) continue;
        for (size_t k = 1; k + 1 < order.size(); ++k) {
            double prev = pool[front[order[k - 1]]].f[static_cast<size_t>(m)];
            double next = pool[front[order[k + 1]]].f[static_cast<size_t>(m)];
            dist[order[k]] += (next - prev) / (hi - lo);
        }
    }
    return dist;
}

struct PerExampleContext {
    const Classifier& model;
    const ConstraintSet& omega;
    const std::vector<FeatureSpec>& specs;
    const MutabilityMask& mask;
    Budget budget;
    const MoevaConfig& cfg;
};

Eigen::VectorXd pipeline(const PerExampleContext& ctx, Eigen::VectorXd x, const Eigen::VectorXd& x_orig) {
    x = project(x, x_orig, ctx.budget, ctx.mask);
    x = round_types(x, ctx.specs, ctx.model.scaler);
    Eigen::VectorXd xo = unscale(x, ctx.model.scaler);
    Eigen::VectorXd xo_orig = unscale(x_orig, ctx.model.scaler);
    return scale(repair(ctx.omega, xo, xo_orig), ctx.model.scaler);
}

/// Builds individuals from already-pipelined candidates with one batched
/// forward pass.
std::vector<Individual> evaluate_batch(const PerExampleContext& ctx, std::vector<Eigen::VectorXd> xs,
                                       const Eigen::VectorXd& x_orig, int y) {
    const auto n = static_cast<Eigen::Index>(xs.size());
    Eigen::MatrixXd batch(n, x_orig.size());
    for (Eigen::Index i = 0; i < n; ++i) batch.row(i) = xs[static_cast<size_t>(i)].transpose();
    Eigen::MatrixXd probs = forward_batch(ctx.model, batch);
    Eigen::VectorXd xo_orig = unscale(x_orig, ctx.model.scaler);

    std::vector<Individual> out(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        Individual& ind = out[static_cast<size_t>(i)];
        ind.x = std::move(xs[static_cast<size_t>(i)]);
        Eigen::Index best;
        probs.row(i).maxCoeff(&best);
        ind.pred = static_cast<int>(best);
        ind.f[0] = probs(i, y);
        ind.f[1] = (ind.x - x_orig).norm();
        Eigen::VectorXd xo = unscale(ind.x, ctx.model.scaler);
        ind.f[2] = penalty(ctx.omega, xo, xo_orig);
        ind.valid = check(ctx.omega, xo, xo_orig);
        ind.adv = ind.valid && ind.pred != y && ind.f[1] <= ctx.budget.epsilon + 1e-9;
    }
    return out;
}

struct ExampleOutcome {
    Eigen::VectorXd x;
    bool success = false;
};

ExampleOutcome evolve_one(const PerExampleContext& ctx, const Eigen::VectorXd& x_orig, int y,
                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto d = x_orig.size();
    const double sigma = ctx.budget.epsilon * ctx.cfg.mutation_sigma_factor;
    const double mutation_prob = 1.0 / static_cast<double>(d);

    std::vector<Individual> pop;
    pop.reserve(static_cast<size_t>(ctx.cfg.n_pop));

    bool have_archive = false;
    Individual archive;  // best valid successful candidate seen so far
    auto consider_for_archive = [&](const Individual& ind) {
        if (!ind.adv) return;
        if (!have_archive || std::make_pair(ind.f[0], ind.f[1]) < std::make_pair(archive.f[0], archive.f[1])) {
            archive = ind;
            have_archive = true;
        }
    };

    // Initial population: clean example, injected seeds, then jittered clones.
    {
        std::vector<Eigen::VectorXd> init;
        init.push_back(pipeline(ctx, x_orig, x_orig));
        for (const auto& sp : ctx.cfg.seed_points) {
            if (static_cast<Eigen::Index>(sp.size()) != d) throw std::invalid_argument("moeva: seed point dimension");
            if (static_cast<int>(init.size()) >= ctx.cfg.n_pop) break;
            init.push_back(pipeline(ctx, sp, x_orig));
        }
        while (static_cast<int>(init.size()) < ctx.cfg.n_pop) {
            Eigen::VectorXd x = x_orig;
            for (Eigen::Index j = 0; j < d; ++j) {
                double noise = sigma * normal(rng);  // fixed draw count per coordinate
                if (ctx.mask.movable[static_cast<size_t>(j)]) x[j] += noise;
            }
            init.push_back(pipeline(ctx, std::move(x), x_orig));
        }
        pop = evaluate_batch(ctx, std::move(init), x_orig, y);
        for (const auto& ind : pop) consider_for_archive(ind);
    }

    auto tournament = [&](const std::vector<int>& rank, const std::vector<double>& crowd) {
        size_t a = static_cast<size_t>(unif(rng) * static_cast<double>(pop.size()));
        size_t b = static_cast<size_t>(unif(rng) * static_cast<double>(pop.size()));
        a = std::min(a, pop.size() - 1);
        b = std::min(b, pop.size() - 1);
        if (rank[a] != rank[b]) return rank[a] < rank[b] ? a : b;
        if (crowd[a] != crowd[b]) return crowd[a] > crowd[b] ? a : b;
        return std::min(a, b);
    };

    for (int gen = 0; gen < ctx.cfg.n_gen; ++gen) {
        std::vector<int> rank = nondominated_ranks(pop);
        // crowding per individual, computed front by front
        std::vector<double> crowd(pop.size(), 0.0);
        {
            int max_rank = *std::max_element(rank.begin(), rank.end());
            for (int r = 0; r <= max_rank; ++r) {
                std::vector<size_t> front;
                for (size_t i = 0; i < pop.size(); ++i) {
                    if (rank[i] == r) front.push_back(i);
                }
                if (front.empty()) continue;
                std::vector<double> dist = crowding_distances(pop, front);
                for (size_t k = 0; k < front.size(); ++k) crowd[front[k]] = dist[k];
            }
        }

        std::vector<Eigen::VectorXd> children;
        children.reserve(static_cast<size_t>(ctx.cfg.n_off));
        for (int o = 0; o < ctx.cfg.n_off; ++o) {
            size_t p1 = tournament(rank, crowd);
            size_t p2 = tournament(rank, crowd);
            Eigen::VectorXd child = pop[p1].x;
            // two-point crossover (fixed RNG consumption regardless of outcome)
            double cross_draw = unif(rng);
            auto c1 = static_cast<Eigen::Index>(unif(rng) * static_cast<double>(d));
            auto c2 = static_cast<Eigen::Index>(unif(rng) * static_cast<double>(d));
            if (cross_draw < ctx.cfg.crossover_prob) {
                if (c1 > c2) std::swap(c1, c2);
                for (Eigen::Index j = c1; j < std::min(c2 + 1, d); ++j) child[j] = pop[p2].x[j];
            }
            for (Eigen::Index j = 0; j < d; ++j) {
                double flag = unif(rng);
                double noise = normal(rng);
                if (flag < mutation_prob && ctx.mask.movable[static_cast<size_t>(j)]) {
                    child[j] += sigma * noise;
                }
            }
            children.push_back(pipeline(ctx, std::move(child), x_orig));
        }
        std::vector<Individual> offspring = evaluate_batch(ctx, std::move(children), x_orig, y);
        for (const auto& ind : offspring) consider_for_archive(ind);

        // (mu + lambda) survival by rank, then crowding
        std::vector<Individual> pool = std::move(pop);
        pool.insert(pool.end(), std::make_move_iterator(offspring.begin()), std::make_move_iterator(offspring.end()));
        std::vector<int> pool_rank = nondominated_ranks(pool);
        std::vector<size_t> order(pool.size());
        std::iota(order.begin(), order.end(), 0);

        std::vector<double> pool_crowd(pool.size(), 0.0);
        {
            int max_rank = *std::max_element(pool_rank.begin(), pool_rank.end());
            for (int r = 0; r <= max_rank; ++r) {
                std::vector<size_t> front;
                for (size_t i = 0; i < pool.size(); ++i) {
                    if (pool_rank[i] == r) front.push_back(i);
                }
                if (front.empty()) continue;
                std::vector<double> dist = crowding_distances(pool, front);
                for (size_t k = 0; k < front.size(); ++k) pool_crowd[front[k]] = dist[k];
            }
        }
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (pool_rank[a] != pool_rank[b]) return pool_rank[a] < pool_rank[b];
            if (pool_crowd[a] != pool_crowd[b]) return pool_crowd[a] > pool_crowd[b];
            return a < b;
        });

        // forced elitism: the lexicographically best objective vector survives
        size_t lex_best = 0;
        for (size_t i = 1; i < pool.size(); ++i) {
            if (lex_less(pool[i].f, pool[lex_best].f)) lex_best = i;
        }
        pop.clear();
        bool kept_best = false;
        for (size_t k = 0; k < order.size() && static_cast<int>(pop.size()) < ctx.cfg.n_pop; ++k) {
            if (order[k] == lex_best) kept_best = true;
            pop.push_back(pool[order[k]]);
        }
        if (!kept_best && !pop.empty()) pop.back() = pool[lex_best];
    }

    ExampleOutcome out;
    if (have_archive) {
        out.x = archive.x;
        out.success = true;
        return out;
    }
    // No adversarial candidate: prefer the valid individual with the lowest
    // true-class probability, else the lexicographic (penalty, prob) minimum.
    const Individual* fallback = nullptr;
    for (const auto& ind : pop) {
        if (!ind.valid) continue;
        if (!fallback || ind.f[0] < fallback->f[0]) fallback = &ind;
    }
    if (!fallback) {
        for (const auto& ind : pop) {
            if (!fallback || std::make_pair(ind.f[2], ind.f[0]) < std::make_pair(fallback->f[2], fallback->f[0])) {
                fallback = &ind;
            }
        }
    }
    out.x = fallback->x;
    out.success = false;
    return out;
}

}  // namespace

AttackResult moeva(const Classifier& model, const Eigen::MatrixXd& X, const std::vector<int>& Y,
                   const ConstraintSet& omega, const std::vector<FeatureSpec>& specs, const MoevaConfig& cfg,
                   const Budget& budget, const AttackOptions& options) {
    if (cfg.n_pop < 2) throw std::invalid_argument("moeva: n_pop must be >= 2");
    if (cfg.n_off < 1) throw std::invalid_argument("moeva: n_off must be >= 1");
    if (cfg.n_gen < 1) throw std::invalid_argument("moeva: n_gen must be >= 1");
    if (X.rows() != static_cast<Eigen::Index>(Y.size())) throw std::invalid_argument("moeva: rows/labels mismatch");
    auto t0 = std::chrono::steady_clock::now();

    MutabilityMask mask = MutabilityMask::from_specs(specs);
    PerExampleContext ctx{model, omega, specs, mask, budget, cfg};

    AttackResult result;
    result.rows = X;
    result.success.assign(static_cast<size_t>(X.rows()), 0);
    result.iterations.assign(static_cast<size_t>(X.rows()), cfg.n_gen);

    parallel_for(X.rows(), options.threads, [&](std::int64_t i) {
        Eigen::VectorXd x_orig = X.row(i).transpose();
        int y = Y[static_cast<size_t>(i)];
        ExampleOutcome out =
            evolve_one(ctx, x_orig, y, mix_seed(cfg.seed, static_cast<std::uint64_t>(options.id_of(i))));
        result.rows.row(i) = out.x.transpose();
        // re-validated through the shared oracle so the mask is authoritative
        result.success[static_cast<size_t>(i)] =
            out.success && is_adv_single(model, omega, budget, out.x, x_orig, y) ? 1 : 0;
    });

    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    StageReport stage{"moeva", result.seconds, {}};
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        if (result.success[static_cast<size_t>(i)]) stage.success_ids.push_back(options.id_of(i));
    }
    result.stages.push_back(std::move(stage));
    return result;
}

}  // namespace tabattack
