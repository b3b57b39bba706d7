#include "tabattack/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tabattack/csv.hpp"
#include "tabattack/logging.hpp"

namespace tabattack {

using nlohmann::json;
using nlohmann::ordered_json;

AttackSpec parse_attack_config(const json& config, const std::string& name_override) {
    AttackSpec spec;
    spec.echo = config;
    spec.name = name_override.empty() ? config.value("attack", "caa") : name_override;
    if (spec.name != "cpgd" && spec.name != "capgd" && spec.name != "moeva" && spec.name != "caa") {
        throw std::invalid_argument("unknown attack \"" + spec.name + "\"; expected one of {cpgd, capgd, moeva, caa}");
    }
    if (!name_override.empty() && config.contains("attack") && config["attack"] != name_override) {
        throw std::invalid_argument("config names attack \"" + config["attack"].get<std::string>() +
                                    "\" but \"" + name_override + "\" was requested");
    }
    double eps = config.value("epsilon", 0.5);
    if (!(eps > 0.0)) throw std::invalid_argument("budget invariant: epsilon must be > 0");
    spec.budget.epsilon = eps;
    spec.budget.p = norm_from_string(config.value("norm", "l2"));
    spec.seed = config.value("seed", 0ull);

    auto read_capgd = [&](const json& j, CapgdConfig& out) {
        out.n_iter = j.value("n_iter", out.n_iter);
        out.alpha = j.value("alpha", out.alpha);
        out.rho = j.value("rho", out.rho);
        if (j.contains("ablation")) {
            for (const auto& a : j["ablation"]) out.ablation.insert(ablation_from_string(a.get<std::string>()));
        }
    };
    auto read_moeva = [&](const json& j, MoevaConfig& out) {
        out.n_gen = j.value("n_gen", out.n_gen);
        out.n_off = j.value("n_off", out.n_off);
        out.n_pop = j.value("n_pop", out.n_pop);
    };

    if (spec.name == "cpgd") {
        spec.cpgd.n_iter = config.value("n_iter", spec.cpgd.n_iter);
    } else if (spec.name == "capgd") {
        read_capgd(config, spec.capgd);
    } else if (spec.name == "moeva") {
        read_moeva(config, spec.moeva);
    } else {
        if (config.contains("stages")) spec.caa_stages = config["stages"].get<std::vector<std::string>>();
        if (config.contains("capgd")) read_capgd(config["capgd"], spec.capgd);
        if (config.contains("moeva")) read_moeva(config["moeva"], spec.moeva);
    }
    return spec;
}

AttackResult run_attack(const Classifier& model, const Eigen::MatrixXd& X, const std::vector<int>& Y,
                        const ConstraintSet& omega, const std::vector<FeatureSpec>& specs,
                        const AttackSpec& spec, const AttackOptions& options) {
    if (spec.name == "cpgd") {
        return cpgd(model, X, Y, omega, specs, spec.cpgd, spec.budget, options);
    }
    if (spec.name == "capgd") {
        CapgdConfig cfg = spec.capgd;
        cfg.seed = spec.seed;
        return capgd(model, X, Y, omega, specs, cfg, spec.budget, options);
    }
    if (spec.name == "moeva") {
        MoevaConfig cfg = spec.moeva;
        cfg.seed = spec.seed;
        return moeva(model, X, Y, omega, specs, cfg, spec.budget, options);
    }
    CaaConfig cfg;
    cfg.stages = spec.caa_stages;
    cfg.capgd = spec.capgd;
    cfg.capgd.seed = spec.seed;
    cfg.moeva = spec.moeva;
    cfg.moeva.seed = spec.seed;
    return caa(model, X, Y, omega, specs, cfg, spec.budget, options);
}

EvaluationSlice critical_slice(const Classifier& model, const Dataset& test) {
    EvaluationSlice slice;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < test.n(); ++i) {
        if (test.labels[static_cast<size_t>(i)] == test.critical_class) rows.push_back(i);
    }
    if (rows.empty()) throw std::runtime_error("no critical-class rows in the evaluation set");
    slice.X.resize(static_cast<Eigen::Index>(rows.size()), test.d());
    Eigen::MatrixXd scaled = scale_rows(test.rows, model.scaler);
    slice.Y.reserve(rows.size());
    for (size_t k = 0; k < rows.size(); ++k) {
        slice.X.row(static_cast<Eigen::Index>(k)) = scaled.row(rows[k]);
        slice.Y.push_back(test.labels[static_cast<size_t>(rows[k])]);
        slice.ids.push_back(static_cast<std::int64_t>(rows[k]));
    }
    std::vector<int> pred = predict_batch(model, slice.X);
    Eigen::Index hits = 0;
    for (size_t k = 0; k < rows.size(); ++k) {
        if (pred[k] == slice.Y[k]) ++hits;
    }
    slice.clean_accuracy = static_cast<double>(hits) / static_cast<double>(rows.size());
    return slice;
}

double robust_accuracy(const Classifier& model, const Eigen::MatrixXd& X_eval, const Eigen::MatrixXd& X_adv,
                       const std::vector<int>& Y, const ConstraintSet& omega, const Budget& budget) {
    if (X_eval.rows() != X_adv.rows() || X_eval.rows() != static_cast<Eigen::Index>(Y.size())) {
        throw std::invalid_argument("robust_accuracy: size mismatch");
    }
    if (X_eval.rows() == 0) return 0.0;
    std::vector<int> pred = predict_batch(model, X_eval);
    std::vector<std::uint8_t> adv = is_adv(X_adv, X_eval, Y, model, omega, budget);
    Eigen::Index errors = 0;
    for (Eigen::Index i = 0; i < X_eval.rows(); ++i) {
        bool clean_wrong = pred[static_cast<size_t>(i)] != Y[static_cast<size_t>(i)];
        if (clean_wrong || adv[static_cast<size_t>(i)]) ++errors;
    }
    return 1.0 - static_cast<double>(errors) / static_cast<double>(X_eval.rows());
}

std::set<std::int64_t> success_set(const AttackResult& result, const std::vector<std::int64_t>& ids) {
    if (ids.size() != result.success.size()) throw std::invalid_argument("success_set: ids/success size mismatch");
    std::set<std::int64_t> out;
    for (size_t i = 0; i < result.success.size(); ++i) {
        if (result.success[i]) out.insert(ids[i]);
    }
    return out;
}

std::set<std::int64_t> union_sets(const std::vector<std::set<std::int64_t>>& sets) {
    std::set<std::int64_t> out;
    for (const auto& s : sets) out.insert(s.begin(), s.end());
    return out;
}

double coverage(const std::set<std::int64_t>& c_a, const std::set<std::int64_t>& c_b) {
    std::set<std::int64_t> u = c_a;
    u.insert(c_b.begin(), c_b.end());
    if (u.empty()) {
        log::info("coverage: both success sets empty, defining coverage = 1.0");
        return 1.0;
    }
    return static_cast<double>(c_b.size()) / static_cast<double>(u.size());
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd ms;
    if (values.empty()) return ms;
    double sum = 0.0;
    for (double v : values) sum += v;
    ms.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - ms.mean) * (v - ms.mean);
        ms.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    return ms;
}

AttackSummary run_attack_over_seeds(const Classifier& model, const EvaluationSlice& slice,
                                    const ConstraintSet& omega, const std::vector<FeatureSpec>& specs,
                                    AttackSpec spec, const std::vector<std::uint64_t>& seeds,
                                    const AttackOptions& options) {
    if (seeds.empty()) throw std::invalid_argument("run_attack_over_seeds: need at least one seed");
    AttackSummary summary;
    summary.name = spec.name;
    summary.config = spec.echo;
    std::vector<double> ras, durations;
    std::vector<std::set<std::int64_t>> per_seed_sets;
    for (std::uint64_t seed : seeds) {
        spec.seed = seed;
        AttackOptions opts = options;
        opts.example_ids = slice.ids;
        AttackResult result = run_attack(model, slice.X, slice.Y, omega, specs, spec, opts);
        ras.push_back(robust_accuracy(model, slice.X, result.rows, slice.Y, omega, spec.budget));
        durations.push_back(result.seconds);
        per_seed_sets.push_back(success_set(result, slice.ids));
    }
    summary.per_seed_robust_accuracy = ras;
    summary.robust_accuracy = mean_std(ras);
    summary.duration_s = mean_std(durations);
    summary.success_union = union_sets(per_seed_sets);
    return summary;
}

std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::epsilon: return "epsilon";
        case SweepAxis::capgd_iters: return "capgd_iters";
        case SweepAxis::moeva_iters: return "moeva_iters";
    }
    return "epsilon";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "epsilon") return SweepAxis::epsilon;
    if (s == "capgd_iters") return SweepAxis::capgd_iters;
    if (s == "moeva_iters") return SweepAxis::moeva_iters;
    throw std::invalid_argument("unknown sweep axis \"" + s + "\" (expected epsilon|capgd_iters|moeva_iters)");
}

EvaluationReport budget_sweep(const Classifier& model, const EvaluationSlice& slice, const ConstraintSet& omega,
                              const std::vector<FeatureSpec>& specs, SweepAxis axis,
                              const std::vector<double>& values, const AttackSpec& base,
                              const std::vector<std::uint64_t>& seeds, const AttackOptions& options) {
    if (values.empty()) throw std::invalid_argument("budget_sweep: values must be nonempty");
    EvaluationReport report;
    report.clean_accuracy = slice.clean_accuracy;
    report.seeds = seeds;
    report.config["axis"] = to_string(axis);
    report.config["values"] = values;
    report.config["base"] = base.echo;

    for (double v : values) {
        AttackSpec spec = base;
        switch (axis) {
            case SweepAxis::epsilon:
                if (!(v > 0.0)) throw std::invalid_argument("budget invariant: epsilon must be > 0 in sweep grid");
                spec.budget.epsilon = v;
                break;
            case SweepAxis::capgd_iters:
                if (v < 1) throw std::invalid_argument("budget_sweep: capgd_iters must be >= 1");
                spec.capgd.n_iter = static_cast<int>(v);
                break;
            case SweepAxis::moeva_iters:
                if (v < 1) throw std::invalid_argument("budget_sweep: moeva_iters must be >= 1");
                spec.moeva.n_gen = static_cast<int>(v);
                break;
        }
        AttackSummary summary = run_attack_over_seeds(model, slice, omega, specs, spec, seeds, options);
        summary.name = to_string(axis) + "=" + csv::format_double(v);
        ordered_json cfg;
        cfg["axis"] = to_string(axis);
        cfg["value"] = v;
        cfg["attack"] = spec.name;
        summary.config = cfg;
        report.attacks.push_back(std::move(summary));
    }
    return report;
}

EvaluationReport ablation_matrix(const Classifier& model, const EvaluationSlice& slice,
                                 const ConstraintSet& omega, const std::vector<FeatureSpec>& specs,
                                 const AttackSpec& base, const std::vector<std::uint64_t>& seeds,
                                 const AttackOptions& options) {
    if (seeds.empty()) throw std::invalid_argument("ablation_matrix: need at least one seed");
    EvaluationReport report;
    report.clean_accuracy = slice.clean_accuracy;
    report.seeds = seeds;
    report.config = base.echo;

    const std::vector<std::pair<std::string, std::set<Ablation>>> variants = {
        {"capgd", {}},
        {"capgd-nrep", {Ablation::nrep}},
        {"capgd-nini", {Ablation::nini}},
        {"capgd-nran", {Ablation::nran}},
        {"capgd-nada", {Ablation::nada}},
    };
    for (const auto& [name, ablation] : variants) {
        AttackSpec spec = base;
        spec.name = "capgd";
        spec.capgd.ablation = ablation;
        AttackSummary summary = run_attack_over_seeds(model, slice, omega, specs, spec, seeds, options);
        summary.name = name;
        ordered_json cfg;
        cfg["attack"] = "capgd";
        cfg["ablation"] = ordered_json::array();
        for (auto a : ablation) cfg["ablation"].push_back(to_string(a));
        summary.config = cfg;
        report.attacks.push_back(std::move(summary));
    }
    for (const auto& a : report.attacks) {
        for (const auto& b : report.attacks) {
            report.coverage_pairs.push_back({a.name, b.name, coverage(a.success_union, b.success_union)});
        }
    }
    return report;
}

ordered_json EvaluationReport::to_json(bool include_timing) const {
    ordered_json doc;
    doc["report_version"] = 1;
    doc["dataset"] = dataset;
    doc["model_file"] = model_file;
    doc["clean_accuracy"] = clean_accuracy;
    doc["seeds"] = seeds;
    doc["config"] = config;
    doc["attacks"] = ordered_json::array();
    for (const auto& a : attacks) {
        ordered_json j;
        j["name"] = a.name;
        j["config"] = a.config;
        j["robust_accuracy"]["mean"] = a.robust_accuracy.mean;
        j["robust_accuracy"]["std"] = a.robust_accuracy.std;
        j["robust_accuracy"]["per_seed"] = a.per_seed_robust_accuracy;
        if (include_timing) {
            j["duration_s"]["mean"] = a.duration_s.mean;
            j["duration_s"]["std"] = a.duration_s.std;
        }
        j["success_indices"] = std::vector<std::int64_t>(a.success_union.begin(), a.success_union.end());
        doc["attacks"].push_back(std::move(j));
    }
    if (!coverage_pairs.empty()) {
        doc["coverage"]["pairs"] = ordered_json::array();
        for (const auto& p : coverage_pairs) {
            ordered_json j;
            j["covered"] = p.covered;
            j["covering"] = p.covering;
            j["coverage"] = p.value;
            doc["coverage"]["pairs"].push_back(std::move(j));
        }
    }
    return doc;
}

std::string EvaluationReport::to_csv() const {
    std::ostringstream out;
    out << "attack,robust_accuracy_mean,robust_accuracy_std,duration_s_mean,duration_s_std,successes\n";
    for (const auto& a : attacks) {
        out << a.name << ',' << csv::format_double(a.robust_accuracy.mean) << ','
            << csv::format_double(a.robust_accuracy.std) << ',' << csv::format_double(a.duration_s.mean) << ','
            << csv::format_double(a.duration_s.std) << ',' << a.success_union.size() << "\n";
    }
    return out.str();
}

void write_svg_line_chart(const std::string& path, const std::string& title,
                          const std::vector<std::string>& x_labels, const std::vector<double>& mean,
                          const std::vector<double>& std_dev) {
    if (x_labels.size() != mean.size() || mean.size() != std_dev.size() || mean.empty()) {
        throw std::invalid_argument("write_svg_line_chart: inconsistent series");
    }
    const double width = 640, height = 400, ml = 60, mr = 20, mt = 40, mb = 50;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;
    auto xpos = [&](size_t i) {
        return ml + (x_labels.size() == 1 ? plot_w / 2
                                          : plot_w * static_cast<double>(i) / static_cast<double>(x_labels.size() - 1));
    };
    auto ypos = [&](double v) { return mt + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write SVG file: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
        << "</text>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        double v = tick * 0.25;
        out << "<line x1=\"" << ml << "\" y1=\"" << ypos(v) << "\" x2=\"" << width - mr << "\" y2=\"" << ypos(v)
            << "\" stroke=\"#ddd\"/>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << ypos(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
            << csv::format_double(v) << "</text>\n";
    }
    for (size_t i = 0; i < x_labels.size(); ++i) {
        out << "<text x=\"" << xpos(i) << "\" y=\"" << height - mb + 18
            << "\" text-anchor=\"middle\" font-size=\"11\">" << x_labels[i] << "</text>\n";
    }
    // std band
    out << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.4\" points=\"";
    for (size_t i = 0; i < mean.size(); ++i) out << xpos(i) << ',' << ypos(mean[i] + std_dev[i]) << ' ';
    for (size_t i = mean.size(); i-- > 0;) out << xpos(i) << ',' << ypos(mean[i] - std_dev[i]) << ' ';
    out << "\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"#3182bd\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < mean.size(); ++i) out << xpos(i) << ',' << ypos(mean[i]) << ' ';
    out << "\"/>\n";
    for (size_t i = 0; i < mean.size(); ++i) {
        out << "<circle cx=\"" << xpos(i) << "\" cy=\"" << ypos(mean[i]) << "\" r=\"3\" fill=\"#3182bd\"/>\n";
    }
    out << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">budget</text>\n";
    out << "<text x=\"16\" y=\"" << mt + plot_h / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " << mt + plot_h / 2
        << ")\">robust accuracy</text>\n";
    out << "</svg>\n";
}

}  // namespace tabattack
