#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tabattack/caa.hpp"
#include "tabattack/csv.hpp"
#include "tabattack/evaluation.hpp"
#include "tabattack/feature_space.hpp"
#include "tabattack/logging.hpp"
#include "tabattack/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace tabattack;

namespace {

constexpr const char* kBuildId = TABATTACK_BUILD_ID;
constexpr double kTestFraction = 0.25;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw UsageError(std::string("config file ") + path + ": " + e.what());
    }
    return doc;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << text;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& seeds_flag, std::uint64_t seed_flag) {
    if (!seeds_flag.empty()) {
        std::vector<std::uint64_t> out;
        std::stringstream ss(seeds_flag);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            out.push_back(std::stoull(item));
        }
        if (out.empty()) throw UsageError("--seeds needs a comma-separated list, e.g. --seeds 1,2,3");
        return out;
    }
    return {seed_flag};
}

/// Every run drops a manifest next to its outputs.
void write_manifest(const fs::path& out_path, const std::string& command,
                    const std::vector<std::string>& config_paths, const std::vector<std::uint64_t>& seeds) {
    ordered_json doc;
    doc["command"] = command;
    doc["config_paths"] = config_paths;
    doc["seeds"] = seeds;
    fs::path dir = fs::is_directory(out_path) ? out_path : out_path.parent_path();
    doc["output"] = out_path.string();
    doc["build_id"] = kBuildId;
    fs::path manifest = fs::is_directory(out_path) ? out_path / "manifest.json"
                                                   : dir / (out_path.stem().string() + ".manifest.json");
    if (manifest.has_parent_path() && !manifest.parent_path().empty()) fs::create_directories(manifest.parent_path());
    write_text_file(manifest.string(), doc.dump(2) + "\n");
}

struct LoadedProblem {
    Dataset full;
    Dataset train;
    Dataset test;
    Classifier model;
    ConstraintSet omega;
    EvaluationSlice slice;
};

LoadedProblem load_problem(const std::string& data_path, const std::string& spec_path,
                           const std::string& constraints_path, const std::string& model_path) {
    LoadedProblem p;
    p.full = load_dataset(data_path, spec_path);
    p.model = load_model(model_path);
    if (p.model.input_dim() != p.full.d()) {
        throw std::runtime_error("model expects " + std::to_string(p.model.input_dim()) + " features, dataset has " +
                                 std::to_string(p.full.d()));
    }
    auto [train, test] = split(p.full, kTestFraction, p.model.seed);
    p.train = std::move(train);
    p.test = std::move(test);
    if (!constraints_path.empty()) {
        p.omega = parse_constraints(read_text_file(constraints_path), p.full.specs);
    } else {
        p.omega = ConstraintSet({}, {}, 1e-6);
    }
    p.slice = critical_slice(p.model, p.test);
    return p;
}

int cmd_synth(const std::string& out_dir, const std::string& config_path, std::uint64_t seed) {
    SyntheticConfig cfg;
    std::vector<std::string> config_paths;
    if (!config_path.empty()) {
        json doc = read_json_file(config_path);
        cfg.d = doc.value("d", cfg.d);
        cfg.n = doc.value("n", cfg.n);
        cfg.k = doc.value("k", cfg.k);
        config_paths.push_back(config_path);
    }
    auto [data, constraints_text] = generate_synthetic(cfg, seed);
    fs::create_directories(out_dir);
    save_dataset((fs::path(out_dir) / "data.csv").string(), data);
    save_feature_specs((fs::path(out_dir) / "spec.json").string(), data.specs, data.critical_class);
    write_text_file((fs::path(out_dir) / "constraints.txt").string(), constraints_text);
    write_manifest(fs::path(out_dir), "synth", config_paths, {seed});
    log::info("synth: wrote " + std::to_string(data.n()) + " rows, d=" + std::to_string(data.d()) + " to " + out_dir);
    return 0;
}

TrainConfig train_config_from_json(const json& doc, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    std::string opt = doc.value("optimizer", "adam");
    if (opt == "sgd") cfg.optimizer = TrainConfig::Optimizer::sgd;
    else if (opt == "adam") cfg.optimizer = TrainConfig::Optimizer::adam;
    else throw UsageError("unknown optimizer \"" + opt + "\" (expected sgd|adam)");
    cfg.seed = seed;
    return cfg;
}

int cmd_train(const std::string& data_path, const std::string& spec_path, const std::string& out_path,
              const std::string& config_path, std::uint64_t seed, bool adversarial) {
    json doc = config_path.empty() ? json::object() : read_json_file(config_path);
    TrainConfig cfg = train_config_from_json(doc, seed);
    Dataset full = load_dataset(data_path, spec_path);
    auto [train_set, test_set] = split(full, kTestFraction, seed);

    std::vector<int> dims = {static_cast<int>(full.d()), 64, 32, 16, full.num_classes()};
    Classifier model = Classifier::make(dims);
    if (adversarial) {
        PgdConfig atk;
        if (doc.contains("pgd")) {
            atk.epsilon = doc["pgd"].value("epsilon", atk.epsilon);
            atk.steps = doc["pgd"].value("steps", atk.steps);
            atk.step_size = doc["pgd"].value("step_size", atk.step_size);
        }
        train_adversarial(model, train_set, cfg, atk, &test_set);
    } else {
        train(model, train_set, cfg, &test_set);
    }
    save_model(out_path, model);
    std::vector<std::string> config_paths;
    if (!config_path.empty()) config_paths.push_back(config_path);
    write_manifest(fs::path(out_path), adversarial ? "train-adv" : "train", config_paths, {seed});
    log::info("train: accuracy train=" + std::to_string(model.train_accuracy) +
              " test=" + std::to_string(model.clean_accuracy) + " -> " + out_path);
    return 0;
}

int cmd_attack(const std::string& data_path, const std::string& spec_path, const std::string& constraints_path,
               const std::string& model_path, const std::string& attack_name, const std::string& config_path,
               const std::vector<std::uint64_t>& seeds, const std::string& out_path, int threads,
               bool no_timing) {
    json config = config_path.empty() ? json::object() : read_json_file(config_path);
    AttackSpec spec;
    try {
        spec = parse_attack_config(config, attack_name);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    LoadedProblem p = load_problem(data_path, spec_path, constraints_path, model_path);

    AttackOptions options;
    options.threads = threads;
    AttackSummary summary = run_attack_over_seeds(p.model, p.slice, p.omega, p.full.specs, spec, seeds, options);

    EvaluationReport report;
    report.dataset = data_path;
    report.model_file = model_path;
    report.clean_accuracy = p.slice.clean_accuracy;
    report.seeds = seeds;
    report.config = spec.echo;
    report.attacks.push_back(std::move(summary));

    write_text_file(out_path, report.to_json(!no_timing).dump(2) + "\n");
    std::vector<std::string> config_paths;
    if (!config_path.empty()) config_paths.push_back(config_path);
    write_manifest(fs::path(out_path), "attack", config_paths, seeds);
    log::info("attack " + spec.name + ": robust accuracy " +
              std::to_string(report.attacks[0].robust_accuracy.mean) + " -> " + out_path);
    return 0;
}

int cmd_evaluate(const std::string& data_path, const std::string& spec_path, const std::string& constraints_path,
                 const std::string& model_path, const std::string& out_path, bool no_timing) {
    LoadedProblem p = load_problem(data_path, spec_path, constraints_path, model_path);
    ordered_json doc;
    doc["report_version"] = 1;
    doc["dataset"] = data_path;
    doc["model_file"] = model_path;
    doc["test_accuracy"] = accuracy(p.model, p.test);
    doc["train_accuracy"] = accuracy(p.model, p.train);
    doc["critical_class"] = p.full.critical_class;
    doc["critical_rows"] = p.slice.ids.size();
    doc["clean_accuracy_critical"] = p.slice.clean_accuracy;
    doc["model_metadata"]["seed"] = p.model.seed;
    doc["model_metadata"]["recorded_clean_accuracy"] = p.model.clean_accuracy;
    (void)no_timing;
    write_text_file(out_path, doc.dump(2) + "\n");
    write_manifest(fs::path(out_path), "evaluate", {}, {p.model.seed});
    log::info("evaluate: test accuracy " + std::to_string(doc["test_accuracy"].get<double>()) + " -> " + out_path);
    return 0;
}

int cmd_sweep(const std::string& data_path, const std::string& spec_path, const std::string& constraints_path,
              const std::string& model_path, const std::string& config_path,
              const std::vector<std::uint64_t>& seeds, const std::string& out_dir, int threads, bool no_timing) {
    json doc = read_json_file(config_path);
    if (!doc.contains("axis") || !doc.contains("values")) {
        throw UsageError("sweep config needs {\"axis\": epsilon|capgd_iters|moeva_iters, \"values\": [...], \"base\": {...}}");
    }
    SweepAxis axis = sweep_axis_from_string(doc["axis"].get<std::string>());
    std::vector<double> values = doc["values"].get<std::vector<double>>();
    AttackSpec base = parse_attack_config(doc.value("base", json::object()), "caa");

    LoadedProblem p = load_problem(data_path, spec_path, constraints_path, model_path);
    AttackOptions options;
    options.threads = threads;
    EvaluationReport report = budget_sweep(p.model, p.slice, p.omega, p.full.specs, axis, values, base, seeds, options);
    report.dataset = data_path;
    report.model_file = model_path;

    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "report.json").string(), report.to_json(!no_timing).dump(2) + "\n");
    write_text_file((fs::path(out_dir) / "report.csv").string(), report.to_csv());
    std::vector<std::string> labels;
    std::vector<double> means, stds;
    for (const auto& a : report.attacks) {
        labels.push_back(a.config["value"].dump());
        means.push_back(a.robust_accuracy.mean);
        stds.push_back(a.robust_accuracy.std);
    }
    write_svg_line_chart((fs::path(out_dir) / "robust_accuracy.svg").string(),
                         "robust accuracy vs " + to_string(axis), labels, means, stds);
    write_manifest(fs::path(out_dir), "sweep", {config_path}, seeds);
    log::info("sweep over " + to_string(axis) + ": " + std::to_string(values.size()) + " points -> " + out_dir);
    return 0;
}

int cmd_ablate(const std::string& data_path, const std::string& spec_path, const std::string& constraints_path,
               const std::string& model_path, const std::string& config_path,
               const std::vector<std::uint64_t>& seeds, const std::string& out_path, int threads,
               bool no_timing) {
    json config = config_path.empty() ? json::object() : read_json_file(config_path);
    AttackSpec base = parse_attack_config(config, "capgd");
    LoadedProblem p = load_problem(data_path, spec_path, constraints_path, model_path);
    AttackOptions options;
    options.threads = threads;
    EvaluationReport report = ablation_matrix(p.model, p.slice, p.omega, p.full.specs, base, seeds, options);
    report.dataset = data_path;
    report.model_file = model_path;
    write_text_file(out_path, report.to_json(!no_timing).dump(2) + "\n");
    std::vector<std::string> config_paths;
    if (!config_path.empty()) config_paths.push_back(config_path);
    write_manifest(fs::path(out_path), "ablate", config_paths, seeds);
    log::info("ablate: " + std::to_string(report.attacks.size()) + " variants -> " + out_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tabattack: constrained adversarial attacks on tabular classifiers"};
    app.require_subcommand(1);

    std::string data, spec, constraints, model, attack_name, config, out;
    std::string seeds_flag;
    std::uint64_t seed_flag = 0;
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    bool no_timing = false;

    auto add_common = [&](CLI::App* sub, bool with_attack_io) {
        sub->add_option("--config", config, "JSON config file");
        sub->add_option("--seed", seed_flag, "single RNG seed");
        if (with_attack_io) {
            sub->add_option("--seeds", seeds_flag, "comma-separated seed list");
            sub->add_option("--threads", threads, "worker threads (default: logical cores)");
            sub->add_flag("--no-timing", no_timing, "omit wall-clock fields from reports");
        }
    };

    CLI::App* synth = app.add_subcommand("synth", "emit a synthetic constrained dataset");
    synth->add_option("--out", out, "output directory")->required();
    add_common(synth, false);

    CLI::App* train_cmd = app.add_subcommand("train", "train a classifier");
    train_cmd->add_option("--data", data, "dataset CSV")->required();
    train_cmd->add_option("--spec", spec, "feature spec JSON")->required();
    train_cmd->add_option("--out", out, "model output path")->required();
    add_common(train_cmd, false);

    CLI::App* train_adv = app.add_subcommand("train-adv", "train with Madry adversarial training");
    train_adv->add_option("--data", data, "dataset CSV")->required();
    train_adv->add_option("--spec", spec, "feature spec JSON")->required();
    train_adv->add_option("--out", out, "model output path")->required();
    add_common(train_adv, false);

    CLI::App* attack_cmd = app.add_subcommand("attack", "run an attack and report robust accuracy");
    attack_cmd->add_option("--data", data, "dataset CSV")->required();
    attack_cmd->add_option("--spec", spec, "feature spec JSON")->required();
    attack_cmd->add_option("--constraints", constraints, "constraint DSL file");
    attack_cmd->add_option("--model", model, "model JSON")->required();
    attack_cmd->add_option("--attack", attack_name, "cpgd|capgd|moeva|caa")->required();
    attack_cmd->add_option("--out", out, "report output path")->required();
    add_common(attack_cmd, true);

    CLI::App* evaluate = app.add_subcommand("evaluate", "clean accuracy report for a model");
    evaluate->add_option("--data", data, "dataset CSV")->required();
    evaluate->add_option("--spec", spec, "feature spec JSON")->required();
    evaluate->add_option("--constraints", constraints, "constraint DSL file");
    evaluate->add_option("--model", model, "model JSON")->required();
    evaluate->add_option("--out", out, "report output path")->required();
    add_common(evaluate, true);

    CLI::App* sweep = app.add_subcommand("sweep", "budget sweep (one CAA run per grid value)");
    sweep->add_option("--data", data, "dataset CSV")->required();
    sweep->add_option("--spec", spec, "feature spec JSON")->required();
    sweep->add_option("--constraints", constraints, "constraint DSL file");
    sweep->add_option("--model", model, "model JSON")->required();
    sweep->add_option("--out", out, "output directory")->required();
    add_common(sweep, true);
    sweep->get_option("--config")->required();

    CLI::App* ablate = app.add_subcommand("ablate", "CAPGD ablation matrix with coverage");
    ablate->add_option("--data", data, "dataset CSV")->required();
    ablate->add_option("--spec", spec, "feature spec JSON")->required();
    ablate->add_option("--constraints", constraints, "constraint DSL file");
    ablate->add_option("--model", model, "model JSON")->required();
    ablate->add_option("--out", out, "report output path")->required();
    add_common(ablate, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        std::vector<std::uint64_t> seeds = parse_seed_list(seeds_flag, seed_flag);

        if (synth->parsed()) return cmd_synth(out, config, seed_flag);
        if (train_cmd->parsed()) return cmd_train(data, spec, out, config, seed_flag, false);
        if (train_adv->parsed()) return cmd_train(data, spec, out, config, seed_flag, true);
        if (attack_cmd->parsed())
            return cmd_attack(data, spec, constraints, model, attack_name, config, seeds, out, threads, no_timing);
        if (evaluate->parsed()) return cmd_evaluate(data, spec, constraints, model, out, no_timing);
        if (sweep->parsed())
            return cmd_sweep(data, spec, constraints, model, config, seeds, out, threads, no_timing);
        if (ablate->parsed())
            return cmd_ablate(data, spec, constraints, model, config, seeds, out, threads, no_timing);
        std::cerr << "no subcommand given; see --help\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
