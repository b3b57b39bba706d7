#include "tabattack/feature_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tabattack/csv.hpp"
#include "tabattack/logging.hpp"

namespace tabattack {

using nlohmann::json;

std::string to_string(FeatureType t) {
    switch (t) {
        case FeatureType::continuous: return "continuous";
        case FeatureType::discrete: return "discrete";
        case FeatureType::categorical: return "categorical";
    }
    return "continuous";
}

FeatureType feature_type_from_string(const std::string& s) {
    if (s == "continuous") return FeatureType::continuous;
    if (s == "discrete") return FeatureType::discrete;
    if (s == "categorical") return FeatureType::categorical;
    throw std::invalid_argument("unknown feature type \"" + s + "\" (expected continuous|discrete|categorical)");
}

void FeatureSpec::validate() const {
    if (name.empty()) throw std::invalid_argument("feature with empty name");
    if (!(lower <= upper)) {
        throw std::invalid_argument("feature " + name + ": lower " + csv::format_double(lower) +
                                    " > upper " + csv::format_double(upper));
    }
    if (ftype == FeatureType::discrete) {
        if (std::floor(lower) != lower || std::floor(upper) != upper) {
            throw std::invalid_argument("feature " + name + ": discrete bounds must be integers");
        }
    }
    if (ftype == FeatureType::categorical) {
        if (categories.empty()) throw std::invalid_argument("feature " + name + ": categorical needs categories");
        for (double c : categories) {
            if (c < lower || c > upper) {
                throw std::invalid_argument("feature " + name + ": category " + csv::format_double(c) +
                                            " outside [" + csv::format_double(lower) + ", " +
                                            csv::format_double(upper) + "]");
            }
        }
    } else if (!categories.empty()) {
        throw std::invalid_argument("feature " + name + ": categories given for non-categorical type");
    }
}

int Dataset::num_classes() const {
    int c = 0;
    for (int y : labels) c = std::max(c, y + 1);
    return std::max(c, critical_class + 1);
}

void Dataset::validate() const {
    if (static_cast<Eigen::Index>(specs.size()) != d()) {
        throw std::invalid_argument("dataset: " + std::to_string(specs.size()) + " specs for " +
                                    std::to_string(d()) + " columns");
    }
    if (static_cast<Eigen::Index>(labels.size()) != n()) {
        throw std::invalid_argument("dataset: rows and labels differ in length");
    }
    for (const auto& s : specs) s.validate();
    for (int y : labels) {
        if (y < 0) throw std::invalid_argument("dataset: negative class label");
    }
    for (Eigen::Index i = 0; i < n(); ++i) {
        for (Eigen::Index j = 0; j < d(); ++j) {
            double v = rows(i, j);
            if (v < specs[j].lower || v > specs[j].upper) {
                throw std::invalid_argument("dataset: bound violation at row " + std::to_string(i) +
                                            ", feature " + specs[j].name);
            }
        }
    }
}

std::pair<std::vector<FeatureSpec>, int> load_feature_specs(const std::string& spec_path) {
    std::ifstream in(spec_path);
    if (!in) throw std::runtime_error("cannot open feature spec file: " + spec_path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("feature spec " + spec_path + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("features") || !doc["features"].is_array()) {
        throw std::runtime_error("feature spec " + spec_path + ": expected {\"features\": [...], \"critical_class\": int}");
    }
    std::vector<FeatureSpec> specs;
    for (const auto& item : doc["features"]) {
        FeatureSpec fs;
        fs.name = item.at("name").get<std::string>();
        fs.ftype = feature_type_from_string(item.at("type").get<std::string>());
        fs.is_mutable = item.at("mutable").get<bool>();
        fs.lower = item.at("lower").get<double>();
        fs.upper = item.at("upper").get<double>();
        if (item.contains("categories")) fs.categories = item["categories"].get<std::vector<double>>();
        fs.validate();
        specs.push_back(std::move(fs));
    }
    if (specs.empty()) throw std::runtime_error("feature spec " + spec_path + ": no features");
    int critical = doc.value("critical_class", 1);
    if (critical < 0) throw std::runtime_error("feature spec " + spec_path + ": critical_class must be >= 0");
    return {specs, critical};
}

void save_feature_specs(const std::string& spec_path, const std::vector<FeatureSpec>& specs, int critical_class) {
    nlohmann::ordered_json doc;
    doc["critical_class"] = critical_class;
    doc["features"] = nlohmann::ordered_json::array();
    for (const auto& fs : specs) {
        nlohmann::ordered_json f;
        f["name"] = fs.name;
        f["type"] = to_string(fs.ftype);
        f["mutable"] = fs.is_mutable;
        f["lower"] = fs.lower;
        f["upper"] = fs.upper;
        if (fs.ftype == FeatureType::categorical) f["categories"] = fs.categories;
        doc["features"].push_back(std::move(f));
    }
    std::ofstream out(spec_path);
    if (!out) throw std::runtime_error("cannot write feature spec file: " + spec_path);
    out << doc.dump(2) << "\n";
}

Dataset load_dataset(const std::string& csv_path, const std::string& spec_path) {
    auto [specs, critical] = load_feature_specs(spec_path);
    auto table = csv::read_file(csv_path);

    const size_t d = specs.size();
    if (table.header.size() != d + 1) {
        throw std::runtime_error(csv_path + ": expected " + std::to_string(d) +
                                 " feature columns plus \"label\", got " + std::to_string(table.header.size()));
    }
    for (size_t j = 0; j < d; ++j) {
        if (table.header[j] != specs[j].name) {
            throw std::runtime_error(csv_path + ": missing column \"" + specs[j].name + "\" (found \"" +
                                     table.header[j] + "\" at position " + std::to_string(j) + ")");
        }
    }
    if (table.header.back() != "label") {
        throw std::runtime_error(csv_path + ": final column must be \"label\", got \"" + table.header.back() + "\"");
    }

    Dataset data;
    data.specs = std::move(specs);
    data.critical_class = critical;
    data.rows.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(d));
    data.labels.resize(table.rows.size());

    std::vector<std::string> errors;
    for (size_t i = 0; i < table.rows.size(); ++i) {
        for (size_t j = 0; j < d; ++j) {
            double v;
            if (!csv::parse_double(table.rows[i][j], v)) {
                errors.push_back("non-numeric at row " + std::to_string(i) + ", column " + data.specs[j].name +
                                 ": \"" + table.rows[i][j] + "\"");
                continue;
            }
            if (v < data.specs[j].lower || v > data.specs[j].upper) {
                errors.push_back("bound violation at row " + std::to_string(i) + ": " + data.specs[j].name + " = " +
                                 csv::format_double(v) + " outside [" + csv::format_double(data.specs[j].lower) +
                                 ", " + csv::format_double(data.specs[j].upper) + "]");
            }
            data.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
        double label;
        if (!csv::parse_double(table.rows[i].back(), label) || std::floor(label) != label || label < 0) {
            errors.push_back("bad label at row " + std::to_string(i) + ": \"" + table.rows[i].back() + "\"");
            label = 0;
        }
        data.labels[i] = static_cast<int>(label);
    }
    if (!errors.empty()) {
        std::ostringstream msg;
        msg << csv_path << ": " << errors.size() << " bad row(s):";
        for (const auto& e : errors) msg << "\n  " << e;
        throw std::runtime_error(msg.str());
    }
    return data;
}

void save_dataset(const std::string& csv_path, const Dataset& data) {
    csv::Table t;
    for (const auto& s : data.specs) t.header.push_back(s.name);
    t.header.push_back("label");
    t.rows.reserve(static_cast<size_t>(data.n()));
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        std::vector<std::string> row;
        row.reserve(static_cast<size_t>(data.d()) + 1);
        for (Eigen::Index j = 0; j < data.d(); ++j) row.push_back(csv::format_double(data.rows(i, j)));
        row.push_back(std::to_string(data.labels[static_cast<size_t>(i)]));
        t.rows.push_back(std::move(row));
    }
    csv::write_file(csv_path, t);
}

Scaler fit_scaler(const Dataset& data) {
    if (data.n() < 1) throw std::invalid_argument("fit_scaler: empty dataset");
    Scaler s;
    s.min = data.rows.colwise().minCoeff();
    s.max = data.rows.colwise().maxCoeff();
    for (Eigen::Index j = 0; j < s.min.size(); ++j) {
        if (s.max[j] == s.min[j]) s.max[j] = s.min[j] + 1.0;
    }
    return s;
}

Eigen::VectorXd scale(const Eigen::VectorXd& x, const Scaler& s) {
    if (x.size() != s.d()) throw std::invalid_argument("scale: dimension mismatch");
    return (x - s.min).cwiseQuotient(s.range());
}

Eigen::VectorXd unscale(const Eigen::VectorXd& x01, const Scaler& s) {
    if (x01.size() != s.d()) throw std::invalid_argument("unscale: dimension mismatch");
    return s.min + x01.cwiseProduct(s.range());
}

Eigen::MatrixXd scale_rows(const Eigen::MatrixXd& rows, const Scaler& s) {
    if (rows.cols() != s.d()) throw std::invalid_argument("scale_rows: dimension mismatch");
    return (rows.rowwise() - s.min.transpose()).array().rowwise() / s.range().transpose().array();
}

Eigen::MatrixXd unscale_rows(const Eigen::MatrixXd& rows01, const Scaler& s) {
    if (rows01.cols() != s.d()) throw std::invalid_argument("unscale_rows: dimension mismatch");
    return (rows01.array().rowwise() * s.range().transpose().array()).rowwise() + s.min.transpose().array();
}

std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("split: test_fraction must be in (0, 1), got " +
                                    csv::format_double(test_fraction));
    }
    const int num_classes = data.num_classes();
    std::vector<std::vector<Eigen::Index>> by_class(static_cast<size_t>(num_classes));
    for (Eigen::Index i = 0; i < data.n(); ++i) by_class[static_cast<size_t>(data.labels[static_cast<size_t>(i)])].push_back(i);

    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> train_idx, test_idx;
    for (size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) continue;
        if (idx.size() < 2) {
            throw std::invalid_argument("split: class " + std::to_string(c) + " has fewer than 2 members");
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_test = static_cast<size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        n_test = std::clamp<size_t>(n_test, 1, idx.size() - 1);
        test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    auto take = [&](const std::vector<Eigen::Index>& idx) {
        Dataset out;
        out.specs = data.specs;
        out.critical_class = data.critical_class;
        out.rows.resize(static_cast<Eigen::Index>(idx.size()), data.d());
        out.labels.resize(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            out.rows.row(static_cast<Eigen::Index>(i)) = data.rows.row(idx[i]);
            out.labels[i] = data.labels[static_cast<size_t>(idx[i])];
        }
        return out;
    };
    return {take(train_idx), take(test_idx)};
}

std::pair<Dataset, std::string> generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
    if (config.d < 4) throw std::invalid_argument("generate_synthetic: d must be >= 4");
    if (config.n < 100) throw std::invalid_argument("generate_synthetic: n must be >= 100");
    if (config.k < 1) throw std::invalid_argument("generate_synthetic: k must be >= 1");
    if (config.k > config.d - 2) {
        throw std::invalid_argument("generate_synthetic: unsatisfiable config, k = " + std::to_string(config.k) +
                                    " needs d >= " + std::to_string(config.k + 2));
    }
    const int d = config.d;
    const int n = config.n;

    Dataset data;
    data.critical_class = 1;
    data.specs.resize(static_cast<size_t>(d));
    auto name_of = [](int j) { return "f" + std::to_string(j + 1); };
    for (int j = 0; j < d; ++j) {
        auto& fs = data.specs[static_cast<size_t>(j)];
        fs.name = name_of(j);
        fs.ftype = FeatureType::continuous;
        fs.is_mutable = true;
        fs.lower = 0.0;
        fs.upper = 1.0;
    }
    // f2 rides in a tight band above f1; f3 is the repairable sum.
    constexpr double kBand = 0.2;
    data.specs[1].upper = 1.0 + kBand;
    data.specs[2].upper = 2.0 + kBand;
    data.specs[3].ftype = FeatureType::categorical;  // f4 in {0,1,2}
    data.specs[3].categories = {0.0, 1.0, 2.0};
    data.specs[3].upper = 2.0;
    if (d == 4) {
        data.specs[3].is_mutable = false;
    } else {
        data.specs[4].is_mutable = false;  // f5 immutable, carries most of the signal
    }
    if (d >= 6) {
        data.specs[5].ftype = FeatureType::discrete;
        data.specs[5].upper = 10.0;
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };

    data.rows.resize(n, d);
    data.labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int z = unif(rng) < 0.5 ? 0 : 1;
        data.labels[static_cast<size_t>(i)] = z;
        double f1 = clamp01(0.42 + 0.08 * z + 0.12 * normal(rng));
        double gap = kBand * clamp01(0.40 + 0.15 * z + 0.25 * normal(rng));
        double f2 = f1 + gap;
        double f3 = f1 + f2;
        double u = unif(rng);
        double f4;
        if (z == 0) f4 = u < 0.60 ? 0.0 : (u < 0.90 ? 1.0 : 2.0);
        else f4 = u < 0.10 ? 0.0 : (u < 0.40 ? 1.0 : 2.0);
        data.rows(i, 0) = f1;
        data.rows(i, 1) = f2;
        data.rows(i, 2) = f3;
        data.rows(i, 3) = f4;
        if (d >= 5) data.rows(i, 4) = clamp01(0.32 + 0.36 * z + 0.11 * normal(rng));
        if (d >= 6) data.rows(i, 5) = std::clamp(std::round(4.4 + 1.2 * z + 1.8 * normal(rng)), 0.0, 10.0);
        for (int j = 6; j < d; ++j) data.rows(i, j) = clamp01(0.42 + 0.12 * z + 0.15 * normal(rng));
    }

    std::ostringstream text;
    text << "# relations every valid row satisfies\n";
    const std::string base[3] = {"f1 <= f2 and f2 <= f1 + " + csv::format_double(kBand), "f3 = f1 + f2",
                                 "f4 in {0, 1, 2}"};
    for (int c = 0; c < std::min(config.k, 3); ++c) text << base[c] << "\n";
    for (int c = 3; c < config.k; ++c) {
        const auto& fs = data.specs[static_cast<size_t>(c + 1)];
        text << fs.name << " <= " << csv::format_double(fs.upper) << "\n";
    }

    data.validate();
    return {std::move(data), text.str()};
}

}  // namespace tabattack
