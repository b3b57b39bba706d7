#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tabattack {

enum class FeatureType { continuous, discrete, categorical };

std::string to_string(FeatureType t);
FeatureType feature_type_from_string(const std::string& s);

struct FeatureSpec {
    std::string name;
    FeatureType ftype = FeatureType::continuous;
    bool is_mutable = true;
    double lower = 0.0;
    double upper = 1.0;
    std::vector<double> categories;  // categorical only

    void validate() const;  // throws std::invalid_argument on a bad spec
};

/// Rows are kept in original units; all attack-space conversions go through Scaler.
struct Dataset {
    std::vector<FeatureSpec> specs;
    Eigen::MatrixXd rows;    // n x d
    std::vector<int> labels; // values in {0..C-1}
    int critical_class = 1;

    Eigen::Index n() const { return rows.rows(); }
    Eigen::Index d() const { return rows.cols(); }
    int num_classes() const;
    void validate() const;
};

/// Per-feature min-max normalizer; constant features get max = min + 1.
struct Scaler {
    Eigen::VectorXd min;
    Eigen::VectorXd max;

    bool empty() const { return min.size() == 0; }
    Eigen::Index d() const { return min.size(); }
    Eigen::VectorXd range() const { return max - min; }
};

struct SyntheticConfig {
    int d = 6;
    int n = 1000;
    int k = 3;  // relation constraints emitted
};

/// Parses the feature spec file: {"features": [{name, type, mutable, lower,
/// upper, categories?}, ...], "critical_class": int}.
std::pair<std::vector<FeatureSpec>, int> load_feature_specs(const std::string& spec_path);

/// CSV with a header matching spec names plus a final "label" column.
/// Rejects non-numeric cells and bound violations with row indices.
Dataset load_dataset(const std::string& csv_path, const std::string& spec_path);

void save_dataset(const std::string& csv_path, const Dataset& data);

Scaler fit_scaler(const Dataset& data);

Eigen::VectorXd scale(const Eigen::VectorXd& x, const Scaler& s);
Eigen::VectorXd unscale(const Eigen::VectorXd& x01, const Scaler& s);
Eigen::MatrixXd scale_rows(const Eigen::MatrixXd& rows, const Scaler& s);
Eigen::MatrixXd unscale_rows(const Eigen::MatrixXd& rows01, const Scaler& s);

/// Stratified split; first element trains, second tests. Deterministic per seed.
std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed);

/// Two-class Gaussian-mixture benchmark generator. Every emitted row satisfies
/// the returned constraint text; labels are learnable to >=90% test accuracy
/// with the default config.
std::pair<Dataset, std::string> generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

/// Writes spec.json (features + critical_class) for a dataset.
void save_feature_specs(const std::string& spec_path, const std::vector<FeatureSpec>& specs, int critical_class);

}  // namespace tabattack
