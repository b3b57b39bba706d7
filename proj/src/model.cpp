#include "tabattack/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "tabattack/logging.hpp"
#include "tabattack/perturbation.hpp"

namespace tabattack {

using nlohmann::json;

Classifier Classifier::make(const std::vector<int>& dims) {
    if (dims.size() < 2) throw std::invalid_argument("classifier needs at least input and output dims");
    Classifier m;
    m.dims = dims;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        m.weights.emplace_back(Eigen::MatrixXd::Zero(dims[l + 1], dims[l]));
        m.biases.emplace_back(Eigen::VectorXd::Zero(dims[l + 1]));
    }
    return m;
}

namespace {

void quantize_logits(const Classifier& model, Eigen::Ref<Eigen::MatrixXd> logits) {
    if (model.logit_step <= 0.0) return;
    const double q = model.logit_step;
    logits = (logits.array() / q).floor() * q;
}

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
    Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    logits.colwise() -= row_max;
    Eigen::MatrixXd e = logits.array().exp();
    Eigen::VectorXd sums = e.rowwise().sum();
    return e.array().colwise() / sums.array();
}

/// Forward pass keeping pre-activations for backprop.
struct ForwardTrace {
    std::vector<Eigen::MatrixXd> activations;  // activations[0] = input
    Eigen::MatrixXd logits;                    // before quantization
    Eigen::MatrixXd probs;
};

ForwardTrace forward_trace(const Classifier& model, const Eigen::MatrixXd& X) {
    ForwardTrace t;
    t.activations.push_back(X);
    Eigen::MatrixXd a = X;
    for (size_t l = 0; l < model.weights.size(); ++l) {
        Eigen::MatrixXd z = (a * model.weights[l].transpose()).rowwise() + model.biases[l].transpose();
        if (l + 1 < model.weights.size()) {
            a = z.cwiseMax(0.0);
            t.activations.push_back(a);
        } else {
            t.logits = z;
        }
    }
    Eigen::MatrixXd q = t.logits;
    quantize_logits(model, q);
    t.probs = softmax_rows(std::move(q));
    return t;
}

double cross_entropy(const Eigen::MatrixXd& probs, const std::vector<int>& y) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        loss -= std::log(std::max(probs(i, y[static_cast<size_t>(i)]), 1e-300));
    }
    return loss / static_cast<double>(probs.rows());
}

}  // namespace

Eigen::MatrixXd forward_batch(const Classifier& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.input_dim()) throw std::invalid_argument("forward: dimension mismatch");
    return forward_trace(model, X).probs;
}

Eigen::VectorXd forward(const Classifier& model, const Eigen::VectorXd& x) {
    return forward_batch(model, x.transpose()).row(0);
}

int predict(const Classifier& model, const Eigen::VectorXd& x) {
    Eigen::Index best;
    forward(model, x).maxCoeff(&best);
    return static_cast<int>(best);
}

std::vector<int> predict_batch(const Classifier& model, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd probs = forward_batch(model, X);
    std::vector<int> out(static_cast<size_t>(X.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best;
        probs.row(i).maxCoeff(&best);
        out[static_cast<size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

Eigen::VectorXd input_gradient(const Classifier& model, const Eigen::VectorXd& x, int y) {
    if (model.logit_step > 0.0) return Eigen::VectorXd::Zero(x.size());  // piecewise constant
    ForwardTrace t = forward_trace(model, x.transpose());
    Eigen::VectorXd delta = t.probs.row(0);
    delta[y] -= 1.0;  // d CE / d logits
    for (size_t l = model.weights.size(); l-- > 0;) {
        Eigen::VectorXd prev = (model.weights[l].transpose() * delta);
        if (l > 0) {
            Eigen::VectorXd act = t.activations[l].row(0);
            delta = prev.cwiseProduct((act.array() > 0.0).cast<double>().matrix());
        } else {
            delta = prev;
        }
    }
    return delta;
}

LossBreakdown attack_loss(const Classifier& model, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig,
                          int y, const ConstraintSet& omega) {
    LossBreakdown b;
    Eigen::VectorXd probs = forward(model, x);
    b.task_loss = -std::log(std::max(probs[y], 1e-300));
    Eigen::VectorXd xo = unscale(x, model.scaler);
    Eigen::VectorXd xo_orig = unscale(x_orig, model.scaler);
    b.penalty_sum = penalty(omega, xo, xo_orig);
    b.total = b.task_loss - b.penalty_sum;
    return b;
}

std::pair<LossBreakdown, Eigen::VectorXd> attack_loss_and_grad(const Classifier& model,
                                                               const Eigen::VectorXd& x,
                                                               const Eigen::VectorXd& x_orig, int y,
                                                               const ConstraintSet& omega) {
    LossBreakdown b = attack_loss(model, x, x_orig, y, omega);
    Eigen::VectorXd grad = input_gradient(model, x, y);
    Eigen::VectorXd xo = unscale(x, model.scaler);
    Eigen::VectorXd xo_orig = unscale(x_orig, model.scaler);
    Eigen::VectorXd pen_grad = penalty_gradient(omega, xo, xo_orig);
    // chain rule through unscale: d(original)/d(scaled) = max - min
    grad -= pen_grad.cwiseProduct(model.scaler.range());
    return {b, std::move(grad)};
}

namespace {

struct AdamState {
    std::vector<Eigen::MatrixXd> mw, vw;
    std::vector<Eigen::VectorXd> mb, vb;
    long t = 0;
};

void init_weights(Classifier& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0xA5A5A5A5A5A5A5A5ull);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (size_t l = 0; l < model.weights.size(); ++l) {
        double sigma = std::sqrt(2.0 / static_cast<double>(model.dims[l]));
        for (Eigen::Index i = 0; i < model.weights[l].rows(); ++i) {
            for (Eigen::Index j = 0; j < model.weights[l].cols(); ++j) {
                model.weights[l](i, j) = sigma * normal(rng);
            }
        }
        model.biases[l].setZero();
    }
}

struct BatchGrads {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
    double loss = 0.0;
};

BatchGrads batch_gradients(const Classifier& model, const Eigen::MatrixXd& X, const std::vector<int>& y) {
    ForwardTrace t = forward_trace(model, X);
    const auto n = static_cast<double>(X.rows());
    BatchGrads g;
    g.loss = cross_entropy(t.probs, y);
    Eigen::MatrixXd delta = t.probs;
    for (Eigen::Index i = 0; i < X.rows(); ++i) delta(i, y[static_cast<size_t>(i)]) -= 1.0;
    delta /= n;
    g.dw.resize(model.weights.size());
    g.db.resize(model.weights.size());
    for (size_t l = model.weights.size(); l-- > 0;) {
        g.dw[l] = delta.transpose() * t.activations[l];
        g.db[l] = delta.colwise().sum();
        if (l > 0) {
            Eigen::MatrixXd prev = delta * model.weights[l];
            delta = prev.cwiseProduct((t.activations[l].array() > 0.0).cast<double>().matrix());
        }
    }
    return g;
}

void apply_update(Classifier& model, const BatchGrads& g, const TrainConfig& cfg, AdamState& adam) {
    if (cfg.optimizer == TrainConfig::Optimizer::sgd) {
        for (size_t l = 0; l < model.weights.size(); ++l) {
            model.weights[l] -= cfg.learning_rate * g.dw[l];
            model.biases[l] -= cfg.learning_rate * g.db[l];
        }
        return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (adam.t == 0) {
        for (size_t l = 0; l < model.weights.size(); ++l) {
            adam.mw.push_back(Eigen::MatrixXd::Zero(g.dw[l].rows(), g.dw[l].cols()));
            adam.vw.push_back(Eigen::MatrixXd::Zero(g.dw[l].rows(), g.dw[l].cols()));
            adam.mb.push_back(Eigen::VectorXd::Zero(g.db[l].size()));
            adam.vb.push_back(Eigen::VectorXd::Zero(g.db[l].size()));
        }
    }
    ++adam.t;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
    for (size_t l = 0; l < model.weights.size(); ++l) {
        adam.mw[l] = b1 * adam.mw[l] + (1 - b1) * g.dw[l];
        adam.vw[l] = b2 * adam.vw[l].array() + (1 - b2) * g.dw[l].array().square();
        adam.mb[l] = b1 * adam.mb[l] + (1 - b1) * g.db[l];
        adam.vb[l] = b2 * adam.vb[l].array() + (1 - b2) * g.db[l].array().square();
        model.weights[l].array() -=
            cfg.learning_rate * (adam.mw[l].array() / bc1) / ((adam.vw[l].array() / bc2).sqrt() + eps);
        model.biases[l].array() -=
            cfg.learning_rate * (adam.mb[l].array() / bc1) / ((adam.vb[l].array() / bc2).sqrt() + eps);
    }
}

/// Plain PGD in scaled space on the task loss; mutable coords only.
Eigen::MatrixXd pgd_batch(const Classifier& model, const Eigen::MatrixXd& X0, const std::vector<int>& y,
                          const PgdConfig& atk, const MutabilityMask& mask, std::mt19937_64& rng) {
    Budget budget{atk.epsilon, Norm::L2};
    Eigen::MatrixXd X = X0;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        Eigen::VectorXd noise(X.cols());
        for (Eigen::Index j = 0; j < X.cols(); ++j) noise[j] = normal(rng);
        double norm = noise.norm();
        if (norm > 0) noise *= (atk.epsilon * 0.5) / norm;
        Eigen::VectorXd start = X.row(i).transpose() + noise;
        X.row(i) = project(start, X0.row(i).transpose(), budget, mask).transpose();
    }
    for (int s = 0; s < atk.steps; ++s) {
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            Eigen::VectorXd x = X.row(i).transpose();
            Eigen::VectorXd g = input_gradient(model, x, y[static_cast<size_t>(i)]);
            for (Eigen::Index j = 0; j < x.size(); ++j) {
                if (!mask.movable[static_cast<size_t>(j)]) g[j] = 0.0;
            }
            double gn = g.norm();
            if (gn > 0) x += (atk.step_size / gn) * g;  // ascend task loss
            X.row(i) = project(x, X0.row(i).transpose(), budget, mask).transpose();
        }
    }
    return X;
}

void train_impl(Classifier& model, const Dataset& data, const TrainConfig& cfg, const PgdConfig* atk,
                const Dataset* eval) {
    if (data.n() < 1) throw std::invalid_argument("train: empty dataset");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (model.dims.front() != data.d()) throw std::invalid_argument("train: model input dim != dataset d");

    if (model.scaler.empty()) model.scaler = fit_scaler(data);
    model.seed = cfg.seed;
    Eigen::MatrixXd X = scale_rows(data.rows, model.scaler);

    bool fresh = true;
    for (const auto& w : model.weights) {
        if (w.cwiseAbs().sum() != 0.0) fresh = false;
    }
    if (fresh) init_weights(model, cfg.seed);

    MutabilityMask mask = MutabilityMask::from_specs(data.specs);
    std::mt19937_64 shuffle_rng(cfg.seed);
    std::mt19937_64 attack_rng(cfg.seed ^ 0x517CC1B727220A95ull);
    AdamState adam;

    std::vector<Eigen::Index> order(static_cast<size_t>(data.n()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        Eigen::Index done = 0;
        while (done < data.n()) {
            Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, data.n() - done);
            Eigen::MatrixXd xb(bs, data.d());
            std::vector<int> yb(static_cast<size_t>(bs));
            for (Eigen::Index i = 0; i < bs; ++i) {
                xb.row(i) = X.row(order[static_cast<size_t>(done + i)]);
                yb[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(order[static_cast<size_t>(done + i)])];
            }
            if (atk && atk->steps > 0) xb = pgd_batch(model, xb, yb, *atk, mask, attack_rng);
            BatchGrads g = batch_gradients(model, xb, yb);
            epoch_loss += g.loss * static_cast<double>(bs);
            apply_update(model, g, cfg, adam);
            done += bs;
        }
        epoch_loss /= static_cast<double>(data.n());
        if (!std::isfinite(epoch_loss)) {
            throw std::runtime_error("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
        }
        log::debug("epoch " + std::to_string(epoch) + " loss " + std::to_string(epoch_loss));
    }
    model.train_accuracy = accuracy(model, data);
    if (eval) model.clean_accuracy = accuracy(model, *eval);
}

}  // namespace

void train(Classifier& model, const Dataset& data, const TrainConfig& cfg, const Dataset* eval) {
    train_impl(model, data, cfg, nullptr, eval);
}

void train_adversarial(Classifier& model, const Dataset& data, const TrainConfig& cfg, const PgdConfig& atk,
                       const Dataset* eval) {
    train_impl(model, data, cfg, &atk, eval);
}

double accuracy(const Classifier& model, const Dataset& data) {
    if (data.n() == 0) return 0.0;
    Eigen::MatrixXd X = scale_rows(data.rows, model.scaler);
    std::vector<int> pred = predict_batch(model, X);
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (pred[static_cast<size_t>(i)] == data.labels[static_cast<size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.n());
}

void save_model(const std::string& path, const Classifier& model) {
    nlohmann::ordered_json doc;
    doc["dims"] = model.dims;
    doc["activation"] = "relu";
    doc["weights"] = nlohmann::ordered_json::array();
    doc["biases"] = nlohmann::ordered_json::array();
    for (size_t l = 0; l < model.weights.size(); ++l) {
        std::vector<double> w(static_cast<size_t>(model.weights[l].size()));
        // row-major flatten
        size_t k = 0;
        for (Eigen::Index i = 0; i < model.weights[l].rows(); ++i) {
            for (Eigen::Index j = 0; j < model.weights[l].cols(); ++j) w[k++] = model.weights[l](i, j);
        }
        doc["weights"].push_back(w);
        std::vector<double> b(model.biases[l].data(), model.biases[l].data() + model.biases[l].size());
        doc["biases"].push_back(b);
    }
    doc["scaler"]["min"] = std::vector<double>(model.scaler.min.data(), model.scaler.min.data() + model.scaler.min.size());
    doc["scaler"]["max"] = std::vector<double>(model.scaler.max.data(), model.scaler.max.data() + model.scaler.max.size());
    doc["metadata"]["seed"] = model.seed;
    doc["metadata"]["clean_accuracy"] = model.clean_accuracy;
    doc["metadata"]["train_accuracy"] = model.train_accuracy;
    doc["metadata"]["logit_step"] = model.logit_step;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << doc.dump(2) << "\n";
}

Classifier load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("model file " + path + ": " + e.what());
    }
    Classifier m = Classifier::make(doc.at("dims").get<std::vector<int>>());
    auto weights = doc.at("weights");
    auto biases = doc.at("biases");
    if (weights.size() != m.weights.size() || biases.size() != m.biases.size()) {
        throw std::runtime_error("model file " + path + ": layer count mismatch");
    }
    for (size_t l = 0; l < m.weights.size(); ++l) {
        auto w = weights[l].get<std::vector<double>>();
        if (w.size() != static_cast<size_t>(m.weights[l].size())) {
            throw std::runtime_error("model file " + path + ": weight size mismatch at layer " + std::to_string(l));
        }
        size_t k = 0;
        for (Eigen::Index i = 0; i < m.weights[l].rows(); ++i) {
            for (Eigen::Index j = 0; j < m.weights[l].cols(); ++j) m.weights[l](i, j) = w[k++];
        }
        auto b = biases[l].get<std::vector<double>>();
        if (b.size() != static_cast<size_t>(m.biases[l].size())) {
            throw std::runtime_error("model file " + path + ": bias size mismatch at layer " + std::to_string(l));
        }
        m.biases[l] = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    }
    auto mins = doc.at("scaler").at("min").get<std::vector<double>>();
    auto maxs = doc.at("scaler").at("max").get<std::vector<double>>();
    if (mins.size() != maxs.size() || mins.size() != static_cast<size_t>(m.input_dim())) {
        throw std::runtime_error("model file " + path + ": scaler size mismatch");
    }
    m.scaler.min = Eigen::Map<Eigen::VectorXd>(mins.data(), static_cast<Eigen::Index>(mins.size()));
    m.scaler.max = Eigen::Map<Eigen::VectorXd>(maxs.data(), static_cast<Eigen::Index>(maxs.size()));
    if (doc.contains("metadata")) {
        const auto& meta = doc["metadata"];
        m.seed = meta.value("seed", 0ull);
        m.clean_accuracy = meta.value("clean_accuracy", -1.0);
        m.train_accuracy = meta.value("train_accuracy", -1.0);
        m.logit_step = meta.value("logit_step", 0.0);
    }
    return m;
}

}  // namespace tabattack
