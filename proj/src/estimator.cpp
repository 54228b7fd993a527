#include "irswb/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace irswb {

double forward_power(const EstimatorModel& model, const CVec& reflection) {
    if (reflection.size() != model.weights.rows())
        throw std::invalid_argument("forward_power: dimension mismatch");
    return (model.weights.adjoint() * reflection).squaredNorm();
}

std::pair<double, CMat> loss_and_gradient(const EstimatorModel& model, const CMat& probes,
                                          const RVec& targets) {
    if (probes.rows() == 0)
        throw std::invalid_argument("loss_and_gradient: empty batch");
    if (probes.rows() != targets.size() || probes.cols() != model.weights.rows())
        throw std::invalid_argument("loss_and_gradient: dimension mismatch");

    const double batch = static_cast<double>(probes.rows());
    const CMat excited = probes.conjugate() * model.weights; // entry (l,k) = v_l^H w_k
    const RVec predicted = excited.cwiseAbs2().rowwise().sum();
    const RVec residual = targets - predicted;

    const double loss = residual.squaredNorm() / batch;
    const CMat grad =
        (-4.0 / batch) * (probes.transpose() * (residual.asDiagonal() * excited));
    return {loss, grad};
}

CMat reconstruct_autocorrelation(const EstimatorModel& model) {
    CMat r = model.weights * model.weights.adjoint();
    return 0.5 * (r + r.adjoint()).eval();
}

double nmse(const CMat& estimate, const CMat& truth) {
    if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
        throw std::invalid_argument("nmse: dimension mismatch");
    const double denom = truth.squaredNorm();
    if (denom <= 0.0)
        throw std::invalid_argument("nmse: truth norm is zero");
    return (estimate - truth).squaredNorm() / denom;
}

namespace {

double batch_loss(const CMat& weights, const CMat& probes, const RVec& targets) {
    const CMat excited = probes.conjugate() * weights;
    const RVec predicted = excited.cwiseAbs2().rowwise().sum();
    return (targets - predicted).squaredNorm() / static_cast<double>(probes.rows());
}

// The update rules act on the weight matrix as a flat real array; re/im parts
// of each entry are independent coordinates of the real-domain problem.
Eigen::Map<Eigen::ArrayXd> real_view(CMat& m) {
    return {reinterpret_cast<double*>(m.data()), 2 * m.size()};
}
Eigen::Map<const Eigen::ArrayXd> real_view(const CMat& m) {
    return {reinterpret_cast<const double*>(m.data()), 2 * m.size()};
}

} // namespace

EstimatorModel train(const MeasurementDataset& dataset, int k_rank, const TrainingHyper& hyper,
                     RngStream& rng, TrainingTrace* trace) {
    if (k_rank < 1)
        throw std::invalid_argument("train: k_rank must be >= 1");
    const int l_total = static_cast<int>(dataset.entries.size());
    if (l_total < 2)
        throw std::invalid_argument("train: dataset needs at least two entries");
    if (!(hyper.step_size > 0.0))
        throw std::invalid_argument("train: step_size must be positive");
    if (hyper.epochs < 1)
        throw std::invalid_argument("train: epochs must be >= 1");

    const Eigen::Index dim = dataset.entries[0].reflection.extended.size();
    CMat probes(l_total, dim);
    RVec targets(l_total);

    double noise_floor = dataset.noise_power;
    if (hyper.estimate_noise_floor) {
        double lo = std::numeric_limits<double>::infinity();
        for (const DatasetEntry& e : dataset.entries)
            lo = std::min(lo, e.rsrp);
        noise_floor = std::max(0.0, lo * (1.0 - hyper.noise_floor_margin));
    }
    for (int l = 0; l < l_total; ++l) {
        const DatasetEntry& e = dataset.entries[static_cast<std::size_t>(l)];
        if (e.reflection.extended.size() != dim)
            throw std::invalid_argument("train: inconsistent reflection dimensions");
        probes.row(l) = e.reflection.extended.transpose();
        targets[l] = std::max(e.rsrp - noise_floor, 0.0);
    }

    // Normalized targets make the default step size transferable across
    // transmit powers and path-loss regimes.
    const double peak = targets.maxCoeff();
    const double scale = peak > 0.0 ? 1.0 / peak : 1.0;
    targets *= scale;

    const int l_train = std::clamp(dataset.train_count, 1, l_total - 1);
    std::vector<int> order(static_cast<std::size_t>(l_total));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    CMat train_probes(l_train, dim);
    RVec train_targets(l_train);
    CMat val_probes(l_total - l_train, dim);
    RVec val_targets(l_total - l_train);
    for (int i = 0; i < l_train; ++i) {
        train_probes.row(i) = probes.row(order[static_cast<std::size_t>(i)]);
        train_targets[i] = targets[order[static_cast<std::size_t>(i)]];
    }
    for (int i = l_train; i < l_total; ++i) {
        val_probes.row(i - l_train) = probes.row(order[static_cast<std::size_t>(i)]);
        val_targets[i - l_train] = targets[order[static_cast<std::size_t>(i)]];
    }

    const double mean_target = train_targets.mean();
    const double init_sigma =
        hyper.init_scale *
        std::sqrt(std::max(mean_target, 1e-12) /
                  (static_cast<double>(k_rank) * static_cast<double>(dim)));
    EstimatorModel model;
    model.k_rank = k_rank;
    model.weights.resize(dim, k_rank);
    for (Eigen::Index c = 0; c < model.weights.cols(); ++c)
        for (Eigen::Index r = 0; r < model.weights.rows(); ++r)
            model.weights(r, c) = sample_cn(rng, init_sigma * init_sigma);

    const int batch_size =
        hyper.batch_size > 0 ? std::min(hyper.batch_size, l_train) : l_train;
    const int n_batches = (l_train + batch_size - 1) / batch_size;

    CMat momentum_buf = CMat::Zero(dim, k_rank);
    CMat adam_m = CMat::Zero(dim, k_rank);
    CMat adam_v = CMat::Zero(dim, k_rank);
    long adam_t = 0;

    CMat best_weights = model.weights;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    double patience_anchor = std::numeric_limits<double>::infinity();
    int stale_epochs = 0;

    std::vector<int> idx(static_cast<std::size_t>(l_train));
    std::iota(idx.begin(), idx.end(), 0);

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (int b = 0; b < n_batches; ++b) {
            const int lo = b * batch_size;
            const int hi = std::min(lo + batch_size, l_train);
            CMat bp(hi - lo, dim);
            RVec bt(hi - lo);
            for (int i = lo; i < hi; ++i) {
                bp.row(i - lo) = train_probes.row(idx[static_cast<std::size_t>(i)]);
                bt[i - lo] = train_targets[idx[static_cast<std::size_t>(i)]];
            }

            auto [loss, grad] = loss_and_gradient(model, bp, bt);
            if (!std::isfinite(loss))
                throw TrainingDivergedError("train: non-finite loss at epoch " +
                                            std::to_string(epoch));

            if (hyper.variant == SgdVariant::adam) {
                ++adam_t;
                const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                auto g = real_view(grad);
                auto m = real_view(adam_m);
                auto v = real_view(adam_v);
                auto w = real_view(model.weights);
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g.square();
                const double corr1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
                const double corr2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
                w -= hyper.step_size * (m / corr1) / ((v / corr2).sqrt() + eps);
            } else {
                if (hyper.momentum > 0.0) {
                    auto g = real_view(grad);
                    auto mom = real_view(momentum_buf);
                    auto w = real_view(model.weights);
                    mom = hyper.momentum * mom + g;
                    w -= hyper.step_size * mom;
                } else {
                    auto g = real_view(grad);
                    auto w = real_view(model.weights);
                    w -= hyper.step_size * g;
                }
            }
        }

        const double epoch_train_loss = batch_loss(model.weights, train_probes, train_targets);
        const double val =
            val_targets.size() > 0 ? batch_loss(model.weights, val_probes, val_targets)
                                   : epoch_train_loss;
        if (!std::isfinite(epoch_train_loss) || !std::isfinite(val))
            throw TrainingDivergedError("train: non-finite loss at epoch " +
                                        std::to_string(epoch));
        if (trace != nullptr) {
            trace->train_loss.push_back(epoch_train_loss);
            trace->val_loss.push_back(val);
        }

        if (val < best_val) { // strict: ties keep the earliest epoch
            best_val = val;
            best_weights = model.weights;
            best_epoch = epoch;
        }
        if (val < patience_anchor * (1.0 - hyper.convergence_tol)) {
            patience_anchor = val;
            stale_epochs = 0;
        } else if (++stale_epochs >= hyper.early_stop_patience) {
            break;
        }
    }

    if (trace != nullptr)
        trace->best_epoch = best_epoch;

    model.weights = best_weights / std::sqrt(scale);
    return model;
}

void save_model_json(const EstimatorModel& model, const std::string& path) {
    nlohmann::json j;
    j["k_rank"] = model.k_rank;
    j["dim"] = model.weights.rows();
    nlohmann::json weights = nlohmann::json::array();
    for (Eigen::Index k = 0; k < model.weights.cols(); ++k) {
        nlohmann::json col = nlohmann::json::array();
        for (Eigen::Index i = 0; i < model.weights.rows(); ++i) {
            col.push_back(model.weights(i, k).real());
            col.push_back(model.weights(i, k).imag());
        }
        weights.push_back(std::move(col));
    }
    j["weights"] = std::move(weights);

    const std::filesystem::path target(path);
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw std::runtime_error("cannot write model JSON: " + path);
        f << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, target);
}

EstimatorModel load_model_json(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open model JSON: " + path);
    nlohmann::json j;
    f >> j;

    EstimatorModel model;
    model.k_rank = j.at("k_rank").get<int>();
    const Eigen::Index dim = j.at("dim").get<Eigen::Index>();
    const auto& weights = j.at("weights");
    if (model.k_rank < 1 || static_cast<Eigen::Index>(weights.size()) != model.k_rank)
        throw std::runtime_error("model JSON is malformed: " + path);
    model.weights.resize(dim, model.k_rank);
    for (Eigen::Index k = 0; k < model.k_rank; ++k) {
        const auto& col = weights[static_cast<std::size_t>(k)];
        if (static_cast<Eigen::Index>(col.size()) != 2 * dim)
            throw std::runtime_error("model JSON is malformed: " + path);
        for (Eigen::Index i = 0; i < dim; ++i)
            model.weights(i, k) = cdouble(col[static_cast<std::size_t>(2 * i)].get<double>(),
                                          col[static_cast<std::size_t>(2 * i + 1)].get<double>());
    }
    return model;
}

} // namespace irswb
