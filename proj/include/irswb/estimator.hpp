#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "irswb/measurement.hpp"
#include "irswb/rng.hpp"
#include "irswb/types.hpp"

namespace irswb {

/// Rank-K factorized quadratic model of the received power,
/// p(v) = sum_k |v^H w_k|^2, i.e. R_hat = sum_k w_k w_k^H. The complex vector
/// w_k carries the tied real/imaginary block structure of the equivalent
/// real-valued two-neuron subnetwork exactly.
struct EstimatorModel {
    int k_rank = 0;
    CMat weights; // (N+1) x k_rank, column k = w_k
};

enum class SgdVariant { sgd, adam };

struct TrainingHyper {
    double step_size = 1e-3;
    int epochs = 400;
    int batch_size = 32; // <= 0 means full batch
    double init_scale = 1.0;
    double split_ratio = 0.9; // L1 / L
    int early_stop_patience = 60;
    double convergence_tol = 1e-4; // relative validation improvement that resets patience
    SgdVariant variant = SgdVariant::sgd;
    double momentum = 0.9; // 0 disables momentum for the plain-SGD variant
    bool estimate_noise_floor = false; // subtract min RSRP minus a margin instead of sigma^2
    double noise_floor_margin = 0.1;   // fraction of the minimum RSRP
};

/// Raised when the training loss stops being finite.
class TrainingDivergedError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Per-epoch diagnostics, filled by train() when requested.
struct TrainingTrace {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;
};

/// sum_k |v^H w_k|^2 (always >= 0).
double forward_power(const EstimatorModel& model, const CVec& reflection);

/// MSE loss over a batch and its gradient with respect to every w_k.
/// probes holds one reflection vector per row (v_l^T); targets are the
/// noise-subtracted powers. The gradient of sum-of-squared-residuals through
/// the tied real block structure is -(4/B) sum_l r_l v_l (v_l^H w_k) with
/// r_l = t_l - p(v_l).
std::pair<double, CMat> loss_and_gradient(const EstimatorModel& model, const CMat& probes,
                                          const RVec& targets);

/// Mini-batch stochastic gradient descent on the MSE between noise-subtracted
/// RSRP targets and the model output. Targets are max(rsrp - sigma^2, 0),
/// scaled by 1/max before training (weights are unscaled on return). A random
/// L1-subset trains, the rest validates; the model with the lowest validation
/// loss seen is returned (ties keep the earliest epoch).
EstimatorModel train(const MeasurementDataset& dataset, int k_rank, const TrainingHyper& hyper,
                     RngStream& rng, TrainingTrace* trace = nullptr);

/// R_hat = sum_k w_k w_k^H, Hermitian PSD with rank <= k_rank.
CMat reconstruct_autocorrelation(const EstimatorModel& model);

/// ||estimate - truth||_F^2 / ||truth||_F^2.
double nmse(const CMat& estimate, const CMat& truth);

/// JSON round trip is lossless at double precision (k_rank plus interleaved
/// re/im weight arrays).
void save_model_json(const EstimatorModel& model, const std::string& path);
EstimatorModel load_model_json(const std::string& path);

} // namespace irswb
