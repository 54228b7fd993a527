#pragma once

#include <stdexcept>
#include <string>

#include "irswb/channel.hpp"
#include "irswb/measurement.hpp"
#include "irswb/rng.hpp"
#include "irswb/types.hpp"

namespace irswb {

/// Low-rank factor of the relaxed reflection autocorrelation V = Z Z^H with
/// unit-norm rows (diag(V) = 1).
struct SdrSolution {
    CMat factor;            // (N+1) x rank_cap
    double objective = 0.0; // Tr(R_hat * Z Z^H)
    int rank_cap = 0;
};

struct OptimizationResult {
    ReflectionVector reflection;
    double objective = 0.0; // v^H R v in watts
    std::string method;     // proposed | csm | rms | upper_bound | exhaustive
};

struct OptimizerOptions {
    int sdr_iterations = 300;
    int sdr_rank_cap = 0; // 0 -> ceil(sqrt(2*(N+1)))
    int randomization_trials = 200;
    int refinement_sweeps = 20;
    // extra refinement passes from uniform random starting patterns; escapes
    // the coordinate-ascent local optima around the relaxation direction
    int refinement_restarts = 8;
};

/// Maximizes Tr(R_hat Z Z^H) over unit-norm rows of Z by projected gradient
/// ascent on the low-rank factor (the interior-point-grade relaxation optimum
/// at these sizes). The objective never decreases across accepted steps.
/// Throws std::invalid_argument when r_hat is not Hermitian PSD.
SdrSolution solve_sdr_relaxation(const CMat& r_hat, int rank_cap, int iterations, RngStream& rng);

/// Nearest alphabet value {w, 2w, ..., 2^mu * w} in circular distance; ties
/// go to the smaller grid value.
double quantize_to_alphabet(double phase, int phase_bits);

/// Draws xi = Z g with g ~ CN(0, I), de-rotates so entry 0 has zero phase,
/// quantizes entries 1..N, and keeps the best of `trials` candidates under
/// v^H R_hat v.
ReflectionVector gaussian_randomization(const CMat& r_hat, const SdrSolution& sdr, int trials,
                                        int phase_bits, RngStream& rng);

/// Cyclic coordinate ascent over the discrete alphabet; stops after a sweep
/// without change or max_sweeps. The objective is non-decreasing per
/// coordinate update and ties keep the incumbent phase.
ReflectionVector successive_refinement(const CMat& r_hat, const ReflectionVector& start,
                                       int phase_bits, int max_sweeps);

/// Raised when a conditional-sample-mean cell has no samples.
class InsufficientDataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Conditional sample mean: per element and alphabet value, the mean RSRP of
/// the entries using that value; each element takes its argmax (ties to the
/// smallest phase).
ReflectionVector csm_select(const MeasurementDataset& dataset, int phase_bits);

/// The stored pattern with the largest measured RSRP (ties to the smallest
/// index).
ReflectionVector rms_select(const MeasurementDataset& dataset);

/// v^H R v / sigma^2 (linear).
double evaluate_snr(const CMat& autocorr, const CVec& reflection, double noise_power);

/// Global optimum of v^H R_hat v by enumerating all 2^(mu*N) configurations
/// in lexicographic phase order (ties keep the first). Guarded to
/// 2^(mu*N) <= 2^20; beyond that throws std::length_error.
OptimizationResult exhaustive_search(const CMat& r_hat, int phase_bits, int n_elements);

/// SDR -> Gaussian randomization -> successive refinement.
OptimizationResult optimize_reflection(const CMat& r_hat, int phase_bits,
                                       const OptimizerOptions& options, RngStream& rng);

/// JSON: method tag, phases (radians), objective (watts), SNR (dB).
void write_result_json(const OptimizationResult& result, double noise_power,
                       const std::string& path);

} // namespace irswb
