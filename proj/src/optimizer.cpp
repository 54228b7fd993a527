#include "irswb/optimizer.hpp"

#include <cassert>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace irswb {

namespace {

double bm_objective(const CMat& r_hat, const CMat& factor) {
    return (factor.conjugate().cwiseProduct(r_hat * factor)).sum().real();
}

void normalize_rows(CMat& factor) {
    for (Eigen::Index i = 0; i < factor.rows(); ++i) {
        const double norm = factor.row(i).norm();
        if (norm > 1e-300)
            factor.row(i) /= norm;
        else
            factor(i, 0) = cdouble(1.0, 0.0); // degenerate row, reset to a unit vector
    }
}

} // namespace

SdrSolution solve_sdr_relaxation(const CMat& r_hat, int rank_cap, int iterations,
                                 RngStream& rng) {
    if (r_hat.rows() != r_hat.cols() || r_hat.rows() < 1)
        throw std::invalid_argument("solve_sdr_relaxation: matrix must be square");
    const double max_abs = r_hat.cwiseAbs().maxCoeff();
    if ((r_hat - r_hat.adjoint()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + max_abs))
        throw std::invalid_argument("solve_sdr_relaxation: matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<CMat> eig(r_hat, Eigen::EigenvaluesOnly);
    const double lambda_max = eig.eigenvalues().maxCoeff();
    const double lambda_min = eig.eigenvalues().minCoeff();
    if (lambda_min < -1e-9 * std::max(lambda_max, 1e-300))
        throw std::invalid_argument("solve_sdr_relaxation: matrix is not PSD");

    const Eigen::Index dim = r_hat.rows();
    const int p = rank_cap > 0
                      ? rank_cap
                      : static_cast<int>(std::ceil(std::sqrt(2.0 * static_cast<double>(dim))));

    CMat factor(dim, p);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (int j = 0; j < p; ++j)
            factor(i, j) = sample_cn(rng, 1.0);
    normalize_rows(factor);

    double objective = bm_objective(r_hat, factor);
    CMat best = factor;
    double best_objective = objective;

    // Ascent direction is R*Z (half the Wirtinger gradient); the projection
    // renormalizes each row. Step adapts: grow on success, halve on failure.
    double step = lambda_max > 0.0 ? 1.0 / lambda_max : 1.0;
    for (int it = 0; it < iterations; ++it) {
        CMat cand = factor + (2.0 * step) * (r_hat * factor);
        normalize_rows(cand);
        const double cand_objective = bm_objective(r_hat, cand);
        if (cand_objective >= objective) {
            factor = std::move(cand);
            objective = cand_objective;
            step *= 1.25;
            if (objective > best_objective) {
                best = factor;
                best_objective = objective;
            }
        } else {
            step *= 0.5;
            if (step < 1e-18 / std::max(lambda_max, 1e-300))
                break;
        }
    }

    SdrSolution sol;
    sol.factor = std::move(best);
    sol.objective = best_objective;
    sol.rank_cap = p;
    return sol;
}

double quantize_to_alphabet(double phase, int phase_bits) {
    if (phase_bits < 1)
        throw std::invalid_argument("quantize_to_alphabet: phase_bits must be >= 1");
    const int levels = 1 << phase_bits;
    const double step = kTwoPi / static_cast<double>(levels);

    double x = std::fmod(phase, kTwoPi);
    if (x < 0.0)
        x += kTwoPi;
    const double pos = x / step; // in [0, levels)
    const double lo = std::floor(pos);
    const double frac = pos - lo;

    // alphabet indices are 1..levels with value i*step; index 0 wraps to levels
    auto canonical = [levels](long i) {
        long c = i % levels;
        if (c <= 0)
            c += levels;
        return c;
    };

    long pick;
    if (frac < 0.5)
        pick = canonical(static_cast<long>(lo));
    else if (frac > 0.5)
        pick = canonical(static_cast<long>(lo) + 1);
    else
        pick = std::min(canonical(static_cast<long>(lo)), canonical(static_cast<long>(lo) + 1));
    return static_cast<double>(pick) * step;
}

ReflectionVector gaussian_randomization(const CMat& r_hat, const SdrSolution& sdr, int trials,
                                        int phase_bits, RngStream& rng) {
    if (trials < 1)
        throw std::invalid_argument("gaussian_randomization: trials must be >= 1");
    if (r_hat.rows() != sdr.factor.rows())
        throw std::invalid_argument("gaussian_randomization: dimension mismatch");
    const Eigen::Index n = sdr.factor.rows() - 1;

    ReflectionVector best;
    double best_objective = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        CVec g(sdr.factor.cols());
        for (Eigen::Index i = 0; i < g.size(); ++i)
            g[i] = sample_cn(rng, 1.0);
        const CVec xi = sdr.factor * g;

        const double ref = std::abs(xi[0]) > 1e-300 ? std::arg(xi[0]) : 0.0;
        RVec phases(n);
        for (Eigen::Index i = 0; i < n; ++i)
            phases[i] = quantize_to_alphabet(std::arg(xi[i + 1]) - ref, phase_bits);

        ReflectionVector cand = ReflectionVector::from_phases(phases, phase_bits);
        const double objective = cand.extended.dot(r_hat * cand.extended).real();
        if (objective > best_objective) {
            best_objective = objective;
            best = std::move(cand);
        }
    }
    return best;
}

ReflectionVector successive_refinement(const CMat& r_hat, const ReflectionVector& start,
                                       int phase_bits, int max_sweeps) {
    const Eigen::Index n = start.size();
    if (r_hat.rows() != n + 1 || r_hat.cols() != n + 1)
        throw std::invalid_argument("successive_refinement: dimension mismatch");
    const int levels = 1 << phase_bits;
    const double step = kTwoPi / static_cast<double>(levels);

    CVec v = start.extended;
    RVec phases = start.phases;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool changed = false;
        for (Eigen::Index e = 1; e <= n; ++e) {
            // v^H R v = const + 2*Re(conj(v_e) * c) in the e-th entry
            const cdouble c = (r_hat.row(e) * v).value() - r_hat(e, e) * v[e];
            const double incumbent = (std::conj(v[e]) * c).real();
            // ties keep the incumbent; the threshold absorbs the cancellation
            // noise of computing c so exact mathematical ties stay ties
            const double tol = 1e-12 * r_hat.row(e).cwiseAbs().sum();
            double best_gain = incumbent + tol;
            int best_level = 0; // 0 keeps the incumbent
            for (int i = 1; i <= levels; ++i) {
                const double theta = static_cast<double>(i) * step;
                const double gain = (std::polar(1.0, -theta) * c).real();
                if (gain > best_gain) {
                    best_gain = gain;
                    best_level = i;
                }
            }
            if (best_level != 0) {
                assert(best_gain > incumbent); // objective strictly increases
                phases[e - 1] = static_cast<double>(best_level) * step;
                v[e] = std::polar(1.0, phases[e - 1]);
                changed = true;
            }
        }
        if (!changed)
            break;
    }
    return ReflectionVector::from_phases(phases, phase_bits);
}

ReflectionVector csm_select(const MeasurementDataset& dataset, int phase_bits) {
    if (dataset.entries.empty())
        throw std::invalid_argument("csm_select: empty dataset");
    const Eigen::Index n = dataset.entries[0].reflection.size();
    const int levels = 1 << phase_bits;
    const double step = kTwoPi / static_cast<double>(levels);

    RMat sums = RMat::Zero(n, levels);
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(n, levels);
    for (const DatasetEntry& e : dataset.entries) {
        if (e.reflection.size() != n)
            throw std::invalid_argument("csm_select: inconsistent reflection dimensions");
        for (Eigen::Index i = 0; i < n; ++i) {
            long idx = std::lround(e.reflection.phases[i] / step) % levels;
            if (idx <= 0)
                idx += levels;
            sums(i, idx - 1) += e.rsrp;
            counts(i, idx - 1) += 1;
        }
    }

    RVec phases(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double best_mean = -std::numeric_limits<double>::infinity();
        int best_level = 0;
        for (int l = 1; l <= levels; ++l) {
            if (counts(i, l - 1) == 0)
                throw InsufficientDataError(
                    "csm_select: no samples for element " + std::to_string(i + 1) + " at phase " +
                    std::to_string(static_cast<double>(l) * step) + " rad");
            const double mean = sums(i, l - 1) / static_cast<double>(counts(i, l - 1));
            if (mean > best_mean) { // strict: ties keep the smaller phase
                best_mean = mean;
                best_level = l;
            }
        }
        phases[i] = static_cast<double>(best_level) * step;
    }
    return ReflectionVector::from_phases(phases, phase_bits);
}

ReflectionVector rms_select(const MeasurementDataset& dataset) {
    if (dataset.entries.empty())
        throw std::invalid_argument("rms_select: empty dataset");
    std::size_t best = 0;
    for (std::size_t l = 1; l < dataset.entries.size(); ++l)
        if (dataset.entries[l].rsrp > dataset.entries[best].rsrp)
            best = l;
    return dataset.entries[best].reflection;
}

double evaluate_snr(const CMat& autocorr, const CVec& reflection, double noise_power) {
    if (noise_power <= 0.0)
        throw std::invalid_argument("evaluate_snr: noise power must be positive");
    if (autocorr.rows() != autocorr.cols() || autocorr.rows() != reflection.size())
        throw std::invalid_argument("evaluate_snr: dimension mismatch");
    return reflection.dot(autocorr * reflection).real() / noise_power;
}

OptimizationResult exhaustive_search(const CMat& r_hat, int phase_bits, int n_elements) {
    if (r_hat.rows() != n_elements + 1 || r_hat.cols() != n_elements + 1)
        throw std::invalid_argument("exhaustive_search: dimension mismatch");
    if (phase_bits < 1 || n_elements < 1)
        throw std::invalid_argument("exhaustive_search: bad arguments");
    if (static_cast<long long>(phase_bits) * n_elements > 20)
        throw std::length_error("exhaustive_search: more than 2^20 configurations");

    const int levels = 1 << phase_bits;
    const double step = kTwoPi / static_cast<double>(levels);

    std::vector<int> digits(static_cast<std::size_t>(n_elements), 1);
    RVec phases(n_elements);
    CVec v(n_elements + 1);
    v[0] = cdouble(1.0, 0.0);

    OptimizationResult best;
    best.method = "exhaustive";
    best.objective = -std::numeric_limits<double>::infinity();

    // counts through all configurations in lexicographic phase order
    while (true) {
        for (int i = 0; i < n_elements; ++i) {
            phases[i] = static_cast<double>(digits[static_cast<std::size_t>(i)]) * step;
            v[i + 1] = std::polar(1.0, phases[i]);
        }
        const double objective = v.dot(r_hat * v).real();
        if (objective > best.objective) { // strict: first of a tie wins
            best.objective = objective;
            best.reflection = ReflectionVector::from_phases(phases, phase_bits);
        }

        int pos = n_elements - 1;
        while (pos >= 0 && digits[static_cast<std::size_t>(pos)] == levels) {
            digits[static_cast<std::size_t>(pos)] = 1;
            --pos;
        }
        if (pos < 0)
            break;
        ++digits[static_cast<std::size_t>(pos)];
    }
    return best;
}

OptimizationResult optimize_reflection(const CMat& r_hat, int phase_bits,
                                       const OptimizerOptions& options, RngStream& rng) {
    const Eigen::Index n = r_hat.rows() - 1;
    const SdrSolution sdr =
        solve_sdr_relaxation(r_hat, options.sdr_rank_cap, options.sdr_iterations, rng);
    ReflectionVector seed =
        gaussian_randomization(r_hat, sdr, options.randomization_trials, phase_bits, rng);

    ReflectionVector best =
        successive_refinement(r_hat, seed, phase_bits, options.refinement_sweeps);
    double best_objective = best.extended.dot(r_hat * best.extended).real();
    for (int s = 0; s < options.refinement_restarts; ++s) {
        const ReflectionVector start =
            ReflectionVector::random(static_cast<int>(n), phase_bits, rng);
        ReflectionVector cand =
            successive_refinement(r_hat, start, phase_bits, options.refinement_sweeps);
        const double objective = cand.extended.dot(r_hat * cand.extended).real();
        if (objective > best_objective) {
            best_objective = objective;
            best = std::move(cand);
        }
    }

    OptimizationResult result;
    result.objective = best_objective;
    result.reflection = std::move(best);
    result.method = "proposed";
    return result;
}

void write_result_json(const OptimizationResult& result, double noise_power,
                       const std::string& path) {
    nlohmann::json j;
    j["method"] = result.method;
    nlohmann::json phases = nlohmann::json::array();
    for (Eigen::Index i = 0; i < result.reflection.phases.size(); ++i)
        phases.push_back(result.reflection.phases[i]);
    j["phases_rad"] = std::move(phases);
    j["objective_watts"] = result.objective;
    if (noise_power > 0.0)
        j["snr_db"] = linear_to_db(result.objective / noise_power);
    else
        j["snr_db"] = nullptr;

    const std::filesystem::path target(path);
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw std::runtime_error("cannot write result JSON: " + path);
        f << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, target);
}

} // namespace irswb
