#pragma once

#include <vector>

#include "irswb/config.hpp"
#include "irswb/rng.hpp"
#include "irswb/types.hpp"

namespace irswb {

enum class LinkId { direct, bs_irs, irs_user };

/// Distance-dependent path loss in dB for the three links:
/// direct 33 + 37*log10(d), BS-IRS and IRS-user 30 + 20*log10(d).
double path_loss_db(LinkId link, double distance_m);

/// Discrete IRS pattern: N phases from the alphabet {w, 2w, ..., 2^mu * w},
/// w = 2*pi/2^mu, plus the extended unit-modulus vector with a fixed leading 1.
struct ReflectionVector {
    RVec phases;  // theta_n, n = 1..N
    CVec extended; // [1, e^{j theta_1}, ..., e^{j theta_N}]

    /// Builds the extended vector; validates alphabet membership for the
    /// given resolution.
    static ReflectionVector from_phases(const RVec& phases, int phase_bits);
    /// Builds without alphabet validation (CSV ingestion, tests).
    static ReflectionVector from_phases(const RVec& phases);
    /// Uniform i.i.d. draw over the 2^phase_bits alphabet values.
    static ReflectionVector random(int n_elements, int phase_bits, RngStream& rng);

    int size() const { return static_cast<int>(phases.size()); }
};

/// One draw of all time-domain channels and the derived CIR matrix G and
/// autocorrelation R = (P/M) G^H G.
struct ChannelRealization {
    CVec direct;                    // K1 taps
    std::vector<CVec> bs_irs;       // N vectors of K2 taps
    std::vector<CVec> irs_user;     // N vectors of K3 taps
    std::vector<CVec> cascaded;     // N vectors of K2+K3-1 taps
    CMat cir_matrix;                // M x (N+1)
    CMat autocorr;                  // (N+1) x (N+1), Hermitian PSD
};

/// Linear convolution of the two per-element tap vectors.
CVec cascade_taps(const CVec& bs_irs_taps, const CVec& irs_user_taps);

/// Column 0 is the zero-padded direct channel, column n the zero-padded
/// cascaded channel of element n.
CMat assemble_cir_matrix(const CVec& direct, const std::vector<CVec>& cascaded, int n_subcarriers);

/// (P/M) G^H G, symmetrized so the result is exactly Hermitian.
CMat autocorrelation(const CMat& cir_matrix, double tx_power, int n_subcarriers);

/// Rows of F_M * G * v for the requested subcarriers (all M when indices is
/// null). F_M is the unnormalized DFT with entries e^{-j 2 pi m k / M}.
CVec channel_frequency_response(const CMat& cir_matrix, const CVec& reflection,
                                const std::vector<int>* indices = nullptr);

/// Normalized exponential power-delay profile e^{-decay*(k-1)} / sum.
RVec exp_power_profile(double decay, int taps);

/// Element positions of the UPA in the y-z plane, row-major from the
/// bottom-left reference element.
std::vector<Eigen::Vector3d> irs_element_positions(const SystemConfig& config);

/// Draws direct and BS-IRS taps as i.i.d. Rayleigh with the exponential PDP,
/// models the first IRS-user tap as a deterministic LoS component carrying the
/// kappa/(1+kappa) power fraction with geometry-derived phase, and the
/// remaining taps as Rayleigh sharing 1/(1+kappa). Draw order is fixed
/// (direct taps, then per element: BS-IRS taps, then IRS-user NLoS taps) so a
/// given stream always yields the same realization.
ChannelRealization generate_realization(const SystemConfig& config, RngStream& rng);

} // namespace irswb
