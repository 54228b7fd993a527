#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "irswb/types.hpp"

namespace irswb {

/// All scalar parameters of the simulated IRS-aided OFDM downlink.
///
/// Powers are stored in linear watts and the Rician factor in linear scale;
/// JSON ingestion converts from dBm / dB. Defaults reproduce the reference
/// deployment: an 8x4 IRS half a wavelength apart, 128 subcarriers with 64
/// RS-bearing ones, 30 RS symbols per measurement, and a 4/4/3-tap channel.
struct SystemConfig {
    int n_elements = 32;       // N, reflecting elements
    int n_subcarriers = 128;   // M
    int n_rs_subcarriers = 64; // M0, must divide M
    int n_rs_symbols = 30;     // Q, OFDM symbols averaged per RSRP sample

    int taps_direct = 4;   // K1
    int taps_bs_irs = 4;   // K2
    int taps_irs_user = 3; // K3

    double tx_power = 1.0;      // P [W] (30 dBm)
    double noise_power = 1e-12; // sigma^2 [W] (-90 dBm); 0 switches noise off

    int phase_bits = 2;          // mu, phase alphabet size 2^mu
    double pdp_decay = 2.0;      // epsilon, exponential power-delay-profile decay
    double rician_factor = 5.011872336272722; // kappa, linear (7 dB)

    Eigen::Vector3d bs_pos{35.0, -20.0, 15.0};
    Eigen::Vector3d user_pos{0.0, 1.0, 0.0};
    Eigen::Vector3d irs_ref_pos{-2.0, -1.0, 0.0}; // bottom-left element

    int irs_rows = 8;
    int irs_cols = 4;
    double element_spacing = 0.5; // in wavelengths
    double wavelength = 0.1;      // [m]; only fixes the LoS steering phases

    int rs_offset = 0; // first RS subcarrier index, in [0, M/M0)

    std::uint64_t seed = 1;

    /// K: the tap count that bounds rank of the autocorrelation matrix.
    int max_taps() const { return std::max(taps_direct, cascaded_taps()); }
    /// K_r = K2 + K3 - 1, taps of the cascaded BS-IRS-user channel.
    int cascaded_taps() const { return taps_bs_irs + taps_irs_user - 1; }
    /// omega = 2*pi / 2^mu, the phase grid step.
    double phase_step() const { return kTwoPi / static_cast<double>(1 << phase_bits); }

    /// Throws std::invalid_argument on any violated constraint.
    void validate() const;

    static SystemConfig from_json_text(const std::string& text);
    static SystemConfig from_json_file(const std::string& path);
    /// Canonical JSON (sorted keys, dBm/dB units) used for hashing and dumps.
    std::string to_json_text() const;
};

/// FNV-1a over the canonical JSON text; stable across runs and platforms.
std::uint64_t config_hash(const SystemConfig& config);

} // namespace irswb
