#pragma once

#include <string>
#include <vector>

#include "irswb/channel.hpp"
#include "irswb/config.hpp"
#include "irswb/rng.hpp"
#include "irswb/types.hpp"

namespace irswb {

/// Uniform comb of RS-bearing subcarriers: {offset + i * (m/m0)}.
struct RsPattern {
    int m = 0;
    int m0 = 0;
    int offset = 0;
    std::vector<int> indices;
};

RsPattern rs_pattern(int m, int m0, int offset = 0);

/// v^H R v + noise_power, discarding the tiny imaginary residue.
double expected_power(const CMat& autocorr, const CVec& reflection, double noise_power);

/// One RSRP sample: (1/(Q*M0)) sum_q sum_{m in pattern} |x_m h_m + z|^2 with
/// constant-modulus RS amplitude sqrt(P/M) and fresh CN(0, sigma^2) noise per
/// symbol and subcarrier.
double simulate_rsrp(const ChannelRealization& realization, const ReflectionVector& reflection,
                     const RsPattern& pattern, int q_symbols, const SystemConfig& config,
                     RngStream& rng);

struct DatasetEntry {
    ReflectionVector reflection;
    double rsrp = 0.0; // watts
};

/// L (reflection, RSRP) pairs under one quasi-static channel realization.
struct MeasurementDataset {
    std::vector<DatasetEntry> entries;
    double noise_power = 0.0; // watts
    int train_count = 0;      // L1, 1 <= L1 < L
};

/// Draws l_count patterns with i.i.d. uniform alphabet phases and measures
/// each one; per-pattern substreams make the result independent of evaluation
/// order. train_count = clamp(round(split_ratio * L), 1, L-1).
MeasurementDataset build_dataset(const ChannelRealization& realization, const SystemConfig& config,
                                 int l_count, double split_ratio, RngStream& rng);

/// Gram matrix Fbar^H Fbar of the partial DFT; for a uniform comb this is M0
/// times the (M/M0) x (M/M0) block tiling of I_{M0}.
CMat partial_dft_autocorr(const RsPattern& pattern);

/// CSV schema: header `l,theta_1..theta_N,rsrp_watts`, rows ordered by l
/// (1-based), values printed with full double precision.
void write_dataset_csv(const MeasurementDataset& dataset, const std::string& path);
MeasurementDataset read_dataset_csv(const std::string& path, double noise_power,
                                    double split_ratio);

} // namespace irswb
