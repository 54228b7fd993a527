#include "irswb/measurement.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace irswb {

RsPattern rs_pattern(int m, int m0, int offset) {
    if (m < 1 || m0 < 1)
        throw std::invalid_argument("rs_pattern: counts must be >= 1");
    if (m % m0 != 0)
        throw std::invalid_argument("rs_pattern: m must be divisible by m0");
    const int spacing = m / m0;
    if (offset < 0 || offset >= spacing)
        throw std::invalid_argument("rs_pattern: offset must lie in [0, m/m0)");

    RsPattern p;
    p.m = m;
    p.m0 = m0;
    p.offset = offset;
    p.indices.resize(static_cast<std::size_t>(m0));
    for (int i = 0; i < m0; ++i)
        p.indices[static_cast<std::size_t>(i)] = offset + i * spacing;
    return p;
}

double expected_power(const CMat& autocorr, const CVec& reflection, double noise_power) {
    if (autocorr.rows() != autocorr.cols() || autocorr.rows() != reflection.size())
        throw std::invalid_argument("expected_power: dimension mismatch");
    const cdouble q = reflection.dot(autocorr * reflection); // v^H R v
    return q.real() + noise_power;
}

double simulate_rsrp(const ChannelRealization& realization, const ReflectionVector& reflection,
                     const RsPattern& pattern, int q_symbols, const SystemConfig& config,
                     RngStream& rng) {
    if (pattern.m != config.n_subcarriers)
        throw std::invalid_argument("simulate_rsrp: pattern does not match the subcarrier count");
    if (q_symbols < 1)
        throw std::invalid_argument("simulate_rsrp: q_symbols must be >= 1");

    const CVec cfr =
        channel_frequency_response(realization.cir_matrix, reflection.extended, &pattern.indices);
    const double amplitude =
        std::sqrt(config.tx_power / static_cast<double>(config.n_subcarriers));

    double acc = 0.0;
    for (int q = 0; q < q_symbols; ++q) {
        for (Eigen::Index i = 0; i < cfr.size(); ++i) {
            const cdouble z = sample_cn(rng, config.noise_power);
            acc += std::norm(amplitude * cfr[i] + z);
        }
    }
    return acc / (static_cast<double>(q_symbols) * static_cast<double>(pattern.m0));
}

MeasurementDataset build_dataset(const ChannelRealization& realization, const SystemConfig& config,
                                 int l_count, double split_ratio, RngStream& rng) {
    if (l_count < 2)
        throw std::invalid_argument("build_dataset: need at least two patterns");
    if (!(split_ratio > 0.0 && split_ratio < 1.0))
        throw std::invalid_argument("build_dataset: split_ratio must lie in (0, 1)");

    const RsPattern pattern =
        rs_pattern(config.n_subcarriers, config.n_rs_subcarriers, config.rs_offset);

    MeasurementDataset ds;
    ds.noise_power = config.noise_power;
    ds.entries.resize(static_cast<std::size_t>(l_count));

    // Per-pattern substreams keep entry l independent of evaluation order.
    const std::uint64_t base = rng();
    for (int l = 0; l < l_count; ++l) {
        RngStream sub = substream(base, {static_cast<std::uint64_t>(l)});
        DatasetEntry& e = ds.entries[static_cast<std::size_t>(l)];
        e.reflection = ReflectionVector::random(config.n_elements, config.phase_bits, sub);
        e.rsrp = simulate_rsrp(realization, e.reflection, pattern, config.n_rs_symbols, config, sub);
    }

    const long raw = std::lround(split_ratio * static_cast<double>(l_count));
    ds.train_count = static_cast<int>(std::clamp<long>(raw, 1, l_count - 1));
    return ds;
}

CMat partial_dft_autocorr(const RsPattern& pattern) {
    CMat partial(static_cast<Eigen::Index>(pattern.indices.size()), pattern.m);
    for (std::size_t i = 0; i < pattern.indices.size(); ++i) {
        const long long row = pattern.indices[i];
        for (int k = 0; k < pattern.m; ++k) {
            const long long twiddle = (row * k) % pattern.m;
            partial(static_cast<Eigen::Index>(i), k) =
                std::polar(1.0, -kTwoPi * static_cast<double>(twiddle) /
                                    static_cast<double>(pattern.m));
        }
    }
    return partial.adjoint() * partial;
}

namespace {

std::string format_full(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace

void write_dataset_csv(const MeasurementDataset& dataset, const std::string& path) {
    const std::size_t n =
        dataset.entries.empty() ? 0 : static_cast<std::size_t>(dataset.entries[0].reflection.size());

    std::ostringstream out;
    out << "l";
    for (std::size_t i = 1; i <= n; ++i)
        out << ",theta_" << i;
    out << ",rsrp_watts\n";
    for (std::size_t l = 0; l < dataset.entries.size(); ++l) {
        const DatasetEntry& e = dataset.entries[l];
        out << (l + 1);
        for (Eigen::Index i = 0; i < e.reflection.phases.size(); ++i)
            out << ',' << format_full(e.reflection.phases[i]);
        out << ',' << format_full(e.rsrp) << '\n';
    }

    const std::filesystem::path target(path);
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw std::runtime_error("cannot write dataset CSV: " + path);
        f << out.str();
    }
    std::filesystem::rename(tmp, target);
}

MeasurementDataset read_dataset_csv(const std::string& path, double noise_power,
                                    double split_ratio) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open dataset CSV: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("dataset CSV is empty: " + path);
    // header: l,theta_1..theta_N,rsrp_watts
    std::size_t columns = 1;
    for (char ch : line)
        if (ch == ',')
            ++columns;
    if (columns < 2)
        throw std::runtime_error("dataset CSV header is malformed: " + path);
    const std::size_t n = columns - 2;

    MeasurementDataset ds;
    ds.noise_power = noise_power;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream ss(line);
        std::string cell;
        if (!std::getline(ss, cell, ','))
            throw std::runtime_error("dataset CSV row is malformed: " + path);
        RVec phases(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::getline(ss, cell, ','))
                throw std::runtime_error("dataset CSV row is malformed: " + path);
            phases[static_cast<Eigen::Index>(i)] = std::stod(cell);
        }
        if (!std::getline(ss, cell, ','))
            throw std::runtime_error("dataset CSV row is malformed: " + path);
        DatasetEntry e;
        e.reflection = ReflectionVector::from_phases(phases);
        e.rsrp = std::stod(cell);
        ds.entries.push_back(std::move(e));
    }
    if (ds.entries.size() < 2)
        throw std::runtime_error("dataset CSV needs at least two rows: " + path);

    const long raw = std::lround(split_ratio * static_cast<double>(ds.entries.size()));
    ds.train_count = static_cast<int>(
        std::clamp<long>(raw, 1, static_cast<long>(ds.entries.size()) - 1));
    return ds;
}

} // namespace irswb
