#include "irswb/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace irswb {

double path_loss_db(LinkId link, double distance_m) {
    if (distance_m <= 0.0)
        throw std::invalid_argument("path_loss_db: distance must be positive");
    switch (link) {
    case LinkId::direct:
        return 33.0 + 37.0 * std::log10(distance_m);
    case LinkId::bs_irs:
    case LinkId::irs_user:
        return 30.0 + 20.0 * std::log10(distance_m);
    }
    throw std::invalid_argument("path_loss_db: unknown link");
}

ReflectionVector ReflectionVector::from_phases(const RVec& phases) {
    ReflectionVector v;
    v.phases = phases;
    v.extended.resize(phases.size() + 1);
    v.extended[0] = cdouble(1.0, 0.0);
    for (Eigen::Index n = 0; n < phases.size(); ++n)
        v.extended[n + 1] = std::polar(1.0, phases[n]);
    return v;
}

ReflectionVector ReflectionVector::from_phases(const RVec& phases, int phase_bits) {
    if (phase_bits < 1)
        throw std::invalid_argument("ReflectionVector: phase_bits must be >= 1");
    const double step = kTwoPi / static_cast<double>(1 << phase_bits);
    const int levels = 1 << phase_bits;
    for (Eigen::Index n = 0; n < phases.size(); ++n) {
        const double idx = phases[n] / step;
        const long rounded = std::lround(idx);
        if (std::abs(idx - static_cast<double>(rounded)) > 1e-9 || rounded < 1 || rounded > levels)
            throw std::invalid_argument("ReflectionVector: phase outside the discrete alphabet");
    }
    return from_phases(phases);
}

ReflectionVector ReflectionVector::random(int n_elements, int phase_bits, RngStream& rng) {
    if (n_elements < 0 || phase_bits < 1)
        throw std::invalid_argument("ReflectionVector::random: bad arguments");
    const double step = kTwoPi / static_cast<double>(1 << phase_bits);
    std::uniform_int_distribution<int> level(1, 1 << phase_bits);
    RVec phases(n_elements);
    for (int n = 0; n < n_elements; ++n)
        phases[n] = step * static_cast<double>(level(rng));
    return from_phases(phases);
}

CVec cascade_taps(const CVec& bs_irs_taps, const CVec& irs_user_taps) {
    if (bs_irs_taps.size() == 0 || irs_user_taps.size() == 0)
        throw std::invalid_argument("cascade_taps: empty tap vector");
    CVec out = CVec::Zero(bs_irs_taps.size() + irs_user_taps.size() - 1);
    for (Eigen::Index i = 0; i < bs_irs_taps.size(); ++i)
        for (Eigen::Index j = 0; j < irs_user_taps.size(); ++j)
            out[i + j] += bs_irs_taps[i] * irs_user_taps[j];
    return out;
}

CMat assemble_cir_matrix(const CVec& direct, const std::vector<CVec>& cascaded,
                         int n_subcarriers) {
    if (direct.size() > n_subcarriers)
        throw std::invalid_argument("assemble_cir_matrix: direct taps exceed subcarrier count");
    for (const CVec& g : cascaded)
        if (g.size() > n_subcarriers)
            throw std::invalid_argument(
                "assemble_cir_matrix: cascaded taps exceed subcarrier count");

    CMat cir = CMat::Zero(n_subcarriers, static_cast<Eigen::Index>(cascaded.size()) + 1);
    cir.col(0).head(direct.size()) = direct;
    for (std::size_t n = 0; n < cascaded.size(); ++n)
        cir.col(static_cast<Eigen::Index>(n) + 1).head(cascaded[n].size()) = cascaded[n];
    return cir;
}

CMat autocorrelation(const CMat& cir_matrix, double tx_power, int n_subcarriers) {
    if (cir_matrix.rows() != n_subcarriers)
        throw std::invalid_argument("autocorrelation: row count must equal n_subcarriers");
    CMat gram = cir_matrix.adjoint() * cir_matrix;
    gram = 0.5 * (gram + gram.adjoint()).eval(); // exact Hermitian symmetry
    return (tx_power / static_cast<double>(n_subcarriers)) * gram;
}

CVec channel_frequency_response(const CMat& cir_matrix, const CVec& reflection,
                                const std::vector<int>* indices) {
    if (reflection.size() != cir_matrix.cols())
        throw std::invalid_argument("channel_frequency_response: reflection dimension mismatch");
    const Eigen::Index m = cir_matrix.rows();
    const CVec cir = cir_matrix * reflection;

    std::vector<int> all;
    if (indices == nullptr) {
        all.resize(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i)
            all[static_cast<std::size_t>(i)] = static_cast<int>(i);
        indices = &all;
    }

    CVec out(static_cast<Eigen::Index>(indices->size()));
    for (std::size_t i = 0; i < indices->size(); ++i) {
        const int row = (*indices)[i];
        if (row < 0 || row >= m)
            throw std::invalid_argument("channel_frequency_response: subcarrier index out of range");
        cdouble acc(0.0, 0.0);
        for (Eigen::Index k = 0; k < m; ++k) {
            if (cir[k] == cdouble(0.0, 0.0))
                continue;
            // keep m*k reduced mod M so the angle stays small and accurate
            const long long twiddle = (static_cast<long long>(row) * k) % m;
            acc += cir[k] * std::polar(1.0, -kTwoPi * static_cast<double>(twiddle) /
                                                static_cast<double>(m));
        }
        out[static_cast<Eigen::Index>(i)] = acc;
    }
    return out;
}

RVec exp_power_profile(double decay, int taps) {
    if (taps < 1)
        throw std::invalid_argument("exp_power_profile: taps must be >= 1");
    RVec profile(taps);
    for (int k = 0; k < taps; ++k)
        profile[k] = std::exp(-decay * static_cast<double>(k));
    profile /= profile.sum();
    return profile;
}

std::vector<Eigen::Vector3d> irs_element_positions(const SystemConfig& config) {
    const double pitch = config.element_spacing * config.wavelength;
    std::vector<Eigen::Vector3d> pos;
    pos.reserve(static_cast<std::size_t>(config.n_elements));
    for (int r = 0; r < config.irs_rows; ++r)
        for (int c = 0; c < config.irs_cols; ++c)
            pos.push_back(config.irs_ref_pos +
                          Eigen::Vector3d(0.0, pitch * static_cast<double>(c),
                                          pitch * static_cast<double>(r)));
    return pos;
}

ChannelRealization generate_realization(const SystemConfig& config, RngStream& rng) {
    config.validate();

    const double beta_direct =
        path_loss_db(LinkId::direct, (config.bs_pos - config.user_pos).norm());
    const double beta_bs_irs =
        path_loss_db(LinkId::bs_irs, (config.bs_pos - config.irs_ref_pos).norm());
    const double beta_irs_user =
        path_loss_db(LinkId::irs_user, (config.irs_ref_pos - config.user_pos).norm());
    const double gain_direct = db_to_linear(-beta_direct);
    const double gain_bs_irs = db_to_linear(-beta_bs_irs);
    const double gain_irs_user = db_to_linear(-beta_irs_user);

    const RVec pdp_direct = exp_power_profile(config.pdp_decay, config.taps_direct);
    const RVec pdp_bs_irs = exp_power_profile(config.pdp_decay, config.taps_bs_irs);

    ChannelRealization real;
    real.direct.resize(config.taps_direct);
    for (int k = 0; k < config.taps_direct; ++k)
        real.direct[k] = sample_cn(rng, gain_direct * pdp_direct[k]);

    const double kappa = config.rician_factor;
    const double los_power = gain_irs_user * kappa / (1.0 + kappa);
    const double nlos_power = gain_irs_user / (1.0 + kappa);
    const int nlos_taps = config.taps_irs_user - 1;
    RVec pdp_nlos;
    if (nlos_taps > 0)
        pdp_nlos = exp_power_profile(config.pdp_decay, nlos_taps);

    const std::vector<Eigen::Vector3d> elements = irs_element_positions(config);

    real.bs_irs.resize(static_cast<std::size_t>(config.n_elements));
    real.irs_user.resize(static_cast<std::size_t>(config.n_elements));
    real.cascaded.resize(static_cast<std::size_t>(config.n_elements));
    for (int n = 0; n < config.n_elements; ++n) {
        CVec q(config.taps_bs_irs);
        for (int k = 0; k < config.taps_bs_irs; ++k)
            q[k] = sample_cn(rng, gain_bs_irs * pdp_bs_irs[k]);

        CVec b(config.taps_irs_user);
        const double dist = (elements[static_cast<std::size_t>(n)] - config.user_pos).norm();
        b[0] = std::polar(std::sqrt(los_power), -kTwoPi * dist / config.wavelength);
        for (int k = 1; k < config.taps_irs_user; ++k)
            b[k] = sample_cn(rng, nlos_power * pdp_nlos[k - 1]);

        real.bs_irs[static_cast<std::size_t>(n)] = q;
        real.irs_user[static_cast<std::size_t>(n)] = b;
        real.cascaded[static_cast<std::size_t>(n)] = cascade_taps(q, b);
    }

    real.cir_matrix = assemble_cir_matrix(real.direct, real.cascaded, config.n_subcarriers);
    real.autocorr = autocorrelation(real.cir_matrix, config.tx_power, config.n_subcarriers);
    return real;
}

} // namespace irswb
