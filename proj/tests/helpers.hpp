#pragma once

#include "irswb/config.hpp"

namespace testcfg {

// N=8 (4x2), M=32, M0=8, taps 4/4/3 -> K=6
inline irswb::SystemConfig small() {
    irswb::SystemConfig cfg;
    cfg.n_elements = 8;
    cfg.irs_rows = 4;
    cfg.irs_cols = 2;
    cfg.n_subcarriers = 32;
    cfg.n_rs_subcarriers = 8;
    cfg.n_rs_symbols = 4;
    return cfg;
}

// N=4 (2x2), M=16, M0=8, taps 3/2/2 -> K=3
inline irswb::SystemConfig tiny() {
    irswb::SystemConfig cfg;
    cfg.n_elements = 4;
    cfg.irs_rows = 2;
    cfg.irs_cols = 2;
    cfg.n_subcarriers = 16;
    cfg.n_rs_subcarriers = 8;
    cfg.n_rs_symbols = 2;
    cfg.taps_direct = 3;
    cfg.taps_bs_irs = 2;
    cfg.taps_irs_user = 2;
    return cfg;
}

// N=16 (4x4), M=64, M0=32, taps 3/2/2 -> K=3 (rank-3 autocorrelation)
inline irswb::SystemConfig rank3() {
    irswb::SystemConfig cfg;
    cfg.n_elements = 16;
    cfg.irs_rows = 4;
    cfg.irs_cols = 4;
    cfg.n_subcarriers = 64;
    cfg.n_rs_subcarriers = 32;
    cfg.n_rs_symbols = 1;
    cfg.taps_direct = 3;
    cfg.taps_bs_irs = 2;
    cfg.taps_irs_user = 2;
    return cfg;
}

// N=16 (4x4), M=64, M0=32, taps 4/4/3 -> K=6 (wideband)
inline irswb::SystemConfig wideband16() {
    irswb::SystemConfig cfg;
    cfg.n_elements = 16;
    cfg.irs_rows = 4;
    cfg.irs_cols = 4;
    cfg.n_subcarriers = 64;
    cfg.n_rs_subcarriers = 32;
    return cfg;
}

} // namespace testcfg
