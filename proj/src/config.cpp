#include "irswb/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace irswb {

namespace {

using nlohmann::json;

void require_keys(const json& j, std::initializer_list<const char*> known, const char* section) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw std::invalid_argument(std::string("unknown key '") + it.key() + "' in " +
                                        section + " config");
    }
}

Eigen::Vector3d parse_vec3(const json& j, const char* key) {
    if (!j.is_array() || j.size() != 3)
        throw std::invalid_argument(std::string(key) + " must be a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

} // namespace

void SystemConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };

    if (n_elements < 1 || n_subcarriers < 1 || n_rs_subcarriers < 1 || n_rs_symbols < 1)
        fail("all counts must be >= 1");
    if (taps_direct < 1 || taps_bs_irs < 1 || taps_irs_user < 1)
        fail("all tap counts must be >= 1");
    if (n_subcarriers % n_rs_subcarriers != 0)
        fail("n_subcarriers must be divisible by n_rs_subcarriers");
    if (n_rs_subcarriers > n_subcarriers)
        fail("n_rs_subcarriers must not exceed n_subcarriers");
    if (n_rs_subcarriers < max_taps())
        fail("n_rs_subcarriers must be >= max(taps_direct, taps_bs_irs + taps_irs_user - 1)");
    if (taps_direct > n_subcarriers || cascaded_taps() > n_subcarriers)
        fail("tap counts must not exceed n_subcarriers");
    if (n_elements != irs_rows * irs_cols)
        fail("n_elements must equal irs_rows * irs_cols");
    if (irs_rows < 1 || irs_cols < 1)
        fail("irs_rows and irs_cols must be >= 1");
    if (tx_power <= 0.0)
        fail("tx_power must be positive");
    if (noise_power < 0.0)
        fail("noise_power must be non-negative");
    if (phase_bits < 1 || phase_bits > 20)
        fail("phase_bits must be in [1, 20]");
    if (pdp_decay < 0.0)
        fail("pdp_decay must be non-negative");
    if (rician_factor <= 0.0)
        fail("rician_factor must be positive");
    if (element_spacing <= 0.0 || wavelength <= 0.0)
        fail("element_spacing and wavelength must be positive");
    if (rs_offset < 0 || rs_offset >= n_subcarriers / n_rs_subcarriers)
        fail("rs_offset must lie in [0, n_subcarriers / n_rs_subcarriers)");
}

SystemConfig SystemConfig::from_json_text(const std::string& text) {
    json root = json::parse(text);
    const json& j = root.contains("system") ? root.at("system") : root;
    require_keys(j,
                 {"n_elements", "n_subcarriers", "n_rs_subcarriers", "n_rs_symbols", "taps_direct",
                  "taps_bs_irs", "taps_irs_user", "tx_power_dbm", "noise_power_dbm", "phase_bits",
                  "pdp_decay", "rician_factor_db", "bs_pos", "user_pos", "irs_ref_pos", "irs_rows",
                  "irs_cols", "element_spacing", "wavelength_m", "rs_offset", "seed"},
                 "system");

    SystemConfig c;
    if (j.contains("irs_rows"))
        c.irs_rows = j.at("irs_rows").get<int>();
    if (j.contains("irs_cols"))
        c.irs_cols = j.at("irs_cols").get<int>();
    c.n_elements = j.contains("n_elements") ? j.at("n_elements").get<int>()
                                            : c.irs_rows * c.irs_cols;
    if (j.contains("n_subcarriers"))
        c.n_subcarriers = j.at("n_subcarriers").get<int>();
    if (j.contains("n_rs_subcarriers"))
        c.n_rs_subcarriers = j.at("n_rs_subcarriers").get<int>();
    if (j.contains("n_rs_symbols"))
        c.n_rs_symbols = j.at("n_rs_symbols").get<int>();
    if (j.contains("taps_direct"))
        c.taps_direct = j.at("taps_direct").get<int>();
    if (j.contains("taps_bs_irs"))
        c.taps_bs_irs = j.at("taps_bs_irs").get<int>();
    if (j.contains("taps_irs_user"))
        c.taps_irs_user = j.at("taps_irs_user").get<int>();
    if (j.contains("tx_power_dbm"))
        c.tx_power = dbm_to_watts(j.at("tx_power_dbm").get<double>());
    if (j.contains("noise_power_dbm")) {
        // null switches receiver noise off entirely
        const auto& v = j.at("noise_power_dbm");
        c.noise_power = v.is_null() ? 0.0 : dbm_to_watts(v.get<double>());
    }
    if (j.contains("phase_bits"))
        c.phase_bits = j.at("phase_bits").get<int>();
    if (j.contains("pdp_decay"))
        c.pdp_decay = j.at("pdp_decay").get<double>();
    if (j.contains("rician_factor_db"))
        c.rician_factor = db_to_linear(j.at("rician_factor_db").get<double>());
    if (j.contains("bs_pos"))
        c.bs_pos = parse_vec3(j.at("bs_pos"), "bs_pos");
    if (j.contains("user_pos"))
        c.user_pos = parse_vec3(j.at("user_pos"), "user_pos");
    if (j.contains("irs_ref_pos"))
        c.irs_ref_pos = parse_vec3(j.at("irs_ref_pos"), "irs_ref_pos");
    if (j.contains("element_spacing"))
        c.element_spacing = j.at("element_spacing").get<double>();
    if (j.contains("wavelength_m"))
        c.wavelength = j.at("wavelength_m").get<double>();
    if (j.contains("rs_offset"))
        c.rs_offset = j.at("rs_offset").get<int>();
    if (j.contains("seed"))
        c.seed = j.at("seed").get<std::uint64_t>();

    c.validate();
    return c;
}

SystemConfig SystemConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string SystemConfig::to_json_text() const {
    json j;
    j["n_elements"] = n_elements;
    j["n_subcarriers"] = n_subcarriers;
    j["n_rs_subcarriers"] = n_rs_subcarriers;
    j["n_rs_symbols"] = n_rs_symbols;
    j["taps_direct"] = taps_direct;
    j["taps_bs_irs"] = taps_bs_irs;
    j["taps_irs_user"] = taps_irs_user;
    j["tx_power_dbm"] = watts_to_dbm(tx_power);
    if (noise_power > 0.0)
        j["noise_power_dbm"] = watts_to_dbm(noise_power);
    else
        j["noise_power_dbm"] = nullptr;
    j["phase_bits"] = phase_bits;
    j["pdp_decay"] = pdp_decay;
    j["rician_factor_db"] = linear_to_db(rician_factor);
    j["bs_pos"] = {bs_pos.x(), bs_pos.y(), bs_pos.z()};
    j["user_pos"] = {user_pos.x(), user_pos.y(), user_pos.z()};
    j["irs_ref_pos"] = {irs_ref_pos.x(), irs_ref_pos.y(), irs_ref_pos.z()};
    j["irs_rows"] = irs_rows;
    j["irs_cols"] = irs_cols;
    j["element_spacing"] = element_spacing;
    j["wavelength_m"] = wavelength;
    j["rs_offset"] = rs_offset;
    j["seed"] = seed;
    return j.dump(); // nlohmann keeps object keys sorted
}

std::uint64_t config_hash(const SystemConfig& config) {
    const std::string text = config.to_json_text();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace irswb
