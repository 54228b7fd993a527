#include "irswb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "irswb/channel.hpp"

namespace irswb {

namespace {

using nlohmann::json;

constexpr std::uint64_t kRealizationTag = 0x11;
constexpr std::uint64_t kDatasetTag = 0x12;
constexpr std::uint64_t kTrainTag = 0x13;
constexpr std::uint64_t kOptimizeTag = 0x14;

const std::vector<std::string> kKnownMethods = {"proposed", "rank_one", "csm", "rms",
                                                "upper_bound"};

bool method_estimates(const std::string& method) {
    return method == "proposed" || method == "rank_one";
}

TrainingHyper hyper_from_json(const json& j) {
    TrainingHyper h;
    if (j.contains("step_size"))
        h.step_size = j.at("step_size").get<double>();
    if (j.contains("epochs"))
        h.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size"))
        h.batch_size = j.at("batch_size").get<int>();
    if (j.contains("init_scale"))
        h.init_scale = j.at("init_scale").get<double>();
    if (j.contains("split_ratio"))
        h.split_ratio = j.at("split_ratio").get<double>();
    if (j.contains("early_stop_patience"))
        h.early_stop_patience = j.at("early_stop_patience").get<int>();
    if (j.contains("convergence_tol"))
        h.convergence_tol = j.at("convergence_tol").get<double>();
    if (j.contains("variant")) {
        const std::string v = j.at("variant").get<std::string>();
        if (v == "sgd")
            h.variant = SgdVariant::sgd;
        else if (v == "adam")
            h.variant = SgdVariant::adam;
        else
            throw std::invalid_argument("training.variant must be 'sgd' or 'adam'");
    }
    if (j.contains("momentum"))
        h.momentum = j.at("momentum").get<double>();
    if (j.contains("estimate_noise_floor"))
        h.estimate_noise_floor = j.at("estimate_noise_floor").get<bool>();
    if (j.contains("noise_floor_margin"))
        h.noise_floor_margin = j.at("noise_floor_margin").get<double>();
    return h;
}

json hyper_to_json(const TrainingHyper& h) {
    json j;
    j["step_size"] = h.step_size;
    j["epochs"] = h.epochs;
    j["batch_size"] = h.batch_size;
    j["init_scale"] = h.init_scale;
    j["split_ratio"] = h.split_ratio;
    j["early_stop_patience"] = h.early_stop_patience;
    j["convergence_tol"] = h.convergence_tol;
    j["variant"] = h.variant == SgdVariant::adam ? "adam" : "sgd";
    j["momentum"] = h.momentum;
    j["estimate_noise_floor"] = h.estimate_noise_floor;
    j["noise_floor_margin"] = h.noise_floor_margin;
    return j;
}

OptimizerOptions optimizer_from_json(const json& j) {
    OptimizerOptions o;
    if (j.contains("sdr_iterations"))
        o.sdr_iterations = j.at("sdr_iterations").get<int>();
    if (j.contains("sdr_rank_cap"))
        o.sdr_rank_cap = j.at("sdr_rank_cap").get<int>();
    if (j.contains("randomization_trials"))
        o.randomization_trials = j.at("randomization_trials").get<int>();
    if (j.contains("refinement_sweeps"))
        o.refinement_sweeps = j.at("refinement_sweeps").get<int>();
    if (j.contains("refinement_restarts"))
        o.refinement_restarts = j.at("refinement_restarts").get<int>();
    return o;
}

json optimizer_to_json(const OptimizerOptions& o) {
    json j;
    j["sdr_iterations"] = o.sdr_iterations;
    j["sdr_rank_cap"] = o.sdr_rank_cap;
    j["randomization_trials"] = o.randomization_trials;
    j["refinement_sweeps"] = o.refinement_sweeps;
    j["refinement_restarts"] = o.refinement_restarts;
    return j;
}

std::string format_full(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_atomic(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    if (target.has_parent_path())
        std::filesystem::create_directories(target.parent_path());
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw std::runtime_error("cannot write file: " + path);
        f << content;
    }
    std::filesystem::rename(tmp, target);
}

struct CellValue {
    bool present = false;
    double value = 0.0;
};

struct TrialOutcome {
    // indexed [l_index][method_index]
    std::vector<std::vector<CellValue>> nmse;
    std::vector<std::vector<CellValue>> snr;
    std::vector<std::vector<bool>> failed;
};

TrialOutcome run_trial(const ExperimentSpec& spec, int trial) {
    const SystemConfig& cfg = spec.base;
    const std::uint64_t seed = cfg.seed;
    const std::uint64_t t = static_cast<std::uint64_t>(trial);

    TrialOutcome out;
    const std::size_t n_l = spec.l_grid.size();
    const std::size_t n_m = spec.methods.size();
    out.nmse.assign(n_l, std::vector<CellValue>(n_m));
    out.snr.assign(n_l, std::vector<CellValue>(n_m));
    out.failed.assign(n_l, std::vector<bool>(n_m, false));

    RngStream real_rng = substream(seed, {kRealizationTag, t});
    const ChannelRealization realization = generate_realization(cfg, real_rng);
    const int k_full = cfg.max_taps();

    for (std::size_t li = 0; li < n_l; ++li) {
        RngStream ds_rng = substream(seed, {kDatasetTag, t, static_cast<std::uint64_t>(li)});
        const MeasurementDataset dataset =
            build_dataset(realization, cfg, spec.l_grid[li], spec.hyper.split_ratio, ds_rng);

        for (std::size_t mi = 0; mi < n_m; ++mi) {
            const std::string& method = spec.methods[mi];
            try {
                ReflectionVector chosen;
                if (method_estimates(method)) {
                    const int k_rank = method == "proposed" ? k_full : 1;
                    RngStream train_rng = substream(
                        seed, {kTrainTag, t, static_cast<std::uint64_t>(li), mi});
                    const EstimatorModel model =
                        train(dataset, k_rank, spec.hyper, train_rng);
                    const CMat r_hat = reconstruct_autocorrelation(model);
                    out.nmse[li][mi] = {true, nmse(r_hat, realization.autocorr)};

                    // optimizer draws are paired per (trial, method) across L,
                    // so SNR differences between L cells reflect estimation
                    // quality rather than refinement randomness
                    RngStream opt_rng = substream(seed, {kOptimizeTag, t, mi});
                    chosen = optimize_reflection(r_hat, cfg.phase_bits, spec.optimizer, opt_rng)
                                 .reflection;
                } else if (method == "csm") {
                    chosen = csm_select(dataset, cfg.phase_bits);
                } else if (method == "rms") {
                    chosen = rms_select(dataset);
                } else { // upper_bound: perfect knowledge of the autocorrelation
                    RngStream opt_rng = substream(seed, {kOptimizeTag, t, mi});
                    chosen = optimize_reflection(realization.autocorr, cfg.phase_bits,
                                                 spec.optimizer, opt_rng)
                                 .reflection;
                }
                out.snr[li][mi] = {
                    true, evaluate_snr(realization.autocorr, chosen.extended, cfg.noise_power)};
            } catch (const TrainingDivergedError&) {
                out.failed[li][mi] = true;
            } catch (const InsufficientDataError&) {
                out.failed[li][mi] = true;
            }
        }
    }
    return out;
}

} // namespace

void ExperimentSpec::validate() const {
    base.validate();
    if (base.noise_power <= 0.0)
        throw std::invalid_argument("experiment: noise power must be positive (SNR is undefined)");
    if (l_grid.empty())
        throw std::invalid_argument("experiment: l_grid must be non-empty");
    for (std::size_t i = 0; i < l_grid.size(); ++i) {
        if (l_grid[i] < 2)
            throw std::invalid_argument("experiment: every L must be >= 2");
        if (i > 0 && l_grid[i] <= l_grid[i - 1])
            throw std::invalid_argument("experiment: l_grid must be strictly increasing");
    }
    if (methods.empty())
        throw std::invalid_argument("experiment: methods must be non-empty");
    for (const std::string& m : methods) {
        if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) == kKnownMethods.end())
            throw std::invalid_argument("experiment: unknown method '" + m + "'");
        if (std::count(methods.begin(), methods.end(), m) != 1)
            throw std::invalid_argument("experiment: duplicate method '" + m + "'");
    }
    if (trials < 1)
        throw std::invalid_argument("experiment: trials must be >= 1");
    if (!(hyper.split_ratio > 0.0 && hyper.split_ratio < 1.0))
        throw std::invalid_argument("experiment: split_ratio must lie in (0, 1)");
    if (hyper.epochs < 1 || hyper.step_size <= 0.0)
        throw std::invalid_argument("experiment: bad training hyperparameters");
}

ExperimentSpec ExperimentSpec::from_json_text(const std::string& text) {
    ExperimentSpec spec;
    spec.base = SystemConfig::from_json_text(text);

    json root = json::parse(text);
    if (root.contains("training"))
        spec.hyper = hyper_from_json(root.at("training"));
    if (root.contains("optimizer"))
        spec.optimizer = optimizer_from_json(root.at("optimizer"));
    if (root.contains("experiment")) {
        const json& e = root.at("experiment");
        if (e.contains("l_grid"))
            spec.l_grid = e.at("l_grid").get<std::vector<int>>();
        if (e.contains("methods"))
            spec.methods = e.at("methods").get<std::vector<std::string>>();
        if (e.contains("trials"))
            spec.trials = e.at("trials").get<int>();
        if (e.contains("output_dir"))
            spec.output_dir = e.at("output_dir").get<std::string>();
    }
    if (spec.l_grid.empty())
        spec.l_grid = {500, 1000, 2000};
    if (spec.methods.empty())
        spec.methods = {"proposed", "csm", "rms", "upper_bound"};
    spec.validate();
    return spec;
}

TrainingHyper training_hyper_from_json_text(const std::string& text) {
    json root = json::parse(text);
    return root.contains("training") ? hyper_from_json(root.at("training")) : TrainingHyper{};
}

OptimizerOptions optimizer_options_from_json_text(const std::string& text) {
    json root = json::parse(text);
    return root.contains("optimizer") ? optimizer_from_json(root.at("optimizer"))
                                      : OptimizerOptions{};
}

ExperimentSpec ExperimentSpec::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open experiment spec: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string ExperimentSpec::to_json_text() const {
    json root;
    root["system"] = json::parse(base.to_json_text());
    root["training"] = hyper_to_json(hyper);
    root["optimizer"] = optimizer_to_json(optimizer);
    json e;
    e["l_grid"] = l_grid;
    e["methods"] = methods;
    e["trials"] = trials;
    e["output_dir"] = output_dir;
    root["experiment"] = std::move(e);
    return root.dump();
}

ExperimentReport run_experiment(const ExperimentSpec& spec, int threads) {
    spec.validate();

    const int n_trials = spec.trials;
    std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(n_trials));

    const int n_workers = std::clamp(threads, 1, n_trials);
    if (n_workers == 1) {
        for (int t = 0; t < n_trials; ++t)
            outcomes[static_cast<std::size_t>(t)] = run_trial(spec, t);
    } else {
        std::atomic<int> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&] {
            for (;;) {
                const int t = next.fetch_add(1);
                if (t >= n_trials)
                    return;
                try {
                    outcomes[static_cast<std::size_t>(t)] = run_trial(spec, t);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back(worker);
        for (std::thread& th : pool)
            th.join();
        if (error)
            std::rethrow_exception(error);
    }

    ExperimentReport report;
    report.seed = spec.base.seed;
    {
        const std::string text = spec.to_json_text();
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char ch : text) {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        report.config_hash = buf;
    }
    report.timestamp = utc_timestamp();

    // deterministic fold in trial order, L ascending, methods in spec order
    for (std::size_t li = 0; li < spec.l_grid.size(); ++li) {
        for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
            const std::string& method = spec.methods[mi];
            std::vector<std::string> metrics;
            if (method_estimates(method))
                metrics.push_back("nmse");
            metrics.push_back("snr");

            int failures = 0;
            for (int t = 0; t < n_trials; ++t)
                if (outcomes[static_cast<std::size_t>(t)].failed[li][mi])
                    ++failures;

            for (const std::string& metric : metrics) {
                ReportCell cell;
                cell.l_count = spec.l_grid[li];
                cell.method = method;
                cell.metric = metric;
                cell.failed_trials = failures;
                for (int t = 0; t < n_trials; ++t) {
                    const TrialOutcome& o = outcomes[static_cast<std::size_t>(t)];
                    const CellValue& v = metric == "nmse" ? o.nmse[li][mi] : o.snr[li][mi];
                    if (v.present)
                        cell.samples.push_back(v.value);
                }
                report.cells.push_back(std::move(cell));
            }
            if (failures > 0)
                report.flagged_cells.push_back("L=" + std::to_string(spec.l_grid[li]) +
                                               " method=" + method + " failed_trials=" +
                                               std::to_string(failures));
        }
    }
    return report;
}

namespace {

void mean_and_stderr(const std::vector<double>& samples, double& mean, double& se) {
    mean = 0.0;
    se = 0.0;
    const std::size_t n = samples.size();
    if (n == 0)
        return;
    for (double s : samples)
        mean += s;
    mean /= static_cast<double>(n);
    if (n < 2)
        return;
    double var = 0.0;
    for (double s : samples)
        var += (s - mean) * (s - mean);
    var /= static_cast<double>(n - 1);
    se = std::sqrt(var / static_cast<double>(n));
}

} // namespace

std::vector<ReportRecord> ExperimentReport::records() const {
    std::vector<ReportRecord> out;
    out.reserve(cells.size());
    for (const ReportCell& cell : cells) {
        ReportRecord rec;
        rec.l_count = cell.l_count;
        rec.method = cell.method;
        rec.trials = static_cast<int>(cell.samples.size());

        double mean = 0.0, se = 0.0;
        mean_and_stderr(cell.samples, mean, se);
        if (cell.metric == "snr") {
            rec.metric = "snr_db";
            if (mean > 0.0) {
                rec.mean = linear_to_db(mean);
                rec.stderr_mean = 10.0 / std::log(10.0) * se / mean; // delta method
            }
        } else {
            rec.metric = cell.metric;
            rec.mean = mean;
            rec.stderr_mean = se;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

const ReportCell* ExperimentReport::find_cell(int l_count, const std::string& method,
                                              const std::string& metric) const {
    for (const ReportCell& cell : cells)
        if (cell.l_count == l_count && cell.method == method && cell.metric == metric)
            return &cell;
    return nullptr;
}

std::string report_csv_text(const ExperimentReport& report) {
    std::ostringstream out;
    out << "L,method,metric,mean,stderr,trials\n";
    for (const ReportRecord& rec : report.records()) {
        out << rec.l_count << ',' << rec.method << ',' << rec.metric << ','
            << format_full(rec.mean) << ',' << format_full(rec.stderr_mean) << ',' << rec.trials
            << '\n';
    }
    return out.str();
}

void write_report_csv(const ExperimentReport& report, const std::string& path) {
    write_atomic(path, report_csv_text(report));
}

void write_report_json(const ExperimentReport& report, const std::string& path) {
    json j;
    char buf[24];
    j["seed"] = report.seed;
    j["config_hash"] = report.config_hash;
    j["timestamp"] = report.timestamp;
    j["flagged_cells"] = report.flagged_cells;
    json records = json::array();
    for (const ReportRecord& rec : report.records()) {
        json r;
        r["L"] = rec.l_count;
        r["method"] = rec.method;
        r["metric"] = rec.metric;
        r["mean"] = rec.mean;
        r["stderr"] = rec.stderr_mean;
        r["trials"] = rec.trials;
        records.push_back(std::move(r));
    }
    j["records"] = std::move(records);
    (void)buf;
    write_atomic(path, j.dump(2) + "\n");
}

ParsedReport read_report_json(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open report JSON: " + path);
    json j;
    f >> j;

    ParsedReport parsed;
    parsed.seed = j.at("seed").get<std::uint64_t>();
    parsed.config_hash = j.at("config_hash").get<std::string>();
    parsed.timestamp = j.at("timestamp").get<std::string>();
    parsed.flagged_cells = j.at("flagged_cells").get<std::vector<std::string>>();
    for (const json& r : j.at("records")) {
        ReportRecord rec;
        rec.l_count = r.at("L").get<int>();
        rec.method = r.at("method").get<std::string>();
        rec.metric = r.at("metric").get<std::string>();
        rec.mean = r.at("mean").get<double>();
        rec.stderr_mean = r.at("stderr").get<double>();
        rec.trials = r.at("trials").get<int>();
        parsed.records.push_back(std::move(rec));
    }
    return parsed;
}

} // namespace irswb
