#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "irswb/config.hpp"
#include "irswb/estimator.hpp"
#include "irswb/optimizer.hpp"
#include "irswb/types.hpp"

namespace irswb {

/// Monte Carlo sweep description: which reflection-design methods to run on
/// which measurement budgets, repeated over `trials` channel realizations.
struct ExperimentSpec {
    SystemConfig base;
    std::vector<int> l_grid;          // increasing measurement counts
    std::vector<std::string> methods; // subset of {proposed, rank_one, csm, rms, upper_bound}
    int trials = 1;
    TrainingHyper hyper;
    OptimizerOptions optimizer;
    std::string output_dir = "out";

    void validate() const;

    static ExperimentSpec from_json_text(const std::string& text);
    static ExperimentSpec from_json_file(const std::string& path);
    std::string to_json_text() const;
};

/// One aggregated cell of the report.
struct ReportCell {
    int l_count = 0;
    std::string method;
    std::string metric; // "nmse" (linear) or "snr" (linear; reported in dB)
    std::vector<double> samples; // one per successful trial, in trial order
    int failed_trials = 0;       // flagged trials (divergence, missing CSM cells)
};

/// Flat emitted record; SNR cells carry dB values here.
struct ReportRecord {
    int l_count = 0;
    std::string method;
    std::string metric;
    double mean = 0.0;
    double stderr_mean = 0.0;
    int trials = 0;

    bool operator==(const ReportRecord&) const = default;
};

struct ExperimentReport {
    std::vector<ReportCell> cells; // L ascending, methods in spec order, nmse before snr
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string timestamp;
    std::vector<std::string> flagged_cells;

    /// Aggregates in linear scale; SNR converts to dB at this boundary
    /// (delta-method standard error).
    std::vector<ReportRecord> records() const;
    const ReportCell* find_cell(int l_count, const std::string& method,
                                const std::string& metric) const;
};

/// Parse just the optional "training" / "optimizer" sections of a config
/// document (defaults when absent); used by the CLI subcommands that do not
/// need a full experiment spec.
TrainingHyper training_hyper_from_json_text(const std::string& text);
OptimizerOptions optimizer_options_from_json_text(const std::string& text);

/// Runs every (trial, L, method) cell. Each trial derives all of its streams
/// from (seed, trial index), so the report is identical for any worker count.
/// Estimator divergence flags the affected cell instead of aborting the run.
ExperimentReport run_experiment(const ExperimentSpec& spec, int threads = 1);

/// CSV columns: L,method,metric,mean,stderr,trials. Written atomically
/// (temp file + rename). The CSV carries no timestamp so identical runs are
/// byte-identical.
void write_report_csv(const ExperimentReport& report, const std::string& path);
std::string report_csv_text(const ExperimentReport& report);

/// JSON mirrors the CSV records plus provenance (seed, config hash, timestamp,
/// flagged cells).
void write_report_json(const ExperimentReport& report, const std::string& path);

struct ParsedReport {
    std::vector<ReportRecord> records;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string timestamp;
    std::vector<std::string> flagged_cells;
};
ParsedReport read_report_json(const std::string& path);

} // namespace irswb
