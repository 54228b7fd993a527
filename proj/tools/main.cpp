#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "irswb/channel.hpp"
#include "irswb/config.hpp"
#include "irswb/estimator.hpp"
#include "irswb/harness.hpp"
#include "irswb/measurement.hpp"
#include "irswb/optimizer.hpp"
#include "irswb/rng.hpp"

namespace {

using namespace irswb;

constexpr std::uint64_t kCliRealizationTag = 0xA1;
constexpr std::uint64_t kCliDatasetTag = 0xA2;
constexpr std::uint64_t kCliTrainTag = 0xB1;
constexpr std::uint64_t kCliOptimizeTag = 0xC1;

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

/// Exact spectral factorization of a Hermitian PSD matrix into model weights,
/// so a known autocorrelation can flow through the same JSON interface.
EstimatorModel model_from_autocorr(const CMat& autocorr) {
    Eigen::SelfAdjointEigenSolver<CMat> eig(autocorr);
    const double lambda_max = eig.eigenvalues().maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
        if (eig.eigenvalues()[i] > 1e-12 * std::max(lambda_max, 0.0))
            keep.push_back(i);
    if (keep.empty())
        keep.push_back(eig.eigenvalues().size() - 1);

    EstimatorModel model;
    model.k_rank = static_cast<int>(keep.size());
    model.weights.resize(autocorr.rows(), model.k_rank);
    for (std::size_t k = 0; k < keep.size(); ++k)
        model.weights.col(static_cast<Eigen::Index>(k)) =
            std::sqrt(std::max(eig.eigenvalues()[keep[k]], 0.0)) * eig.eigenvectors().col(keep[k]);
    return model;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"IRS-aided wideband OFDM link simulator, channel-autocorrelation estimator "
                 "and reflection optimizer"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed_override = 0;
    bool seed_given = false;
    int threads = 1;
    app.add_option("--config", config_path, "JSON configuration file")->required();
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed_override, "override the configured RNG seed")
        ->each([&](const std::string&) { seed_given = true; });
    app.add_option("--threads", threads, "worker threads for Monte Carlo trials");

    auto* sim = app.add_subcommand("simulate", "generate a channel and dump an RSRP dataset");
    int l_count = 100;
    bool dump_truth = false;
    sim->add_option("--l-count", l_count, "number of (reflection, RSRP) pairs");
    sim->add_flag("--truth", dump_truth, "also write the true autocorrelation as truth.json");

    auto* est = app.add_subcommand("estimate", "recover the autocorrelation from a dataset");
    std::string dataset_path;
    int k_rank = 0;
    std::string truth_path;
    est->add_option("--dataset", dataset_path, "dataset CSV")->required();
    est->add_option("--k-rank", k_rank, "number of rank-one components (0 = tap-count default)");
    est->add_option("--truth", truth_path, "truth model JSON for an NMSE printout");

    auto* opt = app.add_subcommand("optimize", "optimize the reflection for an estimate");
    std::string model_path;
    opt->add_option("--model", model_path, "model JSON holding the autocorrelation factor")
        ->required();

    auto* exp = app.add_subcommand("experiment", "run the configured Monte Carlo sweep");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(exp)) {
            ExperimentSpec spec = ExperimentSpec::from_json_file(config_path);
            if (seed_given)
                spec.base.seed = seed_override;
            if (out_dir != ".")
                spec.output_dir = out_dir;
            const ExperimentReport report = run_experiment(spec, threads);
            std::filesystem::create_directories(spec.output_dir);
            const std::string csv = join_path(spec.output_dir, "report.csv");
            const std::string js = join_path(spec.output_dir, "report.json");
            write_report_csv(report, csv);
            write_report_json(report, js);
            std::cout << "wrote " << csv << "\nwrote " << js << "\n";
            if (!report.flagged_cells.empty()) {
                for (const std::string& f : report.flagged_cells)
                    std::cout << "flagged: " << f << "\n";
            }
            return 0;
        }

        SystemConfig cfg = SystemConfig::from_json_file(config_path);
        if (seed_given)
            cfg.seed = seed_override;
        std::filesystem::create_directories(out_dir);

        std::string config_text;
        {
            std::ifstream in(config_path);
            std::ostringstream ss;
            ss << in.rdbuf();
            config_text = ss.str();
        }
        const TrainingHyper hyper = training_hyper_from_json_text(config_text);
        const OptimizerOptions options = optimizer_options_from_json_text(config_text);

        if (app.got_subcommand(sim)) {
            RngStream real_rng = substream(cfg.seed, {kCliRealizationTag});
            const ChannelRealization realization = generate_realization(cfg, real_rng);
            RngStream ds_rng = substream(cfg.seed, {kCliDatasetTag});
            const MeasurementDataset dataset =
                build_dataset(realization, cfg, l_count, hyper.split_ratio, ds_rng);
            const std::string csv = join_path(out_dir, "dataset.csv");
            write_dataset_csv(dataset, csv);
            std::cout << "wrote " << csv << "\n";
            if (dump_truth) {
                const std::string truth = join_path(out_dir, "truth.json");
                save_model_json(model_from_autocorr(realization.autocorr), truth);
                std::cout << "wrote " << truth << "\n";
            }
            return 0;
        }

        if (app.got_subcommand(est)) {
            const MeasurementDataset dataset =
                read_dataset_csv(dataset_path, cfg.noise_power, hyper.split_ratio);
            const int k = k_rank > 0 ? k_rank : cfg.max_taps();
            RngStream train_rng = substream(cfg.seed, {kCliTrainTag});
            const EstimatorModel model = train(dataset, k, hyper, train_rng);
            const std::string out = join_path(out_dir, "model.json");
            save_model_json(model, out);
            std::cout << "wrote " << out << "\n";
            if (!truth_path.empty()) {
                const EstimatorModel truth = load_model_json(truth_path);
                const double err = nmse(reconstruct_autocorrelation(model),
                                        reconstruct_autocorrelation(truth));
                std::cout << "nmse " << err << "\n";
            }
            return 0;
        }

        if (app.got_subcommand(opt)) {
            const EstimatorModel model = load_model_json(model_path);
            const CMat r_hat = reconstruct_autocorrelation(model);
            RngStream opt_rng = substream(cfg.seed, {kCliOptimizeTag});
            OptimizationResult result =
                optimize_reflection(r_hat, cfg.phase_bits, options, opt_rng);
            const std::string out = join_path(out_dir, "reflection.json");
            write_result_json(result, cfg.noise_power, out);
            std::cout << "wrote " << out << "\n";
            std::cout << "objective_watts " << result.objective << "\n";
            if (cfg.noise_power > 0.0)
                std::cout << "snr_db " << linear_to_db(result.objective / cfg.noise_power)
                          << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
