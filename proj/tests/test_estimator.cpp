#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "helpers.hpp"
#include "irswb/estimator.hpp"

using namespace irswb;

namespace {

EstimatorModel random_model(int dim, int k_rank, RngStream& rng, double scale = 1.0) {
    EstimatorModel m;
    m.k_rank = k_rank;
    m.weights.resize(dim, k_rank);
    for (Eigen::Index i = 0; i < m.weights.size(); ++i)
        m.weights.data()[i] = sample_cn(rng, scale);
    return m;
}

CMat random_probes(int count, int dim, int phase_bits, RngStream& rng) {
    CMat probes(count, dim);
    for (int l = 0; l < count; ++l)
        probes.row(l) =
            ReflectionVector::random(dim - 1, phase_bits, rng).extended.transpose();
    return probes;
}

// numerical gradient via central differences on every re/im component
CMat finite_difference_gradient(const EstimatorModel& model, const CMat& probes,
                                const RVec& targets, double h = 1e-5) {
    CMat grad(model.weights.rows(), model.weights.cols());
    EstimatorModel probe = model;
    for (Eigen::Index c = 0; c < model.weights.cols(); ++c) {
        for (Eigen::Index r = 0; r < model.weights.rows(); ++r) {
            const cdouble w0 = model.weights(r, c);
            probe.weights(r, c) = w0 + cdouble(h, 0);
            const double fp_re = loss_and_gradient(probe, probes, targets).first;
            probe.weights(r, c) = w0 - cdouble(h, 0);
            const double fm_re = loss_and_gradient(probe, probes, targets).first;
            probe.weights(r, c) = w0 + cdouble(0, h);
            const double fp_im = loss_and_gradient(probe, probes, targets).first;
            probe.weights(r, c) = w0 - cdouble(0, h);
            const double fm_im = loss_and_gradient(probe, probes, targets).first;
            probe.weights(r, c) = w0;
            grad(r, c) = cdouble((fp_re - fm_re) / (2 * h), (fp_im - fm_im) / (2 * h));
        }
    }
    return grad;
}

MeasurementDataset noiseless_dataset(const CMat& autocorr, int l_count, int phase_bits,
                                     double split_ratio, RngStream& rng) {
    MeasurementDataset ds;
    ds.noise_power = 0.0;
    ds.entries.resize(l_count);
    const int n = static_cast<int>(autocorr.rows()) - 1;
    for (int l = 0; l < l_count; ++l) {
        DatasetEntry& e = ds.entries[l];
        e.reflection = ReflectionVector::random(n, phase_bits, rng);
        e.rsrp = expected_power(autocorr, e.reflection.extended, 0.0);
    }
    ds.train_count = std::clamp<int>(std::lround(split_ratio * l_count), 1, l_count - 1);
    return ds;
}

} // namespace

TEST_CASE("forward power matches the sum of squared responses", "[estimator]") {
    {
        EstimatorModel m;
        m.k_rank = 1;
        m.weights = CMat::Zero(4, 1);
        m.weights(0, 0) = 1.0;
        CVec v(4);
        v << 1, std::polar(1.0, 0.4), std::polar(1.0, 2.2), std::polar(1.0, 5.0);
        CHECK(std::abs(forward_power(m, v) - 1.0) < 1e-12);
    }
    {
        EstimatorModel m;
        m.k_rank = 2;
        m.weights = CMat::Identity(2, 2);
        CVec v(2);
        v << 1, 1;
        CHECK(std::abs(forward_power(m, v) - 2.0) < 1e-12);
    }
    {
        RngStream rng = substream(41, {0});
        const EstimatorModel m = random_model(9, 3, rng);
        const CMat r = reconstruct_autocorrelation(m);
        for (int rep = 0; rep < 20; ++rep) {
            const ReflectionVector v = ReflectionVector::random(8, 2, rng);
            const double direct = forward_power(m, v.extended);
            const double quad = v.extended.dot(r * v.extended).real();
            CHECK(std::abs(direct - quad) <= 1e-12 * std::abs(quad));
        }
    }
    {
        RngStream rng(1);
        EstimatorModel m = random_model(3, 1, rng);
        CVec v(2);
        v << 1, 1;
        CHECK_THROWS_AS(forward_power(m, v), std::invalid_argument);
    }
}

TEST_CASE("loss and gradient", "[estimator]") {
    SECTION("exact fit gives zero loss and zero gradient") {
        RngStream rng = substream(42, {0});
        const EstimatorModel m = random_model(5, 2, rng);
        const CMat probes = random_probes(8, 5, 2, rng);
        RVec targets(8);
        for (int l = 0; l < 8; ++l)
            targets[l] = forward_power(m, probes.row(l).transpose());
        const auto [loss, grad] = loss_and_gradient(m, probes, targets);
        CHECK(loss < 1e-24);
        CHECK(grad.cwiseAbs().maxCoeff() < 1e-10);
    }
    SECTION("scalar case matches hand calculus") {
        EstimatorModel m;
        m.k_rank = 1;
        m.weights = CMat::Zero(1, 1);
        m.weights(0, 0) = cdouble(0.7, -0.4);
        CMat probes = CMat::Ones(1, 1);
        RVec targets(1);
        targets << 2.0;
        const double w2 = std::norm(m.weights(0, 0));
        const auto [loss, grad] = loss_and_gradient(m, probes, targets);
        CHECK(std::abs(loss - (2.0 - w2) * (2.0 - w2)) < 1e-12);
        const cdouble expect = -4.0 * (2.0 - w2) * m.weights(0, 0);
        CHECK(std::abs(grad(0, 0) - expect) < 1e-12);
    }
    SECTION("matches central finite differences") {
        RngStream rng = substream(43, {0});
        for (int rep = 0; rep < 8; ++rep) {
            const EstimatorModel m = random_model(9, 3, rng);
            const CMat probes = random_probes(16, 9, 2, rng);
            RVec targets(16);
            for (int l = 0; l < 16; ++l)
                targets[l] = std::abs(sample_cn(rng, 4.0));
            const CMat analytic = loss_and_gradient(m, probes, targets).second;
            const CMat numeric = finite_difference_gradient(m, probes, targets);
            const double scale = numeric.cwiseAbs().maxCoeff();
            CHECK((analytic - numeric).cwiseAbs().maxCoeff() <= 1e-5 * scale);
        }
    }
    SECTION("empty batch is rejected") {
        RngStream rng = substream(44, {0});
        const EstimatorModel m = random_model(3, 1, rng);
        CHECK_THROWS_AS(loss_and_gradient(m, CMat(0, 3), RVec(0)), std::invalid_argument);
    }
}

TEST_CASE("reconstruction is Hermitian PSD with bounded rank", "[estimator]") {
    {
        EstimatorModel m;
        m.k_rank = 2;
        m.weights = CMat::Identity(2, 2);
        CHECK((reconstruct_autocorrelation(m) - CMat::Identity(2, 2)).cwiseAbs().maxCoeff() ==
              0.0);
    }
    {
        EstimatorModel m;
        m.k_rank = 1;
        m.weights = CMat::Zero(2, 1);
        m.weights(0, 0) = cdouble(1, 0);
        m.weights(1, 0) = cdouble(0, 1);
        const CMat r = reconstruct_autocorrelation(m);
        CHECK(std::abs(r(0, 0) - cdouble(1, 0)) < 1e-15);
        CHECK(std::abs(r(0, 1) - cdouble(0, -1)) < 1e-15);
        CHECK(std::abs(r(1, 0) - cdouble(0, 1)) < 1e-15);
        CHECK(std::abs(r(1, 1) - cdouble(1, 0)) < 1e-15);
    }
    {
        RngStream rng = substream(45, {0});
        const EstimatorModel m = random_model(12, 4, rng);
        const CMat r = reconstruct_autocorrelation(m);
        CHECK((r - r.adjoint()).cwiseAbs().maxCoeff() == 0.0);
        Eigen::SelfAdjointEigenSolver<CMat> eig(r, Eigen::EigenvaluesOnly);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
        int rank = 0;
        for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
            if (eig.eigenvalues()[i] > 1e-9 * eig.eigenvalues().maxCoeff())
                ++rank;
        CHECK(rank <= 4);
    }
}

TEST_CASE("nmse definition", "[estimator]") {
    RngStream rng = substream(46, {0});
    const CMat r = reconstruct_autocorrelation(random_model(5, 2, rng));
    CHECK(nmse(r, r) == 0.0);
    CHECK(std::abs(nmse(CMat::Zero(5, 5), r) - 1.0) < 1e-15);
    CHECK(std::abs(nmse(2.0 * r, r) - 1.0) < 1e-15);
    CHECK_THROWS_AS(nmse(r, CMat::Zero(5, 5)), std::invalid_argument);
    CHECK_THROWS_AS(nmse(CMat::Zero(4, 4), r), std::invalid_argument);
}

TEST_CASE("invariances of the factorized model", "[estimator]") {
    RngStream rng = substream(47, {0});
    const EstimatorModel m = random_model(7, 3, rng);
    const CMat r = reconstruct_autocorrelation(m);
    const ReflectionVector v = ReflectionVector::random(6, 2, rng);
    const double p0 = forward_power(m, v.extended);

    SECTION("global phase on any column changes nothing") {
        for (double phi : {0.3, 1.7, 4.4}) {
            EstimatorModel rotated = m;
            rotated.weights.col(1) *= std::polar(1.0, phi);
            CHECK(std::abs(forward_power(rotated, v.extended) - p0) <= 1e-12 * p0);
            CHECK((reconstruct_autocorrelation(rotated) - r).cwiseAbs().maxCoeff() <=
                  1e-12 * r.cwiseAbs().maxCoeff());
        }
    }
    SECTION("permuting subnetworks changes nothing") {
        EstimatorModel swapped = m;
        swapped.weights.col(0).swap(swapped.weights.col(2));
        CHECK(forward_power(swapped, v.extended) == p0);
        CHECK((reconstruct_autocorrelation(swapped) - r).cwiseAbs().maxCoeff() <=
              1e-14 * r.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("probes determine the off-diagonals and trace", "[estimator]") {
    // least-squares oracle: with unit-modulus probes the measurement map is
    // linear in {trace, Re/Im of upper off-diagonals}; at L >> params it
    // recovers them exactly from noiseless data
    const int n = 16, dim = n + 1, l_count = 2000;
    RngStream rng = substream(48, {0});
    const EstimatorModel truth = random_model(dim, 3, rng);
    const CMat r = reconstruct_autocorrelation(truth);

    const int n_off = dim * (dim - 1) / 2;
    const int n_params = 1 + 2 * n_off;
    RMat design(l_count, n_params);
    RVec rhs(l_count);
    for (int l = 0; l < l_count; ++l) {
        const ReflectionVector v = ReflectionVector::random(n, 2, rng);
        rhs[l] = expected_power(r, v.extended, 0.0);
        design(l, 0) = 1.0; // trace coefficient (|v_i|^2 = 1)
        int col = 1;
        for (int a = 0; a < dim; ++a)
            for (int b = a + 1; b < dim; ++b) {
                const cdouble s = std::conj(v.extended[a]) * v.extended[b];
                design(l, col) = 2.0 * s.real();
                design(l, col + n_off) = -2.0 * s.imag();
                ++col;
            }
    }
    const RVec sol = design.colPivHouseholderQr().solve(rhs);

    CHECK(std::abs(sol[0] - r.trace().real()) <= 1e-8 * std::abs(r.trace().real()));
    int col = 1;
    double worst = 0.0;
    for (int a = 0; a < dim; ++a)
        for (int b = a + 1; b < dim; ++b) {
            worst = std::max(worst, std::abs(sol[col] - r(a, b).real()));
            worst = std::max(worst, std::abs(sol[col + n_off] - r(a, b).imag()));
            ++col;
        }
    CHECK(worst <= 1e-8 * r.cwiseAbs().maxCoeff());
}

TEST_CASE("training recovers a known low-rank autocorrelation", "[estimator]") {
    SystemConfig cfg = testcfg::rank3();
    cfg.noise_power = 0.0;
    RngStream rng = substream(49, {0});
    const ChannelRealization real = generate_realization(cfg, rng);
    const MeasurementDataset ds = build_dataset(real, cfg, 2000, 0.9, rng);

    TrainingHyper hyper;
    hyper.epochs = 500;
    hyper.step_size = 2e-3;

    SECTION("default variant reaches the recovery threshold") {
        RngStream trng = substream(50, {0});
        const EstimatorModel model = train(ds, cfg.max_taps(), hyper, trng);
        CHECK(nmse(reconstruct_autocorrelation(model), real.autocorr) < 1e-2);
    }
    SECTION("adaptive-moment variant reaches it too") {
        TrainingHyper adam = hyper;
        adam.variant = SgdVariant::adam;
        RngStream trng = substream(51, {0});
        const EstimatorModel model = train(ds, cfg.max_taps(), adam, trng);
        CHECK(nmse(reconstruct_autocorrelation(model), real.autocorr) < 1e-2);
    }
    SECTION("training is deterministic given the stream") {
        RngStream a = substream(52, {0});
        RngStream b = substream(52, {0});
        TrainingHyper quick = hyper;
        quick.epochs = 30;
        const EstimatorModel m1 = train(ds, 3, quick, a);
        const EstimatorModel m2 = train(ds, 3, quick, b);
        CHECK(m1.weights == m2.weights);
    }
}

TEST_CASE("rank-one fits wideband channels worse", "[estimator]") {
    SystemConfig cfg = testcfg::wideband16(); // K = 6
    cfg.noise_power = 0.0;
    RngStream rng = substream(53, {0});
    const ChannelRealization real = generate_realization(cfg, rng);
    const MeasurementDataset ds = build_dataset(real, cfg, 2000, 0.9, rng);

    TrainingHyper hyper;
    hyper.epochs = 400;
    hyper.step_size = 2e-3;
    RngStream t1 = substream(54, {0});
    RngStream t2 = substream(54, {0});
    const double full = nmse(
        reconstruct_autocorrelation(train(ds, cfg.max_taps(), hyper, t1)), real.autocorr);
    const double rank_one =
        nmse(reconstruct_autocorrelation(train(ds, 1, hyper, t2)), real.autocorr);
    CHECK(full < 1e-2);
    CHECK(rank_one > full);
    CHECK(rank_one > 0.05); // a rank-one factor cannot explain a rank-6 Gram matrix
}

TEST_CASE("full-batch loss decreases monotonically on noiseless data", "[estimator]") {
    SystemConfig cfg = testcfg::tiny();
    cfg.noise_power = 0.0;
    RngStream rng = substream(55, {0});
    const ChannelRealization real = generate_realization(cfg, rng);
    const MeasurementDataset ds = build_dataset(real, cfg, 200, 0.9, rng);

    TrainingHyper hyper;
    hyper.variant = SgdVariant::sgd;
    hyper.momentum = 0.0; // plain gradient descent
    hyper.step_size = 1e-3;
    hyper.batch_size = 0; // full batch
    hyper.epochs = 120;
    hyper.early_stop_patience = 200;

    TrainingTrace trace;
    RngStream trng = substream(56, {0});
    train(ds, cfg.max_taps(), hyper, trng, &trace);
    REQUIRE(trace.train_loss.size() >= 50);
    for (std::size_t e = 0; e + 5 < trace.train_loss.size(); ++e)
        CHECK(trace.train_loss[e + 5] <= trace.train_loss[e] * (1.0 + 1e-12));
}

TEST_CASE("training input validation", "[estimator]") {
    SystemConfig cfg = testcfg::tiny();
    RngStream rng = substream(57, {0});
    const ChannelRealization real = generate_realization(cfg, rng);
    const MeasurementDataset ds = build_dataset(real, cfg, 20, 0.8, rng);
    TrainingHyper hyper;
    RngStream trng = substream(58, {0});
    CHECK_THROWS_AS(train(ds, 0, hyper, trng), std::invalid_argument);

    MeasurementDataset one;
    one.entries.resize(1);
    one.entries[0].reflection = ReflectionVector::random(4, 2, trng);
    one.entries[0].rsrp = 1.0;
    one.train_count = 1;
    CHECK_THROWS_AS(train(one, 1, hyper, trng), std::invalid_argument);

    TrainingHyper bad = hyper;
    bad.step_size = 0.0;
    CHECK_THROWS_AS(train(ds, 1, bad, trng), std::invalid_argument);

    // a divergent step size must raise the dedicated error
    TrainingHyper wild = hyper;
    wild.variant = SgdVariant::sgd;
    wild.momentum = 0.0;
    wild.step_size = 1e9;
    wild.epochs = 50;
    CHECK_THROWS_AS(train(ds, 2, wild, trng), TrainingDivergedError);
}

TEST_CASE("noise floor can be estimated from the measurements", "[estimator]") {
    SystemConfig cfg = testcfg::rank3();
    RngStream rng = substream(59, {0});
    const ChannelRealization real = generate_realization(cfg, rng);
    // noise floor at one tenth of the typical received power
    ReflectionVector probe = ReflectionVector::random(cfg.n_elements, cfg.phase_bits, rng);
    cfg.noise_power = 0.1 * expected_power(real.autocorr, probe.extended, 0.0);
    const MeasurementDataset ds = build_dataset(real, cfg, 1500, 0.9, rng);

    TrainingHyper hyper;
    hyper.estimate_noise_floor = true;
    hyper.epochs = 300;
    hyper.step_size = 2e-3;
    RngStream trng = substream(60, {0});
    const EstimatorModel model = train(ds, cfg.max_taps(), hyper, trng);
    // the estimated floor is crude, so only expect the right ballpark
    CHECK(nmse(reconstruct_autocorrelation(model), real.autocorr) < 0.5);
}

TEST_CASE("model JSON round trip is lossless", "[estimator]") {
    RngStream rng = substream(61, {0});
    const EstimatorModel m = random_model(9, 4, rng, 0.37);
    const std::string path =
        (std::filesystem::temp_directory_path() / "irswb_model_test.json").string();
    save_model_json(m, path);
    const EstimatorModel back = load_model_json(path);
    std::filesystem::remove(path);
    REQUIRE(back.k_rank == m.k_rank);
    CHECK(back.weights == m.weights);
}
