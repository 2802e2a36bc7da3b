#include <gtest/gtest.h>

#include <msgamlss/markov.hpp>
#include <msgamlss/rng.hpp>
#include <msgamlss/sim.hpp>

#include <cmath>

using namespace msgamlss;

namespace {

Eigen::MatrixXd random_tpm(Rng& rng, int n) {
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) g(i, j) = rng.uniform(0.01, 1.0);
        g.row(i) /= g.row(i).sum();
    }
    return g;
}

// eta_{1,2} = -1.8 + 1.5 z - 2 z^2, eta_{2,1} = -2.1 - 2 z - z^2 via linear terms in (z, z2)
TransitionModel quadratic_model() {
    TransitionModel m;
    m.n_states = 2;
    Predictor p12{-1.8, {"z", "z2"}, {1.5, -2.0}, {}};
    Predictor p21{-2.1, {"z", "z2"}, {-2.0, -1.0}, {}};
    m.pairs = {p12, p21};
    return m;
}

CovariateRow zrow(double z) { return {{"z", z}, {"z2", z * z}}; }

}  // namespace

TEST(Markov, PairIndexRoundTrip) {
    for (int n = 2; n <= 5; ++n) {
        int expected = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                EXPECT_EQ(pair_index(n, i, j), expected);
                EXPECT_EQ(pair_states(n, expected), std::make_pair(i, j));
                ++expected;
            }
    }
}

TEST(Markov, EtaMatrix) {
    TransitionModel zero;
    zero.n_states = 3;
    zero.pairs.assign(6, Predictor{});
    EXPECT_EQ(eta_matrix(zero, {}).cwiseAbs().maxCoeff(), 0.0);

    const auto m = quadratic_model();
    const Eigen::MatrixXd e0 = eta_matrix(m, zrow(0.0));
    EXPECT_EQ(e0(0, 0), 0.0);
    EXPECT_EQ(e0(1, 1), 0.0);
    EXPECT_DOUBLE_EQ(e0(0, 1), -1.8);
    EXPECT_DOUBLE_EQ(e0(1, 0), -2.1);
    EXPECT_NEAR(eta_matrix(m, zrow(1.0))(0, 1), -2.3, 1e-14);
    EXPECT_NEAR(eta_matrix(m, zrow(-1.0))(1, 0), -1.1, 1e-14);
    EXPECT_NEAR(paper_dgp::eta(0, 1, 1.0), -2.3, 1e-14);
    EXPECT_THROW(eta_matrix(m, {{"z", 0.0}}), ConfigError);
}

TEST(Markov, SoftmaxExamples) {
    const Eigen::MatrixXd u = tpm_from_eta(Eigen::MatrixXd::Zero(3, 3));
    EXPECT_LE((u.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-15);

    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(2, 2);
    e(0, 1) = -1.8;
    EXPECT_NEAR(tpm_from_eta(e)(0, 1), 1.0 / (1.0 + std::exp(1.8)), 1e-15);
    EXPECT_NEAR(tpm_from_eta(e)(0, 1), 0.14185, 1e-5);

    e(0, 1) = -50.0;
    EXPECT_GE(tpm_from_eta(e)(0, 0), 1.0 - 1e-20);
    e(0, 1) = 1e6;  // clipped
    EXPECT_TRUE(tpm_from_eta(e).allFinite());
    EXPECT_NEAR(tpm_from_eta(e)(0, 0), 1.0 / (1.0 + std::exp(50.0)), 1e-30);
}

TEST(Markov, TpmRowsSumToOne) {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + trial % 4;
        Eigen::MatrixXd e(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) e(i, j) = i == j ? 0.0 : 10 * rng.normal();
        const Eigen::MatrixXd g = tpm_from_eta(e);
        EXPECT_GE(g.minCoeff(), 0.0);
        EXPECT_LE(g.maxCoeff(), 1.0);
        for (int i = 0; i < n; ++i) EXPECT_NEAR(g.row(i).sum(), 1.0, 1e-12);
    }
}

TEST(Markov, SoftmaxShiftInvariance) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::MatrixXd e(3, 3);
        for (int i = 0; i < 9; ++i) e(i) = 3 * rng.normal();
        Eigen::MatrixXd shifted = e;
        for (int i = 0; i < 3; ++i) shifted.row(i).array() += 5 * rng.normal();
        EXPECT_LE((softmax_rows(e) - softmax_rows(shifted)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Markov, TwoStateMonotonicity) {
    double prev = -1.0;
    for (double eta = -10; eta <= 10; eta += 0.1) {
        Eigen::MatrixXd e = Eigen::MatrixXd::Zero(2, 2);
        e(0, 1) = eta;
        const double g = tpm_from_eta(e)(0, 1);
        EXPECT_GT(g, prev);
        prev = g;
    }
}

TEST(Markov, StationaryExamples) {
    Eigen::MatrixXd g(2, 2);
    g << 0.9, 0.1, 0.2, 0.8;
    const Eigen::RowVectorXd d = stationary(g);
    EXPECT_NEAR(d(0), 2.0 / 3.0, 1e-14);
    EXPECT_NEAR(d(1), 1.0 / 3.0, 1e-14);

    Eigen::MatrixXd ds(3, 3);
    ds << 0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2;
    EXPECT_LE((stationary(ds).array() - 1.0 / 3.0).abs().maxCoeff(), 1e-14);

    EXPECT_THROW(stationary(Eigen::MatrixXd::Identity(3, 3)), NumericError);
    EXPECT_EQ(stationary(Eigen::MatrixXd::Ones(1, 1))(0), 1.0);
}

TEST(Markov, StationaryResidualOnRandomTpms) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + trial % 3;
        const Eigen::MatrixXd g = random_tpm(rng, n);
        const Eigen::RowVectorXd d = stationary(g);
        EXPECT_LE((d * g - d).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(d.sum(), 1.0, 1e-14);
        EXPECT_GE(d.minCoeff(), 0.0);
    }
}

TEST(Markov, BuiltinDesignAtZero) {
    const Eigen::MatrixXd g = tpm_from_eta(eta_matrix(quadratic_model(), zrow(0.0)));
    EXPECT_NEAR(g(0, 0), 0.8581, 1e-4);
    EXPECT_NEAR(g(0, 1), 0.1419, 1e-4);
    EXPECT_NEAR(g(1, 0), 0.1091, 1e-4);
    EXPECT_NEAR(g(1, 1), 0.8909, 1e-4);
    const Eigen::RowVectorXd d = stationary(g);
    // two-state closed form
    EXPECT_NEAR(d(0), g(1, 0) / (g(0, 1) + g(1, 0)), 1e-14);
    EXPECT_NEAR(d(0), 0.434739, 1e-6);
    // the commonly quoted (0.4346, 0.5654) comes from the four-decimal matrix
    Eigen::MatrixXd rounded(2, 2);
    rounded << 0.8581, 0.1419, 0.1091, 0.8909;
    EXPECT_NEAR(stationary(rounded)(0), 0.4346, 1e-4);
    EXPECT_NEAR(stationary(rounded)(1), 0.5654, 1e-4);
}

TEST(Markov, StationaryIsLipschitzInEta) {
    Rng rng(4);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::MatrixXd e = Eigen::MatrixXd::Zero(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (i != j) e(i, j) = rng.uniform(-3, 1);
        Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (i != j) eps(i, j) = 1e-6 * rng.normal();
        const double ratio = (stationary(tpm_from_eta(e + eps)) - stationary(tpm_from_eta(e))).norm() / eps.norm();
        worst = std::max(worst, ratio);
    }
    EXPECT_LT(worst, 5.0);
}

TEST(Markov, StationaryCurve) {
    std::vector<double> grid;
    for (int g = 0; g <= 20; ++g) grid.push_back(-1.0 + 0.1 * g);
    TransitionModel only_z;
    only_z.n_states = 2;
    only_z.pairs = {Predictor{-1.8, {"z"}, {1.5}, {}}, Predictor{-2.1, {"z"}, {-2.0}, {}}};
    const Eigen::MatrixXd curve = stationary_curve(only_z, "z", grid);
    for (Eigen::Index g = 0; g < curve.rows(); ++g) {
        EXPECT_NEAR(curve.row(g).sum(), 1.0, 1e-14);
        CovariateRow r{{"z", grid[static_cast<std::size_t>(g)]}};
        EXPECT_LE((curve.row(g) - stationary(tpm_from_eta(eta_matrix(only_z, r)))).cwiseAbs().maxCoeff(), 0.0);
    }

    TransitionModel constant;
    constant.n_states = 3;
    constant.pairs.assign(6, Predictor{-1.0, {}, {}, {}});
    const Eigen::MatrixXd flat = stationary_curve(constant, "z", grid);
    for (Eigen::Index g = 1; g < flat.rows(); ++g) EXPECT_EQ((flat.row(g) - flat.row(0)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Markov, StationaryCurveReportsOffendingCovariate) {
    TransitionModel m;
    m.n_states = 2;
    m.pairs = {Predictor{0.0, {"z"}, {-80.0}, {}}, Predictor{0.0, {"z"}, {-80.0}, {}}};
    const std::vector<double> grid{0.0, 0.1, 1.0};
    try {
        stationary_curve(m, "z", grid);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("z = 1"), std::string::npos) << e.what();
    }
}
