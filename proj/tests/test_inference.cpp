#include <gtest/gtest.h>

#include "support.hpp"

#include <msgamlss/inference.hpp>
#include <msgamlss/sim.hpp>
#include <msgamlss/smoothing.hpp>

#include <cmath>
#include <numeric>

using namespace msgamlss;
using namespace testing_support;

namespace {

FittedModel as_fitted(const Instance& in) {
    FittedModel f;
    f.spec = in.spec;
    f.bases = in.bases;
    f.theta = in.theta;
    f.lambda = in.lambda;
    f.reference = covariate_means(in.spec, in.frame);
    f.n_obs = in.frame.size();
    return f;
}

ModelSpec intercept_only(int n_states, Family family = Family::normal(), InitialDistribution init = {}) {
    std::vector<Formula> per(static_cast<std::size_t>(family.num_params()));
    return ModelSpec::shared(n_states, std::move(family), per, Formula{}, std::move(init));
}

TimeSeriesFrame frame_from(std::vector<double> y) {
    TimeSeriesFrame f;
    f.response = std::move(y);
    return f;
}

}  // namespace

TEST(Likelihood, SingleStateIsSumOfLogDensities) {
    Rng rng(1);
    auto in = random_instance(rng, rich_spec(1, Family::skew_normal()), 40);
    const auto q = model_quantities(in.design, as_span(in.theta));
    EXPECT_NEAR(log_likelihood(in.design, as_span(in.theta)), q.log_density.sum(), 1e-10);
}

TEST(Likelihood, MatchesExhaustivePathSum) {
    Rng rng(2);
    const std::vector<InitialDistribution> inits{
        {}, {InitialKind::Fixed, {0.2, 0.8}}, {InitialKind::Stationary, {}}};
    for (int trial = 0; trial < 12; ++trial) {
        const Family fam = trial % 2 ? Family::skew_normal() : Family::normal();
        auto in = random_instance(rng, rich_spec(2, fam, inits[static_cast<std::size_t>(trial % 3)]), 6);
        const double ll = log_likelihood(in.design, as_span(in.theta));
        const double oracle = brute_force_log_likelihood(model_quantities(in.design, as_span(in.theta)));
        EXPECT_NEAR(ll, oracle, 1e-10 * std::abs(oracle)) << "trial " << trial;
    }
    for (int trial = 0; trial < 4; ++trial) {
        auto in = random_instance(rng, rich_spec(3, Family::normal()), 5);
        const double ll = log_likelihood(in.design, as_span(in.theta));
        const double oracle = brute_force_log_likelihood(model_quantities(in.design, as_span(in.theta)));
        EXPECT_NEAR(ll, oracle, 1e-10 * std::abs(oracle));
    }
}

TEST(Likelihood, ScaledAndNaiveForwardAgree) {
    Rng rng(3);
    auto in = random_instance(rng, rich_spec(3, Family::normal()), 200);
    const auto q = model_quantities(in.design, as_span(in.theta));
    Eigen::RowVectorXd alpha = q.delta.array() * q.log_density.row(0).array().exp();
    double log_scale = 0.0;  // keep the naive product in range without per-step normalization
    for (Eigen::Index t = 1; t < 200; ++t) {
        alpha = (alpha * q.gammas[static_cast<std::size_t>(t - 1)]).array() * q.log_density.row(t).array().exp();
        if (t % 50 == 0) {
            log_scale += std::log(alpha.sum());
            alpha /= alpha.sum();
        }
    }
    const double naive = log_scale + std::log(alpha.sum());
    EXPECT_NEAR(log_likelihood(in.design, as_span(in.theta)), naive, 1e-8);

    const auto filt = forward_filter(q);
    EXPECT_NEAR(filt.log_likelihood, naive, 1e-8);
    for (Eigen::Index t = 0; t < 200; ++t) {
        EXPECT_NEAR(filt.phi.row(t).sum(), 1.0, 1e-12);
        EXPECT_NEAR(filt.predicted.row(t).sum(), 1.0, 1e-12);
    }
}

TEST(Likelihood, InvariantUnderStateRelabeling) {
    Rng rng(4);
    for (int n : {2, 3}) {
        InitialDistribution init{InitialKind::Fixed, n == 2 ? std::vector<double>{0.3, 0.7} : std::vector<double>{0.2, 0.3, 0.5}};
        auto in = random_instance(rng, rich_spec(n, Family::skew_normal(), init), 30);
        const auto fitted = as_fitted(in);
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        std::reverse(perm.begin(), perm.end());
        const auto relabeled = relabel_states(fitted, perm);
        const double a = log_likelihood(fitted.design(in.frame), fitted.coefficients());
        const double b = log_likelihood(relabeled.design(in.frame), relabeled.coefficients());
        EXPECT_NEAR(a, b, 1e-10 * std::abs(a));
        // relabeling back restores the original
        std::vector<int> inverse(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
        const auto back = relabel_states(relabeled, inverse);
        EXPECT_EQ((back.theta - fitted.theta).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Likelihood, CanonicalOrderIsBySigmaIntercept) {
    Rng rng(5);
    auto in = random_instance(rng, rich_spec(3, Family::normal()), 20);
    const auto layout = in.design.layout;
    in.theta(layout.state_predictor(0, 1).offset) = 0.5;
    in.theta(layout.state_predictor(1, 1).offset) = -0.5;
    in.theta(layout.state_predictor(2, 1).offset) = 0.0;
    const auto c = canonicalize_states(as_fitted(in));
    const auto cl = c.layout();
    EXPECT_EQ(c.theta(cl.state_predictor(0, 1).offset), -0.5);
    EXPECT_EQ(c.theta(cl.state_predictor(1, 1).offset), 0.0);
    EXPECT_EQ(c.theta(cl.state_predictor(2, 1).offset), 0.5);
    EXPECT_NEAR(log_likelihood(c.design(in.frame), c.coefficients()), log_likelihood(in.design, as_span(in.theta)), 1e-9);
}

TEST(Likelihood, ZeroDensityEverywhereIsReportedWithTimeIndex) {
    const auto spec = intercept_only(1);
    const auto frame = frame_from({0.0, 0.0, 5.0, 0.0});
    const BasisSet bases = BasisSet::build(spec, frame);
    const Design d = make_design(spec, bases, frame);
    Eigen::VectorXd theta(2);
    theta << 0.0, -700.0;  // sigma underflows to ~1e-304: y = 5 is infinitely unlikely
    try {
        log_likelihood(d, as_span(theta));
        FAIL() << "expected LikelihoodError";
    } catch (const LikelihoodError& e) {
        EXPECT_EQ(e.time_index(), 2u);
    }
}

TEST(PenalizedObjective, PenaltyExamples) {
    Rng rng(6);
    auto in = random_instance(rng, rich_spec(2, Family::normal()), 30);
    const std::vector<double> zero(in.lambda.size(), 0.0);
    EXPECT_EQ(penalized_nll(in.design, as_span(in.theta), zero), -log_likelihood(in.design, as_span(in.theta)));

    // monotone in each lambda at fixed theta
    for (std::size_t p = 0; p < in.lambda.size(); ++p) {
        auto bigger = in.lambda;
        bigger[p] *= 3.0;
        EXPECT_GE(penalized_nll(in.design, as_span(in.theta), bigger), penalized_nll(in.design, as_span(in.theta), in.lambda));
    }

    EXPECT_THROW(penalized_nll(in.design, as_span(in.theta), std::vector<double>(in.lambda.size(), -1.0)), ConfigError);
    EXPECT_THROW(penalized_nll(in.design, as_span(in.theta), std::vector<double>{1.0}), ConfigError);
    EXPECT_THROW(penalized_nll(in.design, std::span<const double>(in.theta.data(), 3), in.lambda), ConfigError);
}

TEST(PenalizedObjective, HandComputedPenalty) {
    // one smooth with M = 3, order 2: S = D'D with D = (1, -2, 1)
    TimeSeriesFrame frame = frame_from({0.1, -0.3, 0.2, 0.4, -0.1});
    frame.add_column("x", {0.0, 0.3, 0.5, 0.8, 1.0});
    Formula fx;
    fx.smooths.push_back({"x", 3, 1, 2});
    const auto spec = ModelSpec::shared(1, Family::normal(), {fx, Formula{}}, Formula{});
    const BasisSet bases = BasisSet::build(spec, frame);
    const Design d = make_design(spec, bases, frame);
    ASSERT_EQ(d.layout.penalties.size(), 1u);
    const Eigen::MatrixXd& z = *bases.bundles[0]->centering;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d.layout.size);
    theta.segment(d.layout.penalties[0].offset, 2) = Eigen::Vector2d(0.8, -1.3);
    const Eigen::Vector3d b = z * theta.segment(d.layout.penalties[0].offset, 2);
    const double second = b(0) - 2 * b(1) + b(2);
    const std::vector<double> lambda{2.0};
    const double pen = penalized_nll(d, as_span(theta), lambda) - penalized_nll(d, as_span(theta), std::vector<double>{0.0});
    EXPECT_NEAR(pen, 0.5 * 2.0 * second * second, 1e-12);
}

TEST(PenalizedObjective, NullSpaceHasNoPenalty) {
    Rng rng(7);
    auto in = random_instance(rng, rich_spec(2, Family::normal()), 30);
    // a linear sequence in raw coordinates, projected to the centered space
    const auto& block = in.design.layout.penalties[0];
    const auto& bundle = *in.bases.bundles[static_cast<std::size_t>(block.basis)];
    Eigen::VectorXd lin(bundle.spec.num_basis);
    for (int j = 0; j < lin.size(); ++j) lin(j) = 0.7 * j;
    // add the constant that moves it into the range of Z (complement is one-dimensional)
    const Eigen::MatrixXd& z = *bundle.centering;
    const Eigen::MatrixXd off = Eigen::MatrixXd::Identity(lin.size(), lin.size()) - z * z.transpose();
    const Eigen::VectorXd u = off * lin, v = off * Eigen::VectorXd::Ones(lin.size());
    lin.array() -= u.dot(v) / v.dot(v);
    ASSERT_LE((lin - z * (z.transpose() * lin)).norm(), 1e-10);
    Eigen::VectorXd theta = in.theta;
    for (const auto& p : in.design.layout.penalties) theta.segment(p.offset, p.size).setZero();
    theta.segment(block.offset, block.size) = bundle.centering->transpose() * lin;
    const std::vector<double> huge(in.lambda.size(), 1e6);
    const std::vector<double> none(in.lambda.size(), 0.0);
    EXPECT_NEAR(penalized_nll(in.design, as_span(theta), huge), penalized_nll(in.design, as_span(theta), none), 1e-6);
}

TEST(Gradient, MatchesFiniteDifferences) {
    Rng rng(8);
    for (int trial = 0; trial < 6; ++trial) {
        const int n = 2 + trial % 2;
        const Family fam = trial % 3 == 0 ? Family::skew_normal() : Family::normal();
        const InitialDistribution init = trial % 2 ? InitialDistribution{InitialKind::Stationary, {}} : InitialDistribution{};
        auto in = random_instance(rng, rich_spec(n, fam, init), 50);
        const Eigen::VectorXd g = gradient(in.design, as_span(in.theta), in.lambda);
        const Eigen::VectorXd fd = fd_gradient(
            [&](const Eigen::VectorXd& th) { return penalized_nll(in.design, as_span(th), in.lambda); }, in.theta);
        EXPECT_LE(relative_inf_error(g, fd), 1e-5) << "trial " << trial;
    }
}

TEST(Gradient, PenaltyContribution) {
    Rng rng(9);
    auto in = random_instance(rng, rich_spec(2, Family::normal()), 20);
    const std::vector<double> zero(in.lambda.size(), 0.0);
    const Eigen::VectorXd diff = gradient(in.design, as_span(in.theta), in.lambda) - gradient(in.design, as_span(in.theta), zero);
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(in.theta.size());
    for (std::size_t p = 0; p < in.lambda.size(); ++p) {
        const auto& block = in.design.layout.penalties[p];
        expected.segment(block.offset, block.size) =
            in.lambda[p] * in.design.penalty_matrices[p] * in.theta.segment(block.offset, block.size);
    }
    EXPECT_LE((diff - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gradient, SingleStateNormalClosedForm) {
    const std::vector<double> y{1.2, -0.4, 0.9, 2.2, 0.1};
    const auto spec = intercept_only(1);
    const auto frame = frame_from(y);
    const Design d = make_design(spec, BasisSet::build(spec, frame), frame);
    Eigen::VectorXd theta(2);
    theta << 0.3, std::log(1.4);
    const Eigen::VectorXd g = gradient(d, as_span(theta), std::vector<double>{});
    const double mu = 0.3, s = 1.4;
    double g_mu = 0.0, g_ls = 0.0;
    for (double v : y) {
        g_mu -= (v - mu) / (s * s);
        g_ls -= (v - mu) * (v - mu) / (s * s) - 1.0;
    }
    EXPECT_NEAR(g(0), g_mu, 1e-12);
    EXPECT_NEAR(g(1), g_ls, 1e-12);
}

TEST(Hessian, MatchesFiniteDifferencesOfGradient) {
    Rng rng(10);
    for (const auto& fam : {Family::normal(), Family::skew_normal()}) {
        auto in = random_instance(rng, rich_spec(2, fam, {InitialKind::Stationary, {}}, 5), 100);
        const Eigen::MatrixXd h = exact_hessian(in.design, as_span(in.theta), in.lambda);
        EXPECT_LE((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-8);
        Eigen::MatrixXd fd(h.rows(), h.cols());
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            const double step = 1e-5 * (1.0 + std::abs(in.theta(j)));
            Eigen::VectorXd a = in.theta, b = in.theta;
            a(j) += step;
            b(j) -= step;
            fd.col(j) = (gradient(in.design, as_span(a), in.lambda) - gradient(in.design, as_span(b), in.lambda)) / (2 * step);
        }
        EXPECT_LE((h - fd).cwiseAbs().maxCoeff() / h.cwiseAbs().maxCoeff(), 1e-4) << fam.name();
    }
}

TEST(Hessian, SingleStateNormalInformation) {
    Rng rng(11);
    std::vector<double> y(400);
    for (auto& v : y) v = 2.0 + 0.5 * rng.normal();
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 400.0;
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / 400.0);
    const auto spec = intercept_only(1);
    const auto frame = frame_from(y);
    const Design d = make_design(spec, BasisSet::build(spec, frame), frame);
    Eigen::VectorXd theta(2);
    theta << mean, std::log(sd);
    const Eigen::MatrixXd h = exact_hessian(d, as_span(theta), std::vector<double>{});
    EXPECT_NEAR(h(0, 0), 400.0 / (sd * sd), 1e-4 * 400.0 / (sd * sd));
    EXPECT_NEAR(h(1, 1), 800.0, 1e-4 * 800.0);
    EXPECT_NEAR(h(0, 1), 0.0, 1e-8);
}

TEST(Hessian, LambdaShiftAddsScaledPenaltyDiagonal) {
    Rng rng(12);
    auto in = random_instance(rng, rich_spec(2, Family::normal()), 40);
    const Eigen::MatrixXd h0 = exact_hessian(in.design, as_span(in.theta), in.lambda);
    auto shifted = in.lambda;
    shifted[1] += 2.5;
    const Eigen::MatrixXd h1 = exact_hessian(in.design, as_span(in.theta), shifted);
    const auto& block = in.design.layout.penalties[1];
    const Eigen::MatrixXd diff = h1 - h0;
    for (int a = 0; a < block.size; ++a)
        EXPECT_NEAR(diff(block.offset + a, block.offset + a), 2.5 * in.design.penalty_matrices[1](a, a), 1e-9);
    Eigen::MatrixXd outside = diff;
    outside.block(block.offset, block.offset, block.size, block.size).setZero();
    EXPECT_LE(outside.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Viterbi, SingleObservation) {
    const auto spec = intercept_only(2, Family::normal(), {InitialKind::Fixed, {0.9, 0.1}});
    const auto frame = frame_from({0.4});
    const Design d = make_design(spec, BasisSet::build(spec, frame), frame);
    Eigen::VectorXd theta(6);
    theta << 0.0, 0.0, 1.0, 0.0, -2.0, -2.0;
    const auto q = model_quantities(d, as_span(theta));
    const int expected = std::log(0.9) + q.log_density(0, 0) > std::log(0.1) + q.log_density(0, 1) ? 0 : 1;
    EXPECT_EQ(viterbi(q), std::vector<int>{expected});
}

TEST(Viterbi, MatchesExhaustiveSearch) {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        auto in = random_instance(rng, rich_spec(2, Family::normal()), 8, 0.5);
        const auto q = model_quantities(in.design, as_span(in.theta));
        EXPECT_EQ(viterbi(q), brute_force_viterbi(q)) << "trial " << trial;
    }
}

TEST(Viterbi, BeatsRandomPaths) {
    Rng rng(14);
    auto in = random_instance(rng, rich_spec(3, Family::normal()), 25, 0.5);
    const auto q = model_quantities(in.design, as_span(in.theta));
    const auto best = viterbi(q);
    const double best_lp = path_log_probability(q, best);
    for (int r = 0; r < 1000; ++r) {
        std::vector<int> path(best.size());
        for (auto& s : path) s = static_cast<int>(rng.uniform() * 3) % 3;
        EXPECT_GE(best_lp, path_log_probability(q, path));
    }
}

TEST(Viterbi, RecoversWellSeparatedStates) {
    PaperDgpOptions opt;
    opt.length = 1000;
    opt.seed = 5;
    DGPSpec dgp = builtin_paper_dgp(opt);
    dgp.state_params = [](int state, const CovariateRow&) { return ParamTuple{state == 0 ? 0.0 : 10.0, 1.0, 0.0, 0.0}; };
    const auto sim = simulate(dgp);
    const auto spec = intercept_only(2, Family::normal(), {InitialKind::Fixed, {0.5, 0.5}});
    FittedModel f;
    f.spec = spec;
    f.bases = BasisSet::build(spec, sim.frame);
    f.theta.resize(6);
    f.theta << 0.0, 0.0, 10.0, 0.0, -2.0, -2.0;
    const auto path = viterbi(f, sim.frame);
    int agree = 0;
    for (std::size_t t = 0; t < path.size(); ++t) agree += path[t] == sim.states[t];
    EXPECT_GE(agree, 990);
}

TEST(PseudoResiduals, SingleStateNormalIsStandardized) {
    Rng rng(15);
    std::vector<double> y(50);
    for (auto& v : y) v = rng.normal();
    y[7] = 40.0;  // far tail: the PIT value is clamped
    const auto spec = intercept_only(1);
    const auto frame = frame_from(y);
    const Design d = make_design(spec, BasisSet::build(spec, frame), frame);
    Eigen::VectorXd theta(2);
    theta << 0.2, std::log(1.3);
    const auto res = pseudo_residuals(d, as_span(theta));
    ASSERT_EQ(res.residuals.size(), 50u);
    EXPECT_EQ(res.clamped, 1);
    for (std::size_t t = 0; t < y.size(); ++t) {
        if (t == 7) {
            EXPECT_NEAR(res.pit[t], 1.0 - kPitClamp, 1e-15);
            continue;
        }
        EXPECT_NEAR(res.residuals[t], (y[t] - 0.2) / 1.3, 1e-9);
    }
}

TEST(PseudoResiduals, MixtureWeightsComeFromPredictedStates) {
    Rng rng(16);
    auto in = random_instance(rng, rich_spec(2, Family::normal()), 30);
    const auto res = pseudo_residuals(in.design, as_span(in.theta));
    const auto q = model_quantities(in.design, as_span(in.theta));
    // oracle: u_t = P(Y_t <= y_t | y_1..t-1) = L(y_1..t-1, Y_t <= y_t) / L(y_1..t-1)
    Eigen::RowVectorXd alpha = q.delta;
    for (Eigen::Index t = 0; t < 30; ++t) {
        if (t > 0) alpha = alpha * q.gammas[static_cast<std::size_t>(t - 1)];
        double num = 0.0;
        for (int i = 0; i < 2; ++i) num += alpha(i) * cdf(Family::normal(), in.frame.response[static_cast<std::size_t>(t)], q.params[static_cast<std::size_t>(t * 2 + i)]);
        EXPECT_NEAR(res.pit[static_cast<std::size_t>(t)], num / alpha.sum(), 1e-12);
        alpha = alpha.array() * q.log_density.row(t).array().exp();
    }
}

TEST(ParameterCurves, Examples) {
    Rng rng(17);
    auto in = random_instance(rng, rich_spec(2, Family::normal()), 60);
    // make state 0 intercept-only
    for (int k = 0; k < 2; ++k) {
        const auto& p = in.design.layout.state_predictor(0, k);
        in.theta.segment(p.offset + 1, p.size - 1).setZero();
    }
    const auto f = as_fitted(in);
    std::vector<double> grid;
    for (int g = 0; g <= 10; ++g) grid.push_back(-0.9 + 0.18 * g);
    const std::vector<double> probs{0.1, 0.5, 0.9};
    const auto curves = predict_parameters(f, "x", grid, probs);
    const double mu0 = in.theta(in.design.layout.state_predictor(0, 0).offset);
    const double s0 = std::exp(in.theta(in.design.layout.state_predictor(0, 1).offset));
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto gi = static_cast<Eigen::Index>(g);
        EXPECT_NEAR(curves.values[0](gi, 0), mu0, 1e-14);
        EXPECT_NEAR(curves.values[0](gi, 1), s0, 1e-14);
        for (int i = 0; i < 2; ++i) {
            EXPECT_NEAR(curves.quantiles[static_cast<std::size_t>(i)](gi, 1), curves.values[static_cast<std::size_t>(i)](gi, 0), 1e-10);
            EXPECT_LT(curves.quantiles[static_cast<std::size_t>(i)](gi, 0), curves.quantiles[static_cast<std::size_t>(i)](gi, 1));
            EXPECT_LT(curves.quantiles[static_cast<std::size_t>(i)](gi, 1), curves.quantiles[static_cast<std::size_t>(i)](gi, 2));
        }
    }
    const auto link_scale = predict_parameters(f, "x", grid, {}, CurveScale::Predictor);
    EXPECT_NEAR(link_scale.values[0](0, 1), std::log(s0), 1e-14);
    const std::vector<double> outside{5.0};
    EXPECT_THROW(predict_parameters(f, "x", outside), DomainError);
}
