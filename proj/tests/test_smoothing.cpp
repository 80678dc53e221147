#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include "survmpl/simulator.hpp"

using namespace survmpl;

TEST_CASE("lambda is derived from sigma2, never stored independently", "[smoothing]") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const double s2 = std::exp(20.0 * (rng.uniform() - 0.5));
        const SmoothingState st = SmoothingState::from_sigma2(s2, 3.0, i);
        CHECK(st.lambda == 0.5 / s2); // bitwise: the defining identity
        CHECK(st.lambda_identity_holds());
        CHECK(st.sigma2 == s2);
    }
}

TEST_CASE("sigma2 update matches its closed form", "[smoothing]") {
    const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(10, 10);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(10);
    theta[0] = 2.0; // theta' R theta = 4
    CHECK(sigma2_update(theta, R, 2.0) == Catch::Approx(4.0 / 8.0).epsilon(1e-15));
    CHECK(sigma2_update(theta, R, 0.0) == Catch::Approx(0.4).epsilon(1e-15));

    SECTION("saturated penalty throws") {
        CHECK_THROWS_AS(sigma2_update(theta, R, 10.0), std::runtime_error);
        CHECK_THROWS_AS(sigma2_update(theta, R, 10.0 - 1e-7), std::runtime_error);
    }
    SECTION("zero numerator returns the floor and reports it") {
        bool floored = false;
        const double s2 = sigma2_update(Eigen::VectorXd::Zero(10), R, 2.0, 1e-10, &floored);
        CHECK(s2 == 1e-10);
        CHECK(floored);
    }
}

TEST_CASE("model degrees of freedom have a diagonal closed form", "[smoothing]") {
    const Eigen::Index m = 6, p = 2;
    // G = I, R = I, sigma2 = 1: theta block contributes 1/(1+1) each, beta block 0
    Eigen::MatrixXd G = Eigen::MatrixXd::Identity(m + p, m + p);
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(m, m);
    CHECK(model_df(G, R, 1.0, {}) == Catch::Approx(0.5 * static_cast<double>(m)).epsilon(1e-14));
    // halving sigma2 doubles Q: each coordinate contributes 2/3
    CHECK(model_df(G, R, 0.5, {}) == Catch::Approx(2.0 / 3.0 * static_cast<double>(m)).epsilon(1e-14));
    // active coordinates drop out of the trace
    CHECK(model_df(G, R, 1.0, {0, 3}) ==
          Catch::Approx(0.5 * static_cast<double>(m - 2)).epsilon(1e-14));

    SECTION("zero penalty gives zero df") {
        CHECK(model_df(G, Eigen::MatrixXd::Zero(m, m), 1.0, {}) == 0.0);
    }
    SECTION("dimension and index validation") {
        CHECK_THROWS_AS(model_df(Eigen::MatrixXd::Identity(3, 3), R, 1.0, {}),
                        std::invalid_argument);
        CHECK_THROWS_AS(model_df(G, R, 1.0, {m}), std::invalid_argument); // beta coords can't be active
    }
}

TEST_CASE("automatic smoothing stabilizes quickly with the exact lambda identity", "[smoothing][slow]") {
    const ScenarioConfig cfg = scenario(1, 0.0);
    Rng rng(90210);
    const Dataset d = generate_sample(cfg, 200, rng);

    FitSpec spec;
    const BasisSystem basis = build_basis(spec, d);
    const AutoFitResult ar = auto_fit(basis, d);

    CHECK(ar.stabilized);
    CHECK(ar.state.iteration + 1 <= 20);
    REQUIRE(!ar.trace.empty());
    for (const auto& te : ar.trace) {
        CHECK(te.lambda == 0.5 / te.sigma2); // bitwise at every step
        CHECK(te.nu >= 0.0);
        CHECK(te.nu <= static_cast<double>(basis.m()));
        CHECK(std::isfinite(te.objective));
        CHECK(std::isfinite(te.log_marginal));
    }
    CHECK(ar.state.lambda_identity_holds());
    CHECK(ar.hessian_ll.rows() == basis.m() + 1);

    SECTION("refitting at the selected lambda reproduces the returned fit") {
        FitOptions tight;
        tight.kkt_tol = 1e-9;
        tight.theta_init = ar.fit.state.theta.cwiseMax(1e-6 * ar.fit.state.theta.maxCoeff());
        tight.beta_init = ar.fit.state.beta;
        const Eigen::MatrixXd R = basis.penalty();
        const FitResult refit = fit(basis, d, R, ar.state.lambda, tight);
        CHECK((refit.state.beta - ar.fit.state.beta).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK(refit.objective >= ar.fit.objective - 1e-8 * (1.0 + std::abs(ar.fit.objective)));
    }
}

TEST_CASE("auto smoothing is deterministic", "[smoothing]") {
    const ScenarioConfig cfg = scenario(1, 0.3);
    Rng rng_a(17), rng_b(17);
    const Dataset da = generate_sample(cfg, 80, rng_a);
    const Dataset db = generate_sample(cfg, 80, rng_b);
    FitSpec spec;
    spec.n_interior = 4;
    const BasisSystem ba = build_basis(spec, da);
    const BasisSystem bb = build_basis(spec, db);
    const AutoFitResult ra = auto_fit(ba, da);
    const AutoFitResult rb = auto_fit(bb, db);
    REQUIRE(ra.trace.size() == rb.trace.size());
    CHECK(ra.state.sigma2 == rb.state.sigma2);
    CHECK(ra.state.nu == rb.state.nu);
    CHECK((ra.fit.state.theta - rb.fit.state.theta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((ra.fit.state.beta - rb.fit.state.beta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("approximate marginal likelihood is finite and penalizes saturation", "[smoothing]") {
    Rng rng(33);
    const Dataset d = testutil::random_dataset(rng, 60, 1);
    const auto pool = endpoint_pool(d);
    const BasisSystem basis = BasisSystem::mspline(quantile_knots(pool, 3), 3);
    const Eigen::MatrixXd R = basis.penalty();
    const FitResult fr = fit(basis, d, R, 1.0);
    Workspace w(basis, d);
    Parts parts;
    ModelState ll = fr.state;
    ll.lambda = 0.0;
    const double loglik = penalized_objective(ll, w, R, &parts);
    const Eigen::MatrixXd G = -hessian(ll, w, R, parts);
    const double lm = approx_log_marginal(loglik, fr.state.theta, R, 0.5, G, fr.active_set);
    CHECK(std::isfinite(lm));
}
