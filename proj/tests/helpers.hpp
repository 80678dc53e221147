// Shared fixtures for the test suite: random dataset generation, finite
// difference oracles, and a tiny process runner for CLI round trips.
#pragma once

#include <array>
#include <cstdio>
#include <memory>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <utility>
#include <vector>

#include <survmpl/survmpl.hpp>

namespace testutil {

// Random dataset with all four censoring kinds and p uniform covariates.
// Event times come from a unit-rate exponential scaled by the linear
// predictor, so the data are model-coherent (useful for bootstrap checks).
inline survmpl::Dataset random_dataset(survmpl::Rng& rng, int n, int p,
                                       const Eigen::VectorXd& beta = {},
                                       double event_frac = 0.4) {
    using namespace survmpl;
    std::vector<Observation> obs;
    obs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Observation o;
        o.covariates.resize(p);
        for (int j = 0; j < p; ++j) o.covariates[j] = rng.uniform();
        const double lin = beta.size() ? o.covariates.dot(beta) : 0.0;
        const double y = -std::log(rng.uniform()) / std::exp(lin);
        const double kind_u = rng.uniform();
        const double wlo = 0.6 * rng.uniform();
        const double whi = wlo + 0.8 * rng.uniform();
        if (kind_u < event_frac) {
            o.t_left = o.t_right = y;
        } else if (y < wlo) {
            o.t_left = 0.0;
            o.t_right = wlo;
        } else if (y > whi) {
            o.t_left = whi;
            o.t_right = std::numeric_limits<double>::infinity();
        } else {
            o.t_left = wlo;
            o.t_right = whi;
        }
        o.kind = classify_censoring(o.t_left, o.t_right);
        obs.push_back(std::move(o));
    }
    // guarantee identifiability: force the first row to an event
    if (obs[0].kind == CensorKind::Right) {
        obs[0].t_right = obs[0].t_left + 1.0;
        obs[0].t_left = obs[0].t_right;
        obs[0].kind = CensorKind::Event;
    }
    // a left-censored window ending at the smallest endpoint would carry zero
    // mass under bases supported on [min endpoint, max]; make sure the
    // support starts strictly below every left window
    double minp = std::numeric_limits<double>::infinity();
    for (const auto& o : obs)
        for (double e : {o.t_left, o.t_right})
            if (e > 0.0 && std::isfinite(e)) minp = std::min(minp, e);
    bool left_at_min = false;
    for (const auto& o : obs)
        if (o.kind == CensorKind::Left && o.t_right == minp) left_at_min = true;
    if (left_at_min) {
        obs[0].t_left = obs[0].t_right = 0.5 * minp;
        obs[0].kind = CensorKind::Event;
    }
    return Dataset(std::move(obs));
}

// random feasible state with strictly interior theta
inline survmpl::ModelState random_state(survmpl::Rng& rng, Eigen::Index m, Eigen::Index p,
                                        double lambda) {
    survmpl::ModelState st;
    st.lambda = lambda;
    st.theta.resize(m);
    for (Eigen::Index u = 0; u < m; ++u) st.theta[u] = 0.2 + 1.5 * rng.uniform();
    st.beta.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) st.beta[j] = 1.2 * (rng.uniform() - 0.5);
    return st;
}

// central finite differences of the penalized objective wrt (theta, beta)
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> fd_score(const survmpl::ModelState& st,
                                                            const survmpl::Workspace& w,
                                                            const Eigen::MatrixXd& R,
                                                            double h = 1e-6) {
    using namespace survmpl;
    const Eigen::Index m = st.theta.size(), p = st.beta.size();
    Eigen::VectorXd gt(m), gb(p);
    ModelState s = st;
    for (Eigen::Index u = 0; u < m; ++u) {
        const double step = h * std::max(1.0, std::abs(st.theta[u]));
        s.theta[u] = st.theta[u] + step;
        const double fp = penalized_objective(s, w, R);
        s.theta[u] = st.theta[u] - step;
        const double fm = penalized_objective(s, w, R);
        s.theta[u] = st.theta[u];
        gt[u] = (fp - fm) / (2.0 * step);
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        const double step = h * std::max(1.0, std::abs(st.beta[j]));
        s.beta[j] = st.beta[j] + step;
        const double fp = penalized_objective(s, w, R);
        s.beta[j] = st.beta[j] - step;
        const double fm = penalized_objective(s, w, R);
        s.beta[j] = st.beta[j];
        gb[j] = (fp - fm) / (2.0 * step);
    }
    return {gt, gb};
}

// central finite differences of the analytic score: FD Hessian in eta =
// (theta, beta) ordering
inline Eigen::MatrixXd fd_hessian(const survmpl::ModelState& st, const survmpl::Workspace& w,
                                  const Eigen::MatrixXd& R, double h = 1e-5) {
    using namespace survmpl;
    const Eigen::Index m = st.theta.size(), p = st.beta.size(), dim = m + p;
    Eigen::MatrixXd H(dim, dim);
    ModelState s = st;
    auto stacked = [&](const ModelState& q) {
        Parts parts;
        penalized_objective(q, w, R, &parts);
        auto [gt, gb] = score(q, w, R, parts);
        Eigen::VectorXd g(dim);
        g << gt, gb;
        return g;
    };
    for (Eigen::Index k = 0; k < dim; ++k) {
        double* slot = k < m ? &s.theta[k] : &s.beta[k - m];
        const double base = *slot;
        const double step = h * std::max(1.0, std::abs(base));
        *slot = base + step;
        const Eigen::VectorXd gp = stacked(s);
        *slot = base - step;
        const Eigen::VectorXd gm = stacked(s);
        *slot = base;
        H.col(k) = (gp - gm) / (2.0 * step);
    }
    return 0.5 * (H + H.transpose());
}

struct CliResult {
    int exit_code = -1;
    std::string out;
};

// run the CLI binary, capture stdout, discard stderr
inline CliResult run_cli(const std::string& args) {
    CliResult res;
    const std::string cmd = std::string(SURVMPL_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return res;
    char buf[4096];
    std::string out;
    std::size_t got;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
    const int status = pclose(pipe);
    res.out = std::move(out);
    res.exit_code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    return res;
}

inline std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = "/tmp/survmpl_test_" + name;
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite(content.data(), 1, content.size(), f);
    std::fclose(f);
    return path;
}

} // namespace testutil
