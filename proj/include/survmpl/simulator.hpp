#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "survmpl/data.hpp"
#include "survmpl/inference.hpp"
#include "survmpl/rng.hpp"
#include "survmpl/smoothing.hpp"

namespace survmpl {

// One of three benchmark data-generating processes. Covariates are
// independent scaled uniforms x_j = cov_scale_j * U(0,1); the event time
// solves S(y|x) = u in closed form. Censoring uses an additive random
// window [L, L + W]: exact times are recorded with probability pi_event,
// otherwise the position of y relative to the window decides left / interval
// / right censoring.
struct ScenarioConfig {
    int id = 1;
    Eigen::VectorXd beta_true;
    Eigen::VectorXd cov_scale;
    double gamma_left = 1.0;  // window start scale: L = gamma_left * U
    double gamma_right = 1.0; // window width scale: W = gamma_right * U
    double pi_event = 0.0;    // probability an exact event time is observed

    double h0(double t) const {
        switch (id) {
        case 1: return t;
        case 2: return 3.0 * t * t;
        case 3: {
            const double e2 = std::exp(2.0);
            const double t2 = t * t;
            return 4.0 * e2 * t2 * t / (1.0 + e2 * t2 * t2);
        }
        default: throw std::logic_error("ScenarioConfig: unknown id");
        }
    }
    double H0(double t) const {
        switch (id) {
        case 1: return 0.5 * t * t;
        case 2: return t * t * t;
        case 3: return std::log1p(std::exp(2.0) * t * t * t * t);
        default: throw std::logic_error("ScenarioConfig: unknown id");
        }
    }
    // Inverse-CDF draw: H0(y) = -log(u) * exp(-x'beta).
    double event_time(double u, double xb) const {
        const double s = -std::log(u) * std::exp(-xb);
        switch (id) {
        case 1: return std::sqrt(2.0 * s);
        case 2: return std::cbrt(s);
        case 3: return std::pow(std::exp(-2.0) * std::expm1(s), 0.25);
        default: throw std::logic_error("ScenarioConfig: unknown id");
        }
    }
};

inline ScenarioConfig scenario(int id, double pi_event) {
    if (!(pi_event >= 0.0 && pi_event <= 1.0))
        throw std::invalid_argument("scenario: pi_event must lie in [0, 1]");
    ScenarioConfig c;
    c.id = id;
    c.pi_event = pi_event;
    switch (id) {
    case 1:
        c.beta_true = Eigen::VectorXd::Constant(1, 2.0);
        c.cov_scale = Eigen::VectorXd::Constant(1, 1.0);
        c.gamma_left = 1.0;
        c.gamma_right = 1.0;
        break;
    case 2:
        c.beta_true = (Eigen::VectorXd(3) << 0.75, -0.5, 0.25).finished();
        c.cov_scale = (Eigen::VectorXd(3) << 1.0, 5.0, 7.0).finished();
        c.gamma_left = 0.9;
        c.gamma_right = 1.3;
        break;
    case 3:
        c.beta_true = (Eigen::VectorXd(2) << 0.25, 0.25).finished();
        c.cov_scale = (Eigen::VectorXd(2) << 1.0, 7.0).finished();
        c.gamma_left = 0.5;
        c.gamma_right = 1.1;
        break;
    default: throw std::invalid_argument("scenario: id must be 1, 2, or 3");
    }
    return c;
}

// Draw one observation. Consumes exactly p + 4 uniforms in a fixed order
// (covariates, event-time u, event indicator u, window start u, window width
// u) so streams stay aligned across branches.
inline Observation draw_observation(const ScenarioConfig& cfg, Rng& rng) {
    const Eigen::Index p = cfg.beta_true.size();
    Observation obs;
    obs.covariates.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) obs.covariates[j] = cfg.cov_scale[j] * rng.uniform();
    const double uy = rng.uniform();
    const double ue = rng.uniform();
    const double ul = rng.uniform();
    const double ur = rng.uniform();
    const double y = cfg.event_time(uy, cfg.beta_true.dot(obs.covariates));
    if (ue < cfg.pi_event) {
        obs.t_left = obs.t_right = y;
        obs.kind = CensorKind::Event;
        return obs;
    }
    const double lo = cfg.gamma_left * ul;
    const double hi = lo + cfg.gamma_right * ur;
    if (y < lo) {
        obs.t_left = 0.0;
        obs.t_right = lo;
        obs.kind = CensorKind::Left;
    } else if (y > hi) {
        obs.t_left = hi;
        obs.t_right = std::numeric_limits<double>::infinity();
        obs.kind = CensorKind::Right;
    } else {
        obs.t_left = lo;
        obs.t_right = hi;
        obs.kind = CensorKind::Interval;
    }
    return obs;
}

inline Dataset generate_sample(const ScenarioConfig& cfg, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("generate_sample: n must be >= 1");
    std::vector<Observation> obs;
    obs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) obs.push_back(draw_observation(cfg, rng));
    return Dataset(std::move(obs));
}

// Marginal quartiles and the 90th percentile of the event time (covariates
// integrated out), estimated once per scenario from 10^6 draws with a fixed
// internal seed and cached. These anchor the hazard-recovery metrics.
struct Percentiles {
    double t25 = 0.0, t50 = 0.0, t75 = 0.0, t90 = 0.0;
};

inline Percentiles true_percentiles(const ScenarioConfig& cfg) {
    static std::mutex mtx;
    static std::map<int, Percentiles> cache;
    {
        std::lock_guard<std::mutex> lock(mtx);
        auto it = cache.find(cfg.id);
        if (it != cache.end()) return it->second;
    }
    constexpr int kDraws = 1000000;
    Rng rng(0x7051CEu, static_cast<std::uint64_t>(cfg.id));
    std::vector<double> y(kDraws);
    const Eigen::Index p = cfg.beta_true.size();
    Eigen::VectorXd x(p);
    for (int i = 0; i < kDraws; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) x[j] = cfg.cov_scale[j] * rng.uniform();
        y[static_cast<std::size_t>(i)] = cfg.event_time(rng.uniform(), cfg.beta_true.dot(x));
    }
    std::sort(y.begin(), y.end());
    Percentiles pc;
    pc.t25 = quantile_type7(y, 0.25);
    pc.t50 = quantile_type7(y, 0.50);
    pc.t75 = quantile_type7(y, 0.75);
    pc.t90 = quantile_type7(y, 0.90);
    std::lock_guard<std::mutex> lock(mtx);
    cache[cfg.id] = pc;
    return pc;
}

// Empirical censoring repartition (event/left/interval/right fractions).
struct Repartition {
    double event = 0.0, left = 0.0, interval = 0.0, right = 0.0;
};

inline Repartition censoring_repartition(const ScenarioConfig& cfg, int n, Rng& rng) {
    Repartition r;
    for (int i = 0; i < n; ++i) {
        switch (draw_observation(cfg, rng).kind) {
        case CensorKind::Event: r.event += 1.0; break;
        case CensorKind::Left: r.left += 1.0; break;
        case CensorKind::Interval: r.interval += 1.0; break;
        case CensorKind::Right: r.right += 1.0; break;
        }
    }
    r.event /= n;
    r.left /= n;
    r.interval /= n;
    r.right /= n;
    return r;
}

// How a replication is fitted: basis family and size, smoothing policy.
struct FitSpec {
    BasisFamily family = BasisFamily::MSpline;
    int n_interior = 7;
    int order = 3;
    double zeta1 = 0.35; // Gaussian interior-scale quantile fraction
    double zeta2 = 0.40; // Gaussian boundary-scale quantile fraction
    bool auto_smooth = true;
    double lambda_fixed = 0.0;
    SmoothOptions smooth;
};

inline BasisSystem build_basis(const FitSpec& spec, const Dataset& data) {
    const auto pool = endpoint_pool(data);
    const KnotSequence kn = quantile_knots(pool, spec.n_interior);
    if (spec.family == BasisFamily::MSpline) return BasisSystem::mspline(kn, spec.order);
    return BasisSystem::gaussian(kn, gaussian_scales(pool, kn, spec.zeta1, spec.zeta2));
}

struct RepOutcome {
    bool usable = false;  // fit finished (KKT-converged or plateaued) with finite estimates
    bool cov_ok = false;  // sandwich covariance succeeded
    std::string error;    // exception text when not usable
    Eigen::VectorXd beta_hat, se_beta;
    std::vector<int> beta_covered; // per covariate, valid only when cov_ok
    std::array<double, 3> h0_hat{};
    std::array<double, 3> h0_se{};
    std::array<int, 3> h0_covered{};
    double dist_D = std::numeric_limits<double>::quiet_NaN();
    int fit_iterations = 0;
    int smooth_iterations = 0;
    bool smooth_stabilized = false;
    bool fit_converged = false;
    bool fit_stalled = false;
    double lambda_final = 0.0;
};

struct CovariateSummary {
    double beta_true = 0.0;
    double bias = 0.0;
    double mean_est = 0.0;
    double sd = 0.0;      // Monte Carlo SD of the estimates
    double mean_se = 0.0; // average asymptotic SE
    double coverage = 0.0;
};

struct HazardPointSummary {
    double t = 0.0;
    double h0_true = 0.0;
    double bias = 0.0;
    double sd = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;
};

struct SimSummary {
    int n_requested = 0;
    int n_usable = 0;
    int n_excluded = 0;
    int n_cov_failed = 0; // usable fits whose covariance computation failed
    std::vector<CovariateSummary> beta;
    std::array<HazardPointSummary, 3> hazard{};
    double D_mean = 0.0;
    double D_sd = 0.0;
    double mean_smooth_iterations = 0.0;
    double frac_smooth_le_20 = 0.0;
    double frac_stabilized = 0.0;
    double elapsed_seconds = 0.0;
    Percentiles percentiles;
    std::vector<RepOutcome> reps;
};

namespace detail {

inline void fill_hazard_metrics(const ScenarioConfig& cfg, const Percentiles& pc,
                                const BasisSystem& basis, const ModelState& st,
                                const Eigen::MatrixXd* cov_eta, RepOutcome& out) {
    const std::array<double, 3> ts{pc.t25, pc.t50, pc.t75};
    for (std::size_t k = 0; k < 3; ++k) {
        const Eigen::VectorXd psi = basis.psi_vec_clamped(ts[k]);
        out.h0_hat[k] = psi.dot(st.theta);
        if (cov_eta) {
            const Eigen::Index m = basis.m();
            const double var = psi.dot(cov_eta->topLeftCorner(m, m) * psi);
            out.h0_se[k] = std::sqrt(std::max(var, 0.0));
            out.h0_covered[k] =
                std::abs(out.h0_hat[k] - cfg.h0(ts[k])) <= kZ95 * out.h0_se[k] ? 1 : 0;
        }
    }
    // integrated absolute error of the baseline hazard on [0, t90],
    // 512-point trapezoid
    constexpr int kGrid = 512;
    const double a = 0.0, b = pc.t90;
    const double hstep = (b - a) / (kGrid - 1);
    double acc = 0.0;
    for (int g = 0; g < kGrid; ++g) {
        const double t = a + hstep * g;
        const double err = std::abs(basis.psi_vec_clamped(t).dot(st.theta) - cfg.h0(t));
        acc += (g == 0 || g == kGrid - 1) ? 0.5 * err : err;
    }
    out.dist_D = acc * hstep;
}

inline RepOutcome run_one_rep(const ScenarioConfig& cfg, int n, const FitSpec& spec,
                              std::uint64_t seed, std::uint64_t rep, const Percentiles& pc) {
    RepOutcome out;
    try {
        Rng rng(seed, rep);
        Dataset data = generate_sample(cfg, n, rng);
        BasisSystem basis = build_basis(spec, data);
        const Eigen::MatrixXd R = basis.penalty();

        FitResult fr;
        Eigen::MatrixXd hess_ll;
        double lambda = spec.lambda_fixed;
        if (spec.auto_smooth) {
            AutoFitResult afr = auto_fit(basis, data, spec.smooth);
            fr = std::move(afr.fit);
            hess_ll = std::move(afr.hessian_ll);
            lambda = afr.state.lambda;
            out.smooth_iterations = static_cast<int>(afr.trace.size());
            out.smooth_stabilized = afr.stabilized;
        } else {
            fr = fit(basis, data, R, lambda, spec.smooth.fit_opts);
            Workspace w(basis, data);
            Parts parts;
            ModelState ll_state = fr.state;
            ll_state.lambda = 0.0;
            penalized_objective(ll_state, w, R, &parts);
            hess_ll = hessian(ll_state, w, R, parts);
        }
        out.fit_converged = fr.converged;
        out.fit_stalled = fr.stalled;
        out.fit_iterations = fr.iterations;
        out.lambda_final = lambda;
        // A plateaued fit is still a usable estimate here: the MI step is
        // first-order and its KKT tail can crawl long after the estimates
        // have settled to well past reporting precision.
        const bool finished = fr.converged || fr.stalled;
        const bool finite = fr.state.theta.allFinite() && fr.state.beta.allFinite();
        if (!finished || !finite) {
            out.error = !finite ? "non-finite estimates" : "fit did not converge";
            return out;
        }
        out.usable = true;
        out.beta_hat = fr.state.beta;

        const Eigen::MatrixXd* cov_ptr = nullptr;
        CovarianceReport cov;
        try {
            cov = sandwich_covariance(hess_ll, R, lambda, fr.active_set,
                                      static_cast<Eigen::Index>(data.n()));
            out.cov_ok = true;
            out.se_beta = cov.se_beta;
            cov_ptr = &cov.cov_eta;
            out.beta_covered.resize(static_cast<std::size_t>(cfg.beta_true.size()));
            for (Eigen::Index j = 0; j < cfg.beta_true.size(); ++j)
                out.beta_covered[static_cast<std::size_t>(j)] =
                    std::abs(fr.state.beta[j] - cfg.beta_true[j]) <= kZ95 * cov.se_beta[j] ? 1 : 0;
        } catch (const SingularCovarianceError&) {
            out.cov_ok = false;
        }
        fill_hazard_metrics(cfg, pc, basis, fr.state, cov_ptr, out);
    } catch (const std::exception& e) {
        out.usable = false;
        out.error = e.what();
    }
    return out;
}

} // namespace detail

// Run `n_reps` independent replications. Replication r uses the dedicated
// stream Rng(seed, r), so results are invariant to the worker count; workers
// only partition the loop.
inline SimSummary run_replications(const ScenarioConfig& cfg, int n, int n_reps, const FitSpec& spec,
                                   std::uint64_t seed, int workers = 1) {
    if (n_reps < 1) throw std::invalid_argument("run_replications: n_reps must be >= 1");
    if (workers < 1) workers = 1;
    workers = std::min(workers, n_reps);

    const auto t0 = std::chrono::steady_clock::now();
    const Percentiles pc = true_percentiles(cfg);

    std::vector<RepOutcome> reps(static_cast<std::size_t>(n_reps));
    std::atomic<int> next{0};
    auto worker_loop = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= n_reps) break;
            reps[static_cast<std::size_t>(r)] =
                detail::run_one_rep(cfg, n, spec, seed, static_cast<std::uint64_t>(r), pc);
        }
    };
    if (workers == 1) {
        worker_loop();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int t = 0; t < workers; ++t) pool.emplace_back(worker_loop);
        for (auto& th : pool) th.join();
    }

    SimSummary s;
    s.n_requested = n_reps;
    s.percentiles = pc;
    const Eigen::Index p = cfg.beta_true.size();
    s.beta.assign(static_cast<std::size_t>(p), CovariateSummary{});

    std::vector<std::vector<double>> est(static_cast<std::size_t>(p));
    std::vector<std::vector<double>> ses(static_cast<std::size_t>(p));
    std::vector<std::vector<int>> covd(static_cast<std::size_t>(p));
    std::array<std::vector<double>, 3> h0est, h0se;
    std::array<std::vector<int>, 3> h0cov;
    std::vector<double> dvals;
    double smooth_iter_sum = 0.0;
    int smooth_le20 = 0, stabilized = 0;

    for (const auto& r : reps) {
        if (!r.usable) {
            ++s.n_excluded;
            continue;
        }
        ++s.n_usable;
        for (Eigen::Index j = 0; j < p; ++j) est[static_cast<std::size_t>(j)].push_back(r.beta_hat[j]);
        for (std::size_t k = 0; k < 3; ++k) h0est[k].push_back(r.h0_hat[k]);
        dvals.push_back(r.dist_D);
        smooth_iter_sum += r.smooth_iterations;
        if (r.smooth_iterations <= 20) ++smooth_le20;
        if (r.smooth_stabilized) ++stabilized;
        if (r.cov_ok) {
            for (Eigen::Index j = 0; j < p; ++j) {
                ses[static_cast<std::size_t>(j)].push_back(r.se_beta[j]);
                covd[static_cast<std::size_t>(j)].push_back(r.beta_covered[static_cast<std::size_t>(j)]);
            }
            for (std::size_t k = 0; k < 3; ++k) {
                h0se[k].push_back(r.h0_se[k]);
                h0cov[k].push_back(r.h0_covered[k]);
            }
        } else {
            ++s.n_cov_failed;
        }
    }

    auto mean_of = [](const std::vector<double>& v) {
        if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
        double acc = 0.0;
        for (double x : v) acc += x;
        return acc / static_cast<double>(v.size());
    };
    auto sd_of = [&](const std::vector<double>& v) {
        if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
        const double mu = mean_of(v);
        double acc = 0.0;
        for (double x : v) acc += (x - mu) * (x - mu);
        return std::sqrt(acc / static_cast<double>(v.size() - 1));
    };
    auto frac_of = [](const std::vector<int>& v) {
        if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
        double acc = 0.0;
        for (int x : v) acc += x;
        return acc / static_cast<double>(v.size());
    };

    for (Eigen::Index j = 0; j < p; ++j) {
        auto& cs = s.beta[static_cast<std::size_t>(j)];
        cs.beta_true = cfg.beta_true[j];
        cs.mean_est = mean_of(est[static_cast<std::size_t>(j)]);
        cs.bias = cs.mean_est - cs.beta_true;
        cs.sd = sd_of(est[static_cast<std::size_t>(j)]);
        cs.mean_se = mean_of(ses[static_cast<std::size_t>(j)]);
        cs.coverage = frac_of(covd[static_cast<std::size_t>(j)]);
    }
    const std::array<double, 3> ts{pc.t25, pc.t50, pc.t75};
    for (std::size_t k = 0; k < 3; ++k) {
        auto& hs = s.hazard[k];
        hs.t = ts[k];
        hs.h0_true = cfg.h0(ts[k]);
        hs.bias = mean_of(h0est[k]) - hs.h0_true;
        hs.sd = sd_of(h0est[k]);
        hs.mean_se = mean_of(h0se[k]);
        hs.coverage = frac_of(h0cov[k]);
    }
    s.D_mean = mean_of(dvals);
    s.D_sd = sd_of(dvals);
    if (s.n_usable > 0) {
        s.mean_smooth_iterations = smooth_iter_sum / s.n_usable;
        s.frac_smooth_le_20 = static_cast<double>(smooth_le20) / s.n_usable;
        s.frac_stabilized = static_cast<double>(stabilized) / s.n_usable;
    }
    s.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.reps = std::move(reps);
    return s;
}

} // namespace survmpl
