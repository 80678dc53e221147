#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "survmpl/likelihood.hpp"

namespace survmpl {

struct FitOptions {
    int max_outer_iter = 5000;
    double kkt_tol = 1e-6; // effective tolerance is kkt_tol * (1 + |Phi|/n)
    double armijo_c = 1e-4;
    double armijo_shrink = 0.5;
    int max_halvings = 50;
    double xi = 1e-6; // MI denominator guard
    // Plateau detection: stop (converged = false, stalled = true) when the
    // objective gain over the last stall_window iterations falls below the
    // larger of a relative tolerance and the objective's roundoff resolution.
    // The resolution term matters at large lambda: near the penalty null
    // space, lambda * theta'R theta is catastrophically cancellative, so the
    // objective cannot resolve gains below ~eps * lambda * |theta|'|R||theta|
    // and the KKT residual bottoms out at a curvature-dependent level no step
    // rule can reduce. Stopping there is convergence to working precision;
    // the `converged` flag still reports the honest KKT verdict.
    int stall_window = 100;
    double stall_rel_tol = 1e-12;
    double stall_noise_mult = 8.0; // multiple of the roundoff scale treated as noise
    bool theta_newton = true;      // projected-Newton theta refinement after each MI step
    Eigen::VectorXd theta_init; // empty -> uniform scaled to the median endpoint
    Eigen::VectorXd beta_init;  // empty -> zeros
};

struct FitResult {
    ModelState state;
    bool converged = false;
    bool stalled = false;
    int iterations = 0;
    std::vector<double> objective_trace;
    std::vector<double> theta_min_trace; // min theta coefficient per iterate, for feasibility audits
    double objective = -std::numeric_limits<double>::infinity();
    double kkt_residual = std::numeric_limits<double>::infinity();
    double kkt_tolerance = 0.0;
    double boundary_eps = 0.0;
    std::vector<Eigen::Index> active_set;
    int line_search_failures = 0;
};

inline double boundary_epsilon(const Eigen::VectorXd& theta) {
    return 1e-8 * std::max(1.0, theta.size() ? theta.maxCoeff() : 1.0);
}

inline double effective_kkt_tol(const FitOptions& opts, double phi, Eigen::Index n) {
    return opts.kkt_tol * (1.0 + std::abs(phi) / static_cast<double>(n));
}

// KKT residual: max of |dPhi/dbeta_j|, |dPhi/dtheta_u| over interior theta,
// and the positive part of dPhi/dtheta_u at boundary theta. Zero exactly at
// a KKT point of the nonnegativity-constrained problem.
inline double kkt_residual_from_score(const Eigen::VectorXd& gt, const Eigen::VectorXd& gb,
                                      const Eigen::VectorXd& theta, double eps_b) {
    double r = 0.0;
    for (Eigen::Index j = 0; j < gb.size(); ++j) r = std::max(r, std::abs(gb[j]));
    for (Eigen::Index u = 0; u < gt.size(); ++u)
        r = std::max(r, theta[u] > eps_b ? std::abs(gt[u]) : std::max(0.0, gt[u]));
    return r;
}

inline double kkt_residual(const ModelState& st, const Workspace& w, const Eigen::MatrixXd& R) {
    Parts parts;
    const double f = penalized_objective(st, w, R, &parts);
    if (!std::isfinite(f)) return std::numeric_limits<double>::infinity();
    auto [gt, gb] = score(st, w, R, parts);
    return kkt_residual_from_score(gt, gb, st.theta, boundary_epsilon(st.theta));
}

inline std::vector<Eigen::Index> active_constraints(const Eigen::VectorXd& theta,
                                                    const Eigen::VectorXd& grad_theta, double eps_b) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index u = 0; u < theta.size(); ++u)
        if (theta[u] <= eps_b && grad_theta[u] < 0.0) act.push_back(u);
    return act;
}

namespace detail {

// Backtracking line search along direction d for the given coordinate block.
// Accepts the first step with a finite objective satisfying the Armijo
// sufficient-increase condition; guarantees Phi never decreases.
template <typename Apply>
bool armijo_search(double& phi, Parts& parts, double slope, const FitOptions& opts, Apply&& apply,
                   double* omega_out) {
    double omega = 1.0;
    for (int h = 0; h <= opts.max_halvings; ++h) {
        Parts cand_parts;
        const double cand = apply(omega, cand_parts);
        const double threshold = phi + opts.armijo_c * omega * std::max(slope, 0.0);
        if (std::isfinite(cand) && cand >= threshold) {
            phi = cand;
            parts = std::move(cand_parts);
            if (omega_out) *omega_out = omega;
            return true;
        }
        omega *= opts.armijo_shrink;
    }
    if (omega_out) *omega_out = 0.0;
    return false;
}

} // namespace detail

// One Newton update of beta with Armijo backtracking (Phi nondecreasing).
// Singular beta-beta blocks fall back to an escalating ridge, then to a
// scaled gradient direction. Returns false if the line search exhausted.
inline bool newton_beta_step(ModelState& st, const Workspace& w, const Eigen::MatrixXd& R,
                             const FitOptions& opts, double& phi, Parts& parts, double* omega_out = nullptr) {
    const Eigen::Index p = w.p();
    if (p == 0) return true;
    auto [gt, gb] = score(st, w, R, parts);
    Eigen::MatrixXd A = -hessian_beta_block(w, parts); // negative Hessian: PSD near optimum
    Eigen::VectorXd d;
    double slope = 0.0;
    const double tr = std::max(A.trace(), 0.0);
    double ridge = 0.0;
    for (;;) {
        Eigen::MatrixXd Ar = A + ridge * Eigen::MatrixXd::Identity(p, p);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(Ar);
        if (ldlt.info() == Eigen::Success) {
            d = ldlt.solve(gb);
            slope = gb.dot(d);
            if (d.allFinite() && (slope > 0.0 || gb.norm() == 0.0)) break;
        }
        const double base = (tr > 0.0 ? tr : 1.0) / static_cast<double>(p);
        ridge = ridge == 0.0 ? 1e-8 * base : ridge * 10.0;
        if (ridge > 1e-2 * base) { // final fallback: scaled gradient ascent
            d = gb / (1.0 + gb.norm());
            slope = gb.dot(d);
            break;
        }
    }
    const Eigen::VectorXd beta0 = st.beta;
    bool ok = detail::armijo_search(
        phi, parts, slope, opts,
        [&](double omega, Parts& cand_parts) {
            st.beta = beta0 + omega * d;
            return penalized_objective(st, w, R, &cand_parts);
        },
        omega_out);
    if (!ok) st.beta = beta0;
    return ok;
}

// One multiplicative-iterative update of theta with Armijo backtracking.
// The step theta += omega * diag(theta/d) * grad preserves theta >= 0 for
// any omega in (0, 1] because d dominates the negative gradient part.
inline bool mi_theta_step(ModelState& st, const Workspace& w, const Eigen::MatrixXd& R,
                          const FitOptions& opts, double& phi, Parts& parts, double* omega_out = nullptr) {
    auto [gt, gb] = score(st, w, R, parts);
    const Eigen::VectorXd d_den = mi_denominator(st, w, R, parts, opts.xi);
    const Eigen::VectorXd step = st.theta.cwiseQuotient(d_den).cwiseProduct(gt);
    const double slope = gt.dot(step); // = sum theta_u g_u^2 / d_u >= 0
    const Eigen::VectorXd theta0 = st.theta;
    bool ok = detail::armijo_search(
        phi, parts, slope, opts,
        [&](double omega, Parts& cand_parts) {
            st.theta = (theta0 + omega * step).cwiseMax(0.0);
            return penalized_objective(st, w, R, &cand_parts);
        },
        omega_out);
    if (!ok) st.theta = theta0;
    return ok;
}

// Safeguarded projected-Newton refinement of theta, run after the MI update.
// The MI preconditioner is diagonal, so it crawls once the penalty couples
// neighbouring coefficients; a Newton step on the working set removes that
// tail. Feasibility and monotone ascent are preserved: the candidate is
// projected onto theta >= 0 and the Armijo search moves along the segment
// between two feasible points, accepting only sufficient increase. At a
// stationary point the direction vanishes, so exact fixed points of the MI
// step are untouched. Boundary coordinates join the working set only when
// their gradient pushes inward, which lets MI-locked zeros re-enter.
inline bool newton_theta_step(ModelState& st, const Workspace& w, const Eigen::MatrixXd& R,
                              const FitOptions& opts, double& phi, Parts& parts,
                              double* omega_out = nullptr) {
    const Eigen::Index m = st.theta.size();
    auto [gt, gb] = score(st, w, R, parts);
    const double eps_b = boundary_epsilon(st.theta);
    const Eigen::MatrixXd H = hessian(st, w, R, parts);

    // Working-set reduction: solve the Newton system on the candidate set;
    // coordinates whose update would cross zero are pinned to the boundary
    // (their move fixed at -theta_u) and the system is re-solved for the
    // rest, conditioned on those moves. A naively clipped full-space step
    // can lose the ascent property when the clipped coordinate carries most
    // of the directional derivative; conditioning restores it.
    std::vector<char> in_ws(static_cast<std::size_t>(m), 0);
    Eigen::VectorXd seg = Eigen::VectorXd::Zero(m);
    std::size_t n_ws = 0;
    for (Eigen::Index u = 0; u < m; ++u) {
        if (st.theta[u] > eps_b || gt[u] > 0.0) {
            in_ws[static_cast<std::size_t>(u)] = 1;
            ++n_ws;
        } else {
            seg[u] = 0.0;
        }
    }
    if (n_ws == 0) return true;

    for (std::size_t pass = 0; pass <= static_cast<std::size_t>(m); ++pass) {
        std::vector<Eigen::Index> ws;
        ws.reserve(n_ws);
        for (Eigen::Index u = 0; u < m; ++u)
            if (in_ws[static_cast<std::size_t>(u)]) ws.push_back(u);
        if (ws.empty()) break;
        const Eigen::Index q = static_cast<Eigen::Index>(ws.size());

        Eigen::MatrixXd A(q, q);
        Eigen::VectorXd g(q);
        for (Eigen::Index a = 0; a < q; ++a) {
            const Eigen::Index ua = ws[static_cast<std::size_t>(a)];
            // right-hand side: gradient plus cross-curvature of the pinned
            // moves (stationarity of the model in s_f given s_c):
            // (-H_ff) s_f = g_f + H_fc s_c
            double rhs = gt[ua];
            for (Eigen::Index v = 0; v < m; ++v)
                if (!in_ws[static_cast<std::size_t>(v)] && seg[v] != 0.0) rhs += H(ua, v) * seg[v];
            g[a] = rhs;
            for (Eigen::Index b = 0; b < q; ++b)
                A(a, b) = -H(ua, ws[static_cast<std::size_t>(b)]);
        }
        Eigen::VectorXd d;
        const double tr = std::max(A.trace(), 0.0);
        double ridge = 0.0;
        bool solved = false;
        for (;;) {
            Eigen::MatrixXd Ar = A + ridge * Eigen::MatrixXd::Identity(q, q);
            Eigen::LDLT<Eigen::MatrixXd> ldlt(Ar);
            if (ldlt.info() == Eigen::Success) {
                d = ldlt.solve(g);
                if (d.allFinite()) {
                    solved = true;
                    break;
                }
            }
            const double base = (tr > 0.0 ? tr : 1.0) / static_cast<double>(q);
            ridge = ridge == 0.0 ? 1e-8 * base : ridge * 10.0;
            if (ridge > 1e-2 * base) break;
        }
        if (!solved) return true; // keep the MI iterate

        bool clipped = false;
        for (Eigen::Index a = 0; a < q; ++a) {
            const Eigen::Index ua = ws[static_cast<std::size_t>(a)];
            if (st.theta[ua] + d[a] < 0.0) {
                seg[ua] = -st.theta[ua]; // pin to the boundary
                in_ws[static_cast<std::size_t>(ua)] = 0;
                --n_ws;
                clipped = true;
            } else {
                seg[ua] = d[a];
            }
        }
        if (!clipped) break;
    }

    const double slope = gt.dot(seg);
    if (!(slope > 0.0)) return true; // no usable ascent from here; skip

    const Eigen::VectorXd theta0 = st.theta;
    bool ok = detail::armijo_search(
        phi, parts, slope, opts,
        [&](double omega, Parts& cand_parts) {
            st.theta = (theta0 + omega * seg).cwiseMax(0.0);
            return penalized_objective(st, w, R, &cand_parts);
        },
        omega_out);
    if (!ok) st.theta = theta0;
    return true;
}

// Initial theta: uniform weights scaled so the implied cumulative baseline
// hazard at the median positive endpoint equals -log(0.5) under beta = 0.
inline Eigen::VectorXd initial_theta(const BasisSystem& basis, double median_endpoint) {
    Eigen::VectorXd theta = Eigen::VectorXd::Ones(basis.m());
    const double H0med = basis.Psi_vec(std::min(std::max(median_endpoint, basis.t_min()), basis.t_max()))
                             .dot(theta);
    theta *= std::log(2.0) / std::max(H0med, 1e-12);
    return theta;
}

// Constrained MPL fit at fixed lambda: alternate the Newton beta update
// (skipped when p = 0) and the MI theta update until the KKT residual meets
// tolerance, the objective plateaus, or the iteration budget is exhausted.
// Never throws on non-convergence; diagnostics land in the result.
inline FitResult fit(const BasisSystem& basis, const Workspace& w, double median_endpoint,
                     const Eigen::MatrixXd& R, double lambda, const FitOptions& opts = {}) {
    FitResult res;
    res.state.lambda = lambda;
    res.state.beta =
        opts.beta_init.size() ? opts.beta_init : Eigen::VectorXd::Zero(w.p());
    res.state.theta = opts.theta_init.size() ? opts.theta_init : initial_theta(basis, median_endpoint);
    if (res.state.beta.size() != w.p()) throw std::invalid_argument("fit: beta_init size mismatch");
    if (res.state.theta.size() != w.m()) throw std::invalid_argument("fit: theta_init size mismatch");
    if (res.state.theta.minCoeff() < 0.0) throw std::invalid_argument("fit: theta_init must be nonnegative");

    Parts parts;
    double phi = penalized_objective(res.state, w, R, &parts);
    if (!std::isfinite(phi))
        throw std::invalid_argument("fit: objective not finite at the initial state");
    res.objective_trace.reserve(static_cast<std::size_t>(opts.max_outer_iter) + 1);
    res.objective_trace.push_back(phi);
    res.theta_min_trace.reserve(static_cast<std::size_t>(opts.max_outer_iter) + 1);
    res.theta_min_trace.push_back(res.state.theta.minCoeff());
    const Eigen::MatrixXd absR = R.cwiseAbs(); // roundoff scale of the penalty evaluation

    for (int k = 0; k < opts.max_outer_iter; ++k) {
        res.iterations = k + 1;
        if (!newton_beta_step(res.state, w, R, opts, phi, parts)) ++res.line_search_failures;
        if (!mi_theta_step(res.state, w, R, opts, phi, parts)) ++res.line_search_failures;
        if (opts.theta_newton) newton_theta_step(res.state, w, R, opts, phi, parts);
        res.objective_trace.push_back(phi);
        res.theta_min_trace.push_back(res.state.theta.minCoeff());

        auto [gt, gb] = score(res.state, w, R, parts);
        const double eps_b = boundary_epsilon(res.state.theta);
        res.kkt_residual = kkt_residual_from_score(gt, gb, res.state.theta, eps_b);
        res.kkt_tolerance = effective_kkt_tol(opts, phi, w.n());
        if (res.kkt_residual < res.kkt_tolerance) {
            res.converged = true;
            break;
        }
        const std::size_t len = res.objective_trace.size();
        if (opts.stall_window > 0 && len > static_cast<std::size_t>(opts.stall_window)) {
            const double gain = phi - res.objective_trace[len - 1 - static_cast<std::size_t>(opts.stall_window)];
            const double cancel = lambda * res.state.theta.cwiseAbs().dot(absR * res.state.theta.cwiseAbs());
            const double noise = opts.stall_noise_mult * std::numeric_limits<double>::epsilon() *
                                 (std::abs(phi) + cancel + static_cast<double>(w.n()));
            const double floor_gain = opts.stall_window *
                                      std::max(opts.stall_rel_tol * (1.0 + std::abs(phi)), noise);
            if (gain <= floor_gain) {
                res.stalled = true;
                break;
            }
        }
    }
    res.objective = phi;
    {
        auto [gt, gb] = score(res.state, w, R, parts);
        res.boundary_eps = boundary_epsilon(res.state.theta);
        res.kkt_residual = kkt_residual_from_score(gt, gb, res.state.theta, res.boundary_eps);
        res.kkt_tolerance = effective_kkt_tol(opts, phi, w.n());
        res.active_set = active_constraints(res.state.theta, gt, res.boundary_eps);
    }
    return res;
}

inline FitResult fit(const BasisSystem& basis, const Dataset& data, const Eigen::MatrixXd& R,
                     double lambda, const FitOptions& opts = {}) {
    Workspace w(basis, data);
    const auto pool = endpoint_pool(data);
    const double median = quantile_type7(pool, 0.5);
    return fit(basis, w, median, R, lambda, opts);
}

} // namespace survmpl
