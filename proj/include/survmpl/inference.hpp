#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "survmpl/basis.hpp"
#include "survmpl/likelihood.hpp"
#include "survmpl/optimizer.hpp"

namespace survmpl {

inline constexpr double kZ95 = 1.959964; // fixed 97.5% normal quantile, bit-reproducible reports

// Thrown when the free submatrix of the penalized information is numerically
// singular (typically an over-knotted basis); carries a condition estimate.
class SingularCovarianceError : public std::runtime_error {
public:
    explicit SingularCovarianceError(double cond)
        : std::runtime_error("sandwich_covariance: free information block numerically singular "
                             "(condition estimate " +
                             std::to_string(cond) + "); reduce the knot count"),
          condition(cond) {}
    double condition;
};

struct CovarianceReport {
    Eigen::MatrixXd cov_eta; // (m+p) x (m+p), (theta, beta) ordering, active rows/cols exactly 0
    std::vector<Eigen::Index> active_set;
    Eigen::VectorXd se_theta;
    Eigen::VectorXd se_beta;
    double condition = 0.0; // condition estimate of the free information block
};

// Active nonnegativity constraints: theta at the boundary with an inward
// (negative) gradient. Boundary coordinates with a positive gradient are
// KKT-violating and deliberately excluded (they are not at a constrained
// optimum, and zeroing their variance would be wrong).
inline std::vector<Eigen::Index> detect_active(const Eigen::VectorXd& theta,
                                               const Eigen::VectorXd& grad_theta, double eps) {
    return active_constraints(theta, grad_theta, eps);
}

// Large-sample sandwich covariance of eta = (theta, beta) under active
// constraints: with A = -Hessian(log-likelihood) and M = A + 2 lambda R on
// the theta block, Cov = Mtilde^{-1} A Mtilde^{-1}, where Mtilde^{-1} is the
// inverse of M with active rows/columns deleted, zero-padded back. The
// theorem's n-normalizations of both matrices cancel in this product, so the
// observed (unscaled) matrices are used directly; `n` is kept for interface
// completeness. With lambda = 0 and no active constraints this collapses to
// the inverse observed information.
inline CovarianceReport sandwich_covariance(const Eigen::MatrixXd& hessian_ll, const Eigen::MatrixXd& R,
                                            double lambda, const std::vector<Eigen::Index>& active_set,
                                            Eigen::Index n [[maybe_unused]] = 0) {
    const Eigen::Index dim = hessian_ll.rows();
    const Eigen::Index m = R.rows();
    if (hessian_ll.cols() != dim || dim < m)
        throw std::invalid_argument("sandwich_covariance: dimension mismatch");
    const Eigen::Index p = dim - m;

    Eigen::MatrixXd A = -hessian_ll;
    Eigen::MatrixXd M = A;
    M.topLeftCorner(m, m).noalias() += 2.0 * lambda * R;

    std::vector<char> is_active(static_cast<std::size_t>(dim), 0);
    for (Eigen::Index u : active_set) {
        if (u < 0 || u >= m)
            throw std::invalid_argument("sandwich_covariance: active index outside theta block");
        is_active[static_cast<std::size_t>(u)] = 1;
    }
    std::vector<Eigen::Index> free_idx;
    free_idx.reserve(static_cast<std::size_t>(dim));
    for (Eigen::Index i = 0; i < dim; ++i)
        if (!is_active[static_cast<std::size_t>(i)]) free_idx.push_back(i);
    const Eigen::Index q = static_cast<Eigen::Index>(free_idx.size());

    Eigen::MatrixXd Mff(q, q), Aff(q, q);
    for (Eigen::Index a = 0; a < q; ++a)
        for (Eigen::Index b = 0; b < q; ++b) {
            Mff(a, b) = M(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
            Aff(a, b) = A(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
        }
    Mff = 0.5 * (Mff + Mff.transpose()); // symmetrize against rounding

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Mff);
    if (es.info() != Eigen::Success)
        throw SingularCovarianceError(std::numeric_limits<double>::infinity());
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double emax = ev.cwiseAbs().maxCoeff();
    const double emin = ev.minCoeff();
    const double cond = emin > 0.0 ? emax / emin : std::numeric_limits<double>::infinity();
    if (!(emin > 0.0) || cond > 1e14) throw SingularCovarianceError(cond);

    Eigen::MatrixXd Minv =
        es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    Eigen::MatrixXd cov_ff = Minv * Aff * Minv;
    cov_ff = 0.5 * (cov_ff + cov_ff.transpose());

    CovarianceReport rep;
    rep.cov_eta = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index a = 0; a < q; ++a)
        for (Eigen::Index b = 0; b < q; ++b)
            rep.cov_eta(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]) =
                cov_ff(a, b);
    rep.active_set = active_set;
    rep.condition = cond;
    rep.se_theta.resize(m);
    for (Eigen::Index u = 0; u < m; ++u) rep.se_theta[u] = std::sqrt(std::max(rep.cov_eta(u, u), 0.0));
    rep.se_beta.resize(p);
    for (Eigen::Index j = 0; j < p; ++j)
        rep.se_beta[j] = std::sqrt(std::max(rep.cov_eta(m + j, m + j), 0.0));
    return rep;
}

// Per-covariate Wald summary: estimate, SE, hazard ratio with 95% CI, and
// two-sided p-value.
struct RegressionRow {
    std::string name;
    double estimate = 0.0;
    double se = 0.0;
    double hazard_ratio = 1.0;
    double hr_low = 1.0;
    double hr_high = 1.0;
    double z = 0.0;
    double p_value = 1.0;
};

inline std::vector<RegressionRow> regression_summary(const FitResult& fit, const CovarianceReport& cov,
                                                     const std::vector<std::string>& names) {
    const Eigen::Index p = fit.state.beta.size();
    if (static_cast<Eigen::Index>(names.size()) != p)
        throw std::invalid_argument("regression_summary: name count mismatch");
    std::vector<RegressionRow> rows(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
        RegressionRow& r = rows[static_cast<std::size_t>(j)];
        r.name = names[static_cast<std::size_t>(j)];
        r.estimate = fit.state.beta[j];
        r.se = cov.se_beta[j];
        r.hazard_ratio = std::exp(r.estimate);
        r.hr_low = std::exp(r.estimate - kZ95 * r.se);
        r.hr_high = std::exp(r.estimate + kZ95 * r.se);
        r.z = r.se > 0.0 ? r.estimate / r.se : (r.estimate == 0.0 ? 0.0 : std::copysign(1e300, r.estimate));
        r.p_value = std::erfc(std::abs(r.z) * 0.70710678118654752440); // 2*(1-Phi(|z|))
    }
    return rows;
}

struct HazardBandPoint {
    double t = 0.0;
    double h0 = 0.0;
    double se = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

// Pointwise Wald band for the baseline hazard h0(t) = psi(t)' theta,
// truncated below at 0.
inline std::vector<HazardBandPoint> baseline_hazard_band(const FitResult& fit,
                                                         const CovarianceReport& cov,
                                                         const BasisSystem& basis,
                                                         const std::vector<double>& grid,
                                                         double z = kZ95) {
    const Eigen::Index m = basis.m();
    std::vector<HazardBandPoint> out;
    out.reserve(grid.size());
    for (double t : grid) {
        HazardBandPoint pt;
        pt.t = t;
        const Eigen::VectorXd psi = basis.psi_vec(t);
        pt.h0 = psi.dot(fit.state.theta);
        pt.se = std::sqrt(std::max(psi.dot(cov.cov_eta.topLeftCorner(m, m) * psi), 0.0));
        pt.lower = std::max(pt.h0 - z * pt.se, 0.0);
        pt.upper = pt.h0 + z * pt.se;
        out.push_back(pt);
    }
    return out;
}

struct SurvivalBandPoint {
    double t = 0.0;
    double survival = 1.0;
    double lower = 1.0;
    double upper = 1.0;
    bool one_sided = false; // S hit 0/1 numerically; band flagged
};

// Survival prediction with a delta-method band on the log(-log S) scale,
// mapped back to (0,1): the transform keeps band endpoints inside the unit
// interval without ad hoc truncation.
inline std::vector<SurvivalBandPoint> predict_survival_band(const FitResult& fit,
                                                            const CovarianceReport& cov,
                                                            const BasisSystem& basis,
                                                            const Eigen::VectorXd& x,
                                                            const std::vector<double>& grid,
                                                            double z = kZ95) {
    const Eigen::Index m = basis.m();
    const Eigen::Index p = fit.state.beta.size();
    if (x.size() != p) throw std::invalid_argument("predict_survival_band: covariate profile size mismatch");
    double lin = x.dot(fit.state.beta);
    lin = std::min(std::max(lin, -kLinpredClamp), kLinpredClamp);
    const double ebx = std::exp(lin);

    std::vector<SurvivalBandPoint> out;
    out.reserve(grid.size());
    for (double t : grid) {
        SurvivalBandPoint pt;
        pt.t = t;
        const Eigen::VectorXd Psi = basis.Psi_vec(t);
        const double H0 = Psi.dot(fit.state.theta);
        const double S = std::exp(-H0 * ebx);
        pt.survival = S;
        if (H0 <= 0.0 || S >= 1.0 || S <= kIntervalProbFloor) {
            pt.lower = pt.upper = S;
            pt.one_sided = true;
            out.push_back(pt);
            continue;
        }
        // gradient of g = log(-log S) = log H0 + x beta in eta = (theta, beta)
        Eigen::VectorXd grad(m + p);
        grad.head(m) = Psi / H0;
        grad.tail(p) = x;
        const double var_g = std::max(grad.dot(cov.cov_eta * grad), 0.0);
        const double se_g = std::sqrt(var_g);
        pt.lower = std::pow(S, std::exp(z * se_g));
        pt.upper = std::pow(S, std::exp(-z * se_g));
        out.push_back(pt);
    }
    return out;
}

} // namespace survmpl
