#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "survmpl/basis.hpp"
#include "survmpl/data.hpp"

namespace survmpl {

// Model coefficients: regression vector beta, nonnegative basis weights
// theta, smoothing value lambda. eta ordering throughout is (theta, beta).
struct ModelState {
    Eigen::VectorXd beta;
    Eigen::VectorXd theta;
    double lambda = 0.0;
};

// Per-(basis, data) caches of everything state-independent: basis rows at the
// observation endpoints and the design matrix, grouped by censoring kind.
// Building this once dominates the cost of a fit otherwise.
class Workspace {
public:
    Workspace(const BasisSystem& basis, const Dataset& data)
        : m_(basis.m()), p_(static_cast<Eigen::Index>(data.p())), n_(static_cast<Eigen::Index>(data.n())) {
        X.resize(n_, p_);
        psiL = Eigen::MatrixXd::Zero(n_, m_);
        PsiL = Eigen::MatrixXd::Zero(n_, m_);
        PsiR = Eigen::MatrixXd::Zero(n_, m_);
        kind.resize(static_cast<std::size_t>(n_));
        for (Eigen::Index i = 0; i < n_; ++i) {
            const Observation& o = data[static_cast<std::size_t>(i)];
            X.row(i) = o.covariates.transpose();
            kind[static_cast<std::size_t>(i)] = o.kind;
            switch (o.kind) {
                case CensorKind::Event:
                    psiL.row(i) = basis.psi_vec(o.t_left).transpose();
                    PsiL.row(i) = basis.Psi_vec(o.t_left).transpose();
                    idx_event.push_back(i);
                    break;
                case CensorKind::Left: // only the finite endpoint t_right matters
                    PsiR.row(i) = basis.Psi_vec(o.t_right).transpose();
                    idx_left.push_back(i);
                    break;
                case CensorKind::Right: // clamped: censoring below the first knot carries no mass
                    PsiL.row(i) = basis.Psi_vec_clamped(o.t_left).transpose();
                    idx_right.push_back(i);
                    break;
                case CensorKind::Interval:
                    PsiL.row(i) = basis.Psi_vec(o.t_left).transpose();
                    PsiR.row(i) = basis.Psi_vec(o.t_right).transpose();
                    idx_interval.push_back(i);
                    break;
            }
        }
    }

    Eigen::Index m() const { return m_; }
    Eigen::Index p() const { return p_; }
    Eigen::Index n() const { return n_; }

    Eigen::MatrixXd X, psiL, PsiL, PsiR;
    std::vector<CensorKind> kind;
    std::vector<Eigen::Index> idx_event, idx_left, idx_right, idx_interval;

private:
    Eigen::Index m_, p_, n_;
};

// State-dependent per-observation quantities reused by the objective, score,
// Hessian, and the MI denominator at a given state.
struct Parts {
    Eigen::VectorXd eb;        // exp(x beta), clamped
    Eigen::VectorXd h0e;       // h0 at event times
    Eigen::VectorXd HL, HR;    // H0(t^L) e^{x beta}, H0(t^R) e^{x beta}
    Eigen::VectorXd SL, SR;    // exp(-HL), exp(-HR)
    Eigen::VectorXd one_mSR;   // 1 - SR computed as -expm1(-HR) (left censoring)
    // Interval rows, parameterized so weights stay representable at any HL:
    // the raw probability SL*q underflows near HL ~ 700 while every score and
    // Hessian weight is a ratio depending only on q and E.
    Eigen::VectorXd intervalQ; // q = 1 - exp(-(HR-HL)), conditional window mass
    Eigen::VectorXd intervalE; // E = exp(-(HR-HL)) = SR/SL
    bool clamped = false;      // linear predictor hit the +-500 guard
    bool finite = false;
};

inline constexpr double kLinpredClamp = 500.0;
inline constexpr double kIntervalProbFloor = 1e-300;

// Penalized objective Phi = log-likelihood - lambda theta' R theta.
// Returns -inf (flagged via parts.finite=false) for infeasible states:
// an event with h0 = 0, or a left/interval probability underflowing to 0.
// The Armijo search uses that flag to reject, never to crash.
inline double penalized_objective(const ModelState& st, const Workspace& w, const Eigen::MatrixXd& R,
                                  Parts* parts_out = nullptr) {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    Parts parts;
    Eigen::VectorXd lin = w.X * st.beta;
    parts.clamped = false;
    for (Eigen::Index i = 0; i < lin.size(); ++i) {
        if (lin[i] > kLinpredClamp) {
            lin[i] = kLinpredClamp;
            parts.clamped = true;
        } else if (lin[i] < -kLinpredClamp) {
            lin[i] = -kLinpredClamp;
            parts.clamped = true;
        }
    }
    parts.eb = lin.array().exp();
    parts.h0e = w.psiL * st.theta;
    parts.HL = (w.PsiL * st.theta).cwiseProduct(parts.eb);
    parts.HR = (w.PsiR * st.theta).cwiseProduct(parts.eb);
    parts.SL = (-parts.HL.array()).exp();
    parts.SR = (-parts.HR.array()).exp();
    parts.one_mSR.resize(w.n());
    parts.intervalQ.resize(w.n());
    parts.intervalE.resize(w.n());

    double ll = 0.0;
    for (Eigen::Index i : w.idx_event) {
        if (!(parts.h0e[i] > 0.0)) {
            if (parts_out) *parts_out = std::move(parts);
            return neg_inf;
        }
        ll += std::log(parts.h0e[i]) + lin[i] - parts.HL[i];
    }
    for (Eigen::Index i : w.idx_left) {
        const double pr = -std::expm1(-parts.HR[i]);
        parts.one_mSR[i] = pr;
        if (!(pr > 0.0)) {
            if (parts_out) *parts_out = std::move(parts);
            return neg_inf;
        }
        ll += std::log(pr);
    }
    for (Eigen::Index i : w.idx_right) ll -= parts.HL[i];
    for (Eigen::Index i : w.idx_interval) {
        const double dH = parts.HR[i] - parts.HL[i];
        const double q = -std::expm1(-dH);
        parts.intervalQ[i] = q;
        parts.intervalE[i] = std::exp(-dH);
        if (!(q > kIntervalProbFloor) || !std::isfinite(parts.HL[i])) {
            if (parts_out) *parts_out = std::move(parts);
            return neg_inf;
        }
        // log(SL * q) in log space: immune to SL underflow at large HL
        ll += std::log(q) - parts.HL[i];
    }
    parts.finite = true;
    if (parts_out) *parts_out = std::move(parts);
    return ll - st.lambda * st.theta.dot(R * st.theta);
}

// Analytic score of Phi: (grad_theta, grad_beta) in the eta = (theta, beta)
// ordering. Requires Parts from a finite objective evaluation.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> score(const ModelState& st, const Workspace& w,
                                                         const Eigen::MatrixXd& R, const Parts& parts) {
    const Eigen::Index m = w.m(), p = w.p();
    Eigen::VectorXd gt = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i : w.idx_event) {
        gb.noalias() += w.X.row(i).transpose() * (1.0 - parts.HL[i]);
        gt.noalias() += w.psiL.row(i).transpose() / parts.h0e[i];
        gt.noalias() -= w.PsiL.row(i).transpose() * parts.eb[i];
    }
    for (Eigen::Index i : w.idx_left) {
        const double wl = parts.SR[i] / parts.one_mSR[i];
        gb.noalias() += w.X.row(i).transpose() * (wl * parts.HR[i]);
        gt.noalias() += w.PsiR.row(i).transpose() * (wl * parts.eb[i]);
    }
    for (Eigen::Index i : w.idx_right) {
        gb.noalias() -= w.X.row(i).transpose() * parts.HL[i];
        gt.noalias() -= w.PsiL.row(i).transpose() * parts.eb[i];
    }
    for (Eigen::Index i : w.idx_interval) {
        const double q = parts.intervalQ[i], E = parts.intervalE[i];
        gb.noalias() -= w.X.row(i).transpose() * ((parts.HL[i] - E * parts.HR[i]) / q);
        gt.noalias() -=
            (w.PsiL.row(i) - E * w.PsiR.row(i)).transpose() * (parts.eb[i] / q);
    }
    gt.noalias() -= 2.0 * st.lambda * (R * st.theta);
    return {std::move(gt), std::move(gb)};
}

// Analytic Hessian of Phi, (m+p) x (m+p), eta = (theta, beta) ordering,
// symmetric by shared assembly of the three blocks.
inline Eigen::MatrixXd hessian(const ModelState& st, const Workspace& w, const Eigen::MatrixXd& R,
                               const Parts& parts) {
    const Eigen::Index m = w.m(), p = w.p();
    Eigen::MatrixXd Htt = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd Hbb = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd Hbt = Eigen::MatrixXd::Zero(p, m);

    for (Eigen::Index i : w.idx_event) {
        const auto x = w.X.row(i);
        Hbb.noalias() -= x.transpose() * x * parts.HL[i];
        Hbt.noalias() -= x.transpose() * w.PsiL.row(i) * parts.eb[i];
        Htt.noalias() -=
            w.psiL.row(i).transpose() * w.psiL.row(i) / (parts.h0e[i] * parts.h0e[i]);
    }
    for (Eigen::Index i : w.idx_left) {
        const auto x = w.X.row(i);
        const double S = parts.SR[i], H = parts.HR[i], om = parts.one_mSR[i];
        Hbb.noalias() -= x.transpose() * x * (S * H * (H + S - 1.0) / (om * om));
        Hbt.noalias() -=
            x.transpose() * w.PsiR.row(i) * (parts.eb[i] * S / om * (H / om - 1.0));
        Htt.noalias() -= w.PsiR.row(i).transpose() * w.PsiR.row(i) *
                         (parts.eb[i] * parts.eb[i] * S / (om * om));
    }
    for (Eigen::Index i : w.idx_right) {
        const auto x = w.X.row(i);
        Hbb.noalias() -= x.transpose() * x * parts.HL[i];
        Hbt.noalias() -= x.transpose() * w.PsiL.row(i) * parts.eb[i];
    }
    for (Eigen::Index i : w.idx_interval) {
        const auto x = w.X.row(i);
        const double q = parts.intervalQ[i], E = parts.intervalE[i];
        const double dH = parts.HR[i] - parts.HL[i];
        Hbb.noalias() -= x.transpose() * x *
                         (E * dH * dH / (q * q) + (parts.HL[i] - E * parts.HR[i]) / q);
        Eigen::RowVectorXd dPs = w.PsiR.row(i) - w.PsiL.row(i);
        Eigen::RowVectorXd cross =
            (parts.eb[i] * E * dH / (q * q)) * dPs +
            (parts.eb[i] / q) * (w.PsiL.row(i) - E * w.PsiR.row(i));
        Hbt.noalias() -= x.transpose() * cross;
        Htt.noalias() -= dPs.transpose() * dPs * (parts.eb[i] * parts.eb[i] * E / (q * q));
    }
    Htt.noalias() -= 2.0 * st.lambda * R;

    Eigen::MatrixXd H(m + p, m + p);
    H.topLeftCorner(m, m) = Htt;
    H.bottomRightCorner(p, p) = Hbb;
    H.topRightCorner(m, p) = Hbt.transpose();
    H.bottomLeftCorner(p, m) = Hbt;
    return H;
}

// Just the beta-beta block of the Hessian (p x p): the Newton step for beta
// needs only this, at O(n p^2) instead of the O(n m^2) full assembly.
inline Eigen::MatrixXd hessian_beta_block(const Workspace& w, const Parts& parts) {
    const Eigen::Index p = w.p();
    Eigen::MatrixXd Hbb = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i : w.idx_event)
        Hbb.noalias() -= w.X.row(i).transpose() * w.X.row(i) * parts.HL[i];
    for (Eigen::Index i : w.idx_left) {
        const double S = parts.SR[i], H = parts.HR[i], om = parts.one_mSR[i];
        Hbb.noalias() -= w.X.row(i).transpose() * w.X.row(i) * (S * H * (H + S - 1.0) / (om * om));
    }
    for (Eigen::Index i : w.idx_right)
        Hbb.noalias() -= w.X.row(i).transpose() * w.X.row(i) * parts.HL[i];
    for (Eigen::Index i : w.idx_interval) {
        const double q = parts.intervalQ[i], E = parts.intervalE[i];
        const double dH = parts.HR[i] - parts.HL[i];
        Hbb.noalias() -= w.X.row(i).transpose() * w.X.row(i) *
                         (E * dH * dH / (q * q) + (parts.HL[i] - E * parts.HR[i]) / q);
    }
    return Hbb;
}

// MI denominator d_u: the sum over observations of the negative-part
// gradient terms, plus the positive part of the penalty gradient, plus xi.
// Guarantees theta >= 0 is preserved by the MI step for any step size <= 1.
inline Eigen::VectorXd mi_denominator(const ModelState& st, const Workspace& w, const Eigen::MatrixXd& R,
                                      const Parts& parts, double xi) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(w.m());
    for (Eigen::Index i : w.idx_event) d.noalias() += w.PsiL.row(i).transpose() * parts.eb[i];
    for (Eigen::Index i : w.idx_right) d.noalias() += w.PsiL.row(i).transpose() * parts.eb[i];
    for (Eigen::Index i : w.idx_interval)
        d.noalias() += w.PsiL.row(i).transpose() * (parts.eb[i] / parts.intervalQ[i]);
    d.noalias() += (2.0 * st.lambda * (R * st.theta)).cwiseMax(0.0);
    d.array() += xi;
    return d;
}

// ---- convenience evaluations on raw (state, basis) without a workspace ----

inline double baseline_hazard(const Eigen::VectorXd& theta, const BasisSystem& basis, double t) {
    if (theta.size() != basis.m()) throw std::invalid_argument("baseline_hazard: theta size mismatch");
    return basis.psi_vec(t).dot(theta);
}

inline double cumulative_baseline(const Eigen::VectorXd& theta, const BasisSystem& basis, double t) {
    if (theta.size() != basis.m())
        throw std::invalid_argument("cumulative_baseline: theta size mismatch");
    return basis.Psi_vec(t).dot(theta);
}

inline double survival(const ModelState& st, const BasisSystem& basis, const Eigen::VectorXd& x, double t) {
    double lin = x.dot(st.beta);
    lin = std::min(std::max(lin, -kLinpredClamp), kLinpredClamp);
    return std::exp(-cumulative_baseline(st.theta, basis, t) * std::exp(lin));
}

inline double log_likelihood(const ModelState& st, const BasisSystem& basis, const Dataset& data) {
    Workspace w(basis, data);
    Eigen::MatrixXd R0 = Eigen::MatrixXd::Zero(basis.m(), basis.m());
    ModelState unpenalized = st;
    unpenalized.lambda = 0.0;
    return penalized_objective(unpenalized, w, R0);
}

} // namespace survmpl
