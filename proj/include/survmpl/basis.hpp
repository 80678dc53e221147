#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace survmpl {

// Standard normal density and CDF (erfc-based for accuracy in the tails).
inline double norm_pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z * 0.70710678118654752440); }

// Strictly increasing knot vector including both boundary knots.
struct KnotSequence {
    Eigen::VectorXd knots;

    KnotSequence() = default;
    explicit KnotSequence(Eigen::VectorXd k) : knots(std::move(k)) {
        if (knots.size() < 2) throw std::invalid_argument("KnotSequence: need at least 2 knots");
        for (Eigen::Index i = 1; i < knots.size(); ++i)
            if (!(knots[i] > knots[i - 1]))
                throw std::invalid_argument("KnotSequence: knots must be strictly increasing");
    }

    double t_min() const { return knots[0]; }
    double t_max() const { return knots[knots.size() - 1]; }
    Eigen::Index n_interior() const { return knots.size() - 2; }
};

// Type-7 quantile (linear interpolation between order statistics) of a
// sorted sample.
inline double quantile_type7(const std::vector<double>& sorted, double prob) {
    if (sorted.empty()) throw std::invalid_argument("quantile_type7: empty sample");
    if (prob <= 0.0) return sorted.front();
    if (prob >= 1.0) return sorted.back();
    const double h = prob * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double w = h - static_cast<double>(lo);
    return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

// Interior knots at equally spaced quantiles of the endpoint pool, boundary
// knots at the pool extremes. Coincident quantiles (heavily tied data) are
// collapsed, shrinking the interior count; `collapsed` reports that.
inline KnotSequence quantile_knots(const std::vector<double>& pool, int n_interior, bool* collapsed = nullptr) {
    if (n_interior < 1) throw std::invalid_argument("quantile_knots: n_interior must be >= 1");
    std::vector<double> sorted(pool);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct(sorted);
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < static_cast<std::size_t>(n_interior) + 2)
        throw std::invalid_argument("quantile_knots: pool has fewer than n_interior + 2 distinct values");
    std::vector<double> q;
    q.reserve(static_cast<std::size_t>(n_interior) + 2);
    for (int j = 0; j <= n_interior + 1; ++j)
        q.push_back(quantile_type7(sorted, static_cast<double>(j) / (n_interior + 1)));
    std::vector<double> uniq;
    for (double v : q)
        if (uniq.empty() || v > uniq.back()) uniq.push_back(v);
    if (collapsed) *collapsed = uniq.size() != q.size();
    Eigen::VectorXd k(
        Eigen::Map<const Eigen::VectorXd>(uniq.data(), static_cast<Eigen::Index>(uniq.size())));
    return KnotSequence(k);
}

// Per-knot scale for the truncated-Gaussian family: the smallest sigma such
// that [alpha - 2 sigma, alpha + 2 sigma] holds at least a fraction zeta of
// the endpoint pool (zeta1 for interior knots, zeta2 for boundary knots),
// floored at 1e-3 * range to avoid delta-like bases on tied data.
inline Eigen::VectorXd gaussian_scales(const std::vector<double>& pool, const KnotSequence& kn,
                                       double zeta1, double zeta2) {
    if (pool.empty()) throw std::invalid_argument("gaussian_scales: empty pool");
    if (!(zeta1 > 0.0 && zeta1 < 1.0 && zeta2 > 0.0 && zeta2 < 1.0))
        throw std::invalid_argument("gaussian_scales: zeta fractions must lie in (0, 1)");
    const double floor_sigma = 1e-3 * (kn.t_max() - kn.t_min());
    const Eigen::Index nk = kn.knots.size();
    Eigen::VectorXd sig(nk);
    std::vector<double> dist(pool.size());
    for (Eigen::Index u = 0; u < nk; ++u) {
        const double zeta = (u == 0 || u == nk - 1) ? zeta2 : zeta1;
        const double alpha = kn.knots[u];
        for (std::size_t i = 0; i < pool.size(); ++i) dist[i] = std::abs(pool[i] - alpha);
        std::sort(dist.begin(), dist.end());
        const std::size_t need =
            std::min(pool.size(),
                     static_cast<std::size_t>(std::ceil(zeta * static_cast<double>(pool.size()))));
        const double d = need == 0 ? 0.0 : dist[need - 1];
        sig[u] = std::max(d / 2.0, floor_sigma);
    }
    return sig;
}

enum class BasisFamily { MSpline, Gaussian };

namespace detail {

using Poly = std::vector<double>; // coefficients, low degree first

inline double poly_eval(const Poly& p, double t) {
    double v = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) v = v * t + p[i];
    return v;
}
inline Poly poly_mul(const Poly& a, const Poly& b) {
    Poly r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}
inline Poly poly_add(const Poly& a, const Poly& b) {
    Poly r(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) r[i] += b[i];
    return r;
}
inline Poly poly_scale(Poly a, double c) {
    for (double& v : a) v *= c;
    return a;
}
inline Poly poly_int(const Poly& p) { // antiderivative with zero constant
    Poly r(p.size() + 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) r[i + 1] = p[i] / static_cast<double>(i + 1);
    return r;
}
inline Poly poly_der2(const Poly& p) { // second derivative
    if (p.size() < 3) return Poly{0.0};
    Poly r(p.size() - 2, 0.0);
    for (std::size_t i = 2; i < p.size(); ++i)
        r[i - 2] = p[i] * static_cast<double>(i) * static_cast<double>(i - 1);
    return r;
}
inline double poly_integral_over(const Poly& p, double a, double b) {
    Poly P = poly_int(p);
    return poly_eval(P, b) - poly_eval(P, a);
}

// Adaptive Simpson quadrature with absolute tolerance.
inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double fa, double fm, double fb, double whole, double tol,
                                   int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40);
}

} // namespace detail

// A nonnegative basis system on [t_min, t_max]: either M-splines of a given
// order (with their I-spline cumulatives) or truncated-Gaussian densities
// centered at the knots. Immutable after construction; evaluations are pure.
class BasisSystem {
public:
    static BasisSystem mspline(const KnotSequence& kn, int order) {
        if (order < 1) throw std::invalid_argument("BasisSystem: M-spline order must be >= 1");
        BasisSystem b;
        b.family_ = BasisFamily::MSpline;
        b.order_ = order;
        b.knots_ = kn;
        b.build_mspline();
        return b;
    }

    static BasisSystem gaussian(const KnotSequence& kn, const Eigen::VectorXd& sigmas) {
        if (sigmas.size() != kn.knots.size())
            throw std::invalid_argument("BasisSystem: one sigma per knot required");
        for (Eigen::Index u = 0; u < sigmas.size(); ++u)
            if (!(sigmas[u] > 0.0)) throw std::invalid_argument("BasisSystem: sigma must be positive");
        BasisSystem b;
        b.family_ = BasisFamily::Gaussian;
        b.knots_ = kn;
        b.sigma_ = sigmas;
        b.build_gaussian();
        return b;
    }

    BasisFamily family() const { return family_; }
    int order() const { return order_; }
    Eigen::Index m() const { return m_; }
    double t_min() const { return knots_.t_min(); }
    double t_max() const { return knots_.t_max(); }
    const KnotSequence& knots() const { return knots_; }
    const Eigen::VectorXd& sigmas() const { return sigma_; }

    // psi_u(t); throws if t is outside [t_min, t_max] or u out of range.
    double psi(Eigen::Index u, double t) const {
        check_args(u, t);
        return psi_unchecked(u, t);
    }

    // Cumulative Psi_u(t) = integral of psi_u from t_min to t.
    double Psi(Eigen::Index u, double t) const {
        check_args(u, t);
        return Psi_unchecked(u, t);
    }

    Eigen::VectorXd psi_vec(double t) const {
        check_range(t);
        Eigen::VectorXd v(m_);
        for (Eigen::Index u = 0; u < m_; ++u) v[u] = psi_unchecked(u, t);
        return v;
    }
    Eigen::VectorXd Psi_vec(double t) const {
        check_range(t);
        Eigen::VectorXd v(m_);
        for (Eigen::Index u = 0; u < m_; ++u) v[u] = Psi_unchecked(u, t);
        return v;
    }

    // Clamped variants for plotting/metric grids: psi is 0 below t_min and
    // takes its left limit at/above t_max; Psi is 0 below t_min, full mass
    // above t_max.
    Eigen::VectorXd psi_vec_clamped(double t) const {
        if (t < t_min()) return Eigen::VectorXd::Zero(m_);
        return psi_vec(std::min(t, t_max()));
    }
    Eigen::VectorXd Psi_vec_clamped(double t) const {
        if (t < t_min()) return Eigen::VectorXd::Zero(m_);
        return Psi_vec(std::min(t, t_max()));
    }

    // Roughness penalty r_uv = integral of psi_u'' psi_v''. Exact piecewise
    // polynomial integration for M-splines (identically 0 for order <= 2,
    // where the basis is piecewise linear/constant); adaptive quadrature for
    // the Gaussian family.
    Eigen::MatrixXd penalty() const {
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m_, m_);
        if (family_ == BasisFamily::MSpline) {
            if (order_ <= 2) return R;
            const auto& kv = knots_.knots;
            for (Eigen::Index s = 0; s + 1 < kv.size(); ++s) {
                std::vector<detail::Poly> d2(static_cast<std::size_t>(m_));
                for (Eigen::Index u = 0; u < m_; ++u)
                    d2[static_cast<std::size_t>(u)] =
                        detail::poly_der2(polys_[static_cast<std::size_t>(u)][static_cast<std::size_t>(s)]);
                for (Eigen::Index u = 0; u < m_; ++u)
                    for (Eigen::Index v = u; v < m_; ++v) {
                        const double val = detail::poly_integral_over(
                            detail::poly_mul(d2[static_cast<std::size_t>(u)], d2[static_cast<std::size_t>(v)]),
                            kv[s], kv[s + 1]);
                        R(u, v) += val;
                        if (v > u) R(v, u) += val;
                    }
            }
        } else {
            const double tol = 1e-10;
            for (Eigen::Index u = 0; u < m_; ++u)
                for (Eigen::Index v = u; v < m_; ++v) {
                    auto f = [&](double t) { return gauss_psi_dd(u, t) * gauss_psi_dd(v, t); };
                    // scale the absolute tolerance by a crude magnitude estimate
                    const double scale =
                        std::max(1.0, std::abs(f(knots_.knots[u])) + std::abs(f(knots_.knots[v])));
                    const double val =
                        detail::adaptive_simpson(f, t_min(), t_max(), tol * scale * (t_max() - t_min()));
                    R(u, v) = val;
                    if (v > u) R(v, u) = val;
                }
        }
        return R;
    }

private:
    BasisSystem() = default;

    void check_range(double t) const {
        if (std::isnan(t) || t < t_min() || t > t_max())
            throw std::out_of_range("BasisSystem: t outside [t_min, t_max]");
    }
    void check_args(Eigen::Index u, double t) const {
        if (u < 0 || u >= m_) throw std::out_of_range("BasisSystem: basis index out of range");
        check_range(t);
    }

    // ---- M-spline machinery: per-(basis, span) polynomials built from the
    // order recursion on the padded knot vector (boundaries repeated
    // order-1 times), plus exact cumulative integrals.
    void build_mspline() {
        const auto& kv = knots_.knots;
        const int o = order_;
        const Eigen::Index nd = kv.size();
        m_ = nd + o - 2;
        std::vector<double> astar;
        astar.reserve(static_cast<std::size_t>(nd + 2 * (o - 1)));
        for (int i = 0; i < o - 1; ++i) astar.push_back(kv[0]);
        for (Eigen::Index i = 0; i < nd; ++i) astar.push_back(kv[i]);
        for (int i = 0; i < o - 1; ++i) astar.push_back(kv[nd - 1]);
        astar_ = astar;

        const std::size_t nspan = static_cast<std::size_t>(nd - 1);
        auto zero_layer = [&](std::size_t nb) {
            return std::vector<std::vector<detail::Poly>>(nb, std::vector<detail::Poly>(nspan, detail::Poly{0.0}));
        };
        // order 1: indicator / width on spans inside [astar_u, astar_{u+1})
        std::size_t nb1 = astar.size() - 1;
        auto prev = zero_layer(nb1);
        for (std::size_t u = 0; u < nb1; ++u) {
            const double a = astar[u], b = astar[u + 1];
            if (b > a)
                for (std::size_t s = 0; s < nspan; ++s)
                    if (kv[static_cast<Eigen::Index>(s)] >= a && kv[static_cast<Eigen::Index>(s) + 1] <= b)
                        prev[u][s] = detail::Poly{1.0 / (b - a)};
        }
        for (int oo = 2; oo <= o; ++oo) {
            std::size_t nb = astar.size() - static_cast<std::size_t>(oo);
            auto cur = zero_layer(nb);
            for (std::size_t u = 0; u < nb; ++u) {
                const double a = astar[u], b = astar[u + static_cast<std::size_t>(oo)];
                if (b <= a) continue;
                const double f = static_cast<double>(oo) / ((oo - 1) * (b - a));
                for (std::size_t s = 0; s < nspan; ++s) {
                    detail::Poly q = detail::poly_add(detail::poly_mul(detail::Poly{-a, 1.0}, prev[u][s]),
                                                      detail::poly_mul(detail::Poly{b, -1.0}, prev[u + 1][s]));
                    cur[u][s] = detail::poly_scale(q, f);
                }
            }
            prev = std::move(cur);
        }
        polys_ = std::move(prev);

        // cumulative integrals: icum_(u, s) = integral of psi_u up to span s
        // start. Each basis integrates to 1; rescale so the stored total is
        // exactly 1.0 (the unit-integral property then holds identically).
        ipolys_.assign(static_cast<std::size_t>(m_), std::vector<detail::Poly>(nspan));
        icum_ = Eigen::MatrixXd::Zero(m_, static_cast<Eigen::Index>(nspan) + 1);
        for (Eigen::Index u = 0; u < m_; ++u) {
            double acc = 0.0;
            for (std::size_t s = 0; s < nspan; ++s) {
                icum_(u, static_cast<Eigen::Index>(s)) = acc;
                acc += detail::poly_integral_over(polys_[static_cast<std::size_t>(u)][s],
                                                  kv[static_cast<Eigen::Index>(s)],
                                                  kv[static_cast<Eigen::Index>(s) + 1]);
            }
            icum_(u, static_cast<Eigen::Index>(nspan)) = acc;
            const double total = acc;
            if (total > 0.0) {
                const double inv = 1.0 / total;
                for (std::size_t s = 0; s < nspan; ++s)
                    polys_[static_cast<std::size_t>(u)][s] =
                        detail::poly_scale(polys_[static_cast<std::size_t>(u)][s], inv);
                icum_.row(u) *= inv;
            }
            icum_(u, static_cast<Eigen::Index>(nspan)) = 1.0;
            for (std::size_t s = 0; s < nspan; ++s)
                ipolys_[static_cast<std::size_t>(u)][s] = detail::poly_int(polys_[static_cast<std::size_t>(u)][s]);
        }
    }

    // span index for t in [t_min, t_max]; t == t_max maps to the last span so
    // psi takes its left limit there (events at the support end keep a
    // positive hazard).
    std::size_t span_of(double t) const {
        const auto& kv = knots_.knots;
        Eigen::Index lo = 0, hi = kv.size() - 1;
        while (hi - lo > 1) {
            const Eigen::Index mid = (lo + hi) / 2;
            if (t >= kv[mid])
                lo = mid;
            else
                hi = mid;
        }
        return static_cast<std::size_t>(std::min<Eigen::Index>(lo, kv.size() - 2));
    }

    double mspline_psi(Eigen::Index u, double t) const {
        const std::size_t s = span_of(t);
        return std::max(detail::poly_eval(polys_[static_cast<std::size_t>(u)][s], t), 0.0);
    }
    double mspline_Psi(Eigen::Index u, double t) const {
        const std::size_t ui = static_cast<std::size_t>(u);
        // support end: exactly 1 at/after astar_{u+order}
        if (t >= astar_[ui + static_cast<std::size_t>(order_)]) return 1.0;
        if (t <= astar_[ui]) return 0.0;
        const std::size_t s = span_of(t);
        const double sa = knots_.knots[static_cast<Eigen::Index>(s)];
        const auto& P = ipolys_[ui][s];
        return icum_(u, static_cast<Eigen::Index>(s)) + detail::poly_eval(P, t) - detail::poly_eval(P, sa);
    }

    // ---- truncated-Gaussian machinery
    void build_gaussian() {
        m_ = knots_.knots.size();
        order_ = 0;
        phi_min_.resize(m_);
        delta_.resize(m_);
        for (Eigen::Index u = 0; u < m_; ++u) {
            const double a = knots_.knots[u], s = sigma_[u];
            phi_min_[u] = norm_cdf((t_min() - a) / s);
            delta_[u] = norm_cdf((t_max() - a) / s) - phi_min_[u];
            if (!(delta_[u] > 0.0))
                throw std::invalid_argument("BasisSystem: truncation mass underflow; sigma too small");
        }
    }

    double gauss_psi(Eigen::Index u, double t) const {
        const double z = (t - knots_.knots[u]) / sigma_[u];
        return norm_pdf(z) / (sigma_[u] * delta_[u]);
    }
    double gauss_Psi(Eigen::Index u, double t) const {
        if (t >= t_max()) return 1.0;
        const double z = (t - knots_.knots[u]) / sigma_[u];
        return (norm_cdf(z) - phi_min_[u]) / delta_[u];
    }
    double gauss_psi_dd(Eigen::Index u, double t) const {
        const double s = sigma_[u];
        const double z = (t - knots_.knots[u]) / s;
        return (z * z - 1.0) / (s * s) * gauss_psi(u, t);
    }

    double psi_unchecked(Eigen::Index u, double t) const {
        return family_ == BasisFamily::MSpline ? mspline_psi(u, t) : gauss_psi(u, t);
    }
    double Psi_unchecked(Eigen::Index u, double t) const {
        return family_ == BasisFamily::MSpline ? mspline_Psi(u, t) : gauss_Psi(u, t);
    }

    BasisFamily family_ = BasisFamily::MSpline;
    int order_ = 3;
    KnotSequence knots_;
    Eigen::Index m_ = 0;
    // M-spline state
    std::vector<double> astar_;
    std::vector<std::vector<detail::Poly>> polys_;  // [basis][span]
    std::vector<std::vector<detail::Poly>> ipolys_; // antiderivatives
    Eigen::MatrixXd icum_;                          // cumulative mass at span starts
    // Gaussian state
    Eigen::VectorXd sigma_, phi_min_, delta_;
};

// Named per the basis-module interface: I-spline = cumulative M-spline.
inline double mspline_eval(const BasisSystem& b, Eigen::Index u, double t) { return b.psi(u, t); }
inline double ispline_eval(const BasisSystem& b, Eigen::Index u, double t) { return b.Psi(u, t); }
inline double gaussian_eval(const BasisSystem& b, Eigen::Index u, double t) { return b.psi(u, t); }
inline double gaussian_cumulative(const BasisSystem& b, Eigen::Index u, double t) { return b.Psi(u, t); }

} // namespace survmpl
