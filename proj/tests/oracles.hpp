#pragma once

// Independent reference implementations used as test oracles. Nothing
// here calls into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::acos(-1.0)); }

namespace detail {

inline double simpson(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive(double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = normal_pdf(lm), frm = normal_pdf(rm);
    const double left = simpson(a, m, fa, flm, fm);
    const double right = simpson(m, b, fm, frm, fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Integral of the normal density over [a, b] by adaptive Simpson.
inline double integrate_pdf(double a, double b, double tol = 1e-15) {
    const double fa = normal_pdf(a), fb = normal_pdf(b), fm = normal_pdf(0.5 * (a + b));
    return detail::adaptive(a, b, fa, fm, fb, detail::simpson(a, b, fa, fm, fb), tol, 50);
}

/// Standard normal CDF by quadrature: lower tail integrated from -40,
/// upper half as 0.5 + integral over [0, x].
inline double normal_cdf(double x) {
    if (x <= 0.0) return integrate_pdf(-40.0, x);
    return 0.5 + integrate_pdf(0.0, x);
}

/// Plain FunkSVD trainer with the same visit order and update formulas
/// as the conventional path, written out longhand.
struct RefModel {
    std::size_t m, n, k;
    std::vector<double> P, Q, GP, GQ;  // P row-major m x k, Q item-major n x k
};

struct RefTriple {
    std::uint32_t u, i;
    double r;
};

inline void ref_train(RefModel& model, const std::vector<RefTriple>& data, std::size_t epochs, double alpha,
                      double lambda, bool adagrad, double eps, std::uint64_t shuffle_seed) {
    const auto k = model.k;
    for (std::size_t e = 0; e < epochs; ++e) {
        std::vector<std::uint32_t> order(data.size());
        std::iota(order.begin(), order.end(), 0u);
        std::mt19937_64 rng(shuffle_seed + e);
        std::shuffle(order.begin(), order.end(), rng);
        for (const auto idx : order) {
            const auto& d = data[idx];
            double* p = &model.P[d.u * k];
            double* q = &model.Q[d.i * k];
            double pred = 0.0;
            for (std::size_t t = 0; t < k; ++t) pred += p[t] * q[t];
            const double err = d.r - pred;
            for (std::size_t t = 0; t < k; ++t) {
                const double po = p[t], qo = q[t];
                const double dp = err * qo - lambda * po;
                const double dq = err * po - lambda * qo;
                if (adagrad) {
                    double& gp = model.GP[d.u * k + t];
                    double& gq = model.GQ[d.i * k + t];
                    gp += dp * dp;
                    p[t] = po + alpha / std::sqrt(gp + eps) * dp;
                    gq += dq * dq;
                    q[t] = qo + alpha / std::sqrt(gq + eps) * dq;
                } else {
                    p[t] = po + alpha * dp;
                    q[t] = qo + alpha * dq;
                }
            }
        }
    }
}

/// Empirical fraction of normal(mu, sigma) draws with |v| < T.
inline double empirical_mass(double mu, double sigma, double T, std::size_t draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(mu, sigma);
    std::size_t inside = 0;
    for (std::size_t j = 0; j < draws; ++j)
        if (std::abs(dist(rng)) < T) ++inside;
    return static_cast<double>(inside) / static_cast<double>(draws);
}

/// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        sxy += (x[j] - mx) * (y[j] - my);
        sxx += (x[j] - mx) * (x[j] - mx);
    }
    return sxy / sxx;
}

}  // namespace oracle
