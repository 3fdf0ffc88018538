#pragma once

// Threshold determination from a target pruning rate, per-latent-vector
// sparsity, and the joint-sparsity rearrangement of latent dimensions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <ranges>
#include <stdexcept>
#include <vector>

#include "prunemf/model.hpp"

namespace prunemf {

/// Standard normal CDF, 0.5 * erfc(-x / sqrt(2)). The complementary
/// error function keeps full relative precision in the lower tail, so the
/// absolute error is at the level of a few ulps over the whole real line.
inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

struct NormalFit {
    double mean = 0.0;
    double stddev = 0.0;  // population (divide by N)
    std::size_t count = 0;
    bool degenerate() const { return !(stddev > 0.0); }
};

/// Single-pass Welford estimate of mean and population standard deviation.
template <std::ranges::input_range R>
NormalFit fit_stats(R&& values) {
    NormalFit fit;
    double m2 = 0.0;
    for (const double v : values) {
        ++fit.count;
        const double delta = v - fit.mean;
        fit.mean += delta / static_cast<double>(fit.count);
        m2 += delta * (v - fit.mean);
    }
    if (fit.count < 2) throw std::invalid_argument("fit_stats: need at least 2 values");
    fit.stddev = std::sqrt(std::max(0.0, m2 / static_cast<double>(fit.count)));
    return fit;
}

struct ThresholdSolution {
    double threshold = 0.0;  // T, clamped to >= 0
    double quantile = 0.0;   // x with T = sigma * x + mu
};

/// Finds T such that a normal(mean, stddev) variable falls in (-T, T)
/// with probability `rate`.
///
/// Solves g(x) = cdf(x) - cdf(-x - 2 mean / stddev) - rate = 0 by
/// bisection, then T = stddev * x + mean. g is increasing for
/// x >= -mean / stddev, where it starts at -rate. The upper end is
/// max(12, 2c + 12) with c = -mean / stddev, far enough that the mass
/// of the standardized interval [2c - x, x] exceeds any rate < 1.
inline ThresholdSolution solve_threshold(double mean, double stddev, double rate) {
    if (!(stddev > 0.0) || !std::isfinite(stddev)) throw std::invalid_argument("solve_threshold: stddev must be > 0");
    if (!std::isfinite(mean)) throw std::invalid_argument("solve_threshold: mean must be finite");
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("solve_threshold: rate must lie in [0, 1)");
    const double center = -mean / stddev;
    if (rate == 0.0) return {0.0, center};

    const double shift = 2.0 * mean / stddev;
    const auto g = [&](double x) { return normal_cdf(x) - normal_cdf(-x - shift) - rate; };
    double lo = std::max(center, -12.0);
    double hi = std::max(12.0, 2.0 * center + 12.0);
    double mid = lo;
    for (int iter = 0; iter < 200; ++iter) {
        mid = 0.5 * (lo + hi);
        const double value = g(mid);
        if (std::abs(value) <= 1e-14) break;
        (value < 0.0 ? lo : hi) = mid;
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid))) break;
    }
    return {std::max(0.0, stddev * mid + mean), mid};
}

/// Per-matrix thresholds solved from the same pruning rate.
struct Thresholds {
    double t_p = 0.0;
    double t_q = 0.0;
    double quantile_p = 0.0;
    double quantile_q = 0.0;
    NormalFit stats_p;
    NormalFit stats_q;
    double pruning_rate = 0.0;
};

inline auto p_column(const FactorModel& model, std::size_t t) {
    return std::views::iota(std::size_t{0}, model.num_users()) |
           std::views::transform([&model, t](std::size_t u) { return model.p(u, t); });
}

inline auto q_row(const FactorModel& model, std::size_t t) {
    return std::views::iota(std::size_t{0}, model.num_items()) |
           std::views::transform([&model, t](std::size_t i) { return model.q(t, i); });
}

/// Fits each matrix separately and solves its threshold. A constant
/// matrix (stddev 0) gets threshold 0 and a warning.
inline Thresholds compute_thresholds(const FactorModel& model, double rate) {
    Thresholds th;
    th.pruning_rate = rate;
    th.stats_p = fit_stats(model.p_data());
    th.stats_q = fit_stats(model.q_data());
    const auto solve = [rate](const NormalFit& fit, const char* name, double& t, double& x) {
        if (fit.degenerate()) {
            std::cerr << "warning: " << name << " has zero variance; pruning disabled for it\n";
            t = 0.0;
            x = 0.0;
            return;
        }
        const auto sol = solve_threshold(fit.mean, fit.stddev, rate);
        t = sol.threshold;
        x = sol.quantile;
    };
    solve(th.stats_p, "P", th.t_p, th.quantile_p);
    solve(th.stats_q, "Q", th.t_q, th.quantile_q);
    return th;
}

/// Fraction of entries with |v| < threshold (strict).
template <std::ranges::input_range R>
double vector_sparsity(R&& values, double threshold) {
    std::size_t total = 0, below = 0;
    for (const double v : values) {
        ++total;
        if (std::abs(v) < threshold) ++below;
    }
    if (total == 0) throw std::invalid_argument("vector_sparsity: empty vector");
    return static_cast<double>(below) / static_cast<double>(total);
}

/// Probability that both factors of a latent dimension are insignificant,
/// treating P and Q as independent.
inline double joint_sparsity(double sparsity_p, double sparsity_q) { return sparsity_p * sparsity_q; }

struct LatentSparsity {
    double sparsity_p = 0.0;
    double sparsity_q = 0.0;
    double joint = 0.0;
};

using SparsityProfile = std::vector<LatentSparsity>;

inline SparsityProfile latent_sparsity(const FactorModel& model, double t_p, double t_q) {
    SparsityProfile out(model.rank());
    for (std::size_t t = 0; t < model.rank(); ++t) {
        auto& s = out[t];
        s.sparsity_p = vector_sparsity(p_column(model, t), t_p);
        s.sparsity_q = vector_sparsity(q_row(model, t), t_q);
        s.joint = joint_sparsity(s.sparsity_p, s.sparsity_q);
    }
    return out;
}

struct Rearrangement {
    std::vector<std::size_t> perm;  // new index j takes old index perm[j]
    std::vector<double> joint;      // joint sparsity by original index

    std::vector<double> sorted_joint() const {
        std::vector<double> out(perm.size());
        for (std::size_t j = 0; j < perm.size(); ++j) out[j] = joint[perm[j]];
        return out;
    }
};

/// Stable ascending sort of latent dimensions by joint sparsity, densest
/// first. Does not touch the model.
inline Rearrangement compute_rearrangement(const FactorModel& model, const Thresholds& th) {
    Rearrangement r;
    const auto profile = latent_sparsity(model, th.t_p, th.t_q);
    r.joint.reserve(profile.size());
    for (const auto& s : profile) r.joint.push_back(s.joint);
    r.perm.resize(profile.size());
    std::iota(r.perm.begin(), r.perm.end(), std::size_t{0});
    std::stable_sort(r.perm.begin(), r.perm.end(),
                     [&](std::size_t a, std::size_t b) { return r.joint[a] < r.joint[b]; });
    return r;
}

inline void write_sparsity_csv(std::ostream& out, const SparsityProfile& profile) {
    out << "latent_index,sparsity_p,sparsity_q,joint_sparsity\n";
    for (std::size_t t = 0; t < profile.size(); ++t)
        out << t << ',' << profile[t].sparsity_p << ',' << profile[t].sparsity_q << ',' << profile[t].joint << '\n';
}

}  // namespace prunemf
