#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "prunemf/dataset.hpp"
#include "prunemf/model.hpp"
#include "prunemf/pruning.hpp"
#include "prunemf/training.hpp"

namespace prunemf {

/// Mean absolute error over the test triples. Predictions are clamped to
/// the dataset scale unless `clamp` is false.
inline double mae(const FactorModel& model, const RatingDataset& test, bool clamp = true) {
    if (test.empty()) throw std::invalid_argument("mae: empty test set");
    double sum = 0.0;
    for (const auto& t : test.triples()) {
        const double raw = predict_full(model, t.user, t.item);
        sum += std::abs(t.rating - (clamp ? test.scale().clamp(raw) : raw));
    }
    return sum / static_cast<double>(test.size());
}

/// Signed percentage change of the accelerated MAE over the baseline.
inline double p_mae(double mae_acc, double mae_org) {
    if (!(mae_org > 0.0)) throw std::invalid_argument("p_mae: baseline MAE must be > 0");
    return (mae_acc - mae_org) / mae_org * 100.0;
}

inline double speedup(double t_org, double t_acc) {
    if (!(t_org > 0.0) || !(t_acc > 0.0)) throw std::invalid_argument("speedup: times must be > 0");
    return t_org / t_acc;
}

/// Stage timings of one pipeline run. total() covers initialization, the
/// MF process (epochs plus pruning setup) and prediction over the test
/// set; data loading is tracked separately.
struct RunTimings {
    double load_seconds = 0.0;
    double init_seconds = 0.0;
    double mf_seconds = 0.0;
    double predict_seconds = 0.0;
    double total() const { return init_seconds + mf_seconds + predict_seconds; }
    double overall() const { return load_seconds + total(); }
};

/// Share of the whole pipeline, loading included, spent in the MF process.
inline double mf_time_fraction(const RunTimings& timings) {
    const double overall = timings.overall();
    if (!(overall > 0.0)) throw std::invalid_argument("mf_time_fraction: total time must be > 0");
    return std::clamp(timings.mf_seconds / overall, 0.0, 1.0);
}

/// MAE when test predictions use the same early-stopping product as
/// pruned training. Diagnostic only; the reported MAE uses the full dot.
inline double mae_pruned_inference(const FactorModel& model, const RatingDataset& test, const Thresholds& th,
                                   bool clamp = true) {
    if (test.empty()) throw std::invalid_argument("mae: empty test set");
    double sum = 0.0;
    for (const auto& t : test.triples()) {
        const double raw = pruned_dot(model.user(t.user), model.item(t.item), th.t_p, th.t_q).value;
        sum += std::abs(t.rating - (clamp ? test.scale().clamp(raw) : raw));
    }
    return sum / static_cast<double>(test.size());
}

inline SparsityProfile sparsity_profile(const FactorModel& model, const Thresholds& th) {
    return latent_sparsity(model, th.t_p, th.t_q);
}

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::uint64_t> counts;

    double bin_width() const { return counts.empty() ? 0.0 : (hi - lo) / static_cast<double>(counts.size()); }
    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }
};

/// Uniform bins over [min, max]; the maximum lands in the last bin. A
/// constant input fills bin 0.
template <std::ranges::input_range R>
Histogram histogram(R&& values, std::size_t bins) {
    if (bins < 1) throw std::invalid_argument("histogram: bins must be >= 1");
    std::vector<double> v(std::ranges::begin(values), std::ranges::end(values));
    Histogram h;
    h.counts.assign(bins, 0);
    if (v.empty()) return h;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    h.lo = *lo;
    h.hi = *hi;
    const double width = (h.hi - h.lo) / static_cast<double>(bins);
    for (const double x : v) {
        std::size_t b = width > 0.0 ? static_cast<std::size_t>((x - h.lo) / width) : 0;
        h.counts[std::min(b, bins - 1)]++;
    }
    return h;
}

struct FactorHistograms {
    Histogram p;
    Histogram q;
};

inline FactorHistograms factor_histogram(const FactorModel& model, std::size_t bins) {
    return {histogram(model.p_data(), bins), histogram(model.q_data(), bins)};
}

inline void write_histogram_csv(std::ostream& out, const FactorHistograms& h) {
    out << "matrix,bin,lo,hi,count\n";
    const auto emit = [&](const char* name, const Histogram& hist) {
        const double w = hist.bin_width();
        for (std::size_t b = 0; b < hist.counts.size(); ++b)
            out << name << ',' << b << ',' << hist.lo + w * static_cast<double>(b) << ','
                << hist.lo + w * static_cast<double>(b + 1) << ',' << hist.counts[b] << '\n';
    };
    emit("P", h.p);
    emit("Q", h.q);
}

/// Outcome of one timed pipeline run.
struct RunReport {
    double mae = 0.0;
    RunTimings timings;
    OpCounters counters;
    std::string config_fingerprint;
    std::string dataset_fingerprint;
    std::string init_fingerprint;  // hash of the initial model
    std::optional<double> mae_pruned_inference;
};

/// Baseline and accelerated runs side by side.
struct PairedReport {
    RunReport baseline;
    RunReport accelerated;
    double p_mae_percent = 0.0;
    double speedup = 0.0;
};

inline PairedReport pair_reports(const RunReport& baseline, const RunReport& accelerated) {
    return {baseline, accelerated, p_mae(accelerated.mae, baseline.mae),
            speedup(baseline.timings.total(), accelerated.timings.total())};
}

inline std::uint64_t model_fingerprint(const FactorModel& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&h](const std::vector<double>& v) {
        for (const double x : v) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, sizeof bits);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    };
    mix(model.p_data());
    mix(model.q_data());
    return h;
}

}  // namespace prunemf
