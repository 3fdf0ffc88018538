#pragma once

// FunkSVD training with dynamic pruning.
//
// Epoch 1 is conventional. When pruning is enabled with a nonzero rate,
// thresholds are solved and the latent dimensions rearranged exactly
// once, right before epoch 2. From then on every visit uses the
// early-stopping prediction and the early-stopping update: both sweeps
// walk t = 0..k-1 and break at the first t where |p_{u,t}| < T_p or
// |q_{t,i}| < T_q.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prunemf/dataset.hpp"
#include "prunemf/error.hpp"
#include "prunemf/model.hpp"
#include "prunemf/pruning.hpp"

namespace prunemf {

struct TrainConfig {
    std::size_t k = 50;
    std::size_t epochs = 30;
    double alpha = 0.1;
    double lambda = 0.1;
    double pruning_rate = 0.0;
    Optimizer optimizer = Optimizer::adagrad;
    double adagrad_epsilon = 1e-8;
    InitSpec init = InitSpec::normal(0.0, 0.1, 1);
    std::uint64_t shuffle_seed = 1;
    bool twin_learners = false;
    double twin_fraction = 0.5;
    bool prune_enabled = true;

    // instrumentation
    bool record_sparsity = false;
    /// Fixed threshold for sparsity snapshots. Unset: the active
    /// thresholds, or ones solved from the current epoch at pruning_rate.
    std::optional<double> profile_threshold;

    bool pruning_active() const { return prune_enabled && pruning_rate > 0.0 && epochs >= 2; }

    void validate() const {
        if (k < 1) throw ConfigError("train.k must be >= 1");
        if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("train.alpha must be > 0");
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("train.lambda must be >= 0");
        if (!(pruning_rate >= 0.0 && pruning_rate < 1.0)) throw ConfigError("train.prune_rate must lie in [0, 1)");
        if (!(adagrad_epsilon > 0.0)) throw ConfigError("train.adagrad_epsilon must be > 0");
        if (!(twin_fraction >= 0.0 && twin_fraction <= 1.0))
            throw ConfigError("train.twin_fraction must lie in [0, 1]");
        if (profile_threshold && !(*profile_threshold >= 0.0))
            throw ConfigError("train.profile_threshold must be >= 0");
        init.validate();
    }
};

struct OpCounters {
    std::uint64_t mac_count = 0;     // multiply-accumulates in rating prediction
    std::uint64_t update_count = 0;  // scalar latent-factor updates (p and q counted separately)
    std::uint64_t early_stops = 0;   // prediction or update sweeps that broke early

    std::uint64_t work() const { return mac_count + update_count; }

    OpCounters& operator+=(const OpCounters& o) {
        mac_count += o.mac_count;
        update_count += o.update_count;
        early_stops += o.early_stops;
        return *this;
    }
    friend bool operator==(const OpCounters&, const OpCounters&) = default;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double seconds = 0.0;
    double train_mae = 0.0;  // mean |e| over the epoch's visits
    bool pruned = false;
    OpCounters counters;     // this epoch only
    OpCounters cumulative;   // run total after this epoch
    std::optional<SparsityProfile> sparsity;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    double setup_seconds = 0.0;  // threshold solving and rearrangement
    std::optional<Thresholds> thresholds;
    std::optional<Rearrangement> rearrangement;
    OpCounters totals;

    double mf_seconds() const {
        double s = setup_seconds;
        for (const auto& e : epochs) s += e.seconds;
        return s;
    }
};

/// Result of one early-stopping dot product.
struct PrunedDot {
    double value = 0.0;
    std::size_t terms = 0;  // accumulated terms; k when nothing broke
};

/// Accumulates p_{u,t} q_{t,i} left to right and stops before the first
/// term with an insignificant factor on either side.
inline PrunedDot pruned_dot(std::span<const double> p_u, std::span<const double> q_i, double t_p, double t_q) {
    if (p_u.size() != q_i.size()) throw std::invalid_argument("pruned_dot: length mismatch");
    PrunedDot out;
    const auto k = p_u.size();
    std::size_t t = 0;
    for (; t < k; ++t) {
        if (std::abs(p_u[t]) < t_p || std::abs(q_i[t]) < t_q) break;
        out.value += p_u[t] * q_i[t];
    }
    out.terms = t;
    return out;
}

struct StepResult {
    double error = 0.0;
    std::size_t predicted_terms = 0;
    std::size_t updated_terms = 0;  // latent indices swept by the update
};

/// Per-coordinate freeze flags for the twin-learners first epoch.
struct FreezeMask {
    std::vector<char> p;  // by latent index
    std::vector<char> q;
    bool empty() const { return p.empty(); }
};

namespace detail {

struct StepParams {
    double alpha;
    double lambda;
    double epsilon;
    double t_p;
    double t_q;
};

[[noreturn]] inline void diverged(std::size_t t) {
    throw DivergenceError("non-finite value at latent index t=" + std::to_string(t));
}

/// One visit of (u, i). Both update equations read the pre-update p_{u,t}
/// and q_{t,i}.
template <Optimizer Opt, bool Prune, bool Twin>
inline StepResult step(double* __restrict p, double* __restrict q, double* __restrict gp, double* __restrict gq,
                       std::size_t k, double rating, const StepParams& sp, const FreezeMask* mask,
                       OpCounters& counters) {
    StepResult res;
    double pred = 0.0;
    std::size_t t = 0;
    if constexpr (Prune) {
        for (; t < k; ++t) {
            if (std::abs(p[t]) < sp.t_p || std::abs(q[t]) < sp.t_q) break;
            pred += p[t] * q[t];
        }
        if (t < k) ++counters.early_stops;
    } else {
        for (; t < k; ++t) pred += p[t] * q[t];
    }
    res.predicted_terms = t;
    counters.mac_count += t;

    const double e = rating - pred;
    if (!std::isfinite(e)) diverged(0);
    res.error = e;

    std::uint64_t updates = 0;
    for (t = 0; t < k; ++t) {
        if constexpr (Prune) {
            if (std::abs(p[t]) < sp.t_p || std::abs(q[t]) < sp.t_q) {
                ++counters.early_stops;
                break;
            }
        }
        const double p_old = p[t];
        const double q_old = q[t];
        const double dir_p = e * q_old - sp.lambda * p_old;
        const double dir_q = e * p_old - sp.lambda * q_old;
        bool update_p = true, update_q = true;
        if constexpr (Twin) {
            update_p = !mask->p[t];
            update_q = !mask->q[t];
        }
        if (update_p) {
            if constexpr (Opt == Optimizer::adagrad) {
                gp[t] += dir_p * dir_p;
                p[t] = p_old + sp.alpha / std::sqrt(gp[t] + sp.epsilon) * dir_p;
            } else {
                p[t] = p_old + sp.alpha * dir_p;
            }
            ++updates;
        }
        if (update_q) {
            if constexpr (Opt == Optimizer::adagrad) {
                gq[t] += dir_q * dir_q;
                q[t] = q_old + sp.alpha / std::sqrt(gq[t] + sp.epsilon) * dir_q;
            } else {
                q[t] = q_old + sp.alpha * dir_q;
            }
            ++updates;
        }
        if (!std::isfinite(p[t]) || !std::isfinite(q[t])) diverged(t);
    }
    res.updated_terms = t;
    counters.update_count += updates;
    return res;
}

template <Optimizer Opt, bool Prune, bool Twin>
StepResult step_dispatch_tail(std::span<double> p_u, std::span<double> q_i, std::span<double> g_p,
                              std::span<double> g_q, double rating, const StepParams& sp, const FreezeMask* mask,
                              OpCounters& counters) {
    return step<Opt, Prune, Twin>(p_u.data(), q_i.data(), g_p.data(), g_q.data(), p_u.size(), rating, sp, mask,
                                  counters);
}

}  // namespace detail

/// Optimizer state for one visit: the accumulator slices matching p_u and
/// q_i. Empty spans for plain SGD.
struct OptimizerSlices {
    std::span<double> g_p;
    std::span<double> g_q;
};

/// Single stochastic step on (p_u, q_i) for `rating`. With `prune`, the
/// error comes from the early-stopping prediction and the update sweep
/// stops at the first insignificant factor.
inline StepResult sgd_step(std::span<double> p_u, std::span<double> q_i, double rating, const TrainConfig& cfg,
                           OptimizerSlices state, double t_p, double t_q, bool prune,
                           OpCounters* counters = nullptr) {
    if (p_u.size() != q_i.size()) throw std::invalid_argument("sgd_step: length mismatch");
    if (cfg.optimizer == Optimizer::adagrad && (state.g_p.size() != p_u.size() || state.g_q.size() != q_i.size()))
        throw std::invalid_argument("sgd_step: adagrad needs accumulator slices of length k");
    OpCounters local;
    OpCounters& c = counters ? *counters : local;
    const detail::StepParams sp{cfg.alpha, cfg.lambda, cfg.adagrad_epsilon, t_p, t_q};
    if (cfg.optimizer == Optimizer::adagrad)
        return prune ? detail::step_dispatch_tail<Optimizer::adagrad, true, false>(p_u, q_i, state.g_p, state.g_q,
                                                                                   rating, sp, nullptr, c)
                     : detail::step_dispatch_tail<Optimizer::adagrad, false, false>(p_u, q_i, state.g_p, state.g_q,
                                                                                    rating, sp, nullptr, c);
    return prune ? detail::step_dispatch_tail<Optimizer::sgd, true, false>(p_u, q_i, {}, {}, rating, sp, nullptr, c)
                 : detail::step_dispatch_tail<Optimizer::sgd, false, false>(p_u, q_i, {}, {}, rating, sp, nullptr, c);
}

/// Receives every visit of `run_epoch`. `before` sees the model prior to
/// the step, `after` right after it.
struct NullVisitObserver {
    void before(std::uint32_t, std::uint32_t, const FactorModel&) {}
    void after(std::uint32_t, std::uint32_t, const StepResult&, const FactorModel&) {}
};

/// Seeded visit order for one epoch: a fresh shuffle from
/// shuffle_seed + epoch_index.
inline std::vector<std::uint32_t> visit_order(std::size_t count, std::uint64_t shuffle_seed, std::size_t epoch_index) {
    std::vector<std::uint32_t> order(count);
    std::iota(order.begin(), order.end(), std::uint32_t{0});
    std::mt19937_64 rng(shuffle_seed + epoch_index);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

namespace detail {

template <Optimizer Opt, bool Prune, bool Twin, typename Observer>
void epoch_loop(FactorModel& model, const RatingDataset& train, std::span<const std::uint32_t> order,
                const StepParams& sp, const FreezeMask* mask, OpCounters& counters, double& abs_error,
                Observer& observer) {
    const auto k = model.rank();
    const auto& triples = train.triples();
    double* P = model.p_data().data();
    double* Q = model.q_data().data();
    double* GP = model.p_accum().data();
    double* GQ = model.q_accum().data();
    std::uint32_t u = 0, i = 0;
    try {
        for (const auto idx : order) {
            const auto& r = triples[idx];
            u = r.user;
            i = r.item;
            if constexpr (!std::is_same_v<Observer, NullVisitObserver>) observer.before(u, i, model);
            const auto res = step<Opt, Prune, Twin>(P + std::size_t{u} * k, Q + std::size_t{i} * k,
                                                    Opt == Optimizer::adagrad ? GP + std::size_t{u} * k : nullptr,
                                                    Opt == Optimizer::adagrad ? GQ + std::size_t{i} * k : nullptr, k,
                                                    r.rating, sp, mask, counters);
            abs_error += std::abs(res.error);
            if constexpr (!std::is_same_v<Observer, NullVisitObserver>) observer.after(u, i, res, model);
        }
    } catch (const DivergenceError& e) {
        throw DivergenceError(std::string("training diverged at (u=") + std::to_string(u) +
                              ", i=" + std::to_string(i) + "): " + e.what());
    }
}

}  // namespace detail

/// Visits every training triple once in the epoch's shuffled order.
/// Pruning is active iff `thresholds` is non-null. `epoch_index` is
/// 0-based and seeds the visit order.
template <typename Observer = NullVisitObserver>
EpochLog run_epoch(FactorModel& model, const RatingDataset& train, const TrainConfig& cfg,
                   const Thresholds* thresholds, std::size_t epoch_index, const FreezeMask* freeze = nullptr,
                   Observer&& observer = {}) {
    if (model.num_users() != train.num_users() || model.num_items() != train.num_items())
        throw ConfigError("model dimensions do not match the dataset");
    if (cfg.optimizer == Optimizer::adagrad && !model.has_accumulators()) model.enable_accumulators();

    EpochLog log;
    log.epoch = epoch_index + 1;
    log.pruned = thresholds != nullptr;

    const auto start = std::chrono::steady_clock::now();
    const auto order = visit_order(train.size(), cfg.shuffle_seed, epoch_index);
    const detail::StepParams sp{cfg.alpha, cfg.lambda, cfg.adagrad_epsilon, thresholds ? thresholds->t_p : 0.0,
                                thresholds ? thresholds->t_q : 0.0};
    const bool twin = freeze && !freeze->empty();
    double abs_error = 0.0;
    auto& obs = observer;
    using Obs = std::remove_cvref_t<Observer>;
    auto run = [&]<Optimizer Opt>() {
        if (thresholds)
            detail::epoch_loop<Opt, true, false, Obs>(model, train, order, sp, nullptr, log.counters, abs_error, obs);
        else if (twin)
            detail::epoch_loop<Opt, false, true, Obs>(model, train, order, sp, freeze, log.counters, abs_error, obs);
        else
            detail::epoch_loop<Opt, false, false, Obs>(model, train, order, sp, nullptr, log.counters, abs_error,
                                                       obs);
    };
    if (cfg.optimizer == Optimizer::adagrad)
        run.template operator()<Optimizer::adagrad>();
    else
        run.template operator()<Optimizer::sgd>();
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.train_mae = train.empty() ? 0.0 : abs_error / static_cast<double>(train.size());
    return log;
}

/// Picks round(fraction * k) latent indices per matrix to hold fixed
/// during the first epoch.
inline FreezeMask twin_learner_mask(std::size_t k, double fraction, std::uint64_t seed) {
    FreezeMask mask{std::vector<char>(k, 0), std::vector<char>(k, 0)};
    const auto frozen = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(k)));
    std::mt19937_64 rng(seed ^ 0x7f4a7c159e3779b9ULL);
    for (auto* flags : {&mask.p, &mask.q}) {
        std::vector<std::size_t> idx(k);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t j = 0; j < frozen; ++j) (*flags)[idx[j]] = 1;
    }
    return mask;
}

struct TrainResult {
    FactorModel model;
    TrainLog log;
};

struct TrainHooks {
    /// Called after every epoch with the model and the epoch's log entry.
    std::function<void(const FactorModel&, const EpochLog&)> on_epoch;
};

namespace detail {

inline SparsityProfile snapshot_sparsity(const FactorModel& model, const TrainConfig& cfg,
                                         const std::optional<Thresholds>& active) {
    if (cfg.profile_threshold) return latent_sparsity(model, *cfg.profile_threshold, *cfg.profile_threshold);
    if (active) return latent_sparsity(model, active->t_p, active->t_q);
    if (cfg.pruning_rate > 0.0) {
        const auto th = compute_thresholds(model, cfg.pruning_rate);
        return latent_sparsity(model, th.t_p, th.t_q);
    }
    return latent_sparsity(model, 0.0, 0.0);
}

}  // namespace detail

/// Trains from an already initialized model.
template <typename Observer = NullVisitObserver>
TrainResult train_model(FactorModel model, const RatingDataset& train, const TrainConfig& cfg,
                        const TrainHooks& hooks = {}, Observer&& observer = {}) {
    cfg.validate();
    if (model.rank() != cfg.k) throw ConfigError("model rank does not match train.k");
    if (cfg.optimizer == Optimizer::adagrad && !model.has_accumulators()) model.enable_accumulators();

    TrainResult out{std::move(model), {}};
    auto& log = out.log;
    const auto mask = cfg.twin_learners ? twin_learner_mask(cfg.k, cfg.twin_fraction, cfg.shuffle_seed) : FreezeMask{};

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        if (e == 1 && cfg.pruning_active()) {
            const auto start = std::chrono::steady_clock::now();
            log.thresholds = compute_thresholds(out.model, cfg.pruning_rate);
            log.rearrangement = compute_rearrangement(out.model, *log.thresholds);
            apply_permutation(out.model, log.rearrangement->perm);
            log.setup_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        const Thresholds* th = log.thresholds ? &*log.thresholds : nullptr;
        auto entry = run_epoch(out.model, train, cfg, th, e, e == 0 ? &mask : nullptr, observer);
        log.totals += entry.counters;
        entry.cumulative = log.totals;
        if (cfg.record_sparsity) entry.sparsity = detail::snapshot_sparsity(out.model, cfg, log.thresholds);
        log.epochs.push_back(std::move(entry));
        if (hooks.on_epoch) hooks.on_epoch(out.model, log.epochs.back());
    }
    return out;
}

/// Initializes a model from cfg.init over the dataset's dimensions and
/// trains it.
template <typename Observer = NullVisitObserver>
TrainResult train(const RatingDataset& train_set, const TrainConfig& cfg, const TrainHooks& hooks = {},
                  Observer&& observer = {}) {
    cfg.validate();
    auto model = init_model(train_set.num_users(), train_set.num_items(), cfg.k, cfg.init,
                            cfg.optimizer == Optimizer::adagrad);
    return train_model(std::move(model), train_set, cfg, hooks, std::forward<Observer>(observer));
}

/// Full dot product clamped to the rating scale.
inline double predict(const FactorModel& model, std::size_t u, std::size_t i, const RatingScale& scale) {
    return scale.clamp(predict_full(model, u, i));
}

}  // namespace prunemf
