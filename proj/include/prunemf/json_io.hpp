#pragma once

// JSON views of logs and reports. Requires nlohmann/json.

#include <json.hpp>

#include "prunemf/metrics.hpp"
#include "prunemf/training.hpp"

namespace prunemf {

inline nlohmann::json to_json(const OpCounters& c) {
    return {{"mac_count", c.mac_count}, {"update_count", c.update_count}, {"early_stops", c.early_stops}};
}

inline nlohmann::json to_json(const NormalFit& f) { return {{"mean", f.mean}, {"stddev", f.stddev}}; }

inline nlohmann::json to_json(const Thresholds& th) {
    return {{"t_p", th.t_p},
            {"t_q", th.t_q},
            {"quantile_p", th.quantile_p},
            {"quantile_q", th.quantile_q},
            {"stats_p", to_json(th.stats_p)},
            {"stats_q", to_json(th.stats_q)},
            {"pruning_rate", th.pruning_rate}};
}

inline nlohmann::json to_json(const SparsityProfile& profile) {
    auto out = nlohmann::json::array();
    for (const auto& s : profile) out.push_back({s.sparsity_p, s.sparsity_q, s.joint});
    return out;
}

inline nlohmann::json to_json(const TrainLog& log) {
    nlohmann::json j;
    auto epochs = nlohmann::json::array();
    for (const auto& e : log.epochs) {
        nlohmann::json row{{"epoch", e.epoch},
                           {"seconds", e.seconds},
                           {"train_mae", e.train_mae},
                           {"pruned", e.pruned},
                           {"counters", to_json(e.counters)},
                           {"cumulative", to_json(e.cumulative)}};
        if (e.sparsity) row["sparsity"] = to_json(*e.sparsity);
        epochs.push_back(std::move(row));
    }
    j["epochs"] = std::move(epochs);
    j["setup_seconds"] = log.setup_seconds;
    j["mf_seconds"] = log.mf_seconds();
    j["totals"] = to_json(log.totals);
    j["thresholds"] = log.thresholds ? to_json(*log.thresholds) : nlohmann::json(nullptr);
    j["permutation"] = log.rearrangement ? nlohmann::json(log.rearrangement->perm) : nlohmann::json(nullptr);
    j["joint_sparsity"] = log.rearrangement ? nlohmann::json(log.rearrangement->joint) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const RunTimings& t) {
    return {{"load_seconds", t.load_seconds},
            {"init_seconds", t.init_seconds},
            {"mf_seconds", t.mf_seconds},
            {"predict_seconds", t.predict_seconds},
            {"total_seconds", t.total()}};
}

inline nlohmann::json to_json(const RunReport& r) {
    nlohmann::json j{{"mae", r.mae},
                     {"t_total_seconds", r.timings.total()},
                     {"t_mf_seconds", r.timings.mf_seconds},
                     {"timings", to_json(r.timings)},
                     {"mf_time_fraction", r.timings.total() > 0 ? mf_time_fraction(r.timings) : 0.0},
                     {"counters", to_json(r.counters)},
                     {"config_fingerprint", r.config_fingerprint},
                     {"dataset_fingerprint", r.dataset_fingerprint},
                     {"init_fingerprint", r.init_fingerprint}};
    j["mae_pruned_inference"] = r.mae_pruned_inference ? nlohmann::json(*r.mae_pruned_inference) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const PairedReport& p) {
    return {{"baseline", to_json(p.baseline)},
            {"accelerated", to_json(p.accelerated)},
            {"p_mae_percent", p.p_mae_percent},
            {"speedup", p.speedup}};
}

}  // namespace prunemf
