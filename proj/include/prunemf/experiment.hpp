#pragma once

// Declarative experiments: a JSON config with dotted-name overrides, and
// the train / bench / profile / gen-synth commands built on it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunemf/dataset.hpp"
#include "prunemf/error.hpp"
#include "prunemf/json_io.hpp"
#include "prunemf/metrics.hpp"
#include "prunemf/model.hpp"
#include "prunemf/training.hpp"

namespace prunemf {

struct DataConfig {
    std::string path;
    FileFormat format = FileFormat::tsv;
    std::vector<Field> field_order{Field::user, Field::item, Field::rating, Field::ignore};
};

struct ExperimentConfig {
    DataConfig data;
    double split_fraction = 0.8;
    std::uint64_t split_seed = 42;
    TrainConfig train;
    std::size_t reps = 1;
    std::vector<double> prune_sweep;
    std::vector<std::size_t> k_sweep;
    std::string out_dir = "out";
    bool clamp = true;
    std::size_t histogram_bins = 35;

    void validate() const {
        train.validate();
        if (!(split_fraction > 0.0 && split_fraction <= 1.0)) throw ConfigError("split.fraction must lie in (0, 1]");
        if (reps < 1) throw ConfigError("bench.reps must be >= 1");
        if (histogram_bins < 1) throw ConfigError("output.histogram_bins must be >= 1");
        for (const double p : prune_sweep)
            if (!(p >= 0.0 && p < 1.0)) throw ConfigError("bench.prune_sweep values must lie in [0, 1)");
        for (const auto k : k_sweep)
            if (k < 1) throw ConfigError("bench.k_sweep values must be >= 1");
    }
};

/// Default parameters per init family; the uniform default matches the
/// normal default's stddev of 0.1.
inline InitSpec default_init(InitSpec::Kind kind) {
    if (kind == InitSpec::Kind::uniform) return InitSpec::uniform(-0.1 * std::sqrt(3.0), 0.1 * std::sqrt(3.0));
    return InitSpec::normal(0.0, 0.1);
}

// ---------------------------------------------------------------------------
// JSON <-> config

inline nlohmann::json default_config_json() {
    return {
        {"data", {{"path", ""}, {"format", "tsv"}, {"field_order", {"user", "item", "rating", "ignore"}}}},
        {"split", {{"fraction", 0.8}, {"seed", 42}}},
        {"train",
         {{"k", 50},
          {"epochs", 30},
          {"alpha", 0.1},
          {"lambda", 0.1},
          {"prune_rate", 0.3},
          {"prune_enabled", true},
          {"optimizer", "adagrad"},
          {"adagrad_epsilon", 1e-8},
          {"init", {{"kind", "normal"}, {"param1", 0.0}, {"param2", 0.1}, {"seed", 1}}},
          {"shuffle_seed", 1},
          {"twin_learners", false},
          {"twin_fraction", 0.5},
          {"profile_threshold", nullptr}}},
        {"bench", {{"reps", 1}, {"prune_sweep", nlohmann::json::array()}, {"k_sweep", nlohmann::json::array()}}},
        {"output", {{"dir", "out"}, {"clamp", true}, {"histogram_bins", 35}}},
    };
}

namespace detail {

inline const nlohmann::json& at_path(const nlohmann::json& root, const std::string& dotted) {
    const nlohmann::json* node = &root;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config field " + dotted);
        node = &(*node)[part];
    }
    return *node;
}

template <typename T>
T get_field(const nlohmann::json& root, const std::string& dotted) {
    const auto& node = at_path(root, dotted);
    try {
        if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, std::size_t>) {
            if (node.is_number_float()) {
                const double v = node.get<double>();
                if (v < 0 || v != std::floor(v)) throw ConfigError("");
                return static_cast<T>(v);
            }
            if (node.is_number_integer() && node.get<std::int64_t>() < 0) throw ConfigError("");
        }
        return node.get<T>();
    } catch (const std::exception&) {
        throw ConfigError("invalid value for config field " + dotted + ": " + node.dump());
    }
}

inline FileFormat parse_format(const std::string& s) {
    if (s == "tsv") return FileFormat::tsv;
    if (s == "csv") return FileFormat::csv;
    throw ConfigError("data.format must be tsv or csv, got '" + s + "'");
}

inline Field parse_field(const std::string& s) {
    if (s == "user") return Field::user;
    if (s == "item") return Field::item;
    if (s == "rating") return Field::rating;
    if (s == "ignore") return Field::ignore;
    throw ConfigError("data.field_order entries must be user, item, rating or ignore, got '" + s + "'");
}

inline Optimizer parse_optimizer(const std::string& s) {
    if (s == "sgd") return Optimizer::sgd;
    if (s == "adagrad") return Optimizer::adagrad;
    throw ConfigError("train.optimizer must be sgd or adagrad, got '" + s + "'");
}

inline InitSpec::Kind parse_init_kind(const std::string& s) {
    if (s == "normal") return InitSpec::Kind::normal;
    if (s == "uniform") return InitSpec::Kind::uniform;
    throw ConfigError("train.init.kind must be normal or uniform, got '" + s + "'");
}

/// Parses a scalar override: JSON literal when it parses, string otherwise.
inline nlohmann::json parse_scalar(const std::string& text) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) return text;
    return j;
}

}  // namespace detail

/// Sets `dotted` in `root`. Only existing fields may be overridden so
/// that typos surface as config errors.
inline void apply_override(nlohmann::json& root, const std::string& dotted, const nlohmann::json& value) {
    nlohmann::json* node = &root;
    std::stringstream ss(dotted);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("empty config field name");
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!node->is_object() || !node->contains(parts[i])) throw ConfigError("unknown config field " + dotted);
        node = &(*node)[parts[i]];
    }
    *node = value;
}

inline void apply_override(nlohmann::json& root, const std::string& dotted, const std::string& text) {
    const auto& current = detail::at_path(root, dotted);
    if (current.is_array()) {
        // "0.05,0.10" or a JSON array
        auto parsed = nlohmann::json::parse(text, nullptr, false);
        if (parsed.is_array()) {
            apply_override(root, dotted, parsed);
            return;
        }
        auto arr = nlohmann::json::array();
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto trimmed = std::string(detail::trim(item));
            if (!trimmed.empty()) arr.push_back(detail::parse_scalar(trimmed));
        }
        apply_override(root, dotted, arr);
        return;
    }
    if (current.is_string()) {
        apply_override(root, dotted, nlohmann::json(text));
        return;
    }
    apply_override(root, dotted, detail::parse_scalar(text));
}

/// Merges `overlay` onto `base`, rejecting keys `base` does not have.
inline void merge_config(nlohmann::json& base, const nlohmann::json& overlay, const std::string& prefix = "") {
    if (!overlay.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : overlay.items()) {
        const auto name = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config field " + name);
        if (base[key].is_object() && value.is_object())
            merge_config(base[key], value, name);
        else
            base[key] = value;
    }
}

inline nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    auto base = default_config_json();
    merge_config(base, j);
    return base;
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using detail::get_field;
    ExperimentConfig c;
    c.data.path = get_field<std::string>(j, "data.path");
    c.data.format = detail::parse_format(get_field<std::string>(j, "data.format"));
    c.data.field_order.clear();
    const auto& order = detail::at_path(j, "data.field_order");
    if (!order.is_array()) throw ConfigError("data.field_order must be an array");
    for (const auto& f : order) {
        if (!f.is_string()) throw ConfigError("data.field_order entries must be strings");
        c.data.field_order.push_back(detail::parse_field(f.get<std::string>()));
    }
    c.split_fraction = get_field<double>(j, "split.fraction");
    c.split_seed = get_field<std::uint64_t>(j, "split.seed");

    auto& t = c.train;
    t.k = get_field<std::size_t>(j, "train.k");
    t.epochs = get_field<std::size_t>(j, "train.epochs");
    t.alpha = get_field<double>(j, "train.alpha");
    t.lambda = get_field<double>(j, "train.lambda");
    t.pruning_rate = get_field<double>(j, "train.prune_rate");
    t.prune_enabled = get_field<bool>(j, "train.prune_enabled");
    t.optimizer = detail::parse_optimizer(get_field<std::string>(j, "train.optimizer"));
    t.adagrad_epsilon = get_field<double>(j, "train.adagrad_epsilon");
    t.init.kind = detail::parse_init_kind(get_field<std::string>(j, "train.init.kind"));
    t.init.param1 = get_field<double>(j, "train.init.param1");
    t.init.param2 = get_field<double>(j, "train.init.param2");
    t.init.seed = get_field<std::uint64_t>(j, "train.init.seed");
    t.shuffle_seed = get_field<std::uint64_t>(j, "train.shuffle_seed");
    t.twin_learners = get_field<bool>(j, "train.twin_learners");
    t.twin_fraction = get_field<double>(j, "train.twin_fraction");
    const auto& pt = detail::at_path(j, "train.profile_threshold");
    if (!pt.is_null()) t.profile_threshold = get_field<double>(j, "train.profile_threshold");

    c.reps = get_field<std::size_t>(j, "bench.reps");
    c.prune_sweep = get_field<std::vector<double>>(j, "bench.prune_sweep");
    c.k_sweep = get_field<std::vector<std::size_t>>(j, "bench.k_sweep");
    c.out_dir = get_field<std::string>(j, "output.dir");
    c.clamp = get_field<bool>(j, "output.clamp");
    c.histogram_bins = get_field<std::size_t>(j, "output.histogram_bins");
    c.validate();
    return c;
}

inline nlohmann::json to_json(const InitSpec& s) {
    return {{"kind", s.kind == InitSpec::Kind::normal ? "normal" : "uniform"},
            {"param1", s.param1},
            {"param2", s.param2},
            {"seed", s.seed}};
}

inline nlohmann::json to_json(const TrainConfig& t) {
    return {{"k", t.k},
            {"epochs", t.epochs},
            {"alpha", t.alpha},
            {"lambda", t.lambda},
            {"prune_rate", t.pruning_rate},
            {"prune_enabled", t.prune_enabled},
            {"optimizer", to_string(t.optimizer)},
            {"adagrad_epsilon", t.adagrad_epsilon},
            {"init", to_json(t.init)},
            {"shuffle_seed", t.shuffle_seed},
            {"twin_learners", t.twin_learners},
            {"twin_fraction", t.twin_fraction},
            {"profile_threshold", t.profile_threshold ? nlohmann::json(*t.profile_threshold) : nlohmann::json(nullptr)}};
}

inline std::string fnv_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return hex64(h);
}

/// Hash of the resolved training config plus the split that feeds it.
inline std::string config_fingerprint(const TrainConfig& t, double split_fraction, std::uint64_t split_seed) {
    nlohmann::json j = to_json(t);
    j["split_fraction"] = split_fraction;
    j["split_seed"] = split_seed;
    return fnv_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Pipeline

struct SplitData {
    RatingDataset full;
    RatingDataset train;
    RatingDataset test;
    double load_seconds = 0.0;
};

inline SplitData load_and_split(const ExperimentConfig& c) {
    if (c.data.path.empty()) throw ConfigError("data.path is required");
    if (!std::filesystem::exists(c.data.path)) throw DataError("dataset file not found: " + c.data.path);
    const auto start = std::chrono::steady_clock::now();
    LoadOptions opts;
    opts.format = c.data.format;
    opts.field_order = c.data.field_order;
    auto full = load_ratings(c.data.path, opts);
    auto [train, test] = split(full, c.split_fraction, c.split_seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(full), std::move(train), std::move(test), secs};
}

struct PipelineRun {
    TrainResult result;
    RunReport report;
};

/// Init, MF process and test prediction, each timed with a monotonic clock.
inline PipelineRun run_pipeline(const RatingDataset& train_set, const RatingDataset& test_set, const TrainConfig& cfg,
                                bool clamp, const TrainHooks& hooks = {}, std::string config_fp = {}) {
    using clock = std::chrono::steady_clock;
    cfg.validate();
    RunReport report;
    auto t0 = clock::now();
    auto model = init_model(train_set.num_users(), train_set.num_items(), cfg.k, cfg.init,
                            cfg.optimizer == Optimizer::adagrad);
    auto t1 = clock::now();
    report.init_fingerprint = hex64(model_fingerprint(model));
    const auto t1b = clock::now();
    auto result = train_model(std::move(model), train_set, cfg, hooks);
    const auto t2 = clock::now();
    report.timings.init_seconds = std::chrono::duration<double>(t1 - t0).count();
    report.timings.mf_seconds = std::chrono::duration<double>(t2 - t1b).count();
    if (!test_set.empty()) {
        report.mae = mae(result.model, test_set, clamp);
        report.timings.predict_seconds = std::chrono::duration<double>(clock::now() - t2).count();
        if (result.log.thresholds)
            report.mae_pruned_inference = mae_pruned_inference(result.model, test_set, *result.log.thresholds, clamp);
    }
    report.counters = result.log.totals;
    report.dataset_fingerprint = hex64(fingerprint(train_set));
    report.config_fingerprint = config_fp;
    return {std::move(result), std::move(report)};
}

struct BenchRow {
    std::string axis;  // "single", "prune_rate" or "k"
    double value = 0.0;
    std::vector<PairedReport> reps;

    double median_speedup() const {
        std::vector<double> s;
        for (const auto& r : reps) s.push_back(r.speedup);
        std::sort(s.begin(), s.end());
        if (s.empty()) return 0.0;
        return s.size() % 2 ? s[s.size() / 2] : 0.5 * (s[s.size() / 2 - 1] + s[s.size() / 2]);
    }
};

/// Conventional (prune rate 0) then accelerated run, back to back, with
/// identical seeds and data.
inline PairedReport run_pair(const RatingDataset& train_set, const RatingDataset& test_set, TrainConfig cfg, bool clamp,
                             double split_fraction = 0.0, std::uint64_t split_seed = 0) {
    auto base_cfg = cfg;
    base_cfg.pruning_rate = 0.0;
    const auto base =
        run_pipeline(train_set, test_set, base_cfg, clamp, {}, config_fingerprint(base_cfg, split_fraction, split_seed));
    const auto acc = run_pipeline(train_set, test_set, cfg, clamp, {}, config_fingerprint(cfg, split_fraction, split_seed));
    return pair_reports(base.report, acc.report);
}

inline nlohmann::json aggregate_json(const BenchRow& row) {
    auto reps = nlohmann::json::array();
    double sp_sum = 0, sp_min = 1e300, sp_max = 0, pm_sum = 0, pm_min = 1e300, pm_max = -1e300;
    double tb = 0, ta = 0;
    for (const auto& r : row.reps) {
        reps.push_back(to_json(r));
        sp_sum += r.speedup;
        sp_min = std::min(sp_min, r.speedup);
        sp_max = std::max(sp_max, r.speedup);
        pm_sum += r.p_mae_percent;
        pm_min = std::min(pm_min, r.p_mae_percent);
        pm_max = std::max(pm_max, r.p_mae_percent);
        tb += r.baseline.timings.total();
        ta += r.accelerated.timings.total();
    }
    const double n = static_cast<double>(row.reps.size());
    bool matched = true;
    for (const auto& r : row.reps)
        matched = matched && r.baseline.dataset_fingerprint == r.accelerated.dataset_fingerprint &&
                  r.baseline.init_fingerprint == r.accelerated.init_fingerprint;
    return {{"axis", row.axis},
            {"value", row.value},
            {"speedup", {{"mean", sp_sum / n}, {"min", sp_min}, {"max", sp_max}, {"median", row.median_speedup()}}},
            {"p_mae_percent", {{"mean", pm_sum / n}, {"min", pm_min}, {"max", pm_max}}},
            {"baseline_seconds_mean", tb / n},
            {"accelerated_seconds_mean", ta / n},
            {"inputs_matched", matched},
            {"reps", std::move(reps)}};
}

// ---------------------------------------------------------------------------
// Commands. Each returns a process exit code: 0 ok, 1 config error,
// 2 data error, 3 divergence.

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kDivergence = 3 };

template <typename F>
int guarded(F&& body, std::ostream& err = std::cerr) {
    try {
        body();
        return kOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const DivergenceError& e) {
        err << "divergence: " << e.what() << '\n';
        return kDivergence;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    }
}

namespace detail {

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace detail

inline int cmd_train(const ExperimentConfig& c, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return guarded(
        [&] {
            c.validate();
            auto data = load_and_split(c);
            detail::ensure_dir(c.out_dir);
            auto run = run_pipeline(data.train, data.test, c.train, c.clamp, {},
                                    config_fingerprint(c.train, c.split_fraction, c.split_seed));
            run.report.timings.load_seconds = data.load_seconds;
            const std::filesystem::path dir(c.out_dir);
            save_checkpoint(run.result.model, c.train.optimizer, (dir / "checkpoint.bin").string());
            detail::write_json(to_json(run.result.log), dir / "trainlog.json");
            auto report = to_json(run.report);
            report["config"] = to_json(c.train);
            detail::write_json(report, dir / "report.json");
            out << "mae=" << run.report.mae << " time=" << run.report.timings.total()
                << "s mac_count=" << run.report.counters.mac_count << '\n';
        },
        err);
}

inline int cmd_bench(const ExperimentConfig& c, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return guarded(
        [&] {
            c.validate();
            auto data = load_and_split(c);
            detail::ensure_dir(c.out_dir);
            std::vector<BenchRow> rows;
            if (!c.prune_sweep.empty()) {
                for (const double p : c.prune_sweep) rows.push_back({"prune_rate", p, {}});
            } else if (!c.k_sweep.empty()) {
                for (const auto k : c.k_sweep) rows.push_back({"k", static_cast<double>(k), {}});
            } else {
                rows.push_back({"single", c.train.pruning_rate, {}});
            }
            auto table = nlohmann::json::array();
            for (auto& row : rows) {
                auto cfg = c.train;
                if (row.axis == "prune_rate") cfg.pruning_rate = row.value;
                if (row.axis == "k") cfg.k = static_cast<std::size_t>(row.value);
                for (std::size_t r = 0; r < c.reps; ++r)
                    row.reps.push_back(run_pair(data.train, data.test, cfg, c.clamp, c.split_fraction, c.split_seed));
                auto agg = aggregate_json(row);
                out << row.axis << '=' << row.value << " speedup(median)=" << row.median_speedup()
                    << " p_mae=" << agg["p_mae_percent"]["mean"].get<double>() << "% baseline="
                    << agg["baseline_seconds_mean"].get<double>() << "s accelerated="
                    << agg["accelerated_seconds_mean"].get<double>() << "s\n";
                table.push_back(std::move(agg));
            }
            nlohmann::json report{{"mode", rows.front().axis},
                                  {"reps", c.reps},
                                  {"load_seconds", data.load_seconds},
                                  {"config", to_json(c.train)},
                                  {"rows", std::move(table)}};
            detail::write_json(report, std::filesystem::path(c.out_dir) / "report.json");
        },
        err);
}

inline int cmd_profile(const ExperimentConfig& c, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return guarded(
        [&] {
            c.validate();
            auto data = load_and_split(c);
            detail::ensure_dir(c.out_dir);
            auto cfg = c.train;
            cfg.record_sparsity = true;
            std::vector<std::pair<std::size_t, FactorHistograms>> hists;
            TrainHooks hooks;
            hooks.on_epoch = [&](const FactorModel& m, const EpochLog& e) {
                if (e.epoch == 1 || e.epoch == cfg.epochs) hists.emplace_back(e.epoch, factor_histogram(m, c.histogram_bins));
            };
            auto run = run_pipeline(data.train, data.test, cfg, c.clamp, hooks,
                                    config_fingerprint(cfg, c.split_fraction, c.split_seed));
            run.report.timings.load_seconds = data.load_seconds;
            const std::filesystem::path dir(c.out_dir);

            std::ofstream sp(dir / "sparsity.csv");
            if (!sp) throw DataError("cannot write sparsity.csv");
            sp << "epoch,latent_index,sparsity_p,sparsity_q,joint_sparsity\n";
            for (const auto& e : run.result.log.epochs)
                for (std::size_t t = 0; t < e.sparsity->size(); ++t) {
                    const auto& s = (*e.sparsity)[t];
                    sp << e.epoch << ',' << t << ',' << s.sparsity_p << ',' << s.sparsity_q << ',' << s.joint << '\n';
                }

            std::ofstream hc(dir / "histogram.csv");
            if (!hc) throw DataError("cannot write histogram.csv");
            hc << "epoch,matrix,bin,lo,hi,count\n";
            for (const auto& [epoch, h] : hists) {
                const auto emit = [&](const char* name, const Histogram& hist) {
                    const double w = hist.bin_width();
                    for (std::size_t b = 0; b < hist.counts.size(); ++b)
                        hc << epoch << ',' << name << ',' << b << ',' << hist.lo + w * static_cast<double>(b) << ','
                           << hist.lo + w * static_cast<double>(b + 1) << ',' << hist.counts[b] << '\n';
                };
                emit("P", h.p);
                emit("Q", h.q);
            }

            detail::write_json(to_json(run.result.log), dir / "trainlog.json");
            auto report = to_json(run.report);
            report["config"] = to_json(cfg);
            detail::write_json(report, dir / "report.json");
            out << "mae=" << run.report.mae << " mf_time_fraction=" << mf_time_fraction(run.report.timings)
                << " epochs=" << run.result.log.epochs.size() << '\n';
        },
        err);
}

inline int cmd_gen_synth(const SynthSpec& spec, const std::string& path, std::ostream& out = std::cout,
                         std::ostream& err = std::cerr) {
    return guarded(
        [&] {
            if (path.empty()) throw ConfigError("--out path is required");
            const auto ds = generate_synthetic(spec);
            write_tsv(ds, path);
            out << "wrote " << ds.size() << " ratings to " << path << '\n';
        },
        err);
}

}  // namespace prunemf
