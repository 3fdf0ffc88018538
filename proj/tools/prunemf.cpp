// prunemf: train, bench, profile and gen-synth front end.
//
// Config resolution, lowest to highest precedence: built-in defaults,
// --config FILE, dotted overrides (--train.alpha=0.05), named flags.

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prunemf/experiment.hpp"

namespace {

struct CommonFlags {
    std::string config_file;
    std::optional<std::string> data, format, prune_sweep, k_sweep, optimizer, init, out;
    std::optional<double> split, alpha, lambda, prune_rate;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> k, epochs, reps;
    bool twin_learners = false;
    bool no_clamp = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config_file, "JSON config file");
    app->add_option("--data", f.data, "ratings file");
    app->add_option("--format", f.format, "tsv or csv")->check(CLI::IsMember({"tsv", "csv"}));
    app->add_option("--split", f.split, "training fraction (default 0.8)");
    app->add_option("--seed", f.seed, "seed for split, init and visit order");
    app->add_option("--k", f.k, "latent dimensions");
    app->add_option("--epochs", f.epochs, "training epochs");
    app->add_option("--alpha", f.alpha, "learning rate");
    app->add_option("--lambda", f.lambda, "L2 regularization");
    app->add_option("--prune-rate", f.prune_rate, "target pruning rate in [0, 1)");
    app->add_option("--prune-sweep", f.prune_sweep, "comma-separated pruning rates (bench)");
    app->add_option("--k-sweep", f.k_sweep, "comma-separated k values (bench)");
    app->add_option("--optimizer", f.optimizer, "sgd or adagrad")->check(CLI::IsMember({"sgd", "adagrad"}));
    app->add_option("--init", f.init, "normal or uniform")->check(CLI::IsMember({"normal", "uniform"}));
    app->add_flag("--twin-learners", f.twin_learners, "withhold updates from part of the factors in epoch 1");
    app->add_option("--reps", f.reps, "repetitions (bench)");
    app->add_option("--out", f.out, "output directory");
    app->add_flag("--no-clamp", f.no_clamp, "do not clamp predictions to the rating scale");
    app->allow_extras();
}

nlohmann::json resolve(const CommonFlags& f, const std::vector<std::string>& extras) {
    using prunemf::apply_override;
    auto j = f.config_file.empty() ? prunemf::default_config_json() : prunemf::load_config_file(f.config_file);

    for (std::size_t i = 0; i < extras.size(); ++i) {
        std::string arg = extras[i];
        if (arg.rfind("--", 0) != 0) throw prunemf::ConfigError("unexpected argument: " + arg);
        arg = arg.substr(2);
        std::string value;
        if (const auto eq = arg.find('='); eq != std::string::npos) {
            value = arg.substr(eq + 1);
            arg = arg.substr(0, eq);
        } else if (i + 1 < extras.size()) {
            value = extras[++i];
        } else {
            throw prunemf::ConfigError("missing value for --" + arg);
        }
        apply_override(j, arg, value);
    }

    if (f.data) j["data"]["path"] = *f.data;
    if (f.format) j["data"]["format"] = *f.format;
    if (f.split) j["split"]["fraction"] = *f.split;
    if (f.seed) {
        j["split"]["seed"] = *f.seed;
        j["train"]["init"]["seed"] = *f.seed;
        j["train"]["shuffle_seed"] = *f.seed;
    }
    if (f.k) j["train"]["k"] = *f.k;
    if (f.epochs) j["train"]["epochs"] = *f.epochs;
    if (f.alpha) j["train"]["alpha"] = *f.alpha;
    if (f.lambda) j["train"]["lambda"] = *f.lambda;
    if (f.prune_rate) j["train"]["prune_rate"] = *f.prune_rate;
    if (f.prune_sweep) apply_override(j, "bench.prune_sweep", *f.prune_sweep);
    if (f.k_sweep) apply_override(j, "bench.k_sweep", *f.k_sweep);
    if (f.optimizer) j["train"]["optimizer"] = *f.optimizer;
    if (f.init) {
        auto& init = j["train"]["init"];
        const auto defaults = prunemf::default_init(prunemf::InitSpec::Kind::normal);
        const bool untouched = init["param1"] == defaults.param1 && init["param2"] == defaults.param2;
        init["kind"] = *f.init;
        if (*f.init == "uniform" && untouched) {
            const auto u = prunemf::default_init(prunemf::InitSpec::Kind::uniform);
            init["param1"] = u.param1;
            init["param2"] = u.param2;
        }
    }
    if (f.twin_learners) j["train"]["twin_learners"] = true;
    if (f.reps) j["bench"]["reps"] = *f.reps;
    if (f.out) j["output"]["dir"] = *f.out;
    if (f.no_clamp) j["output"]["clamp"] = false;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Matrix factorization with early-stopping pruning"};
    app.require_subcommand(1);

    CommonFlags train_flags, bench_flags, profile_flags;
    auto* train = app.add_subcommand("train", "train one model and evaluate it");
    auto* bench = app.add_subcommand("bench", "paired baseline/accelerated runs");
    auto* profile = app.add_subcommand("profile", "train with per-epoch sparsity and histogram output");
    add_common(train, train_flags);
    add_common(bench, bench_flags);
    add_common(profile, profile_flags);

    prunemf::SynthSpec synth;
    std::string synth_out;
    auto* gen = app.add_subcommand("gen-synth", "write a synthetic low-rank rating file");
    gen->add_option("--m", synth.num_users, "users")->capture_default_str();
    gen->add_option("--n", synth.num_items, "items")->capture_default_str();
    gen->add_option("--k-true", synth.rank, "rank of the generating model")->capture_default_str();
    gen->add_option("--count", synth.count, "number of ratings")->capture_default_str();
    gen->add_option("--noise", synth.noise, "Gaussian noise stddev")->capture_default_str();
    gen->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
    gen->add_option("--out", synth_out, "output TSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : prunemf::kConfigError;
    }

    if (gen->parsed()) return prunemf::cmd_gen_synth(synth, synth_out);

    const auto run = [](CLI::App* sub, const CommonFlags& flags, auto&& cmd) {
        prunemf::ExperimentConfig cfg;
        const int rc = prunemf::guarded([&] { cfg = prunemf::parse_config(resolve(flags, sub->remaining())); });
        return rc != 0 ? rc : cmd(cfg);
    };
    if (train->parsed()) return run(train, train_flags, [](const auto& c) { return prunemf::cmd_train(c); });
    if (bench->parsed()) return run(bench, bench_flags, [](const auto& c) { return prunemf::cmd_bench(c); });
    return run(profile, profile_flags, [](const auto& c) { return prunemf::cmd_profile(c); });
}
