// dmc: generate | distort | train | refine | evaluate | ablate

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dmc/cli.hpp"
#include "dmc/errors.hpp"

namespace {

using namespace dmc;
using namespace dmc::cli;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string strategy;
    std::optional<int> t_hat;
    bool bias_only = false;
    bool smoothing_only = false;
    std::string out;
    std::string in;
    std::string ref;
    std::string test;
    std::string checkpoint;
    std::string bias = "sample";
    std::string sigma = "sample";
    std::vector<std::string> positional;
};

// "sample" or a number.
std::optional<double> fixed_value(const std::string& flag, const std::string& v) {
    if (v == "sample") return std::nullopt;
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw UsageError(flag + " expects a number or 'sample', got '" + v + "'");
}

ExperimentConfig load(const Options& o) {
    ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
    Overrides ov{o.seed, std::nullopt, o.t_hat, o.bias_only, o.smoothing_only};
    if (!o.strategy.empty()) ov.strategy = strategy_from_string(o.strategy);
    return apply_overrides(std::move(c), ov);
}

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "experiment config JSON");
    cmd->add_option("--seed", o.seed, "seed (overrides the config)");
    cmd->add_option("--out", o.out, "output path");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised motion calibrator toolkit"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("generate", "write a clean synthetic corpus and its manifest");
    add_common(gen, o);

    auto* dis = app.add_subcommand("distort", "apply sampled bias / smoothing to a corpus");
    add_common(dis, o);
    dis->add_option("--in", o.in, "clean corpus");
    dis->add_option("--bias", o.bias, "vertical bias in meters, or 'sample'");
    dis->add_option("--sigma", o.sigma, "smoothing sigma in frames, or 'sample'");
    dis->add_option("paths", o.positional, "IN OUT, as an alternative to --in / --out")->expected(0, 2);
    dis->add_flag("--bias-only", o.bias_only, "vertical bias only");
    dis->add_flag("--smoothing-only", o.smoothing_only, "temporal smoothing only");

    auto* trn = app.add_subcommand("train", "train a calibrator");
    add_common(trn, o);
    trn->add_option("--in", o.in, "clean corpus (default: paths.corpus)");
    trn->add_option("--strategy", o.strategy, "supervised | wgan | denoise")
        ->check(CLI::IsMember({"supervised", "wgan", "denoise"}));
    trn->add_flag("--bias-only", o.bias_only, "train on vertical bias only");
    trn->add_flag("--smoothing-only", o.smoothing_only, "train on smoothing only");

    auto* ref = app.add_subcommand("refine", "refine a corpus with a trained checkpoint");
    add_common(ref, o);
    ref->add_option("--checkpoint", o.checkpoint, "calibrator checkpoint")->required();
    ref->add_option("--in", o.in, "corpus to refine")->required();
    ref->add_option("--t-hat", o.t_hat, "refinement steps (residual checkpoints)")->check(CLI::PositiveNumber);
    ref->add_option("--strategy", o.strategy, "expected strategy of the checkpoint")
        ->check(CLI::IsMember({"supervised", "wgan", "denoise"}));

    auto* ev = app.add_subcommand("evaluate", "metrics, table and plots for a test corpus");
    add_common(ev, o);
    ev->add_option("--ref", o.ref, "reference (clean) corpus")->required();
    ev->add_option("--test", o.test, "corpus to evaluate")->required();

    auto* abl = app.add_subcommand("ablate", "bias / smoothing / both training ablation");
    add_common(abl, o);
    abl->add_option("--t-hat", o.t_hat, "refinement steps")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, std::cerr, std::cerr);
    }

    try {
        auto c = load(o);
        if (gen->parsed()) {
            const auto r = cmd_generate(c, o.out.empty() ? c.paths.corpus : fs::path(o.out));
            std::cerr << "wrote " << r.files.size() << " records and " << r.manifest.string() << '\n';
        } else if (dis->parsed()) {
            if (o.in.empty() && !o.positional.empty()) o.in = o.positional[0];
            if (o.out.empty() && o.positional.size() > 1) o.out = o.positional[1];
            if (o.in.empty() || o.out.empty()) throw UsageError("distort needs an input and an output path");
            const auto r = cmd_distort(c, o.in, o.out,
                                       {fixed_value("--bias", o.bias), fixed_value("--sigma", o.sigma)});
            std::cerr << "wrote " << r.specs.size() << " distorted records; specs in " << r.sidecar.string() << '\n';
        } else if (trn->parsed()) {
            if (!o.out.empty()) {
                c.paths.checkpoints = fs::path(o.out) / "checkpoints";
                c.paths.reports = fs::path(o.out) / "reports";
            }
            const auto r = cmd_train(c, o.in.empty() ? c.paths.corpus : fs::path(o.in));
            std::cerr << "trained " << to_string(c.train.strategy) << " for " << r.result.report.epochs.size()
                      << " epochs in " << r.result.report.wall_seconds << " s; checkpoint " << r.checkpoint.string()
                      << '\n';
        } else if (ref->parsed()) {
            if (o.out.empty()) throw UsageError("refine needs --out");
            RefineOptions ro{o.t_hat, std::nullopt};
            if (!o.strategy.empty()) ro.strategy = strategy_from_string(o.strategy);
            const auto r = cmd_refine(c, o.checkpoint, o.in, o.out, ro);
            std::cerr << "refined " << r.size() << " records into " << o.out << '\n';
        } else if (ev->parsed()) {
            const auto r = cmd_evaluate(c, o.ref, o.test, o.out.empty() ? c.paths.reports : fs::path(o.out));
            std::cout << format_metrics_table({{fs::path(o.test).filename().string(), r.report}});
            for (const auto& note : r.report.notes) std::cerr << "note: " << note << '\n';
        } else if (abl->parsed()) {
            const auto r = cmd_ablate(c, o.out.empty() ? c.paths.reports : fs::path(o.out));
            std::cout << format_ablation_table(r);
        }
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
