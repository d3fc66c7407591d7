#include "dmc/cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dmc/errors.hpp"
#include "dmc/motion_io.hpp"
#include "dmc/plot.hpp"

namespace dmc::cli {

using nlohmann::json;

namespace {

// Stream indices for derive_seed(seed, ...), one per independent use.
constexpr std::uint64_t kRegressorStream = 0x5e9e55;
constexpr std::uint64_t kAblationTestStream = 0xab1a7e;
constexpr std::uint64_t kAblationDistortStream = 0xd157;

template <typename T>
void read_field(const json& doc, const char* key, T& out) {
    if (!doc.contains(key)) return;
    try {
        out = doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("config.") + key + ": " + e.what());
    }
}

void write_text(const std::string& text, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write " + path.string());
    out << text;
    if (!out) throw UsageError("write failed: " + path.string());
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw UsageError("cannot create directory " + dir.string());
}

json spec_json(const DistortionSpec& s) { return {{"bias", s.bias}, {"sigma", s.sigma}}; }

Corpus read_clean_corpus(const fs::path& path) {
    if (!fs::exists(path)) throw UsageError("corpus not found: " + path.string());
    auto corpus = read_corpus(path);
    if (corpus.empty()) throw UsageError("corpus is empty: " + path.string());
    return corpus;
}

std::string toggles_name(const DistortionToggles& t) {
    if (t.bias && t.smoothing) return "B+S";
    return t.bias ? "B" : "S";
}

}  // namespace

// ------------------------------------------------------------------ config

void ExperimentConfig::validate(bool training) const {
    train.validate();
    calibrator.validate();
    discriminator.validate();
    contact.validate();
    if (corpus.n < 1) throw ParameterError("corpus.n must be >= 1");
    if (!(corpus.fps >= 10 && corpus.fps <= 60)) throw ParameterError("corpus.fps must be in [10, 60]");
    if (t_hat < 1) throw ParameterError("t_hat must be >= 1");
    if (pool_size < 2) throw ParameterError("pool_size must be >= 2");
    if (training && !distortion.bias && !distortion.smoothing) {
        throw ParameterError("training needs at least one distortion enabled");
    }
}

json to_json(const ExperimentConfig& c) {
    json train = to_json(c.train);
    train.erase("seed");
    return {{"paths",
             {{"corpus", c.paths.corpus.string()},
              {"checkpoints", c.paths.checkpoints.string()},
              {"reports", c.paths.reports.string()}}},
            {"corpus", {{"n", c.corpus.n}, {"fps", c.corpus.fps}, {"distribution", to_json(c.corpus.distribution)}}},
            {"train", train},
            {"calibrator", to_json(c.calibrator)},
            {"discriminator", to_json(c.discriminator)},
            {"contact", to_json(c.contact)},
            {"distortion", {{"bias_enabled", c.distortion.bias}, {"smoothing_enabled", c.distortion.smoothing}}},
            {"t_hat", c.t_hat},
            {"seed", c.seed},
            {"pool_size", c.pool_size},
            {"regressor_records", c.regressor_records},
            {"ablation_test_records", c.ablation_test_records}};
}

ExperimentConfig experiment_config_from_json(const json& doc) {
    ExperimentConfig c;
    if (!doc.is_object()) throw ParseError("experiment config: expected an object");
    if (doc.contains("paths")) {
        const auto& p = doc.at("paths");
        std::string s;
        if (p.contains("corpus")) read_field(p, "corpus", s), c.paths.corpus = s;
        if (p.contains("checkpoints")) read_field(p, "checkpoints", s), c.paths.checkpoints = s;
        if (p.contains("reports")) read_field(p, "reports", s), c.paths.reports = s;
    }
    if (doc.contains("corpus")) {
        const auto& k = doc.at("corpus");
        read_field(k, "n", c.corpus.n);
        read_field(k, "fps", c.corpus.fps);
        if (k.contains("distribution")) c.corpus.distribution = param_distribution_from_json(k.at("distribution"));
    }
    read_field(doc, "seed", c.seed);
    if (doc.contains("train")) c.train = train_config_from_json(doc.at("train"));
    c.train.seed = c.seed;
    if (doc.contains("calibrator")) c.calibrator = calibrator_config_from_json(doc.at("calibrator"));
    if (doc.contains("discriminator")) c.discriminator = discriminator_config_from_json(doc.at("discriminator"));
    if (doc.contains("contact")) c.contact = contact_params_from_json(doc.at("contact"));
    if (doc.contains("distortion")) {
        read_field(doc.at("distortion"), "bias_enabled", c.distortion.bias);
        read_field(doc.at("distortion"), "smoothing_enabled", c.distortion.smoothing);
    }
    read_field(doc, "t_hat", c.t_hat);
    read_field(doc, "pool_size", c.pool_size);
    read_field(doc, "regressor_records", c.regressor_records);
    read_field(doc, "ablation_test_records", c.ablation_test_records);
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) { return experiment_config_from_json(read_json_file(path)); }

ExperimentConfig apply_overrides(ExperimentConfig c, const Overrides& o) {
    if (o.bias_only && o.smoothing_only) throw UsageError("--bias-only and --smoothing-only are exclusive");
    if (o.seed) c.seed = *o.seed;
    c.train.seed = c.seed;
    if (o.strategy) c.train.strategy = *o.strategy;
    if (o.t_hat) c.t_hat = *o.t_hat;
    if (o.bias_only) c.distortion = {true, false};
    if (o.smoothing_only) c.distortion = {false, true};
    c.validate();
    return c;
}

// ---------------------------------------------------------------- generate

GenerateResult cmd_generate(const ExperimentConfig& c, const fs::path& out) {
    c.validate();
    ensure_directory(out);
    for (const auto& entry : fs::directory_iterator(out)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind("record_", 0) == 0 && entry.path().extension() == ".json") {
            fs::remove(entry.path());
        }
    }
    const auto corpus = generate_corpus(c.corpus.n, c.corpus.distribution, c.corpus.fps, c.seed);
    write_corpus(corpus, out);

    GenerateResult result{out, {}, out / "manifest.json"};
    json records = json::array();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        std::ostringstream name;
        name << "record_" << std::setw(5) << std::setfill('0') << i << ".json";
        result.files.push_back(out / name.str());
        records.push_back({{"file", name.str()}, {"params", to_json(corpus_params(c.corpus.distribution, c.seed, i))}});
    }
    write_json_file({{"format", "dmc-corpus-manifest"},
                     {"seed", c.seed},
                     {"n", c.corpus.n},
                     {"fps", c.corpus.fps},
                     {"distribution", to_json(c.corpus.distribution)},
                     {"records", records}},
                    result.manifest);
    return result;
}

// ----------------------------------------------------------------- distort

fs::path distortion_sidecar_path(const fs::path& out) {
    if (out.extension() == ".jsonl") return fs::path(out.string() + ".distortion.json");
    return out / "distortion_specs.json";
}

DistortResult cmd_distort(const ExperimentConfig& c, const fs::path& in, const fs::path& out,
                          const DistortOptions& options) {
    c.validate(!options.bias && !options.sigma);
    auto corpus = read_clean_corpus(in);
    DistortResult result{out, distortion_sidecar_path(out), {}};
    json specs = json::array();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        Rng rng(derive_seed(c.seed, i));
        auto spec = sample_distortion(rng, c.distortion);
        if (options.bias) spec.bias = *options.bias;
        if (options.sigma) spec.sigma = *options.sigma;
        corpus[i].motion = apply_distortion(corpus[i].motion, spec);
        corpus[i].provenance = Provenance::distorted;
        result.specs.push_back(spec);
        specs.push_back(spec_json(spec));
    }
    if (out.extension() == ".jsonl") {
        if (out.has_parent_path()) ensure_directory(out.parent_path());
    } else {
        ensure_directory(out);
    }
    write_corpus(corpus, out);
    write_json_file({{"format", "dmc-distortion-specs"},
                     {"seed", c.seed},
                     {"toggles", {{"bias_enabled", c.distortion.bias}, {"smoothing_enabled", c.distortion.smoothing}}},
                     {"specs", specs}},
                    result.sidecar);
    return result;
}

std::vector<DistortionSpec> read_distortion_sidecar(const fs::path& path) {
    const auto doc = read_json_file(path);
    std::vector<DistortionSpec> out;
    try {
        for (const auto& s : doc.at("specs")) out.push_back({s.at("bias").get<double>(), s.at("sigma").get<double>()});
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return out;
}

// ------------------------------------------------------------------- train

TrainOutputs cmd_train(const ExperimentConfig& c, const fs::path& corpus_path) {
    c.validate(true);
    const auto corpus = read_clean_corpus(corpus_path);
    ensure_directory(c.paths.checkpoints);
    ensure_directory(c.paths.reports);

    TrainOutputs out{train(corpus, c.train, c.calibrator, c.discriminator, c.distortion),
                     c.paths.checkpoints / "calibrator.json",
                     std::nullopt,
                     c.paths.reports / "train_report.jsonl",
                     c.paths.reports / "train_summary.json"};
    save_checkpoint(out.result.model, out.checkpoint);
    if (out.result.discriminator) {
        out.discriminator_checkpoint = c.paths.checkpoints / "discriminator.json";
        save_checkpoint(*out.result.discriminator, *out.discriminator_checkpoint);
    }
    out.result.report.checkpoint_path = out.checkpoint.string();

    std::ostringstream lines;
    for (const auto& e : out.result.report.epochs) lines << to_json(e).dump() << '\n';
    write_text(lines.str(), out.report_jsonl);
    write_json_file(summary_json(out.result.report), out.summary);
    return out;
}

// ------------------------------------------------------------------ refine

Corpus cmd_refine(const ExperimentConfig& c, const fs::path& checkpoint, const fs::path& in, const fs::path& out,
                  const RefineOptions& options) {
    const auto model = load_calibrator(checkpoint);
    const auto mode = model.config().mode;
    if (options.strategy) {
        const auto expected = configure_for(*options.strategy, model.config()).mode;
        if (expected != mode) {
            throw UsageError("strategy " + to_string(*options.strategy) + " does not match the " + to_string(mode) +
                             "-mode checkpoint " + checkpoint.string());
        }
    }
    if (options.t_hat && mode == CalibratorMode::direct) {
        throw UsageError("--t-hat applies to residual (denoise) checkpoints; " + checkpoint.string() +
                         " is a direct-mode model");
    }
    const int t_hat = options.t_hat.value_or(c.t_hat);
    if (t_hat < 1) throw UsageError("--t-hat must be >= 1");

    auto corpus = read_corpus(in);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto& rec = corpus[i];
        if (!rec.condition) throw UsageError("record " + std::to_string(i) + " has no condition vector");
        rec.motion = refine(model, *rec.condition, rec.motion, t_hat);
        rec.provenance = Provenance::refined;
    }
    if (out.extension() != ".jsonl") ensure_directory(out);
    write_corpus(corpus, out);
    return corpus;
}

// ---------------------------------------------------------------- evaluate

ConditionRegressor heldout_regressor(const ExperimentConfig& c) {
    const auto heldout = generate_corpus(std::max<std::size_t>(c.regressor_records, 2), c.corpus.distribution,
                                         c.corpus.fps, derive_seed(c.seed, kRegressorStream));
    return ConditionRegressor::fit(heldout, 1e-3, c.contact);
}

EvaluateOutputs cmd_evaluate(const ExperimentConfig& c, const fs::path& reference, const fs::path& test,
                             const fs::path& out) {
    c.validate();
    const auto ref = read_corpus(reference);
    const auto tst = read_corpus(test);
    if (tst.empty()) throw UsageError("test corpus is empty: " + test.string());
    ensure_directory(out);

    EvaluateOutputs result;
    const bool conditioned = std::all_of(tst.begin(), tst.end(), [](const auto& r) { return r.condition.has_value(); });
    if (conditioned && static_cast<Index>(tst.size()) >= c.pool_size) {
        result.report = evaluate_corpus(ref, tst, c.contact, heldout_regressor(c).embedder(), c.pool_size);
    } else {
        result.report = evaluate_corpus(ref, tst, c.contact, {}, c.pool_size);
        result.report.notes.push_back(conditioned ? "r_precision: fewer test records than pool_size"
                                                  : "r_precision: test records lack condition vectors");
    }

    result.report_json = out / "metrics.json";
    write_json_file(to_json(result.report), result.report_json);
    result.table = out / "metrics_table.txt";
    write_text(format_metrics_table({{test.filename().string(), result.report}}), result.table);

    std::vector<PlotSeries> series;
    if (!ref.empty()) series.push_back({"reference", ref.front().motion});
    series.push_back({"test", tst.front().motion});
    result.plots = {out / "height_trace.svg", out / "trajectory.svg"};
    write_text(height_trace_svg(series, c.contact), result.plots[0]);
    write_text(trajectory_svg(series), result.plots[1]);
    return result;
}

// ------------------------------------------------------------------ ablate

json to_json(const AblationReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"name", row.name},
                        {"bias_enabled", row.toggles.bias},
                        {"smoothing_enabled", row.toggles.smoothing},
                        {"skate_gap", row.skate_gap},
                        {"metrics", to_json(row.metrics)}});
    }
    json specs = json::array();
    for (const auto& s : r.test_specs) specs.push_back(spec_json(s));
    return {{"rows", rows}, {"distorted", to_json(r.distorted)}, {"clean", to_json(r.clean)}, {"test_specs", specs}};
}

std::string format_ablation_table(const AblationReport& r) {
    std::ostringstream os;
    os << std::left << std::setw(8) << "Train" << std::right << std::setw(12) << "Penetrate" << std::setw(12)
       << "Float" << std::setw(12) << "Skate" << std::setw(12) << "|dSkate|" << std::setw(12) << "Clip"
       << std::setw(12) << "MPJPE" << '\n';
    os << std::fixed;
    for (const auto& row : r.rows) {
        const auto& m = row.metrics;
        os << std::left << std::setw(8) << row.name << std::right << std::setprecision(4) << std::setw(12)
           << m.penetrate_mean << std::setw(12) << m.float_mean << std::setw(12) << m.skate_ratio << std::setw(12)
           << row.skate_gap << std::setw(12) << m.clip_mean << std::setprecision(2) << std::setw(12)
           << m.mpjpe.value_or(std::nan("")) << '\n';
    }
    return os.str();
}

AblationReport cmd_ablate(const ExperimentConfig& c, const fs::path& out) {
    c.validate();
    ensure_directory(out);
    const Corpus train_corpus = fs::exists(c.paths.corpus)
                                    ? read_clean_corpus(c.paths.corpus)
                                    : generate_corpus(c.corpus.n, c.corpus.distribution, c.corpus.fps, c.seed);
    const Corpus test_clean = generate_corpus(c.ablation_test_records, c.corpus.distribution, c.corpus.fps,
                                              derive_seed(c.seed, kAblationTestStream));

    AblationReport report;
    Corpus test_distorted = test_clean;
    for (std::size_t i = 0; i < test_distorted.size(); ++i) {
        Rng rng(derive_seed(derive_seed(c.seed, kAblationDistortStream), i));
        const auto spec = sample_distortion(rng, {true, true});
        test_distorted[i].motion = apply_distortion(test_clean[i].motion, spec);
        test_distorted[i].provenance = Provenance::distorted;
        report.test_specs.push_back(spec);
    }
    report.clean = evaluate_corpus(test_clean, test_clean, c.contact);
    report.distorted = evaluate_corpus(test_clean, test_distorted, c.contact);

    auto train_cfg = c.train;
    train_cfg.strategy = Strategy::denoise;
    for (const DistortionToggles toggles : {DistortionToggles{true, false}, DistortionToggles{false, true},
                                            DistortionToggles{true, true}}) {
        const auto trained = train(train_corpus, train_cfg, c.calibrator, c.discriminator, toggles);
        Corpus refined = test_distorted;
        for (std::size_t i = 0; i < refined.size(); ++i) {
            refined[i].motion = refine(trained.model, *refined[i].condition, refined[i].motion, c.t_hat);
            refined[i].provenance = Provenance::refined;
        }
        AblationRow row{toggles_name(toggles), toggles, evaluate_corpus(test_clean, refined, c.contact), 0.0};
        row.skate_gap = std::abs(row.metrics.skate_ratio - report.clean.skate_ratio);
        report.rows.push_back(std::move(row));
    }

    write_json_file(to_json(report), out / "ablation.json");
    write_text(format_ablation_table(report), out / "ablation_table.txt");
    return report;
}

}  // namespace dmc::cli
