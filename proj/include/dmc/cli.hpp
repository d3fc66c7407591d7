#pragma once

// Command implementations behind the `dmc` executable. Every command reads
// an ExperimentConfig, writes its artifacts under the given paths and
// returns what it wrote, so tests can drive it without a subprocess.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dmc/datagen.hpp"
#include "dmc/distortion.hpp"
#include "dmc/metrics.hpp"
#include "dmc/model.hpp"
#include "dmc/training.hpp"

namespace dmc::cli {

namespace fs = std::filesystem;

struct CorpusSettings {
    std::size_t n = 200;
    double fps = 20.0;
    ParamDistribution distribution;
};

struct ExperimentConfig {
    struct Paths {
        fs::path corpus = "data/clean";
        fs::path checkpoints = "checkpoints";
        fs::path reports = "reports";
    } paths;
    CorpusSettings corpus;
    TrainConfig train;
    CalibratorConfig calibrator;
    DiscriminatorConfig discriminator;
    ContactParams contact;
    DistortionToggles distortion;
    int t_hat = 100;
    std::uint64_t seed = 0;
    Index pool_size = kDefaultPoolSize;
    std::size_t regressor_records = 512;  // held-out clips for the R-Precision encoder
    std::size_t ablation_test_records = 100;

    /// `training` adds the rule that at least one distortion is enabled.
    void validate(bool training = false) const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys keep defaults. The top-level seed also seeds training.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const fs::path& path);

/// Command-line overrides, applied on top of the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<Strategy> strategy;
    std::optional<int> t_hat;
    bool bias_only = false;
    bool smoothing_only = false;
};

ExperimentConfig apply_overrides(ExperimentConfig c, const Overrides& o);

// ----------------------------------------------------------------- commands

struct GenerateResult {
    fs::path directory;
    std::vector<fs::path> files;
    fs::path manifest;
};

/// Writes `corpus.n` clean records as record_NNNNN.json plus manifest.json.
GenerateResult cmd_generate(const ExperimentConfig& c, const fs::path& out);

struct DistortResult {
    fs::path output;
    fs::path sidecar;
    std::vector<DistortionSpec> specs;
};

/// Sidecar path: <dir>/distortion_specs.json for a directory output,
/// <file>.distortion.json for a .jsonl output.
fs::path distortion_sidecar_path(const fs::path& out);

/// Fixed values for `distort --bias/--sigma`; an unset field is sampled.
struct DistortOptions {
    std::optional<double> bias;
    std::optional<double> sigma;
};

/// Record i draws its spec from derive_seed(seed, i), honouring the toggles,
/// then any fixed field in `options` replaces the drawn value.
DistortResult cmd_distort(const ExperimentConfig& c, const fs::path& in, const fs::path& out,
                          const DistortOptions& options = {});

std::vector<DistortionSpec> read_distortion_sidecar(const fs::path& path);

struct TrainOutputs {
    TrainResult result;
    fs::path checkpoint;
    std::optional<fs::path> discriminator_checkpoint;
    fs::path report_jsonl;
    fs::path summary;
};

/// Trains on the clean corpus at `corpus`; writes <checkpoints>/calibrator.json
/// and the JSON-lines / summary report under <reports>.
TrainOutputs cmd_train(const ExperimentConfig& c, const fs::path& corpus);

struct RefineOptions {
    std::optional<int> t_hat;             // explicit --t-hat
    std::optional<Strategy> strategy;     // explicit --strategy, checked against the checkpoint
};

/// Residual checkpoints run refine_iterative with the configured T_hat,
/// direct ones a single pass. Passing --t-hat to a direct checkpoint, or a
/// strategy that does not match its mode, is a UsageError.
Corpus cmd_refine(const ExperimentConfig& c, const fs::path& checkpoint, const fs::path& in, const fs::path& out,
                  const RefineOptions& options = {});

struct EvaluateOutputs {
    MetricsReport report;
    fs::path report_json;
    fs::path table;
    std::vector<fs::path> plots;
};

/// Condition regressor fitted on a held-out generated corpus, used as the
/// motion encoder for R-Precision.
ConditionRegressor heldout_regressor(const ExperimentConfig& c);

/// Metrics of `test` against `reference`, written to `out`
/// (metrics.json, metrics_table.txt, height_trace.svg, trajectory.svg).
EvaluateOutputs cmd_evaluate(const ExperimentConfig& c, const fs::path& reference, const fs::path& test,
                             const fs::path& out);

struct AblationRow {
    std::string name;  // "B", "S", "B+S"
    DistortionToggles toggles;
    MetricsReport metrics;
    double skate_gap = 0;  // |skate(refined) - skate(clean)|
};

struct AblationReport {
    std::vector<AblationRow> rows;
    MetricsReport distorted;  // the shared test input, before refinement
    MetricsReport clean;
    std::vector<DistortionSpec> test_specs;
};

nlohmann::json to_json(const AblationReport& r);
std::string format_ablation_table(const AblationReport& r);

/// Trains the denoise strategy three times (bias only, smoothing only, both)
/// on the corpus at paths.corpus, or on a freshly generated one when that
/// path does not exist, and evaluates each on one held-out test set
/// distorted with both families. Writes ablation.json / ablation_table.txt
/// under `out`.
AblationReport cmd_ablate(const ExperimentConfig& c, const fs::path& out);

}  // namespace dmc::cli
