#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "logprobe/baselines.hpp"
#include "logprobe/simulator.hpp"

namespace logprobe::eval {

// ==== ROC / AUC ====

struct RocResult {
    double auc = 0.0;
    // (fpr, tpr) swept over every pooled threshold, from (0, 0) to
    // (1, 1); both coordinates are non-decreasing along the curve.
    std::vector<std::pair<double, double>> curve;
    std::size_t n_null = 0;
    std::size_t n_alt = 0;
};

// Rank AUC of separating alternative from null statistics (larger
// statistic = "change").  Wins and ties are counted as integers and
// combined as (wins + 0.5 * ties) / (n_null * n_alt), so the value is
// exact rather than trapezoid-approximated.
RocResult roc_auc(const std::vector<double>& null_stats,
                  const std::vector<double>& alt_stats);

// ==== bootstrap confidence intervals ====

struct BootstrapInterval {
    double lo = 0.0;
    double hi = 0.0;
    bool degenerate = false; // every replicate was identical
};

// Percentile bootstrap for a mean: resample `values` with replacement
// `resamples` times (at least 100) and take the central `level` span
// of the replicate means.
BootstrapInterval bootstrap_ci(const std::vector<double>& values,
                               std::size_t resamples, double level,
                               std::uint64_t seed);

// Hierarchical percentile bootstrap for an AUC aggregated over model
// seeds: each replicate resamples seeds with replacement, resamples
// the null and alternative statistics within each chosen seed,
// recomputes the per-seed AUCs and averages them.
BootstrapInterval bootstrap_auc_ci(
    const std::vector<std::vector<double>>& null_by_seed,
    const std::vector<std::vector<double>>& alt_by_seed,
    std::size_t resamples, double level, std::uint64_t seed);

// ==== detection benchmark grid ====

enum class Method { lt, met, mmlu };

// Accepts "lt", "met", "mmlu".
Method parse_method(const std::string& name);
std::string method_name(Method m);

struct ExperimentPlan {
    std::vector<Method> methods{Method::lt};
    sim::VariantKind variant = sim::VariantKind::logit_shift;
    std::vector<double> ladder; // change magnitudes; 0 probes the null
    std::size_t trials = 200;   // test instances per side of each cell
    std::size_t n_per_test = 10; // samples (or sequences/runs) per group
    std::vector<std::uint64_t> seeds{17}; // one synthetic model per seed
    std::size_t vocab_size = sim::kDefaultVocab;
    double noise_sigma = sim::kDefaultNoiseSigma;
    std::size_t top_k = sim::kDefaultTopK;
    std::size_t met_length = kDefaultMetLength;
    std::size_t mmlu_prompts = 25;
    std::size_t bootstrap_resamples = 1000;
    double ci_level = 0.95;
};

struct BenchCell {
    Method method = Method::lt;
    double magnitude = 0.0;
    std::vector<double> auc_by_seed; // aligned with plan.seeds
    double auc_median = 0.0;
    BootstrapInterval ci;
};

struct BenchmarkResult {
    ExperimentPlan plan;
    std::vector<BenchCell> cells; // methods outer, ladder inner
};

// Full grid run under common random numbers: per (seed, method) the
// null statistics are computed once and reused for every rung, and
// the alternative draw seeds depend on (seed, trial) but not on the
// magnitude, so AUC differences along the ladder reflect the model
// change rather than resampling noise.  Deterministic in the plan.
BenchmarkResult run_benchmark(const ExperimentPlan& plan);

std::string benchmark_to_csv(const BenchmarkResult& r);
std::string benchmark_to_json(const BenchmarkResult& r);

// ==== prompt sensitivity ablation ====

// A probe prompt for the ablation: the label fixes the synthetic
// model identity (same label = same logit vectors), the sigma models
// how noisy that prompt's serving distribution is.
struct PromptSpec {
    std::string label;
    double noise_sigma = sim::kDefaultNoiseSigma;
};

struct AblationPlan {
    std::vector<PromptSpec> prompts; // at least 2
    std::size_t n_models = 5;        // model replicates to average over
    std::size_t trials = 200;
    std::size_t n_per_test = 10;
    sim::VariantSpec variant{sim::VariantKind::logit_shift, 0.25};
    std::size_t vocab_size = sim::kDefaultVocab;
    std::size_t top_k = sim::kDefaultTopK;
    std::uint64_t seed = 17;
};

struct AblationCell {
    std::string prompt;
    std::vector<double> auc_by_model;      // absolute detection AUC
    std::vector<double> relative_by_model; // auc minus per-model mean
    double mean_auc = 0.0;
    double mean_relative = 0.0;
};

struct AblationResult {
    std::vector<AblationCell> cells; // one per prompt, input order
    std::size_t n_models = 0;
};

// Detection AUC per (model replicate, prompt) with per-model mean
// centering: relative[m][q] = auc[m][q] - mean_q' auc[m][q'].  The
// relatives of each replicate sum to zero, and identically configured
// prompts score identically (all zero when every prompt matches).
AblationResult prompt_ablation(const AblationPlan& plan);

std::string ablation_to_csv(const AblationResult& r);

} // namespace logprobe::eval
