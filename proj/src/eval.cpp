#include "logprobe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "json.hpp"

#include "logprobe/errors.hpp"
#include "logprobe/rng.hpp"
#include "logprobe/stats.hpp"

namespace logprobe::eval {

namespace {

// Draw-seed streams inside one (model seed, method) lane.  Null trials
// use stream indices 2t / 2t+1, alternative trials the same pair
// offset by kAltStream; the offset is magnitude-independent, which is
// what makes the ladder comparison common-random-numbers.
constexpr std::uint64_t kAltStream = 1ULL << 30;
constexpr std::uint64_t kModelStream = 11;
constexpr std::uint64_t kQuestionStream = 600;
constexpr std::uint64_t kCellCiStream = 9000;
constexpr std::uint64_t kAblationModelStream = 101;

double mean_of(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Linear-interpolated quantile of an ascending-sorted vector.
double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

BootstrapInterval interval_from_replicates(std::vector<double> reps,
                                           double level) {
    std::sort(reps.begin(), reps.end());
    const double alpha = 1.0 - level;
    BootstrapInterval out;
    out.lo = quantile_sorted(reps, alpha / 2.0);
    out.hi = quantile_sorted(reps, 1.0 - alpha / 2.0);
    out.degenerate = reps.front() == reps.back();
    return out;
}

// Exact rank AUC; the (wins + 0.5 * ties) / (n * m) form is the
// contract every consumer (and the brute-force cross-check in the
// tests) reproduces bit-for-bit.
double auc_value(std::vector<double> null_stats,
                 const std::vector<double>& alt_stats) {
    std::sort(null_stats.begin(), null_stats.end());
    std::uint64_t wins = 0;
    std::uint64_t ties = 0;
    for (double a : alt_stats) {
        const auto lo =
            std::lower_bound(null_stats.begin(), null_stats.end(), a);
        const auto hi = std::upper_bound(lo, null_stats.end(), a);
        wins += static_cast<std::uint64_t>(lo - null_stats.begin());
        ties += static_cast<std::uint64_t>(hi - lo);
    }
    return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) /
           (static_cast<double>(null_stats.size()) *
            static_cast<double>(alt_stats.size()));
}

void check_level(double level) {
    if (!(level > 0.0 && level < 1.0))
        throw InvalidInput("bootstrap: level must lie strictly in (0, 1)");
}

double lt_stat_pair(const SampleSet& a, const SampleSet& b) {
    const auto tokens = token_union(a, b);
    return lt_statistic(to_matrix(a, tokens), to_matrix(b, tokens));
}

// One stream of `trials` statistics; group A is drawn from `left`,
// group B from `right` (left == right gives a null stream).
std::vector<double> lt_stream(const ExperimentPlan& plan,
                              const sim::SyntheticModel& left,
                              const sim::SyntheticModel& right,
                              std::uint64_t seed, std::uint64_t base) {
    std::vector<double> out;
    out.reserve(plan.trials);
    for (std::size_t t = 0; t < plan.trials; ++t) {
        const auto a = sim::draw_sample_set(left, plan.n_per_test,
                                            derive_seed(seed, base + 2 * t));
        const auto b = sim::draw_sample_set(
            right, plan.n_per_test, derive_seed(seed, base + 2 * t + 1));
        out.push_back(lt_stat_pair(a, b));
    }
    return out;
}

std::vector<double> met_stream(const ExperimentPlan& plan,
                               const sim::SyntheticModel& left,
                               const sim::SyntheticModel& right,
                               std::uint64_t seed, std::uint64_t base) {
    std::vector<double> out;
    out.reserve(plan.trials);
    for (std::size_t t = 0; t < plan.trials; ++t) {
        const auto x =
            sim::draw_sequences(left, plan.n_per_test, plan.met_length,
                                derive_seed(seed, base + 2 * t));
        const auto y =
            sim::draw_sequences(right, plan.n_per_test, plan.met_length,
                                derive_seed(seed, base + 2 * t + 1));
        out.push_back(mmd_statistic(x, y, plan.met_length));
    }
    return out;
}

// MMLU emulation: one small synthetic model per question, the gold
// answer being that question's highest base logit.  A run answers a
// question by sampling a single token.
struct MmluSetup {
    std::vector<sim::SyntheticModel> question_models;
    std::vector<std::string> gold;
    std::vector<std::string> prompt_ids;
};

MmluSetup make_mmlu_setup(const ExperimentPlan& plan, std::uint64_t seed) {
    MmluSetup s;
    s.question_models.reserve(plan.mmlu_prompts);
    for (std::size_t p = 0; p < plan.mmlu_prompts; ++p) {
        auto m = sim::make_random_model(plan.vocab_size, plan.noise_sigma,
                                        plan.top_k,
                                        derive_seed(seed, kQuestionStream + p));
        const auto best =
            std::max_element(m.base_logits.begin(), m.base_logits.end());
        s.gold.push_back(
            "t" + std::to_string(best - m.base_logits.begin()));
        s.prompt_ids.push_back("q" + std::to_string(p));
        s.question_models.push_back(std::move(m));
    }
    return s;
}

AccuracyMatrix draw_accuracy_matrix(
    const std::vector<sim::SyntheticModel>& models,
    const std::vector<std::string>& gold,
    const std::vector<std::string>& prompt_ids, std::size_t runs,
    std::uint64_t base_seed) {
    const std::size_t p_count = models.size();
    AccuracyMatrix m;
    m.values = Matrix(runs, p_count);
    m.prompts = prompt_ids;
    for (std::size_t j = 0; j < runs; ++j) {
        for (std::size_t p = 0; p < p_count; ++p) {
            const auto seq = sim::sample_token_sequence(
                models[p], 1, derive_seed(base_seed, j * p_count + p));
            m.values.at(j, p) = seq.front() == gold[p] ? 1.0 : 0.0;
        }
    }
    return m;
}

std::vector<double> mmlu_stream(
    const ExperimentPlan& plan, const MmluSetup& setup,
    const std::vector<sim::SyntheticModel>& right_models, std::uint64_t seed,
    std::uint64_t base) {
    std::vector<double> out;
    out.reserve(plan.trials);
    for (std::size_t t = 0; t < plan.trials; ++t) {
        const auto a = draw_accuracy_matrix(
            setup.question_models, setup.gold, setup.prompt_ids,
            plan.n_per_test, derive_seed(seed, base + 2 * t));
        const auto b = draw_accuracy_matrix(
            right_models, setup.gold, setup.prompt_ids, plan.n_per_test,
            derive_seed(seed, base + 2 * t + 1));
        out.push_back(mmlu_statistic(a, b));
    }
    return out;
}

void validate_plan(const ExperimentPlan& plan) {
    if (plan.methods.empty())
        throw InvalidInput("benchmark: no methods selected");
    if (plan.ladder.empty())
        throw InvalidInput("benchmark: empty magnitude ladder");
    if (plan.seeds.empty()) throw InvalidInput("benchmark: no seeds");
    if (plan.trials < 2)
        throw InvalidInput("benchmark: need at least 2 trials per cell");
    if (plan.n_per_test < 2)
        throw InvalidInput("benchmark: need at least 2 samples per group");
    if (plan.vocab_size == 0 || plan.top_k == 0)
        throw InvalidInput("benchmark: vocab_size and top_k must be positive");
    if (plan.noise_sigma < 0.0)
        throw InvalidInput("benchmark: noise_sigma must be non-negative");
    for (Method m : plan.methods) {
        if (m == Method::met && plan.met_length == 0)
            throw InvalidInput("benchmark: met_length must be positive");
        if (m == Method::mmlu && plan.mmlu_prompts == 0)
            throw InvalidInput("benchmark: mmlu_prompts must be positive");
    }
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace

RocResult roc_auc(const std::vector<double>& null_stats,
                  const std::vector<double>& alt_stats) {
    if (null_stats.empty() || alt_stats.empty())
        throw InvalidInput("roc_auc: both statistic sets must be non-empty");
    RocResult r;
    r.n_null = null_stats.size();
    r.n_alt = alt_stats.size();
    r.auc = auc_value(null_stats, alt_stats);

    std::vector<double> ns = null_stats;
    std::vector<double> as = alt_stats;
    std::sort(ns.begin(), ns.end());
    std::sort(as.begin(), as.end());
    std::vector<double> thresholds;
    thresholds.reserve(ns.size() + as.size());
    thresholds.insert(thresholds.end(), ns.begin(), ns.end());
    thresholds.insert(thresholds.end(), as.begin(), as.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                     thresholds.end());

    r.curve.reserve(thresholds.size() + 1);
    r.curve.emplace_back(0.0, 0.0);
    for (double th : thresholds) {
        const auto n_ge =
            ns.end() - std::lower_bound(ns.begin(), ns.end(), th);
        const auto a_ge =
            as.end() - std::lower_bound(as.begin(), as.end(), th);
        r.curve.emplace_back(
            static_cast<double>(n_ge) / static_cast<double>(ns.size()),
            static_cast<double>(a_ge) / static_cast<double>(as.size()));
    }
    return r;
}

BootstrapInterval bootstrap_ci(const std::vector<double>& values,
                               std::size_t resamples, double level,
                               std::uint64_t seed) {
    if (values.empty()) throw InvalidInput("bootstrap_ci: no values");
    if (resamples < 100)
        throw InvalidInput("bootstrap_ci: need at least 100 resamples");
    check_level(level);
    Rng rng(seed);
    const std::size_t n = values.size();
    std::vector<double> reps(resamples);
    for (std::size_t r = 0; r < resamples; ++r) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += values[rng.below(n)];
        reps[r] = sum / static_cast<double>(n);
    }
    return interval_from_replicates(std::move(reps), level);
}

BootstrapInterval bootstrap_auc_ci(
    const std::vector<std::vector<double>>& null_by_seed,
    const std::vector<std::vector<double>>& alt_by_seed,
    std::size_t resamples, double level, std::uint64_t seed) {
    if (null_by_seed.empty() || null_by_seed.size() != alt_by_seed.size())
        throw InvalidInput(
            "bootstrap_auc_ci: need matching non-empty per-seed groups");
    for (std::size_t g = 0; g < null_by_seed.size(); ++g)
        if (null_by_seed[g].empty() || alt_by_seed[g].empty())
            throw InvalidInput("bootstrap_auc_ci: empty statistic group");
    if (resamples < 100)
        throw InvalidInput("bootstrap_auc_ci: need at least 100 resamples");
    check_level(level);

    Rng rng(seed);
    const std::size_t g_count = null_by_seed.size();
    std::vector<double> reps(resamples);
    std::vector<double> null_rs;
    std::vector<double> alt_rs;
    for (std::size_t r = 0; r < resamples; ++r) {
        double sum = 0.0;
        for (std::size_t k = 0; k < g_count; ++k) {
            const std::size_t g = rng.below(g_count);
            const auto& nul = null_by_seed[g];
            const auto& alt = alt_by_seed[g];
            null_rs.clear();
            for (std::size_t i = 0; i < nul.size(); ++i)
                null_rs.push_back(nul[rng.below(nul.size())]);
            alt_rs.clear();
            for (std::size_t i = 0; i < alt.size(); ++i)
                alt_rs.push_back(alt[rng.below(alt.size())]);
            sum += auc_value(null_rs, alt_rs);
        }
        reps[r] = sum / static_cast<double>(g_count);
    }
    return interval_from_replicates(std::move(reps), level);
}

Method parse_method(const std::string& name) {
    if (name == "lt") return Method::lt;
    if (name == "met") return Method::met;
    if (name == "mmlu") return Method::mmlu;
    throw InvalidInput("unknown method: " + name);
}

std::string method_name(Method m) {
    switch (m) {
    case Method::lt: return "lt";
    case Method::met: return "met";
    case Method::mmlu: return "mmlu";
    }
    throw InvalidInput("unknown method enum value");
}

BenchmarkResult run_benchmark(const ExperimentPlan& plan) {
    validate_plan(plan);
    BenchmarkResult result;
    result.plan = plan;
    std::size_t cell_index = 0;
    const std::size_t g_count = plan.seeds.size();

    for (Method method : plan.methods) {
        std::vector<std::vector<double>> null_by_seed(g_count);
        std::vector<sim::SyntheticModel> models;
        std::vector<MmluSetup> setups;
        for (std::size_t si = 0; si < g_count; ++si) {
            const std::uint64_t s = plan.seeds[si];
            if (method == Method::mmlu) {
                setups.push_back(make_mmlu_setup(plan, s));
                null_by_seed[si] = mmlu_stream(
                    plan, setups[si], setups[si].question_models, s, 0);
            } else {
                models.push_back(sim::make_random_model(
                    plan.vocab_size, plan.noise_sigma, plan.top_k,
                    derive_seed(s, kModelStream)));
                null_by_seed[si] =
                    method == Method::lt
                        ? lt_stream(plan, models[si], models[si], s, 0)
                        : met_stream(plan, models[si], models[si], s, 0);
            }
        }

        for (double magnitude : plan.ladder) {
            BenchCell cell;
            cell.method = method;
            cell.magnitude = magnitude;
            const sim::VariantSpec spec{plan.variant, magnitude};
            std::vector<std::vector<double>> alt_by_seed(g_count);
            for (std::size_t si = 0; si < g_count; ++si) {
                const std::uint64_t s = plan.seeds[si];
                if (method == Method::mmlu) {
                    std::vector<sim::SyntheticModel> varied;
                    varied.reserve(setups[si].question_models.size());
                    for (const auto& qm : setups[si].question_models)
                        varied.push_back(sim::apply_variant(qm, spec));
                    alt_by_seed[si] =
                        mmlu_stream(plan, setups[si], varied, s, kAltStream);
                } else {
                    const auto variant = sim::apply_variant(models[si], spec);
                    alt_by_seed[si] =
                        method == Method::lt
                            ? lt_stream(plan, models[si], variant, s,
                                        kAltStream)
                            : met_stream(plan, models[si], variant, s,
                                         kAltStream);
                }
                cell.auc_by_seed.push_back(
                    auc_value(null_by_seed[si], alt_by_seed[si]));
            }
            cell.auc_median = median_of(cell.auc_by_seed);
            cell.ci = bootstrap_auc_ci(
                null_by_seed, alt_by_seed, plan.bootstrap_resamples,
                plan.ci_level,
                derive_seed(plan.seeds.front(), kCellCiStream + cell_index));
            ++cell_index;
            result.cells.push_back(std::move(cell));
        }
    }
    return result;
}

std::string benchmark_to_csv(const BenchmarkResult& r) {
    std::string out = "method,magnitude,auc_median,ci_lo,ci_hi,degenerate";
    for (std::uint64_t s : r.plan.seeds)
        out += ",auc_seed" + std::to_string(s);
    out += "\n";
    for (const auto& cell : r.cells) {
        out += method_name(cell.method);
        out += "," + fmt_double(cell.magnitude);
        out += "," + fmt_double(cell.auc_median);
        out += "," + fmt_double(cell.ci.lo);
        out += "," + fmt_double(cell.ci.hi);
        out += cell.ci.degenerate ? ",1" : ",0";
        for (double a : cell.auc_by_seed) out += "," + fmt_double(a);
        out += "\n";
    }
    return out;
}

std::string benchmark_to_json(const BenchmarkResult& r) {
    nlohmann::json j;
    j["variant"] = sim::variant_kind_name(r.plan.variant);
    j["trials"] = r.plan.trials;
    j["n_per_test"] = r.plan.n_per_test;
    j["seeds"] = r.plan.seeds;
    j["vocab_size"] = r.plan.vocab_size;
    j["noise_sigma"] = r.plan.noise_sigma;
    j["top_k"] = r.plan.top_k;
    j["ci_level"] = r.plan.ci_level;
    j["cells"] = nlohmann::json::array();
    for (const auto& cell : r.cells) {
        nlohmann::json c;
        c["method"] = method_name(cell.method);
        c["magnitude"] = cell.magnitude;
        c["auc_by_seed"] = cell.auc_by_seed;
        c["auc_median"] = cell.auc_median;
        c["ci"] = {{"lo", cell.ci.lo},
                   {"hi", cell.ci.hi},
                   {"degenerate", cell.ci.degenerate}};
        j["cells"].push_back(std::move(c));
    }
    return j.dump(2) + "\n";
}

AblationResult prompt_ablation(const AblationPlan& plan) {
    if (plan.prompts.size() < 2)
        throw InvalidInput("ablation: need at least 2 prompts");
    for (const auto& p : plan.prompts) {
        if (p.label.empty())
            throw InvalidInput("ablation: prompt labels must be non-empty");
        if (p.noise_sigma < 0.0)
            throw InvalidInput("ablation: noise_sigma must be non-negative");
    }
    if (plan.n_models == 0)
        throw InvalidInput("ablation: need at least 1 model replicate");
    if (plan.trials < 2)
        throw InvalidInput("ablation: need at least 2 trials");
    if (plan.n_per_test < 2)
        throw InvalidInput("ablation: need at least 2 samples per group");
    if (plan.vocab_size == 0 || plan.top_k == 0)
        throw InvalidInput("ablation: vocab_size and top_k must be positive");

    const std::size_t q_count = plan.prompts.size();
    std::vector<std::vector<double>> auc(plan.n_models,
                                         std::vector<double>(q_count, 0.0));
    for (std::size_t m = 0; m < plan.n_models; ++m) {
        for (std::size_t q = 0; q < q_count; ++q) {
            const auto& ps = plan.prompts[q];
            // The model seed mixes the replicate index with the prompt
            // label (not its position), so identical prompt specs get
            // identical models and identical draw streams.
            const std::uint64_t mseed =
                derive_seed(derive_seed(plan.seed, kAblationModelStream + m),
                            hash64(ps.label));
            const auto model = sim::make_random_model(
                plan.vocab_size, ps.noise_sigma, plan.top_k, mseed);
            const auto variant = sim::apply_variant(model, plan.variant);
            std::vector<double> null_stats;
            std::vector<double> alt_stats;
            null_stats.reserve(plan.trials);
            alt_stats.reserve(plan.trials);
            for (std::size_t t = 0; t < plan.trials; ++t) {
                const auto na = sim::draw_sample_set(
                    model, plan.n_per_test, derive_seed(mseed, 4 * t));
                const auto nb = sim::draw_sample_set(
                    model, plan.n_per_test, derive_seed(mseed, 4 * t + 1));
                null_stats.push_back(lt_stat_pair(na, nb));
                const auto aa = sim::draw_sample_set(
                    model, plan.n_per_test, derive_seed(mseed, 4 * t + 2));
                const auto ab = sim::draw_sample_set(
                    variant, plan.n_per_test, derive_seed(mseed, 4 * t + 3));
                alt_stats.push_back(lt_stat_pair(aa, ab));
            }
            auc[m][q] = auc_value(null_stats, alt_stats);
        }
    }

    AblationResult result;
    result.n_models = plan.n_models;
    result.cells.resize(q_count);
    std::vector<double> row_mean(plan.n_models, 0.0);
    for (std::size_t m = 0; m < plan.n_models; ++m) row_mean[m] = mean_of(auc[m]);
    for (std::size_t q = 0; q < q_count; ++q) {
        auto& cell = result.cells[q];
        cell.prompt = plan.prompts[q].label;
        for (std::size_t m = 0; m < plan.n_models; ++m) {
            cell.auc_by_model.push_back(auc[m][q]);
            cell.relative_by_model.push_back(auc[m][q] - row_mean[m]);
        }
        cell.mean_auc = mean_of(cell.auc_by_model);
        cell.mean_relative = mean_of(cell.relative_by_model);
    }
    return result;
}

std::string ablation_to_csv(const AblationResult& r) {
    std::string out = "prompt,mean_auc,mean_relative";
    for (std::size_t m = 0; m < r.n_models; ++m)
        out += ",auc_m" + std::to_string(m);
    out += "\n";
    for (const auto& cell : r.cells) {
        out += cell.prompt;
        out += "," + fmt_double(cell.mean_auc);
        out += "," + fmt_double(cell.mean_relative);
        for (double a : cell.auc_by_model) out += "," + fmt_double(a);
        out += "\n";
    }
    return out;
}

} // namespace logprobe::eval
