#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "logprobe/errors.hpp"
#include "logprobe/eval.hpp"
#include "logprobe/rng.hpp"

using namespace logprobe;
using namespace logprobe::eval;

namespace {

// Tie-aware rank AUC by exhaustive pair comparison, sharing only the
// final division with the library.
double auc_oracle(const std::vector<double>& nulls,
                  const std::vector<double>& alts) {
    std::uint64_t wins = 0;
    std::uint64_t ties = 0;
    for (const double a : alts) {
        for (const double n : nulls) {
            if (n < a) {
                ++wins;
            } else if (n == a) {
                ++ties;
            }
        }
    }
    return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) /
           (static_cast<double>(nulls.size()) *
            static_cast<double>(alts.size()));
}

// Quantized draws so ties occur within and across the two sets.
std::vector<double> grid_values(Rng& rng, std::size_t n, double offset) {
    std::vector<double> v(n);
    for (double& x : v) x = offset + 0.25 * static_cast<double>(rng.below(16));
    return v;
}

double trapezoid_area(const std::vector<std::pair<double, double>>& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += (curve[i].first - curve[i - 1].first) *
                (curve[i].second + curve[i - 1].second) * 0.5;
    }
    return area;
}

ExperimentPlan small_plan() {
    ExperimentPlan plan;
    plan.methods = {Method::lt};
    plan.ladder = {0.0, 4.0};
    plan.trials = 8;
    plan.n_per_test = 4;
    plan.seeds = {17, 18};
    plan.vocab_size = 16;
    plan.noise_sigma = 0.05;
    plan.top_k = 4;
    plan.met_length = 10;
    plan.mmlu_prompts = 4;
    plan.bootstrap_resamples = 100;
    plan.ci_level = 0.9;
    return plan;
}

} // namespace

// ==== rank AUC ====

TEST_CASE("roc_auc hand example with one tie pair per alt value") {
    const auto r = roc_auc({1.0, 2.0, 3.0}, {2.0, 3.0, 4.0});
    CHECK(r.auc == (6.0 + 0.5 * 2.0) / 9.0);
    CHECK(r.n_null == 3);
    CHECK(r.n_alt == 3);
}

TEST_CASE("roc_auc degenerate configurations") {
    CHECK(roc_auc({1.0, 1.0}, {1.0, 1.0}).auc == 0.5);
    CHECK(roc_auc({1.0, 2.0}, {5.0, 6.0}).auc == 1.0);
    CHECK(roc_auc({5.0, 6.0}, {1.0, 2.0}).auc == 0.0);
    CHECK_THROWS_AS(roc_auc({}, {1.0}), InvalidInput);
    CHECK_THROWS_AS(roc_auc({1.0}, {}), InvalidInput);
}

TEST_CASE("roc_auc equals the exhaustive pair count exactly") {
    Rng rng(401);
    for (int inst = 0; inst < 20; ++inst) {
        const auto nulls = grid_values(rng, 37, 0.0);
        const auto alts = grid_values(rng, 23, 0.5);
        CHECK(roc_auc(nulls, alts).auc == auc_oracle(nulls, alts));
    }
}

TEST_CASE("the curve is a monotone staircase from (0,0) to (1,1)") {
    Rng rng(402);
    const auto nulls = grid_values(rng, 25, 0.0);
    const auto alts = grid_values(rng, 40, 0.75);
    const auto r = roc_auc(nulls, alts);
    REQUIRE(r.curve.size() >= 2);
    CHECK(r.curve.front() == std::pair{0.0, 0.0});
    CHECK(r.curve.back() == std::pair{1.0, 1.0});
    for (std::size_t i = 1; i < r.curve.size(); ++i) {
        CHECK(r.curve[i].first >= r.curve[i - 1].first);
        CHECK(r.curve[i].second >= r.curve[i - 1].second);
    }
    for (const auto& [fpr, tpr] : r.curve) {
        CHECK(fpr >= 0.0);
        CHECK(fpr <= 1.0);
        CHECK(tpr >= 0.0);
        CHECK(tpr <= 1.0);
    }
    // With half-credit ties, the trapezoid under the curve is the AUC.
    CHECK(trapezoid_area(r.curve) == doctest::Approx(r.auc).epsilon(1e-12));
}

TEST_CASE("roc_auc is invariant under increasing affine transforms") {
    Rng rng(403);
    const auto nulls = grid_values(rng, 30, 0.0);
    const auto alts = grid_values(rng, 30, 0.25);
    auto tn = nulls;
    auto ta = alts;
    for (double& x : tn) x = 2.0 * x + 3.0;
    for (double& x : ta) x = 2.0 * x + 3.0;
    CHECK(roc_auc(tn, ta).auc == roc_auc(nulls, alts).auc);
}

// ==== bootstrap ====

TEST_CASE("bootstrap_ci on constant data is the degenerate point interval") {
    const std::vector<double> values(12, 2.5);
    const auto ci = bootstrap_ci(values, 200, 0.95, 7);
    CHECK(ci.lo == 2.5);
    CHECK(ci.hi == 2.5);
    CHECK(ci.degenerate);
}

TEST_CASE("bootstrap_ci brackets the sample mean") {
    Rng rng(404);
    std::vector<double> values;
    for (int i = 0; i < 40; ++i) values.push_back(10.0 + 0.1 * rng.gaussian());
    double mean = 0.0;
    for (const double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    const auto ci = bootstrap_ci(values, 1000, 0.95, 11);
    CHECK(ci.lo <= mean);
    CHECK(ci.hi >= mean);
    CHECK(ci.lo < ci.hi);
    CHECK_FALSE(ci.degenerate);
}

TEST_CASE("bootstrap_ci validates its arguments") {
    const std::vector<double> values{1.0, 2.0};
    CHECK_THROWS_AS(bootstrap_ci({}, 200, 0.95, 1), InvalidInput);
    CHECK_THROWS_AS(bootstrap_ci(values, 99, 0.95, 1), InvalidInput);
    CHECK_THROWS_AS(bootstrap_ci(values, 200, 0.0, 1), InvalidInput);
    CHECK_THROWS_AS(bootstrap_ci(values, 200, 1.0, 1), InvalidInput);
}

TEST_CASE("bootstrap_ci covers the true mean at roughly the nominal rate") {
    // 100 pinned replications of n = 30 standard normals; the 95%
    // interval should cover zero in at least ~90 of them.
    int covered = 0;
    for (int rep = 0; rep < 100; ++rep) {
        Rng rng(derive_seed(405, rep));
        std::vector<double> values;
        for (int i = 0; i < 30; ++i) values.push_back(rng.gaussian());
        const auto ci =
            bootstrap_ci(values, 500, 0.95, derive_seed(406, rep));
        if (ci.lo <= 0.0 && 0.0 <= ci.hi) ++covered;
    }
    CHECK(covered >= 88);
}

TEST_CASE("bootstrap_auc_ci is degenerate under full separation") {
    const std::vector<std::vector<double>> nulls{{1.0, 2.0}, {1.5, 2.5}};
    const std::vector<std::vector<double>> alts{{5.0, 6.0}, {7.0, 8.0}};
    const auto ci = bootstrap_auc_ci(nulls, alts, 200, 0.95, 3);
    CHECK(ci.lo == 1.0);
    CHECK(ci.hi == 1.0);
    CHECK(ci.degenerate);
}

TEST_CASE("bootstrap_auc_ci stays inside [0, 1] and validates") {
    Rng rng(407);
    std::vector<std::vector<double>> nulls(3), alts(3);
    for (int g = 0; g < 3; ++g) {
        nulls[g] = grid_values(rng, 12, 0.0);
        alts[g] = grid_values(rng, 12, 0.5);
    }
    const auto ci = bootstrap_auc_ci(nulls, alts, 300, 0.9, 5);
    CHECK(ci.lo >= 0.0);
    CHECK(ci.hi <= 1.0);
    CHECK(ci.lo <= ci.hi);

    CHECK_THROWS_AS(bootstrap_auc_ci({}, {}, 200, 0.9, 1), InvalidInput);
    CHECK_THROWS_AS(bootstrap_auc_ci(nulls, {alts[0]}, 200, 0.9, 1),
                    InvalidInput);
    CHECK_THROWS_AS(bootstrap_auc_ci({{}}, {{1.0}}, 200, 0.9, 1),
                    InvalidInput);
    CHECK_THROWS_AS(bootstrap_auc_ci(nulls, alts, 99, 0.9, 1), InvalidInput);
    CHECK_THROWS_AS(bootstrap_auc_ci(nulls, alts, 200, 1.5, 1), InvalidInput);
}

// ==== methods and plans ====

TEST_CASE("method names round-trip") {
    for (const Method m : {Method::lt, Method::met, Method::mmlu}) {
        CHECK(parse_method(method_name(m)) == m);
    }
    CHECK_THROWS_AS(parse_method("bogus"), InvalidInput);
}

TEST_CASE("benchmark plans are validated") {
    auto plan = small_plan();
    plan.trials = 1;
    CHECK_THROWS_AS(run_benchmark(plan), InvalidInput);
    plan = small_plan();
    plan.n_per_test = 1;
    CHECK_THROWS_AS(run_benchmark(plan), InvalidInput);
    plan = small_plan();
    plan.ladder.clear();
    CHECK_THROWS_AS(run_benchmark(plan), InvalidInput);
    plan = small_plan();
    plan.methods.clear();
    CHECK_THROWS_AS(run_benchmark(plan), InvalidInput);
    plan = small_plan();
    plan.seeds.clear();
    CHECK_THROWS_AS(run_benchmark(plan), InvalidInput);
    plan = small_plan();
    plan.methods = {Method::met};
    plan.met_length = 0;
    CHECK_THROWS_AS(run_benchmark(plan), InvalidInput);
    plan = small_plan();
    plan.methods = {Method::mmlu};
    plan.mmlu_prompts = 0;
    CHECK_THROWS_AS(run_benchmark(plan), InvalidInput);
    plan = small_plan();
    plan.noise_sigma = -0.1;
    CHECK_THROWS_AS(run_benchmark(plan), InvalidInput);
}

// ==== benchmark ====

TEST_CASE("run_benchmark separates a strong shift from the null rung") {
    const auto result = run_benchmark(small_plan());
    REQUIRE(result.cells.size() == 2);
    const auto& null_cell = result.cells[0];
    const auto& alt_cell = result.cells[1];
    CHECK(null_cell.magnitude == 0.0);
    CHECK(alt_cell.magnitude == 4.0);
    REQUIRE(null_cell.auc_by_seed.size() == 2);
    CHECK(alt_cell.auc_median == 1.0);
    CHECK(null_cell.auc_median > 0.15);
    CHECK(null_cell.auc_median < 0.85);
    for (const auto& cell : result.cells) {
        CHECK(cell.ci.lo <= cell.auc_median);
        CHECK(cell.ci.hi >= cell.ci.lo);
    }
}

TEST_CASE("run_benchmark is bit-reproducible") {
    auto plan = small_plan();
    plan.methods = {Method::lt, Method::met, Method::mmlu};
    const auto r1 = run_benchmark(plan);
    const auto r2 = run_benchmark(plan);
    CHECK(benchmark_to_csv(r1) == benchmark_to_csv(r2));
    CHECK(benchmark_to_json(r1) == benchmark_to_json(r2));
    REQUIRE(r1.cells.size() == 6); // method-major, ladder inner
    CHECK(r1.cells[0].method == Method::lt);
    CHECK(r1.cells[2].method == Method::met);
    CHECK(r1.cells[4].method == Method::mmlu);
    CHECK(r1.cells[4].magnitude == 0.0);
    CHECK(r1.cells[5].magnitude == 4.0);
}

TEST_CASE("alt draws use common random numbers across ladder rungs") {
    auto plan = small_plan();
    plan.ladder = {0.5};
    const auto lone = run_benchmark(plan);
    plan.ladder = {0.25, 0.5};
    const auto both = run_benchmark(plan);
    REQUIRE(both.cells.size() == 2);
    CHECK(both.cells[1].auc_by_seed == lone.cells[0].auc_by_seed);
    CHECK(both.cells[1].auc_median == lone.cells[0].auc_median);
}

TEST_CASE("benchmark serializations carry every cell") {
    const auto result = run_benchmark(small_plan());
    const auto csv = benchmark_to_csv(result);
    CHECK(csv.rfind("method,magnitude,auc_median,ci_lo,ci_hi,degenerate,"
                    "auc_seed17,auc_seed18\n", 0) == 0);
    std::size_t lines = 0;
    for (const char c : csv) {
        if (c == '\n') ++lines;
    }
    CHECK(lines == 1 + result.cells.size());

    const auto j = nlohmann::json::parse(benchmark_to_json(result));
    CHECK(j["seeds"] == std::vector<std::uint64_t>{17, 18});
    CHECK(j["variant"] == "logit-shift");
    REQUIRE(j["cells"].size() == result.cells.size());
    CHECK(j["cells"][0]["method"] == "lt");
    CHECK(j["cells"][1]["auc_median"] == result.cells[1].auc_median);
}

// ==== prompt ablation ====

TEST_CASE("identical prompt specs produce identical ablation columns") {
    AblationPlan plan;
    plan.prompts = {{"alpha", 0.05}, {"beta", 0.05}, {"alpha", 0.05}};
    plan.n_models = 3;
    plan.trials = 6;
    plan.n_per_test = 4;
    plan.variant = {sim::VariantKind::logit_shift, 0.25};
    plan.vocab_size = 16;
    plan.top_k = 4;
    plan.seed = 17;
    const auto result = prompt_ablation(plan);
    REQUIRE(result.cells.size() == 3);
    CHECK(result.cells[0].auc_by_model == result.cells[2].auc_by_model);
    CHECK(result.cells[0].mean_auc == result.cells[2].mean_auc);
    CHECK(result.cells[0].prompt == "alpha");
    CHECK(result.cells[1].prompt == "beta");

    SUBCASE("per-model relative scores center to zero") {
        for (std::size_t m = 0; m < plan.n_models; ++m) {
            double sum = 0.0;
            for (const auto& cell : result.cells)
                sum += cell.relative_by_model[m];
            CHECK(sum == doctest::Approx(0.0).epsilon(1e-12));
        }
    }
    SUBCASE("reruns are bit-identical") {
        const auto again = prompt_ablation(plan);
        CHECK(ablation_to_csv(again) == ablation_to_csv(result));
    }
}

TEST_CASE("a zero-noise prompt detects any shift perfectly") {
    AblationPlan plan;
    plan.prompts = {{"silent", 0.0}, {"loud", 1.0}};
    plan.n_models = 2;
    plan.trials = 6;
    plan.n_per_test = 4;
    plan.variant = {sim::VariantKind::logit_shift, 0.25};
    plan.vocab_size = 16;
    plan.top_k = 4;
    plan.seed = 23;
    const auto result = prompt_ablation(plan);
    REQUIRE(result.cells.size() == 2);
    for (const double a : result.cells[0].auc_by_model) CHECK(a == 1.0);
    CHECK(result.cells[0].mean_auc == 1.0);
    // Heavy per-draw noise drowns a small shift.
    CHECK(result.cells[1].mean_auc < result.cells[0].mean_auc);
}

TEST_CASE("ablation plans are validated") {
    AblationPlan plan;
    plan.prompts = {{"a", 0.05}, {"b", 0.05}};
    plan.n_models = 2;
    plan.trials = 4;
    plan.n_per_test = 4;
    plan.vocab_size = 16;
    plan.top_k = 4;

    auto bad = plan;
    bad.prompts = {{"a", 0.05}};
    CHECK_THROWS_AS(prompt_ablation(bad), InvalidInput);
    bad = plan;
    bad.prompts[1].label.clear();
    CHECK_THROWS_AS(prompt_ablation(bad), InvalidInput);
    bad = plan;
    bad.prompts[0].noise_sigma = -1.0;
    CHECK_THROWS_AS(prompt_ablation(bad), InvalidInput);
    bad = plan;
    bad.n_models = 0;
    CHECK_THROWS_AS(prompt_ablation(bad), InvalidInput);
    bad = plan;
    bad.trials = 1;
    CHECK_THROWS_AS(prompt_ablation(bad), InvalidInput);
    bad = plan;
    bad.n_per_test = 1;
    CHECK_THROWS_AS(prompt_ablation(bad), InvalidInput);
}

TEST_CASE("ablation csv lists prompts with per-model columns") {
    AblationPlan plan;
    plan.prompts = {{"p0", 0.05}, {"p1", 0.05}};
    plan.n_models = 2;
    plan.trials = 4;
    plan.n_per_test = 4;
    plan.vocab_size = 16;
    plan.top_k = 4;
    const auto csv = ablation_to_csv(prompt_ablation(plan));
    CHECK(csv.rfind("prompt,mean_auc,mean_relative,auc_m0,auc_m1\n", 0) == 0);
    CHECK(csv.find("\np0,") != std::string::npos);
    CHECK(csv.find("\np1,") != std::string::npos);
}
