#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "logprobe/errors.hpp"
#include "logprobe/permute.hpp"
#include "logprobe/rng.hpp"
#include "logprobe/stats.hpp"
#include "logprobe/tokens.hpp"

using namespace logprobe;

namespace {

LogprobEntry mk(const std::string& text, double lp) {
    return LogprobEntry{text, std::nullopt, lp};
}

LogprobVector vec(std::initializer_list<std::pair<const char*, double>> init) {
    LogprobVector v;
    for (const auto& [t, lp] : init) v.push_back(mk(t, lp));
    return v;
}

// Random sample sets over a small shared token pool, for property
// checks.  Each sample keeps a random subset so imputation paths are
// exercised too.
SampleSet random_set(Rng& rng, std::size_t n, std::size_t pool,
                     std::size_t min_keep) {
    SampleSet set;
    for (std::size_t i = 0; i < n; ++i) {
        LogprobVector v;
        for (std::size_t t = 0; t < pool; ++t) {
            if (v.size() >= min_keep && rng.uniform01() < 0.3) continue;
            v.push_back(mk("tok" + std::to_string(t),
                           -0.1 - 5.0 * rng.uniform01()));
        }
        if (v.empty()) v.push_back(mk("tok0", -1.0));
        set.push_back(std::move(v));
    }
    return set;
}

// Full-coverage sets with logprobs on a 0.25 grid.  Every sum the test
// statistic forms is then exact in double arithmetic, so exact-path tie
// resolution cannot depend on which group came first.
SampleSet grid_set(Rng& rng, std::size_t n, std::size_t pool) {
    SampleSet set;
    for (std::size_t i = 0; i < n; ++i) {
        LogprobVector v;
        for (std::size_t t = 0; t < pool; ++t)
            v.push_back(mk("tok" + std::to_string(t),
                           -0.25 * static_cast<double>(1 + rng.below(16))));
        set.push_back(std::move(v));
    }
    return set;
}

} // namespace

TEST_CASE("token_key prefers bytes and text_only collapses it") {
    LogprobEntry composed{"e", std::vector<std::uint8_t>{0xC3, 0xA9}, -1.0};
    LogprobEntry decomposed{"e", std::vector<std::uint8_t>{0x65, 0xCC, 0x81},
                            -2.0};
    CHECK(token_key(composed) != token_key(decomposed));
    CHECK(token_key(composed, true) == token_key(decomposed, true));
    LogprobEntry bare{"e", std::nullopt, -3.0};
    CHECK(token_key(bare) == token_key(bare, true));
}

TEST_CASE("token_union sorts and deduplicates across both sets") {
    SampleSet a{vec({{"b", -1.0}, {"a", -2.0}})};
    SampleSet b{vec({{"c", -1.0}, {"a", -0.5}})};
    const auto u = token_union(a, b);
    REQUIRE(u.size() == 3);
    CHECK(u[0] == "t:a");
    CHECK(u[1] == "t:b");
    CHECK(u[2] == "t:c");
    CHECK(std::is_sorted(u.begin(), u.end()));
}

TEST_CASE("to_matrix imputes a sample's own minimum for missing tokens") {
    SampleSet set{vec({{"x", -1.0}, {"y", -2.0}}), vec({{"x", -1.5}})};
    const std::vector<std::string> tokens{"t:x", "t:y"};
    const auto m = to_matrix(set, tokens);
    REQUIRE(m.rows == 2);
    REQUIRE(m.cols == 2);
    CHECK(m.at(0, 0) == -1.0);
    CHECK(m.at(0, 1) == -2.0);
    CHECK(m.at(1, 0) == -1.5);
    CHECK(m.at(1, 1) == -1.5); // imputed with row 1's minimum
}

TEST_CASE("lt_statistic matches hand-computed values") {
    SUBCASE("two tokens, single samples") {
        SampleSet a{vec({{"x", -1.0}, {"y", -2.0}})};
        SampleSet b{vec({{"x", -1.5}, {"y", -2.5}})};
        const auto tokens = token_union(a, b);
        const double s = lt_statistic(to_matrix(a, tokens), to_matrix(b, tokens));
        CHECK(s == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("imputation feeds the statistic") {
        SampleSet a{vec({{"x", -1.0}, {"y", -2.0}})};
        SampleSet b{vec({{"x", -1.5}})}; // y imputed to -1.5
        const auto tokens = token_union(a, b);
        const double s = lt_statistic(to_matrix(a, tokens), to_matrix(b, tokens));
        CHECK(s == doctest::Approx(0.5).epsilon(1e-15)); // (0.5 + 0.5) / 2
    }
    SUBCASE("column means average over samples") {
        SampleSet a{vec({{"x", -1.0}}), vec({{"x", -3.0}})}; // mean -2
        SampleSet b{vec({{"x", -4.0}}), vec({{"x", -6.0}})}; // mean -5
        const auto tokens = token_union(a, b);
        const double s = lt_statistic(to_matrix(a, tokens), to_matrix(b, tokens));
        CHECK(s == doctest::Approx(3.0).epsilon(1e-15));
    }
}

TEST_CASE("exact permutation test closed form: 2 + 2 identical rows") {
    SampleSet a{vec({{"x", -1.0}, {"y", -1.0}}), vec({{"x", -1.0}, {"y", -1.0}})};
    SampleSet b{vec({{"x", -9.0}, {"y", -9.0}}), vec({{"x", -9.0}, {"y", -9.0}})};
    const auto r = exact_permutation_test(a, b);
    CHECK(r.exact);
    CHECK(r.n_permutations == 6); // C(4, 2)
    CHECK(r.statistic == doctest::Approx(8.0).epsilon(1e-15));
    // Only the identity split and its mirror reach S = 8; mixed splits
    // average both groups to the pooled mean and give S = 0.
    CHECK(r.p_value == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("exact test with N = 1 is legal and powerless") {
    SampleSet a{vec({{"x", -1.0}})};
    SampleSet b{vec({{"x", -9.0}})};
    const auto r = exact_permutation_test(a, b);
    CHECK(r.exact);
    CHECK(r.n_permutations == 2);
    // Swapping two single samples mirrors the statistic, so both splits
    // tie with the observed value.
    CHECK(r.p_value == 1.0);
}

TEST_CASE("identical groups give statistic 0 and p = 1") {
    SampleSet a{vec({{"x", -1.0}, {"y", -2.0}}), vec({{"x", -1.2}, {"y", -2.2}})};
    const auto sampled = permutation_test(a, a, 500, 11);
    CHECK(sampled.statistic == 0.0);
    CHECK(sampled.p_value == 1.0);
    const auto exact = exact_permutation_test(a, a);
    CHECK(exact.statistic == 0.0);
    CHECK(exact.p_value == 1.0);
}

TEST_CASE("statistic is symmetric in the group order") {
    Rng rng(7);
    const auto a = grid_set(rng, 4, 6);
    const auto b = grid_set(rng, 4, 6);
    const auto rab = exact_permutation_test(a, b);
    const auto rba = exact_permutation_test(b, a);
    CHECK(rab.statistic == rba.statistic);
    CHECK(rab.p_value == rba.p_value);
}

TEST_CASE("shifting both groups by one constant leaves the result alone") {
    Rng rng(19);
    auto a = random_set(rng, 3, 5, 2);
    auto b = random_set(rng, 3, 5, 2);
    const auto before = exact_permutation_test(a, b);
    for (auto* set : {&a, &b})
        for (auto& sample : *set)
            for (auto& e : sample) e.logprob -= 2.5;
    const auto after = exact_permutation_test(a, b);
    CHECK(after.statistic == doctest::Approx(before.statistic).epsilon(1e-12));
    CHECK(after.p_value == before.p_value);
}

TEST_CASE("sampled test is deterministic in the seed") {
    Rng rng(23);
    const auto a = random_set(rng, 5, 8, 3);
    const auto b = random_set(rng, 5, 8, 3);
    const auto r1 = permutation_test(a, b, 2000, 42);
    const auto r2 = permutation_test(a, b, 2000, 42);
    CHECK(r1.statistic == r2.statistic);
    CHECK(r1.p_value == r2.p_value);
    CHECK(r1.seed == 42);
    CHECK(r1.n_permutations == 2000);
    CHECK_FALSE(r1.exact);
}

TEST_CASE("sampled p approaches the exact p") {
    Rng rng(31);
    for (int inst = 0; inst < 5; ++inst) {
        const auto a = random_set(rng, 3, 6, 2);
        const auto b = random_set(rng, 3, 6, 2);
        const auto exact = exact_permutation_test(a, b);
        const auto sampled =
            permutation_test(a, b, 20000, 1000 + inst);
        CHECK(std::abs(sampled.p_value - exact.p_value) < 0.02);
    }
}

TEST_CASE("result carries the aligned token summary") {
    SampleSet a{vec({{"x", -1.0}, {"y", -2.0}}), vec({{"x", -1.0}, {"y", -2.0}})};
    SampleSet b{vec({{"x", -3.0}}), vec({{"x", -3.0}})};
    const auto r = permutation_test(a, b, 100, 5);
    CHECK(r.n_samples == 2);
    CHECK(r.n_tokens == 2);
    REQUIRE(r.tokens.size() == 2);
    REQUIRE(r.mean_a.size() == 2);
    REQUIRE(r.mean_b.size() == 2);
    CHECK(r.tokens[0] == "t:x");
    CHECK(r.mean_a[0] == doctest::Approx(-1.0));
    CHECK(r.mean_b[0] == doctest::Approx(-3.0));
    CHECK(r.mean_b[1] == doctest::Approx(-3.0)); // imputed column
}

TEST_CASE("p values stay in [0, 1] and zero is reachable without smoothing") {
    Rng rng(47);
    bool saw_zero = false;
    for (int inst = 0; inst < 6; ++inst) {
        auto a = random_set(rng, 10, 6, 2);
        auto b = random_set(rng, 10, 6, 2);
        // Push the groups far apart half the time.  Only the identity
        // and mirror splits then reach the observed statistic, and with
        // C(20, 10) = 184756 subsets a 200-draw sampler almost surely
        // misses both, leaving a zero count.
        if (inst % 2 == 0)
            for (auto& sample : b)
                for (auto& e : sample) e.logprob -= 50.0;
        const auto r = permutation_test(a, b, 200, 90 + inst);
        CHECK(r.p_value >= 0.0);
        CHECK(r.p_value <= 1.0);
        if (r.p_value == 0.0) saw_zero = true;
    }
    CHECK(saw_zero);
}

TEST_CASE("input validation") {
    SampleSet two{vec({{"x", -1.0}}), vec({{"x", -2.0}})};
    SampleSet three{vec({{"x", -1.0}}), vec({{"x", -2.0}}), vec({{"x", -3.0}})};
    SampleSet one{vec({{"x", -1.0}})};
    SampleSet empty;
    SampleSet with_empty_sample{LogprobVector{}};

    CHECK_THROWS_AS((void)permutation_test(two, three, 100, 1), InvalidInput);
    CHECK_THROWS_AS((void)permutation_test(one, one, 100, 1), InvalidInput);
    CHECK_THROWS_AS((void)permutation_test(empty, empty, 100, 1), InvalidInput);
    CHECK_THROWS_AS((void)exact_permutation_test(two, three), InvalidInput);
    CHECK_THROWS_AS((void)exact_permutation_test(empty, empty), InvalidInput);
    CHECK_THROWS_AS(
        (void)permutation_test(with_empty_sample, with_empty_sample, 10, 1),
        InvalidInput);
    CHECK_THROWS_AS((void)permutation_test(two, two, 0, 1), InvalidInput);
}

TEST_CASE("exact enumeration respects its cap") {
    SampleSet a, b;
    for (int i = 0; i < 11; ++i) {
        a.push_back(vec({{"x", -1.0 - i}}));
        b.push_back(vec({{"x", -2.0 - i}}));
    }
    // C(22, 11) = 705432 > C(20, 10)
    CHECK_THROWS_AS((void)exact_permutation_test(a, b), CapExceeded);
    const auto r = exact_permutation_test(a, b, 705432);
    CHECK(r.exact);
    CHECK(r.n_permutations == 705432);
}

TEST_CASE("binomial closed forms and overflow guard") {
    CHECK(binomial(0, 0) == 1);
    CHECK(binomial(5, 0) == 1);
    CHECK(binomial(5, 5) == 1);
    CHECK(binomial(5, 2) == 10);
    CHECK(binomial(20, 10) == 184756);
    CHECK(binomial(52, 5) == 2598960);
    for (std::uint64_t k = 0; k <= 9; ++k)
        CHECK(binomial(9, k) == binomial(9, 9 - k));
    CHECK_THROWS_AS((void)binomial(68, 34), CapExceeded);
}

TEST_CASE("enumerate_splits visits every combination lexicographically") {
    std::vector<std::vector<std::size_t>> seen;
    enumerate_splits(5, 2, [&](const std::vector<std::size_t>& c) {
        seen.push_back(c);
    });
    REQUIRE(seen.size() == 10);
    CHECK(seen.front() == std::vector<std::size_t>{0, 1});
    CHECK(seen.back() == std::vector<std::size_t>{3, 4});
    std::set<std::vector<std::size_t>> unique(seen.begin(), seen.end());
    CHECK(unique.size() == 10);
    CHECK(std::is_sorted(seen.begin(), seen.end()));
}

TEST_CASE("SplitSampler is deterministic and roughly uniform") {
    SUBCASE("same seed, same stream") {
        SplitSampler s1(5, 99);
        SplitSampler s2(5, 99);
        for (int i = 0; i < 50; ++i) {
            const auto a = s1.next();
            const auto b = s2.next();
            CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
        }
    }
    SUBCASE("draws are valid subsets") {
        SplitSampler s(4, 3);
        for (int i = 0; i < 200; ++i) {
            const auto g = s.next();
            REQUIRE(g.size() == 4);
            std::set<std::size_t> u(g.begin(), g.end());
            CHECK(u.size() == 4);
            for (auto v : u) CHECK(v < 8);
        }
    }
    SUBCASE("all C(4,2) subsets appear near-uniformly") {
        SplitSampler s(2, 7);
        std::map<std::set<std::size_t>, int> counts;
        const int draws = 6000;
        for (int i = 0; i < draws; ++i) {
            const auto g = s.next();
            counts[std::set<std::size_t>(g.begin(), g.end())]++;
        }
        REQUIRE(counts.size() == 6);
        for (const auto& [subset, count] : counts) {
            const double freq = static_cast<double>(count) / draws;
            CHECK(freq > 1.0 / 6.0 - 0.025);
            CHECK(freq < 1.0 / 6.0 + 0.025);
        }
    }
}

TEST_CASE("derive_seed separates streams and hash64 is stable") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(1, 0) == derive_seed(1, 0));
    CHECK(hash64("alpha") == hash64("alpha"));
    CHECK(hash64("alpha") != hash64("beta"));
    CHECK(hash64("") != 0);
}
