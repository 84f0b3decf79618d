#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "logprobe/stats.hpp"

namespace logprobe {

inline constexpr std::size_t kDefaultMetLength = 50;

// ==== MET: MMD over token sequences with a Hamming kernel ====

// Ordered token identities for one sampled response.  Sequences
// shorter than the kernel length L are conceptually padded with a
// reserved pad symbol; the pad is never materialized.
using TokenSequence = std::vector<std::string>;

// Positionwise mismatch count after logically extending both sequences
// to `length` with the pad symbol: positions past the end of both
// sequences agree, positions past the end of exactly one mismatch.
// Requires length >= max(|x|, |y|).
std::uint64_t hamming_distance(const TokenSequence& x, const TokenSequence& y,
                               std::size_t length = kDefaultMetLength);

// k(x, y) = 1 - H(x, y) / length, in [0, 1].
double hamming_kernel(const TokenSequence& x, const TokenSequence& y,
                      std::size_t length = kDefaultMetLength);

// Unbiased MMD^2 estimate between two sequence sets under the Hamming
// kernel: mean off-diagonal within-group kernel values (both groups)
// minus twice the mean cross-group kernel value.  Integer kernel
// numerators are accumulated and divided once, so the value is
// reproducible term-for-term.  Requires at least 2 sequences per side
// (sides may differ in size); may be negative under the null.
double mmd_statistic(const std::vector<TokenSequence>& a,
                     const std::vector<TokenSequence>& b,
                     std::size_t length = kDefaultMetLength);

// Permutation test of mmd_statistic.  Splits are drawn by the same
// engine as the logprob test, so a shared seed and group size yield
// identical split sequences across methods.  Requires equal group
// sizes of at least 2.
TestResult met_test(const std::vector<TokenSequence>& a,
                    const std::vector<TokenSequence>& b,
                    std::uint64_t n_permutations, std::uint64_t seed,
                    std::size_t length = kDefaultMetLength);

// How multiple prompts combine into one MET decision: pool every
// prompt's sequences into a single two-sample problem (default), or
// compute a per-prompt statistic and average it.
enum class MetAggregation { pooled, per_prompt };

// Statistic over per-prompt sequence groups; a[p] and b[p] hold the
// sequences drawn for prompt p on each side.
double met_statistic_grouped(const std::vector<std::vector<TokenSequence>>& a,
                             const std::vector<std::vector<TokenSequence>>& b,
                             std::size_t length = kDefaultMetLength,
                             MetAggregation agg = MetAggregation::pooled);

// Permutation test of met_statistic_grouped.  Requires the same group
// size N for every prompt and side; each permutation applies one row
// split across all prompts, which keeps the null exchangeable and the
// split stream shared with the other methods.
TestResult met_test_grouped(const std::vector<std::vector<TokenSequence>>& a,
                            const std::vector<std::vector<TokenSequence>>& b,
                            std::uint64_t n_permutations, std::uint64_t seed,
                            std::size_t length = kDefaultMetLength,
                            MetAggregation agg = MetAggregation::pooled);

// ==== MMLU-ALG: per-prompt accuracy drift ====

struct Question {
    std::string id;
    std::string prompt;
    char gold = 'A'; // one of A..D
};

// True when the first non-whitespace character of `completion` matches
// `gold` case-insensitively.
bool grade_answer(const std::string& completion, char gold);

// JSONL file, one object per line: {"id": ..., "prompt": ..., "gold":
// "A".."D"}.  Blank lines are ignored.
std::vector<Question> load_questions(const std::string& path);

// rows = repeated runs, cols = prompts, entries in {0, 1}.
struct AccuracyMatrix {
    Matrix values;
    std::vector<std::string> prompts;
};

// Column means: per-prompt fraction of correct runs.
std::vector<double> per_prompt_accuracies(const AccuracyMatrix& m);

// S = (1/P) * sum_p |acc_a[p] - acc_b[p]|.  Requires identical prompt
// identifier sequences on both sides.
double mmlu_statistic(const AccuracyMatrix& a, const AccuracyMatrix& b);

// Permutation test over pooled run rows; statistic = mmlu_statistic,
// splits from the shared engine.
TestResult mmlu_test(const AccuracyMatrix& a, const AccuracyMatrix& b,
                     std::uint64_t n_permutations, std::uint64_t seed);

} // namespace logprobe
