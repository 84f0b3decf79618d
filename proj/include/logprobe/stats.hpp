#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "logprobe/tokens.hpp"

namespace logprobe {

inline constexpr std::uint64_t kDefaultPermutations = 1000;
inline constexpr std::uint64_t kDefaultExactCap = 184756; // C(20, 10)

// Row-major dense matrix; rows are samples, columns are union tokens.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_samples = 0;      // per side
    std::size_t n_tokens = 0;       // union size; 0 when not token-based
    std::uint64_t n_permutations = 0;
    bool exact = false;
    std::uint64_t seed = 0;
    std::vector<std::string> tokens; // union keys, aligned with means
    std::vector<double> mean_a;
    std::vector<double> mean_b;
};

// Sorted union of token identities across every sample of both sets.
std::vector<std::string> token_union(const SampleSet& a, const SampleSet& b,
                                     bool text_only = false);

// One row per sample, one column per union token.  A token absent from
// a sample's top-k is imputed with that sample's minimum observed
// logprob.  Every sample must contain at least one entry.
Matrix to_matrix(const SampleSet& set, const std::vector<std::string>& tokens,
                 bool text_only = false);

// Mean absolute difference of per-token column means:
//   S = (1/n_tok) * sum_i |mean_a[i] - mean_b[i]|
double lt_statistic(const Matrix& a, const Matrix& b);

// Permutation test over pre-aligned matrices whose rows are
// exchangeable under the null; the statistic is the mean absolute
// column-mean difference.  p = (1/B) * #{ S_perm >= S_observed }, with
// no +1 smoothing, so a reported p of exactly 0 is possible.  Requires
// equal row counts of at least 2.
TestResult matrix_permutation_test(const Matrix& a, const Matrix& b,
                                   std::uint64_t n_permutations,
                                   std::uint64_t seed);

// Exhaustive variant over all C(2N, N) row splits (the observed split
// is one of them, so p > 0).  Row counts must be equal and at least 1;
// throws CapExceeded when the split count exceeds `cap`.
TestResult matrix_exact_permutation_test(const Matrix& a, const Matrix& b,
                                         std::uint64_t cap = kDefaultExactCap);

// Two-sample permutation test of the logprob tracking statistic.  The
// token union is built once from the pooled samples and held fixed
// across permutations.  Requires equal group sizes of at least 2.
TestResult permutation_test(const SampleSet& a, const SampleSet& b,
                            std::uint64_t n_permutations, std::uint64_t seed,
                            bool text_only = false);

// Exhaustive variant; group sizes must be equal and at least 1.
TestResult exact_permutation_test(const SampleSet& a, const SampleSet& b,
                                  std::uint64_t cap = kDefaultExactCap,
                                  bool text_only = false);

} // namespace logprobe
