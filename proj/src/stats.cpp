#include "logprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "logprobe/errors.hpp"
#include "logprobe/permute.hpp"

namespace logprobe {

namespace {

void check_samples(const SampleSet& set, const char* side) {
    for (const auto& sample : set) {
        if (sample.empty()) {
            throw InvalidInput(std::string("empty sample in set ") + side);
        }
    }
}

// Pooled representation: rows 0..N-1 are side A, rows N..2N-1 are side
// B, column sums precomputed so a split's statistic needs only its
// group-one rows.
struct Pooled {
    Matrix pool;
    std::size_t n = 0; // per side
    std::vector<double> total; // per-column sum over all 2N rows

    // Rows are accumulated in index order so the value is a function of
    // the subset alone, not of the order a sampler produced it in; the
    // sampled and exhaustive paths would otherwise disagree on exact
    // ties at the observed statistic.
    double stat_for(std::span<const std::size_t> group1,
                    std::vector<double>& scratch,
                    std::vector<std::size_t>& order) const {
        order.assign(group1.begin(), group1.end());
        std::sort(order.begin(), order.end());
        const std::size_t cols = pool.cols;
        std::fill(scratch.begin(), scratch.end(), 0.0);
        for (const std::size_t r : order) {
            const double* row = pool.data.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) scratch[c] += row[c];
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            acc += std::abs(scratch[c] * inv_n - (total[c] - scratch[c]) * inv_n);
        }
        return acc / static_cast<double>(cols);
    }
};

Pooled pool_matrices(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols || a.cols == 0) {
        throw InvalidInput("matrices must share a non-empty column axis");
    }
    if (a.rows != b.rows) throw InvalidInput("group sizes must be equal");
    Pooled p;
    p.n = a.rows;
    p.pool = Matrix(a.rows + b.rows, a.cols);
    std::copy(a.data.begin(), a.data.end(), p.pool.data.begin());
    std::copy(b.data.begin(), b.data.end(),
              p.pool.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    p.total.assign(p.pool.cols, 0.0);
    for (std::size_t r = 0; r < p.pool.rows; ++r) {
        for (std::size_t c = 0; c < p.pool.cols; ++c) {
            p.total[c] += p.pool.at(r, c);
        }
    }
    return p;
}

void fill_means(const Matrix& a, const Matrix& b, TestResult& out) {
    out.n_samples = a.rows;
    out.n_tokens = a.cols;
    out.mean_a.assign(a.cols, 0.0);
    out.mean_b.assign(a.cols, 0.0);
    for (std::size_t c = 0; c < a.cols; ++c) {
        double sa = 0.0, sb = 0.0;
        for (std::size_t r = 0; r < a.rows; ++r) sa += a.at(r, c);
        for (std::size_t r = 0; r < b.rows; ++r) sb += b.at(r, c);
        out.mean_a[c] = sa / static_cast<double>(a.rows);
        out.mean_b[c] = sb / static_cast<double>(b.rows);
    }
}

} // namespace

std::vector<std::string> token_union(const SampleSet& a, const SampleSet& b,
                                     bool text_only) {
    std::set<std::string> keys;
    for (const SampleSet* set : {&a, &b}) {
        for (const auto& sample : *set) {
            for (const auto& entry : sample) {
                keys.insert(token_key(entry, text_only));
            }
        }
    }
    return {keys.begin(), keys.end()};
}

Matrix to_matrix(const SampleSet& set, const std::vector<std::string>& tokens,
                 bool text_only) {
    std::unordered_map<std::string, std::size_t> col_of;
    col_of.reserve(tokens.size());
    for (std::size_t c = 0; c < tokens.size(); ++c) col_of.emplace(tokens[c], c);

    Matrix m(set.size(), tokens.size());
    for (std::size_t r = 0; r < set.size(); ++r) {
        const auto& sample = set[r];
        if (sample.empty()) throw InvalidInput("empty sample");
        double row_min = std::numeric_limits<double>::infinity();
        for (const auto& entry : sample) row_min = std::min(row_min, entry.logprob);
        for (std::size_t c = 0; c < tokens.size(); ++c) m.at(r, c) = row_min;
        for (const auto& entry : sample) {
            const auto it = col_of.find(token_key(entry, text_only));
            if (it != col_of.end()) m.at(r, it->second) = entry.logprob;
        }
    }
    return m;
}

double lt_statistic(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols || a.cols == 0) {
        throw InvalidInput("matrices must share a non-empty token axis");
    }
    if (a.rows == 0 || b.rows == 0) throw InvalidInput("empty matrix");
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) {
        double sa = 0.0, sb = 0.0;
        for (std::size_t r = 0; r < a.rows; ++r) sa += a.at(r, c);
        for (std::size_t r = 0; r < b.rows; ++r) sb += b.at(r, c);
        acc += std::abs(sa / static_cast<double>(a.rows) -
                        sb / static_cast<double>(b.rows));
    }
    return acc / static_cast<double>(a.cols);
}

TestResult matrix_permutation_test(const Matrix& a, const Matrix& b,
                                   std::uint64_t n_permutations,
                                   std::uint64_t seed) {
    if (a.rows != b.rows) throw InvalidInput("group sizes must be equal");
    if (a.rows < 2) {
        throw InvalidInput("permutation test needs at least 2 samples per side");
    }
    if (n_permutations == 0) throw InvalidInput("need at least 1 permutation");

    const Pooled pooled = pool_matrices(a, b);
    std::vector<std::size_t> identity(pooled.n);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    std::vector<double> scratch(pooled.pool.cols, 0.0);
    std::vector<std::size_t> order;
    const double observed = pooled.stat_for(identity, scratch, order);

    SplitSampler sampler(pooled.n, seed);
    std::uint64_t at_least = 0;
    for (std::uint64_t i = 0; i < n_permutations; ++i) {
        if (pooled.stat_for(sampler.next(), scratch, order) >= observed) {
            ++at_least;
        }
    }

    TestResult result;
    fill_means(a, b, result);
    result.statistic = observed;
    result.p_value = static_cast<double>(at_least) /
                     static_cast<double>(n_permutations);
    result.n_permutations = n_permutations;
    result.exact = false;
    result.seed = seed;
    return result;
}

TestResult matrix_exact_permutation_test(const Matrix& a, const Matrix& b,
                                         std::uint64_t cap) {
    if (a.rows != b.rows) throw InvalidInput("group sizes must be equal");
    if (a.rows == 0) throw InvalidInput("empty sample sets");

    const std::uint64_t n_splits = binomial(2 * a.rows, a.rows);
    if (n_splits > cap) {
        throw CapExceeded("exact test would enumerate " +
                          std::to_string(n_splits) + " splits (cap " +
                          std::to_string(cap) + ")");
    }

    const Pooled pooled = pool_matrices(a, b);
    std::vector<std::size_t> identity(pooled.n);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    std::vector<double> scratch(pooled.pool.cols, 0.0);
    std::vector<std::size_t> order;
    const double observed = pooled.stat_for(identity, scratch, order);

    std::uint64_t at_least = 0;
    enumerate_splits(2 * pooled.n, pooled.n,
                     [&](const std::vector<std::size_t>& group1) {
                         if (pooled.stat_for(group1, scratch, order) >=
                             observed) {
                             ++at_least;
                         }
                     });

    TestResult result;
    fill_means(a, b, result);
    result.statistic = observed;
    result.p_value = static_cast<double>(at_least) /
                     static_cast<double>(n_splits);
    result.n_permutations = n_splits;
    result.exact = true;
    return result;
}

namespace {

Matrix side_matrix(const SampleSet& set, const std::vector<std::string>& tokens,
                   bool text_only, const char* side) {
    check_samples(set, side);
    return to_matrix(set, tokens, text_only);
}

} // namespace

TestResult permutation_test(const SampleSet& a, const SampleSet& b,
                            std::uint64_t n_permutations, std::uint64_t seed,
                            bool text_only) {
    if (a.size() != b.size()) throw InvalidInput("group sizes must be equal");
    const auto tokens = token_union(a, b, text_only);
    if (tokens.empty()) throw InvalidInput("token union is empty");
    const Matrix ma = side_matrix(a, tokens, text_only, "a");
    const Matrix mb = side_matrix(b, tokens, text_only, "b");
    TestResult result = matrix_permutation_test(ma, mb, n_permutations, seed);
    result.tokens = tokens;
    return result;
}

TestResult exact_permutation_test(const SampleSet& a, const SampleSet& b,
                                  std::uint64_t cap, bool text_only) {
    if (a.size() != b.size()) throw InvalidInput("group sizes must be equal");
    const auto tokens = token_union(a, b, text_only);
    if (tokens.empty()) throw InvalidInput("token union is empty");
    const Matrix ma = side_matrix(a, tokens, text_only, "a");
    const Matrix mb = side_matrix(b, tokens, text_only, "b");
    TestResult result = matrix_exact_permutation_test(ma, mb, cap);
    result.tokens = tokens;
    return result;
}

} // namespace logprobe
