#include "logprobe/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "logprobe/errors.hpp"
#include "logprobe/permute.hpp"

namespace logprobe {

namespace {

// Shared final division so every MMD path rounds identically given
// identical integer sums.
double mmd_from_sums(std::int64_t sxx, std::int64_t syy, std::int64_t sxy,
                     std::size_t m, std::size_t n, std::size_t length) {
    return static_cast<double>(sxx) /
               (static_cast<double>(m) * static_cast<double>(m - 1) *
                static_cast<double>(length)) +
           static_cast<double>(syy) /
               (static_cast<double>(n) * static_cast<double>(n - 1) *
                static_cast<double>(length)) -
           2.0 * static_cast<double>(sxy) /
               (static_cast<double>(m) * static_cast<double>(n) *
                static_cast<double>(length));
}

// Integer kernel numerator L - H for every pooled pair (diagonal
// unused).  Rows 0..n-1 come from side A, rows n..2n-1 from side B.
std::vector<std::int64_t> pooled_kernel(
    const std::vector<TokenSequence>& a, const std::vector<TokenSequence>& b,
    std::size_t length) {
    std::vector<const TokenSequence*> pool;
    pool.reserve(a.size() + b.size());
    for (const auto& s : a) pool.push_back(&s);
    for (const auto& s : b) pool.push_back(&s);
    const std::size_t total = pool.size();
    std::vector<std::int64_t> w(total * total, 0);
    for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t j = i + 1; j < total; ++j) {
            const std::int64_t v = static_cast<std::int64_t>(length) -
                                   static_cast<std::int64_t>(hamming_distance(
                                       *pool[i], *pool[j], length));
            w[i * total + j] = v;
            w[j * total + i] = v;
        }
    }
    return w;
}

// Unbiased MMD^2 for one split of the pooled kernel matrix, given
// group-one membership flags.
double mmd_for_split(const std::vector<std::int64_t>& w, std::size_t total,
                     const std::vector<char>& in_g1, std::size_t n,
                     std::size_t length) {
    std::int64_t s11 = 0, s22 = 0, s12 = 0;
    for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t j = i + 1; j < total; ++j) {
            const std::int64_t v = w[i * total + j];
            if (in_g1[i] && in_g1[j]) {
                s11 += v;
            } else if (!in_g1[i] && !in_g1[j]) {
                s22 += v;
            } else {
                s12 += v;
            }
        }
    }
    return mmd_from_sums(2 * s11, 2 * s22, s12, n, n, length);
}

void require_met_groups(std::size_t na, std::size_t nb) {
    if (na != nb) throw InvalidInput("group sizes must be equal");
    if (na < 2) {
        throw InvalidInput("permutation test needs at least 2 samples per side");
    }
}

} // namespace

std::uint64_t hamming_distance(const TokenSequence& x, const TokenSequence& y,
                               std::size_t length) {
    if (x.size() > length || y.size() > length) {
        throw InvalidInput("sequence longer than kernel length");
    }
    const std::size_t common = std::min(x.size(), y.size());
    std::uint64_t h = 0;
    for (std::size_t p = 0; p < common; ++p) {
        if (x[p] != y[p]) ++h;
    }
    // One side is padded where the other still has tokens.
    h += std::max(x.size(), y.size()) - common;
    return h;
}

double hamming_kernel(const TokenSequence& x, const TokenSequence& y,
                      std::size_t length) {
    if (length == 0) throw InvalidInput("kernel length must be positive");
    return 1.0 - static_cast<double>(hamming_distance(x, y, length)) /
                     static_cast<double>(length);
}

double mmd_statistic(const std::vector<TokenSequence>& a,
                     const std::vector<TokenSequence>& b, std::size_t length) {
    if (a.size() < 2 || b.size() < 2) {
        throw InvalidInput("unbiased MMD needs at least 2 sequences per side");
    }
    if (length == 0) throw InvalidInput("kernel length must be positive");
    const std::int64_t len = static_cast<std::int64_t>(length);
    std::int64_t sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
            if (i == j) continue;
            sxx += len - static_cast<std::int64_t>(
                             hamming_distance(a[i], a[j], length));
        }
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (i == j) continue;
            syy += len - static_cast<std::int64_t>(
                             hamming_distance(b[i], b[j], length));
        }
    }
    for (const auto& x : a) {
        for (const auto& y : b) {
            sxy += len - static_cast<std::int64_t>(hamming_distance(x, y, length));
        }
    }
    return mmd_from_sums(sxx, syy, sxy, a.size(), b.size(), length);
}

TestResult met_test(const std::vector<TokenSequence>& a,
                    const std::vector<TokenSequence>& b,
                    std::uint64_t n_permutations, std::uint64_t seed,
                    std::size_t length) {
    require_met_groups(a.size(), b.size());
    if (n_permutations == 0) throw InvalidInput("need at least 1 permutation");
    if (length == 0) throw InvalidInput("kernel length must be positive");

    const std::size_t n = a.size();
    const std::size_t total = 2 * n;
    const auto w = pooled_kernel(a, b, length);

    std::vector<char> in_g1(total, 0);
    std::fill(in_g1.begin(), in_g1.begin() + static_cast<std::ptrdiff_t>(n), 1);
    const double observed = mmd_for_split(w, total, in_g1, n, length);

    SplitSampler sampler(n, seed);
    std::uint64_t at_least = 0;
    for (std::uint64_t i = 0; i < n_permutations; ++i) {
        std::fill(in_g1.begin(), in_g1.end(), 0);
        for (const std::size_t r : sampler.next()) in_g1[r] = 1;
        if (mmd_for_split(w, total, in_g1, n, length) >= observed) ++at_least;
    }

    TestResult result;
    result.statistic = observed;
    result.p_value = static_cast<double>(at_least) /
                     static_cast<double>(n_permutations);
    result.n_samples = n;
    result.n_permutations = n_permutations;
    result.seed = seed;
    return result;
}

double met_statistic_grouped(const std::vector<std::vector<TokenSequence>>& a,
                             const std::vector<std::vector<TokenSequence>>& b,
                             std::size_t length, MetAggregation agg) {
    if (a.size() != b.size() || a.empty()) {
        throw InvalidInput("prompt group counts must match and be non-empty");
    }
    if (agg == MetAggregation::pooled) {
        std::vector<TokenSequence> pa, pb;
        for (const auto& g : a) pa.insert(pa.end(), g.begin(), g.end());
        for (const auto& g : b) pb.insert(pb.end(), g.begin(), g.end());
        return mmd_statistic(pa, pb, length);
    }
    double acc = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        acc += mmd_statistic(a[p], b[p], length);
    }
    return acc / static_cast<double>(a.size());
}

TestResult met_test_grouped(const std::vector<std::vector<TokenSequence>>& a,
                            const std::vector<std::vector<TokenSequence>>& b,
                            std::uint64_t n_permutations, std::uint64_t seed,
                            std::size_t length, MetAggregation agg) {
    if (a.size() != b.size() || a.empty()) {
        throw InvalidInput("prompt group counts must match and be non-empty");
    }
    const std::size_t n = a[0].size();
    for (std::size_t p = 0; p < a.size(); ++p) {
        if (a[p].size() != n || b[p].size() != n) {
            throw InvalidInput("grouped test needs one group size everywhere");
        }
    }
    if (agg == MetAggregation::pooled) {
        std::vector<TokenSequence> pa, pb;
        for (const auto& g : a) pa.insert(pa.end(), g.begin(), g.end());
        for (const auto& g : b) pb.insert(pb.end(), g.begin(), g.end());
        return met_test(pa, pb, n_permutations, seed, length);
    }

    require_met_groups(n, n);
    if (n_permutations == 0) throw InvalidInput("need at least 1 permutation");

    const std::size_t total = 2 * n;
    const std::size_t n_prompts = a.size();
    std::vector<std::vector<std::int64_t>> kernels;
    kernels.reserve(n_prompts);
    for (std::size_t p = 0; p < n_prompts; ++p) {
        kernels.push_back(pooled_kernel(a[p], b[p], length));
    }

    const auto stat_for = [&](const std::vector<char>& in_g1) {
        double acc = 0.0;
        for (const auto& w : kernels) {
            acc += mmd_for_split(w, total, in_g1, n, length);
        }
        return acc / static_cast<double>(n_prompts);
    };

    std::vector<char> in_g1(total, 0);
    std::fill(in_g1.begin(), in_g1.begin() + static_cast<std::ptrdiff_t>(n), 1);
    const double observed = stat_for(in_g1);

    SplitSampler sampler(n, seed);
    std::uint64_t at_least = 0;
    for (std::uint64_t i = 0; i < n_permutations; ++i) {
        std::fill(in_g1.begin(), in_g1.end(), 0);
        for (const std::size_t r : sampler.next()) in_g1[r] = 1;
        if (stat_for(in_g1) >= observed) ++at_least;
    }

    TestResult result;
    result.statistic = observed;
    result.p_value = static_cast<double>(at_least) /
                     static_cast<double>(n_permutations);
    result.n_samples = n;
    result.n_permutations = n_permutations;
    result.seed = seed;
    return result;
}

bool grade_answer(const std::string& completion, char gold) {
    for (const char ch : completion) {
        if (std::isspace(static_cast<unsigned char>(ch))) continue;
        return std::toupper(static_cast<unsigned char>(ch)) ==
               std::toupper(static_cast<unsigned char>(gold));
    }
    return false;
}

std::vector<Question> load_questions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open question file: " + path);
    std::vector<Question> questions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw InvalidInput("bad question line " + std::to_string(line_no) +
                               ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("prompt") ||
            !j.contains("gold")) {
            throw InvalidInput("question line " + std::to_string(line_no) +
                               " needs id, prompt, gold");
        }
        Question q;
        q.id = j["id"].is_string() ? j["id"].get<std::string>()
                                   : j["id"].dump();
        q.prompt = j["prompt"].get<std::string>();
        const std::string gold = j["gold"].get<std::string>();
        if (gold.size() != 1) {
            throw InvalidInput("question line " + std::to_string(line_no) +
                               ": gold must be a single letter A-D");
        }
        q.gold = static_cast<char>(
            std::toupper(static_cast<unsigned char>(gold[0])));
        if (q.gold < 'A' || q.gold > 'D') {
            throw InvalidInput("question line " + std::to_string(line_no) +
                               ": gold must be a single letter A-D");
        }
        questions.push_back(std::move(q));
    }
    return questions;
}

namespace {

void validate_accuracy(const AccuracyMatrix& m) {
    if (m.values.cols != m.prompts.size()) {
        throw InvalidInput("accuracy matrix column count must match prompts");
    }
    for (const double v : m.values.data) {
        if (v != 0.0 && v != 1.0) {
            throw InvalidInput("accuracy matrix entries must be 0 or 1");
        }
    }
}

} // namespace

std::vector<double> per_prompt_accuracies(const AccuracyMatrix& m) {
    validate_accuracy(m);
    if (m.values.rows == 0 || m.values.cols == 0) {
        throw InvalidInput("accuracy matrix must be non-empty");
    }
    std::vector<double> acc(m.values.cols, 0.0);
    for (std::size_t c = 0; c < m.values.cols; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < m.values.rows; ++r) s += m.values.at(r, c);
        acc[c] = s / static_cast<double>(m.values.rows);
    }
    return acc;
}

double mmlu_statistic(const AccuracyMatrix& a, const AccuracyMatrix& b) {
    if (a.prompts != b.prompts) {
        throw InvalidInput("accuracy matrices cover different prompts");
    }
    const auto pa = per_prompt_accuracies(a);
    const auto pb = per_prompt_accuracies(b);
    double acc = 0.0;
    for (std::size_t p = 0; p < pa.size(); ++p) acc += std::abs(pa[p] - pb[p]);
    return acc / static_cast<double>(pa.size());
}

TestResult mmlu_test(const AccuracyMatrix& a, const AccuracyMatrix& b,
                     std::uint64_t n_permutations, std::uint64_t seed) {
    if (a.prompts != b.prompts) {
        throw InvalidInput("accuracy matrices cover different prompts");
    }
    validate_accuracy(a);
    validate_accuracy(b);
    TestResult result =
        matrix_permutation_test(a.values, b.values, n_permutations, seed);
    result.tokens = a.prompts;
    return result;
}

} // namespace logprobe
