#include "logprobe/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "logprobe/errors.hpp"
#include "logprobe/rng.hpp"

namespace logprobe::sim {

namespace {

// Independent stream roots per purpose so no two uses of the model
// seed can collide.
enum : std::uint64_t {
    kNoiseRoot = 1,
    kBaseRoot = 2,
    kVariantRoot = 3,
    kSequenceRoot = 4,
};

void check_model(const SyntheticModel& m) {
    if (m.vocab_size == 0) throw InvalidInput("vocab_size must be positive");
    if (m.base_logits.size() != m.vocab_size) {
        throw InvalidInput("base_logits size must equal vocab_size");
    }
    if (m.top_k == 0 || m.top_k > m.vocab_size) {
        throw InvalidInput("top_k must be in [1, vocab_size]");
    }
    if (m.noise_sigma < 0.0) throw InvalidInput("noise_sigma must be >= 0");
}

std::vector<double> noisy_logits(const SyntheticModel& m,
                                 std::uint64_t draw_seed) {
    std::vector<double> z = m.base_logits;
    if (m.noise_sigma > 0.0) {
        Rng rng(derive_seed(derive_seed(m.seed, kNoiseRoot), draw_seed));
        for (double& v : z) v += m.noise_sigma * rng.gaussian();
    }
    return z;
}

std::vector<double> log_softmax(std::vector<double> z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v -= zmax;
        sum += std::exp(v);
    }
    const double log_sum = std::log(sum);
    for (double& v : z) v -= log_sum;
    return z;
}

// Indices of the k largest values, ties keeping ascending index order.
std::vector<std::size_t> top_indices(const std::vector<double>& v,
                                     std::size_t k) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    idx.resize(k);
    return idx;
}

} // namespace

SyntheticModel make_random_model(std::size_t vocab_size, double noise_sigma,
                                 std::size_t top_k, std::uint64_t seed) {
    SyntheticModel m;
    m.vocab_size = vocab_size;
    m.noise_sigma = noise_sigma;
    m.top_k = top_k;
    m.seed = seed;
    Rng rng(derive_seed(seed, kBaseRoot));
    m.base_logits.resize(vocab_size);
    for (double& v : m.base_logits) v = rng.gaussian();
    check_model(m);
    return m;
}

std::vector<double> full_logprobs(const SyntheticModel& m,
                                  std::uint64_t draw_seed) {
    check_model(m);
    return log_softmax(noisy_logits(m, draw_seed));
}

LogprobVector sample_logprob_vector(const SyntheticModel& m,
                                    std::uint64_t draw_seed) {
    const auto lp = full_logprobs(m, draw_seed);
    LogprobVector out;
    out.reserve(m.top_k);
    for (const std::size_t i : top_indices(lp, m.top_k)) {
        LogprobEntry e;
        e.text = "t" + std::to_string(i);
        e.logprob = lp[i];
        out.push_back(std::move(e));
    }
    return out;
}

SampleSet draw_sample_set(const SyntheticModel& m, std::size_t n,
                          std::uint64_t draw_seed_base) {
    SampleSet set;
    set.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        set.push_back(sample_logprob_vector(m, derive_seed(draw_seed_base, i)));
    }
    return set;
}

TokenSequence sample_token_sequence(const SyntheticModel& m,
                                    std::size_t length,
                                    std::uint64_t draw_seed) {
    check_model(m);
    Rng rng(derive_seed(derive_seed(m.seed, kSequenceRoot), draw_seed));
    std::vector<double> z = m.base_logits;
    if (m.noise_sigma > 0.0) {
        for (double& v : z) v += m.noise_sigma * rng.gaussian();
    }
    const auto lp = log_softmax(std::move(z));
    std::vector<double> probs(lp.size());
    for (std::size_t i = 0; i < lp.size(); ++i) probs[i] = std::exp(lp[i]);

    TokenSequence seq;
    seq.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
        const double u = rng.uniform01();
        double cum = 0.0;
        std::size_t pick = probs.size() - 1;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (u < cum) {
                pick = i;
                break;
            }
        }
        seq.push_back("t" + std::to_string(pick));
    }
    return seq;
}

std::vector<TokenSequence> draw_sequences(const SyntheticModel& m,
                                          std::size_t n, std::size_t length,
                                          std::uint64_t draw_seed_base) {
    std::vector<TokenSequence> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(
            sample_token_sequence(m, length, derive_seed(draw_seed_base, i)));
    }
    return out;
}

VariantKind parse_variant_kind(const std::string& name) {
    if (name == "logit-shift") return VariantKind::logit_shift;
    if (name == "logit-noise-injection") return VariantKind::logit_noise_injection;
    if (name == "sparsify") return VariantKind::sparsify;
    throw InvalidInput("unknown variant kind: " + name);
}

std::string variant_kind_name(VariantKind kind) {
    switch (kind) {
    case VariantKind::logit_shift: return "logit-shift";
    case VariantKind::logit_noise_injection: return "logit-noise-injection";
    case VariantKind::sparsify: return "sparsify";
    }
    throw InvalidInput("unknown variant kind");
}

std::vector<double> variant_direction(const SyntheticModel& m,
                                      VariantKind kind) {
    check_model(m);
    if (kind == VariantKind::sparsify) {
        throw InvalidInput("sparsify has no direction vector");
    }
    const std::uint64_t tag =
        kind == VariantKind::logit_shift ? 1 : 2;
    Rng rng(derive_seed(derive_seed(m.seed, kVariantRoot), tag));
    std::vector<double> dir(m.vocab_size);
    for (double& v : dir) v = rng.gaussian();
    if (kind == VariantKind::logit_shift) {
        double norm = 0.0;
        for (const double v : dir) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (double& v : dir) v /= norm;
        }
    }
    return dir;
}

SyntheticModel apply_variant(const SyntheticModel& m, const VariantSpec& v) {
    check_model(m);
    if (v.magnitude < 0.0) throw InvalidInput("magnitude must be >= 0");
    if (v.magnitude == 0.0) return m;

    SyntheticModel out = m;
    switch (v.kind) {
    case VariantKind::logit_shift:
    case VariantKind::logit_noise_injection: {
        const auto dir = variant_direction(m, v.kind);
        for (std::size_t i = 0; i < out.vocab_size; ++i) {
            out.base_logits[i] += v.magnitude * dir[i];
        }
        return out;
    }
    case VariantKind::sparsify: {
        if (v.magnitude > 1.0) {
            throw InvalidInput("sparsify magnitude is a fraction in [0, 1]");
        }
        const std::size_t count = static_cast<std::size_t>(std::llround(
            v.magnitude * static_cast<double>(m.vocab_size)));
        std::vector<std::size_t> idx(m.vocab_size);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) {
                             return std::abs(m.base_logits[a]) <
                                    std::abs(m.base_logits[b]);
                         });
        for (std::size_t i = 0; i < std::min(count, m.vocab_size); ++i) {
            out.base_logits[idx[i]] = 0.0;
        }
        return out;
    }
    }
    throw InvalidInput("unknown variant kind");
}

} // namespace logprobe::sim
