#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "logprobe/baselines.hpp"
#include "logprobe/tokens.hpp"

namespace logprobe::sim {

// Synthetic endpoint: a fixed categorical distribution over a toy
// vocabulary, with per-request Gaussian logit noise emulating the
// serving-stack fluctuation real endpoints exhibit.  Tokens are the
// synthetic keys "t0".."t{V-1}".
struct SyntheticModel {
    std::size_t vocab_size = 0;
    std::vector<double> base_logits;
    double noise_sigma = 0.0; // natural-log units, pre-softmax
    std::size_t top_k = 0;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kDefaultVocab = 64;
inline constexpr std::size_t kDefaultTopK = 20;
inline constexpr double kDefaultNoiseSigma = 0.05;

// Base logits drawn i.i.d. standard normal from a stream derived from
// `seed`; the same seed also drives all later noise draws.
SyntheticModel make_random_model(std::size_t vocab_size, double noise_sigma,
                                 std::size_t top_k, std::uint64_t seed);

// Full log-softmax vector for one request: base logits plus one
// i.i.d. Gaussian(0, sigma^2) perturbation per token.  Identical
// (model, draw_seed) give a bit-identical result.
std::vector<double> full_logprobs(const SyntheticModel& m,
                                  std::uint64_t draw_seed);

// Top-k slice of full_logprobs, sorted by logprob descending with ties
// keeping vocabulary order.  Entries carry text only (no bytes).
LogprobVector sample_logprob_vector(const SyntheticModel& m,
                                    std::uint64_t draw_seed);

// n independent draws; draw i uses a seed derived from
// (draw_seed_base, i).
SampleSet draw_sample_set(const SyntheticModel& m, std::size_t n,
                          std::uint64_t draw_seed_base);

// One synthetic response: a single per-request noise draw perturbs the
// logits, then `length` tokens are sampled i.i.d. from the resulting
// distribution.
TokenSequence sample_token_sequence(const SyntheticModel& m,
                                    std::size_t length,
                                    std::uint64_t draw_seed);

std::vector<TokenSequence> draw_sequences(const SyntheticModel& m,
                                          std::size_t n, std::size_t length,
                                          std::uint64_t draw_seed_base);

// ==== variants: controlled model changes of known difficulty ====

enum class VariantKind { logit_shift, logit_noise_injection, sparsify };

// Accepts "logit-shift", "logit-noise-injection", "sparsify".
VariantKind parse_variant_kind(const std::string& name);
std::string variant_kind_name(VariantKind kind);

struct VariantSpec {
    VariantKind kind = VariantKind::logit_shift;
    double magnitude = 0.0; // typically a power-of-two ladder value
};

// The frozen pseudo-random vector a variant of this model would add:
// unit L2 norm for logit_shift, a raw standard-normal draw for
// logit_noise_injection.  Frozen per (model seed, kind).
std::vector<double> variant_direction(const SyntheticModel& m,
                                      VariantKind kind);

// Returns a changed copy of the model (same seed, so noise streams are
// shared with the original):
//   logit_shift           base += magnitude * unit_direction
//   logit_noise_injection base += magnitude * frozen_gaussian
//   sparsify              zero the round(magnitude * V) smallest-|logit|
//                         entries (magnitude is a fraction in [0, 1])
// magnitude 0 returns the model bit-identically unchanged.
SyntheticModel apply_variant(const SyntheticModel& m, const VariantSpec& v);

} // namespace logprobe::sim
