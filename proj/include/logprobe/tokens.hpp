#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace logprobe {

// One candidate token with its log probability, as returned for a
// single completion position.
struct LogprobEntry {
    std::string text;
    std::optional<std::vector<std::uint8_t>> bytes;
    double logprob = 0.0;
};

// Top-k alternatives for the first generated token, highest logprob
// first.
using LogprobVector = std::vector<LogprobEntry>;

// N repeated draws from one endpoint under identical settings.
using SampleSet = std::vector<LogprobVector>;

// Identity used when aligning tokens across samples.  Prefers the raw
// byte representation when the endpoint supplies one, because distinct
// byte sequences can render to identical text.  text_only collapses
// identity to the display text for endpoints with unreliable bytes.
std::string token_key(const LogprobEntry& entry, bool text_only = false);

// Stable descending order by logprob; entries with equal logprob keep
// their relative input order.
void sort_by_logprob(LogprobVector& v);

} // namespace logprobe
