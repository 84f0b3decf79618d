#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "logprobe/errors.hpp"
#include "logprobe/store.hpp"

namespace logprobe {

// Response arrived but violates the expected document shape (or the
// server rejected the request outright).
class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& msg) : Error("protocol", msg) {}
};

// Response is well-formed but carries no logprob data.
class LogprobsMissing : public Error {
public:
    explicit LogprobsMissing(const std::string& msg)
        : Error("logprobs-missing", msg) {}
};

struct RetryPolicy {
    int max_attempts = 3;
    std::vector<double> backoff_seconds{1.0, 4.0, 16.0};
};

struct EndpointConfig {
    std::string base_url;       // e.g. http://127.0.0.1:8400 or .../v1
    std::string model_id;
    std::string auth_token_env; // env var NAME holding the bearer token
    std::string prompt = "x";
    int top_logprobs = 20;
    int max_output_tokens = 1;
    double temperature = 1.0;
    double timeout_seconds = 30.0;
    RetryPolicy retry;

    std::string endpoint_id() const { return model_id + "@" + base_url; }
};

enum class ProbeStatus {
    ok,
    transport_error,
    rate_limited,
    protocol_error,
    logprobs_unsupported,
};

std::string probe_status_name(ProbeStatus status);

struct ProbeOutcome {
    ProbeStatus status = ProbeStatus::transport_error;
    LogprobVector logprobs;            // ok only
    std::optional<Usage> usage;        // ok only, when the server reported it
    std::string detail;                // failure text
    double retry_after_seconds = -1.0; // rate_limited; -1 = unspecified
    int attempts = 0;
};

// Request document for one probe; include_logprobs = false is the
// survey's reachability phase.
std::string make_chat_completion_request_body(const EndpointConfig& c,
                                              bool include_logprobs = true);

// Extracts choices[0].logprobs.content[0].top_logprobs, validated
// (logprob <= 0, distinct token identities) and stably sorted by
// logprob descending.  Throws ProtocolError on malformed documents and
// LogprobsMissing when the document is valid but carries no logprobs.
LogprobVector parse_completion(const std::string& body);

std::optional<Usage> parse_usage(const std::string& body);

// One probe including the retry policy: transport errors and rate
// limits are retried with exponential backoff (a server-provided
// retry-after wins); protocol errors and missing-logprob responses are
// final.  `stop` aborts backoff waits early.
ProbeOutcome probe(const EndpointConfig& c,
                   const std::atomic<bool>* stop = nullptr);

// ==== survey ====

struct EndpointSurvey {
    std::string endpoint_id;
    bool reachable = false;
    bool logprobs_supported = false;
    std::size_t observed_k = 0; // top-logprob entries when supported
    std::string detail;         // first failure, if any
};

struct SurveyReport {
    std::vector<EndpointSurvey> endpoints;
    std::size_t reachable = 0;
    std::size_t supported = 0;
    double supported_fraction = 0.0; // 0 when nothing reachable
};

// Two-phase sweep: reachability without logprobs, then logprob support
// with them.  Per-endpoint failures are recorded, never fatal.
SurveyReport survey(const std::vector<EndpointConfig>& fleet);

std::string survey_to_json(const SurveyReport& report);

// ==== polling ====

struct PollOptions {
    double interval_seconds = 3600.0;
    std::uint64_t max_ticks = 0; // 0 = run until stopped
    std::size_t parallelism = 16;
    double jitter_fraction = 0.05; // of interval, added per tick
    std::uint64_t seed = 0;        // jitter stream
};

struct PollStats {
    std::uint64_t ticks = 0;
    std::uint64_t ok = 0;
    std::uint64_t stored = 0;
    std::uint64_t transport_errors = 0;
    std::uint64_t rate_limited = 0;
    std::uint64_t protocol_errors = 0;
    std::uint64_t logprobs_unsupported = 0;
    std::uint64_t store_errors = 0;
};

// Probes the whole fleet each tick with bounded parallelism, appending
// ok outcomes to the store.  Store failures are counted and logged to
// stderr, never fatal.  Stops after max_ticks or when `stop` becomes
// true; in-flight probes finish first.
PollStats poll_loop(const std::vector<EndpointConfig>& fleet,
                    const PollOptions& options, Store& store,
                    const std::atomic<bool>* stop = nullptr);

// N successful probes of one endpoint (sequential); throws the Error
// matching the first non-ok outcome after retries.  total_usage sums
// the per-request usage the server reported.
struct CollectResult {
    SampleSet samples;
    Usage total_usage;
    std::uint64_t requests = 0;
};

CollectResult collect_samples(const EndpointConfig& c, std::size_t n,
                              const std::atomic<bool>* stop = nullptr);

} // namespace logprobe
