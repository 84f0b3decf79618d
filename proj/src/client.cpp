#include "logprobe/client.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <set>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "logprobe/rng.hpp"

namespace logprobe {

using nlohmann::json;

namespace {

struct SplitUrl {
    std::string scheme_host_port;
    std::string path_prefix; // "" or "/v1"-style suffix, no trailing slash
};

SplitUrl split_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw InvalidInput("base_url needs a scheme: " + base_url);
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.scheme_host_port = base_url;
    } else {
        out.scheme_host_port = base_url.substr(0, path_start);
        out.path_prefix = base_url.substr(path_start);
    }
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') {
        out.path_prefix.pop_back();
    }
    return out;
}

// Interruptible sleep in 100 ms slices; returns false when stopped.
bool sleep_for_seconds(double seconds, const std::atomic<bool>* stop) {
    auto remaining = std::chrono::duration<double>(seconds);
    while (remaining.count() > 0) {
        if (stop != nullptr && stop->load()) return false;
        const auto slice =
            std::min(remaining, std::chrono::duration<double>(0.1));
        std::this_thread::sleep_for(slice);
        remaining -= slice;
    }
    return stop == nullptr || !stop->load();
}

std::string http_error_detail(int status, const std::string& body) {
    try {
        const json j = json::parse(body);
        if (j.contains("error") && j["error"].contains("message")) {
            return "HTTP " + std::to_string(status) + ": " +
                   j["error"]["message"].get<std::string>();
        }
    } catch (const json::exception&) {
    }
    std::string text = body.substr(0, 200);
    return "HTTP " + std::to_string(status) + ": " + text;
}

ProbeOutcome probe_once(const EndpointConfig& c, bool include_logprobs) {
    ProbeOutcome out;
    SplitUrl url;
    try {
        url = split_base_url(c.base_url);
    } catch (const Error& e) {
        out.status = ProbeStatus::transport_error;
        out.detail = e.what();
        return out;
    }

    httplib::Client cli(url.scheme_host_port);
    const auto timeout = std::chrono::duration<double>(c.timeout_seconds);
    const auto secs =
        std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
        timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!c.auth_token_env.empty()) {
        if (const char* token = std::getenv(c.auth_token_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }

    const std::string body =
        make_chat_completion_request_body(c, include_logprobs);
    auto result = cli.Post(url.path_prefix + "/chat/completions", headers,
                           body, "application/json");
    if (!result) {
        out.status = ProbeStatus::transport_error;
        out.detail = httplib::to_string(result.error());
        return out;
    }

    if (result->status == 429) {
        out.status = ProbeStatus::rate_limited;
        out.detail = "rate limited";
        if (result->has_header("Retry-After")) {
            try {
                out.retry_after_seconds =
                    std::stod(result->get_header_value("Retry-After"));
            } catch (const std::exception&) {
            }
        }
        return out;
    }
    if (result->status != 200) {
        out.status = ProbeStatus::protocol_error;
        out.detail = http_error_detail(result->status, result->body);
        return out;
    }

    if (!include_logprobs) {
        // Reachability phase: a valid completion document is enough.
        try {
            const json j = json::parse(result->body);
            if (!j.contains("choices") || !j["choices"].is_array() ||
                j["choices"].empty()) {
                throw ProtocolError("response has no choices");
            }
        } catch (const json::exception& e) {
            out.status = ProbeStatus::protocol_error;
            out.detail = std::string("response is not valid JSON: ") + e.what();
            return out;
        } catch (const ProtocolError& e) {
            out.status = ProbeStatus::protocol_error;
            out.detail = e.what();
            return out;
        }
        out.status = ProbeStatus::ok;
        out.usage = parse_usage(result->body);
        return out;
    }

    try {
        out.logprobs = parse_completion(result->body);
        out.usage = parse_usage(result->body);
        out.status = ProbeStatus::ok;
    } catch (const LogprobsMissing& e) {
        out.status = ProbeStatus::logprobs_unsupported;
        out.detail = e.what();
    } catch (const ProtocolError& e) {
        out.status = ProbeStatus::protocol_error;
        out.detail = e.what();
    }
    return out;
}

ProbeOutcome probe_with_retry(const EndpointConfig& c, bool include_logprobs,
                              const std::atomic<bool>* stop) {
    const int attempts = std::max(1, c.retry.max_attempts);
    ProbeOutcome out;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        out = probe_once(c, include_logprobs);
        out.attempts = attempt + 1;
        const bool retryable = out.status == ProbeStatus::transport_error ||
                               out.status == ProbeStatus::rate_limited;
        if (!retryable || attempt + 1 == attempts) return out;
        double delay = 1.0;
        if (!c.retry.backoff_seconds.empty()) {
            const std::size_t idx =
                std::min(static_cast<std::size_t>(attempt),
                         c.retry.backoff_seconds.size() - 1);
            delay = c.retry.backoff_seconds[idx];
        }
        if (out.status == ProbeStatus::rate_limited &&
            out.retry_after_seconds >= 0.0) {
            delay = out.retry_after_seconds;
        }
        if (!sleep_for_seconds(delay, stop)) return out;
    }
    return out;
}

} // namespace

std::string probe_status_name(ProbeStatus status) {
    switch (status) {
    case ProbeStatus::ok: return "ok";
    case ProbeStatus::transport_error: return "transport-error";
    case ProbeStatus::rate_limited: return "rate-limited";
    case ProbeStatus::protocol_error: return "protocol-error";
    case ProbeStatus::logprobs_unsupported: return "logprobs-unsupported";
    }
    return "unknown";
}

std::string make_chat_completion_request_body(const EndpointConfig& c,
                                              bool include_logprobs) {
    json j;
    j["model"] = c.model_id;
    j["messages"] =
        json::array({{{"role", "user"}, {"content", c.prompt}}});
    j["max_tokens"] = c.max_output_tokens;
    j["temperature"] = c.temperature;
    if (include_logprobs) {
        j["logprobs"] = true;
        j["top_logprobs"] = c.top_logprobs;
    }
    return j.dump();
}

LogprobVector parse_completion(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("response is not valid JSON: ") +
                            e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() ||
        j["choices"].empty()) {
        throw ProtocolError("response has no choices");
    }
    const json& choice = j["choices"][0];
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
        throw LogprobsMissing("response has no logprobs block");
    }
    const json& lp = choice["logprobs"];
    if (!lp.contains("content") || !lp["content"].is_array() ||
        lp["content"].empty()) {
        throw ProtocolError("logprobs block has no content");
    }
    const json& first = lp["content"][0];
    if (!first.contains("top_logprobs") || !first["top_logprobs"].is_array()) {
        throw ProtocolError("first content position has no top_logprobs");
    }
    const json& top = first["top_logprobs"];
    if (top.empty()) {
        throw LogprobsMissing("top_logprobs is empty");
    }

    LogprobVector v;
    v.reserve(top.size());
    for (const json& e : top) {
        LogprobEntry entry;
        if (!e.contains("token") || !e["token"].is_string() ||
            !e.contains("logprob") || !e["logprob"].is_number()) {
            throw ProtocolError("top_logprobs entry missing token/logprob");
        }
        entry.text = e["token"].get<std::string>();
        entry.logprob = e["logprob"].get<double>();
        if (entry.logprob > 0.0) {
            throw ProtocolError("positive logprob for token '" + entry.text +
                                "'");
        }
        if (e.contains("bytes") && !e["bytes"].is_null()) {
            if (!e["bytes"].is_array()) {
                throw ProtocolError("bytes must be null or an array");
            }
            std::vector<std::uint8_t> bytes;
            bytes.reserve(e["bytes"].size());
            for (const json& b : e["bytes"]) {
                if (!b.is_number_integer() || b.get<int>() < 0 ||
                    b.get<int>() > 255) {
                    throw ProtocolError("bytes entries must be integers 0-255");
                }
                bytes.push_back(static_cast<std::uint8_t>(b.get<int>()));
            }
            entry.bytes = std::move(bytes);
        }
        v.push_back(std::move(entry));
    }

    std::set<std::string> seen;
    for (const auto& entry : v) {
        if (!seen.insert(token_key(entry)).second) {
            throw ProtocolError("duplicate token in top_logprobs: '" +
                                entry.text + "'");
        }
    }
    sort_by_logprob(v);
    return v;
}

std::optional<Usage> parse_usage(const std::string& body) {
    try {
        const json j = json::parse(body);
        if (!j.contains("usage") || !j["usage"].is_object()) {
            return std::nullopt;
        }
        Usage u;
        u.prompt_tokens = j["usage"].value("prompt_tokens", 0ULL);
        u.completion_tokens = j["usage"].value("completion_tokens", 0ULL);
        return u;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

ProbeOutcome probe(const EndpointConfig& c, const std::atomic<bool>* stop) {
    return probe_with_retry(c, true, stop);
}

SurveyReport survey(const std::vector<EndpointConfig>& fleet) {
    SurveyReport report;
    report.endpoints.reserve(fleet.size());
    for (const auto& config : fleet) {
        EndpointSurvey entry;
        entry.endpoint_id = config.endpoint_id();

        const ProbeOutcome reach = probe_with_retry(config, false, nullptr);
        if (reach.status != ProbeStatus::ok) {
            entry.detail = probe_status_name(reach.status) + ": " + reach.detail;
            report.endpoints.push_back(std::move(entry));
            continue;
        }
        entry.reachable = true;
        ++report.reachable;

        const ProbeOutcome with = probe_with_retry(config, true, nullptr);
        if (with.status == ProbeStatus::ok) {
            entry.logprobs_supported = true;
            entry.observed_k = with.logprobs.size();
            ++report.supported;
        } else {
            entry.detail = probe_status_name(with.status) + ": " + with.detail;
        }
        report.endpoints.push_back(std::move(entry));
    }
    if (report.reachable > 0) {
        report.supported_fraction = static_cast<double>(report.supported) /
                                    static_cast<double>(report.reachable);
    }
    return report;
}

std::string survey_to_json(const SurveyReport& report) {
    json endpoints = json::array();
    for (const auto& e : report.endpoints) {
        json row;
        row["endpoint_id"] = e.endpoint_id;
        row["reachable"] = e.reachable;
        row["logprobs_supported"] = e.logprobs_supported;
        row["observed_k"] = e.observed_k;
        if (!e.detail.empty()) row["detail"] = e.detail;
        endpoints.push_back(std::move(row));
    }
    json j;
    j["endpoints"] = std::move(endpoints);
    j["reachable"] = report.reachable;
    j["supported"] = report.supported;
    j["supported_fraction"] = report.supported_fraction;
    return j.dump();
}

PollStats poll_loop(const std::vector<EndpointConfig>& fleet,
                    const PollOptions& options, Store& store,
                    const std::atomic<bool>* stop) {
    PollStats stats;
    if (fleet.empty()) return stats;
    Rng jitter_rng(derive_seed(options.seed, 0x9011));
    const std::size_t workers =
        std::max<std::size_t>(1, std::min(options.parallelism, fleet.size()));

    for (std::uint64_t tick = 0;; ++tick) {
        if (stop != nullptr && stop->load()) break;
        if (options.max_ticks > 0 && tick >= options.max_ticks) break;
        if (tick > 0) {
            const double jitter = options.interval_seconds *
                                  options.jitter_fraction *
                                  jitter_rng.uniform01();
            if (!sleep_for_seconds(options.interval_seconds + jitter, stop)) {
                break;
            }
        }
        ++stats.ticks;

        std::atomic<std::size_t> next{0};
        std::mutex agg_mutex;
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= fleet.size()) return;
                const ProbeOutcome outcome = probe(fleet[i], stop);
                std::lock_guard<std::mutex> lock(agg_mutex);
                switch (outcome.status) {
                case ProbeStatus::ok: {
                    ++stats.ok;
                    SeriesRecord record;
                    record.endpoint_id = fleet[i].endpoint_id();
                    record.prompt = fleet[i].prompt;
                    record.timestamp = now_utc_micros();
                    record.entries = outcome.logprobs;
                    record.request_params = {fleet[i].top_logprobs,
                                             fleet[i].max_output_tokens,
                                             fleet[i].temperature};
                    record.usage = outcome.usage;
                    try {
                        store.append(record);
                        ++stats.stored;
                    } catch (const Error& e) {
                        ++stats.store_errors;
                        std::cerr << "store append failed ["
                                  << record.endpoint_id << "]: " << e.what()
                                  << "\n";
                    }
                    break;
                }
                case ProbeStatus::transport_error:
                    ++stats.transport_errors;
                    break;
                case ProbeStatus::rate_limited:
                    ++stats.rate_limited;
                    break;
                case ProbeStatus::protocol_error:
                    ++stats.protocol_errors;
                    break;
                case ProbeStatus::logprobs_unsupported:
                    ++stats.logprobs_unsupported;
                    break;
                }
            }
        };

        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return stats;
}

CollectResult collect_samples(const EndpointConfig& c, std::size_t n,
                              const std::atomic<bool>* stop) {
    CollectResult result;
    result.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ProbeOutcome outcome = probe(c, stop);
        ++result.requests;
        switch (outcome.status) {
        case ProbeStatus::ok:
            result.samples.push_back(outcome.logprobs);
            if (outcome.usage.has_value()) {
                result.total_usage.prompt_tokens += outcome.usage->prompt_tokens;
                result.total_usage.completion_tokens +=
                    outcome.usage->completion_tokens;
            }
            break;
        case ProbeStatus::transport_error:
            throw Error("transport", "probe failed after " +
                                         std::to_string(outcome.attempts) +
                                         " attempts: " + outcome.detail);
        case ProbeStatus::rate_limited:
            throw Error("rate-limited", "probe rate limited after " +
                                            std::to_string(outcome.attempts) +
                                            " attempts");
        case ProbeStatus::protocol_error:
            throw ProtocolError(outcome.detail);
        case ProbeStatus::logprobs_unsupported:
            throw LogprobsMissing(outcome.detail);
        }
    }
    return result;
}

} // namespace logprobe
