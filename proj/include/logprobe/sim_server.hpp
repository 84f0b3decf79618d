#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "logprobe/simulator.hpp"
#include "logprobe/store.hpp"

namespace logprobe::sim {

// Per-model request accounting, for cost assertions.
struct ModelStats {
    std::uint64_t requests = 0;
    std::uint64_t single_token_requests = 0; // max_tokens == 1
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
};

// Builds the chat-completions response document the server would send
// for one draw, so tests can round-trip parse_completion without a
// socket.  `served` entries of `v` are included.
std::string chat_completion_response_body(const std::string& model_id,
                                          const LogprobVector& v,
                                          std::size_t served,
                                          const Usage& usage,
                                          std::uint64_t request_index,
                                          bool include_logprobs);

// OpenAI-compatible endpoint serving one or more synthetic models from
// a single port (multi-model registry, one model id per entry).
//
// Behavior per request:
//   - draw_seed = the model's request counter (atomic, 0-based)
//   - served k  = min(top_logprobs requested, model top_k, vocab)
//   - usage emulates tokenizer variation: prompt_tokens alternates
//     1 and 2 (counter % 5 < 2 ? 2 : 1, so 20 requests sum to 28),
//     completion_tokens = 1
//   - models registered with logprobs_supported = false answer without
//     a logprobs block, like providers that ignore the parameter
//   - models with min_max_tokens > 0 reject smaller max_tokens with the
//     provider-style "integer below minimum value" message
// Routes: POST {/v1,}/chat/completions, GET /healthz.
class SimServer {
public:
    SimServer();
    ~SimServer();

    SimServer(const SimServer&) = delete;
    SimServer& operator=(const SimServer&) = delete;

    void add_model(const std::string& id, SyntheticModel model,
                   bool logprobs_supported = true, int min_max_tokens = 0);

    // Binds and serves on a background thread; port 0 picks a free
    // port.  Throws StartupError when the bind fails.
    void start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

    int port() const;
    std::string base_url() const; // http://host:port

    ModelStats stats(const std::string& id) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace logprobe::sim
