#include "logprobe/sim_server.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "logprobe/errors.hpp"

namespace logprobe::sim {

using nlohmann::json;

std::string chat_completion_response_body(const std::string& model_id,
                                          const LogprobVector& v,
                                          std::size_t served,
                                          const Usage& usage,
                                          std::uint64_t request_index,
                                          bool include_logprobs) {
    if (v.empty()) throw InvalidInput("cannot serve an empty logprob vector");
    served = std::min(served, v.size());

    json top = json::array();
    for (std::size_t i = 0; i < served; ++i) {
        json e;
        e["token"] = v[i].text;
        e["logprob"] = v[i].logprob;
        if (v[i].bytes.has_value()) {
            e["bytes"] = *v[i].bytes;
        } else {
            e["bytes"] = nullptr;
        }
        top.push_back(std::move(e));
    }

    json choice;
    choice["index"] = 0;
    choice["message"] = {{"role", "assistant"}, {"content", v.front().text}};
    choice["finish_reason"] = "length";
    if (include_logprobs) {
        json content0;
        content0["token"] = v.front().text;
        content0["logprob"] = v.front().logprob;
        content0["bytes"] = nullptr;
        content0["top_logprobs"] = std::move(top);
        choice["logprobs"] = {{"content", json::array({std::move(content0)})}};
    }

    json body;
    body["id"] = "chatcmpl-sim-" + std::to_string(request_index);
    body["object"] = "chat.completion";
    body["created"] = 0;
    body["model"] = model_id;
    body["choices"] = json::array({std::move(choice)});
    body["usage"] = {{"prompt_tokens", usage.prompt_tokens},
                     {"completion_tokens", usage.completion_tokens},
                     {"total_tokens",
                      usage.prompt_tokens + usage.completion_tokens}};
    return body.dump();
}

namespace {

struct Registered {
    SyntheticModel model;
    bool logprobs_supported = true;
    int min_max_tokens = 0;
    ModelStats stats;
};

json error_body(const std::string& message, const std::string& type) {
    return json{{"error", {{"message", message}, {"type", type}}}};
}

} // namespace

struct SimServer::Impl {
    httplib::Server server;
    std::thread thread;
    std::string host = "127.0.0.1";
    int port = 0;
    bool running = false;

    mutable std::mutex mutex;
    std::map<std::string, Registered> models;

    void handle_completion(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception&) {
            res.status = 400;
            res.set_content(error_body("request body is not valid JSON",
                                       "invalid_request_error")
                                .dump(),
                            "application/json");
            return;
        }
        const std::string model_id = body.value("model", "");

        std::unique_lock<std::mutex> lock(mutex);
        auto it = models.find(model_id);
        if (it == models.end()) {
            lock.unlock();
            res.status = 404;
            res.set_content(
                error_body("model not found: " + model_id, "not_found_error")
                    .dump(),
                "application/json");
            return;
        }
        Registered& reg = it->second;

        const int max_tokens = body.value("max_tokens", 16);
        if (reg.min_max_tokens > 0 && max_tokens < reg.min_max_tokens) {
            lock.unlock();
            res.status = 400;
            res.set_content(
                error_body("integer below minimum value. Expected a value >= " +
                               std::to_string(reg.min_max_tokens) +
                               ", got " + std::to_string(max_tokens),
                           "invalid_request_error")
                    .dump(),
                "application/json");
            return;
        }

        const bool want_logprobs = body.value("logprobs", false);
        std::size_t requested_k = reg.model.top_k;
        if (body.contains("top_logprobs") && body["top_logprobs"].is_number()) {
            const long long raw = body["top_logprobs"].get<long long>();
            if (raw < 0) {
                lock.unlock();
                res.status = 400;
                res.set_content(error_body("top_logprobs must be >= 0",
                                           "invalid_request_error")
                                    .dump(),
                                "application/json");
                return;
            }
            requested_k = static_cast<std::size_t>(raw);
        }

        const std::uint64_t counter = reg.stats.requests++;
        if (max_tokens == 1) ++reg.stats.single_token_requests;
        Usage usage;
        usage.prompt_tokens = (counter % 5 < 2) ? 2 : 1;
        usage.completion_tokens = 1;
        reg.stats.prompt_tokens += usage.prompt_tokens;
        reg.stats.completion_tokens += usage.completion_tokens;

        const SyntheticModel model = reg.model;
        const bool include_logprobs = want_logprobs && reg.logprobs_supported;
        lock.unlock();

        const LogprobVector v = sample_logprob_vector(model, counter);
        const std::size_t served =
            std::min({requested_k, model.top_k, model.vocab_size});
        res.status = 200;
        res.set_content(chat_completion_response_body(model_id, v, served,
                                                      usage, counter,
                                                      include_logprobs),
                        "application/json");
    }
};

SimServer::SimServer() : impl_(std::make_unique<Impl>()) {
    auto handler = [impl = impl_.get()](const httplib::Request& req,
                                        httplib::Response& res) {
        impl->handle_completion(req, res);
    };
    impl_->server.Post("/v1/chat/completions", handler);
    impl_->server.Post("/chat/completions", handler);
    impl_->server.Get("/healthz",
                      [](const httplib::Request&, httplib::Response& res) {
                          res.set_content("ok", "text/plain");
                      });
}

SimServer::~SimServer() { stop(); }

void SimServer::add_model(const std::string& id, SyntheticModel model,
                          bool logprobs_supported, int min_max_tokens) {
    if (id.empty()) throw InvalidInput("model id must be non-empty");
    std::lock_guard<std::mutex> lock(impl_->mutex);
    Registered reg;
    reg.model = std::move(model);
    reg.logprobs_supported = logprobs_supported;
    reg.min_max_tokens = min_max_tokens;
    impl_->models.insert_or_assign(id, std::move(reg));
}

void SimServer::start(const std::string& host, int port) {
    if (impl_->running) throw StartupError("server already running");
    impl_->host = host;
    if (port == 0) {
        impl_->port = impl_->server.bind_to_any_port(host);
        if (impl_->port <= 0) {
            throw StartupError("cannot bind " + host);
        }
    } else {
        if (!impl_->server.bind_to_port(host, port)) {
            throw StartupError("cannot bind " + host + ":" +
                               std::to_string(port));
        }
        impl_->port = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    impl_->running = true;
}

void SimServer::stop() {
    if (!impl_->running) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
    impl_->running = false;
}

int SimServer::port() const { return impl_->port; }

std::string SimServer::base_url() const {
    return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

ModelStats SimServer::stats(const std::string& id) const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    const auto it = impl_->models.find(id);
    if (it == impl_->models.end()) {
        throw InvalidInput("unknown model id: " + id);
    }
    return it->second.stats;
}

} // namespace logprobe::sim
