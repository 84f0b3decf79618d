// logprobe: probe endpoints, survey fleets, poll into a store, run
// two-sample tests and change scans, serve the synthetic endpoint, and
// run the evaluation harness.
//
// Exit codes: 0 success / no change, 1 usage error, 2 runtime error
// (stderr carries "error[id]: message" with a stable id), 3 a `test`
// found p < alpha or a `scan` emitted at least one change event.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "logprobe/baselines.hpp"
#include "logprobe/client.hpp"
#include "logprobe/errors.hpp"
#include "logprobe/eval.hpp"
#include "logprobe/monitor.hpp"
#include "logprobe/simulator.hpp"
#include "logprobe/sim_server.hpp"
#include "logprobe/stats.hpp"
#include "logprobe/store.hpp"
#include "logprobe/timeutil.hpp"
#include "logprobe/tokens.hpp"

namespace {

using nlohmann::json;
using namespace logprobe;

std::atomic<bool> g_stop{false};

extern "C" void handle_stop_signal(int) { g_stop.store(true); }

void install_stop_handlers() {
    std::signal(SIGINT, handle_stop_signal);
    std::signal(SIGTERM, handle_stop_signal);
}

// Verbose parameter echo; one line per effective value, stderr only so
// stdout stays machine-readable.
struct Verbose {
    bool on = false;
    template <typename T> void kv(const std::string& key, const T& value) const {
        if (on) std::cerr << "# " << key << " = " << value << "\n";
    }
};

// ==== config files ====

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

void reject_unknown_keys(const json& obj, const std::vector<std::string>& known,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
}

// Fleet file: a JSON array (or {"endpoints": [...]}) of endpoint
// objects.  Auth tokens are never stored here; `auth_token_env` names
// the environment variable holding the bearer token.
std::vector<EndpointConfig> load_fleet(const std::string& path) {
    json root = load_json_file(path);
    if (root.is_object() && root.contains("endpoints")) root = root["endpoints"];
    if (!root.is_array() || root.empty())
        throw ConfigError("fleet config must be a non-empty array: " + path);
    std::vector<EndpointConfig> fleet;
    fleet.reserve(root.size());
    for (const auto& e : root) {
        if (!e.is_object())
            throw ConfigError("fleet entries must be objects: " + path);
        reject_unknown_keys(e,
                            {"base_url", "model", "prompt", "top_logprobs",
                             "max_tokens", "temperature", "timeout_seconds",
                             "auth_token_env", "max_attempts"},
                            path);
        if (!e.contains("base_url") || !e.contains("model"))
            throw ConfigError("fleet entries need base_url and model: " + path);
        EndpointConfig c;
        c.base_url = e["base_url"].get<std::string>();
        c.model_id = e["model"].get<std::string>();
        if (e.contains("prompt")) c.prompt = e["prompt"].get<std::string>();
        if (e.contains("top_logprobs")) c.top_logprobs = e["top_logprobs"].get<int>();
        if (e.contains("max_tokens")) c.max_output_tokens = e["max_tokens"].get<int>();
        if (e.contains("temperature")) c.temperature = e["temperature"].get<double>();
        if (e.contains("timeout_seconds"))
            c.timeout_seconds = e["timeout_seconds"].get<double>();
        if (e.contains("auth_token_env"))
            c.auth_token_env = e["auth_token_env"].get<std::string>();
        if (e.contains("max_attempts"))
            c.retry.max_attempts = e["max_attempts"].get<int>();
        fleet.push_back(std::move(c));
    }
    return fleet;
}

struct SimModelSpec {
    std::string id;
    sim::SyntheticModel model;
    bool logprobs_supported = true;
    int min_max_tokens = 0;
};

// Simulator file: a JSON array (or {"models": [...]}) of model specs;
// base logits are derived from the seed, and an optional variant block
// applies a controlled change on top.
std::vector<SimModelSpec> load_sim_models(const std::string& path) {
    json root = load_json_file(path);
    if (root.is_object() && root.contains("models")) root = root["models"];
    if (!root.is_array() || root.empty())
        throw ConfigError("simulator config must be a non-empty array: " + path);
    std::vector<SimModelSpec> specs;
    for (const auto& e : root) {
        if (!e.is_object())
            throw ConfigError("model entries must be objects: " + path);
        reject_unknown_keys(e,
                            {"id", "vocab_size", "noise_sigma", "top_k", "seed",
                             "logprobs_supported", "min_max_tokens", "variant"},
                            path);
        if (!e.contains("id"))
            throw ConfigError("model entries need an id: " + path);
        SimModelSpec s;
        s.id = e["id"].get<std::string>();
        const auto vocab = e.value("vocab_size", sim::kDefaultVocab);
        const auto sigma = e.value("noise_sigma", sim::kDefaultNoiseSigma);
        const auto top_k = e.value("top_k", sim::kDefaultTopK);
        const auto seed = e.value("seed", std::uint64_t{17});
        s.model = sim::make_random_model(vocab, sigma, top_k, seed);
        if (e.contains("variant")) {
            const auto& v = e["variant"];
            reject_unknown_keys(v, {"kind", "magnitude"}, path);
            sim::VariantSpec spec;
            spec.kind = sim::parse_variant_kind(v.at("kind").get<std::string>());
            spec.magnitude = v.value("magnitude", 0.0);
            s.model = sim::apply_variant(s.model, spec);
        }
        s.logprobs_supported = e.value("logprobs_supported", true);
        s.min_max_tokens = e.value("min_max_tokens", 0);
        specs.push_back(std::move(s));
    }
    return specs;
}

// ==== record file IO (offline inputs) ====

std::vector<SeriesRecord> read_record_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open record file: " + path);
    std::vector<SeriesRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(record_from_json_line(line));
        } catch (const Error&) {
            throw InvalidInput(path + ":" + std::to_string(line_no) +
                               ": malformed record line");
        }
    }
    if (records.empty())
        throw InvalidInput("record file holds no records: " + path);
    return records;
}

SampleSet records_to_samples(const std::vector<SeriesRecord>& records) {
    SampleSet set;
    set.reserve(records.size());
    for (const auto& r : records) set.push_back(r.entries);
    return set;
}

std::vector<SeriesPoint> records_to_series(
    const std::vector<SeriesRecord>& records, const std::string& path) {
    std::vector<SeriesPoint> series;
    series.reserve(records.size());
    for (const auto& r : records) {
        if (!series.empty() && r.timestamp <= series.back().timestamp)
            throw OrderingError(path +
                                ": timestamps not strictly increasing (is "
                                "this a single series?)");
        series.push_back({r.timestamp, r.entries, r.endpoint_id, r.prompt});
    }
    return series;
}

// ==== probe ====

struct ProbeOpts {
    std::string base_url;
    std::string model;
    std::string prompt = "x";
    std::string auth_env;
    int top_logprobs = 20;
    int max_tokens = 1;
    double temperature = 1.0;
    double timeout = 30.0;
    int attempts = 3;
};

EndpointConfig to_endpoint(const ProbeOpts& o) {
    EndpointConfig c;
    c.base_url = o.base_url;
    c.model_id = o.model;
    c.prompt = o.prompt;
    c.auth_token_env = o.auth_env;
    c.top_logprobs = o.top_logprobs;
    c.max_output_tokens = o.max_tokens;
    c.temperature = o.temperature;
    c.timeout_seconds = o.timeout;
    c.retry.max_attempts = o.attempts;
    return c;
}

int run_probe(const ProbeOpts& o, const Verbose& v) {
    const auto c = to_endpoint(o);
    v.kv("endpoint", c.endpoint_id());
    v.kv("prompt", c.prompt);
    v.kv("top_logprobs", c.top_logprobs);
    v.kv("max_tokens", c.max_output_tokens);
    v.kv("temperature", c.temperature);
    v.kv("timeout_seconds", c.timeout_seconds);
    v.kv("max_attempts", c.retry.max_attempts);
    const auto outcome = probe(c);
    json j;
    j["endpoint"] = c.endpoint_id();
    j["status"] = probe_status_name(outcome.status);
    j["attempts"] = outcome.attempts;
    if (!outcome.detail.empty()) j["detail"] = outcome.detail;
    if (outcome.status == ProbeStatus::ok) {
        j["logprobs"] = json::array();
        for (const auto& e : outcome.logprobs)
            j["logprobs"].push_back({{"token", e.text}, {"logprob", e.logprob}});
        if (outcome.usage)
            j["usage"] = {{"prompt_tokens", outcome.usage->prompt_tokens},
                          {"completion_tokens", outcome.usage->completion_tokens}};
    }
    std::cout << j.dump(2) << "\n";
    if (outcome.status != ProbeStatus::ok) {
        std::cerr << "error[" << probe_status_name(outcome.status)
                  << "]: " << outcome.detail << "\n";
        return 2;
    }
    return 0;
}

// ==== survey ====

int run_survey(const std::string& config, const Verbose& v) {
    const auto fleet = load_fleet(config);
    v.kv("endpoints", fleet.size());
    const auto report = survey(fleet);
    std::cout << survey_to_json(report) << "\n";
    return 0;
}

// ==== poll ====

struct PollOpts {
    std::string config;
    std::string data_dir;
    double interval = 3600.0;
    std::uint64_t ticks = 0;
    std::size_t parallelism = 16;
    double jitter = 0.05;
    std::uint64_t seed = 0;
};

int run_poll(const PollOpts& o, const Verbose& v) {
    const auto fleet = load_fleet(o.config);
    install_stop_handlers();
    Store store(o.data_dir);
    PollOptions options;
    options.interval_seconds = o.interval;
    options.max_ticks = o.ticks;
    options.parallelism = o.parallelism;
    options.jitter_fraction = o.jitter;
    options.seed = o.seed;
    v.kv("endpoints", fleet.size());
    v.kv("data_dir", o.data_dir);
    v.kv("interval_seconds", options.interval_seconds);
    v.kv("max_ticks", options.max_ticks);
    v.kv("parallelism", options.parallelism);
    v.kv("jitter_fraction", options.jitter_fraction);
    std::cerr << "# seed = " << options.seed << "\n";
    const auto stats = poll_loop(fleet, options, store, &g_stop);
    for (const auto& w : store.drain_warnings()) std::cerr << "# " << w << "\n";
    json j;
    j["ticks"] = stats.ticks;
    j["ok"] = stats.ok;
    j["stored"] = stats.stored;
    j["transport_errors"] = stats.transport_errors;
    j["rate_limited"] = stats.rate_limited;
    j["protocol_errors"] = stats.protocol_errors;
    j["logprobs_unsupported"] = stats.logprobs_unsupported;
    j["store_errors"] = stats.store_errors;
    std::cout << j.dump(2) << "\n";
    return 0;
}

// ==== test ====

struct TestOpts {
    std::string file_a;
    std::string file_b;
    bool live = false;
    std::string base_url;
    std::string model_a;
    std::string model_b;
    std::string prompt = "x";
    std::string auth_env;
    int top_logprobs = 20;
    double timeout = 30.0;
    std::size_t n = 10;
    std::uint64_t permutations = kDefaultPermutations;
    std::uint64_t seed = 17;
    bool exact = false;
    std::uint64_t cap = kDefaultExactCap;
    double alpha = 0.05;
    bool text_only = false;
};

// The test statistic tracks tokens by alignment key; map keys back to
// display text so the report names tokens the way the endpoint did.
std::unordered_map<std::string, std::string> display_names(
    const SampleSet& a, const SampleSet& b, bool text_only) {
    std::unordered_map<std::string, std::string> names;
    for (const SampleSet* set : {&a, &b})
        for (const auto& sample : *set)
            for (const auto& e : sample) names.emplace(token_key(e, text_only), e.text);
    return names;
}

json test_result_json(const TestResult& r, double alpha,
                      const std::unordered_map<std::string, std::string>& names) {
    json j;
    j["statistic"] = r.statistic;
    j["p_value"] = r.p_value;
    j["n_samples"] = r.n_samples;
    j["n_tokens"] = r.n_tokens;
    j["n_permutations"] = r.n_permutations;
    j["exact"] = r.exact;
    j["seed"] = r.seed;
    j["alpha"] = alpha;
    j["significant"] = r.p_value < alpha;
    // The largest per-token mean shifts, most moved first.
    std::vector<std::size_t> idx(r.tokens.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(r.mean_a[a] - r.mean_b[a]) >
               std::abs(r.mean_a[b] - r.mean_b[b]);
    });
    j["top_tokens"] = json::array();
    for (std::size_t i = 0; i < idx.size() && i < 5; ++i) {
        const std::size_t k = idx[i];
        const auto name = names.find(r.tokens[k]);
        j["top_tokens"].push_back({{"token", name != names.end()
                                                 ? name->second
                                                 : r.tokens[k]},
                                   {"mean_a", r.mean_a[k]},
                                   {"mean_b", r.mean_b[k]},
                                   {"abs_diff",
                                    std::abs(r.mean_a[k] - r.mean_b[k])}});
    }
    return j;
}

int run_test(const TestOpts& o, const Verbose& v) {
    SampleSet a;
    SampleSet b;
    json extra;
    if (o.live) {
        if (o.base_url.empty() || o.model_a.empty() || o.model_b.empty())
            throw InvalidInput(
                "--live needs --url, --model-a and --model-b");
        ProbeOpts pa;
        pa.base_url = o.base_url;
        pa.model = o.model_a;
        pa.prompt = o.prompt;
        pa.auth_env = o.auth_env;
        pa.top_logprobs = o.top_logprobs;
        pa.timeout = o.timeout;
        auto ca = to_endpoint(pa);
        auto cb = ca;
        cb.model_id = o.model_b;
        v.kv("endpoint_a", ca.endpoint_id());
        v.kv("endpoint_b", cb.endpoint_id());
        v.kv("n_per_side", o.n);
        const auto ra = collect_samples(ca, o.n);
        const auto rb = collect_samples(cb, o.n);
        a = ra.samples;
        b = rb.samples;
        extra["requests"] = ra.requests + rb.requests;
        extra["usage"] = {{"prompt_tokens", ra.total_usage.prompt_tokens +
                                                rb.total_usage.prompt_tokens},
                          {"completion_tokens",
                           ra.total_usage.completion_tokens +
                               rb.total_usage.completion_tokens}};
    } else {
        if (o.file_a.empty() || o.file_b.empty())
            throw InvalidInput("offline test needs --a and --b record files");
        a = records_to_samples(read_record_file(o.file_a));
        b = records_to_samples(read_record_file(o.file_b));
        v.kv("samples_a", a.size());
        v.kv("samples_b", b.size());
    }
    v.kv("permutations", o.permutations);
    v.kv("seed", o.seed);
    v.kv("exact", o.exact);
    v.kv("alpha", o.alpha);
    v.kv("text_only", o.text_only);
    const TestResult result =
        o.exact ? exact_permutation_test(a, b, o.cap, o.text_only)
                : permutation_test(a, b, o.permutations, o.seed, o.text_only);
    json j = test_result_json(result, o.alpha,
                              display_names(a, b, o.text_only));
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = *it;
    std::cout << j.dump(2) << "\n";
    return result.p_value < o.alpha ? 3 : 0;
}

// ==== scan ====

struct ScanOpts {
    std::string input;
    std::string data_dir;
    std::string endpoint;
    std::string prompt;
    std::size_t w = 24;
    std::size_t window = 100;
    double k_sigma = 12.0;
    double floor = 1.0;
    std::int64_t cooldown = -1; // -1 = default (2w)
    bool text_only = false;
};

int run_scan(const ScanOpts& o, const Verbose& v) {
    std::vector<SeriesPoint> series;
    if (!o.input.empty()) {
        series = records_to_series(read_record_file(o.input), o.input);
    } else {
        if (o.data_dir.empty() || o.endpoint.empty())
            throw InvalidInput("scan needs --input or --data-dir + --endpoint");
        Store store(o.data_dir);
        series = store.read_series(o.endpoint, o.prompt);
        for (const auto& w : store.drain_warnings())
            std::cerr << "# " << w << "\n";
    }
    MonitorParams params;
    params.w = o.w;
    params.window = o.window;
    params.k_sigma = o.k_sigma;
    params.abs_floor = o.floor;
    if (o.cooldown >= 0) params.cooldown = static_cast<std::size_t>(o.cooldown);
    params.text_only = o.text_only;
    v.kv("points", series.size());
    v.kv("w", params.w);
    v.kv("window", params.window);
    v.kv("k_sigma", params.k_sigma);
    v.kv("abs_floor", params.abs_floor);
    v.kv("cooldown", params.effective_cooldown());
    v.kv("text_only", params.text_only);
    const auto events = detect_changes(series, params);
    for (const auto& e : events) std::cout << event_to_json_line(e) << "\n";
    std::cerr << "# events = " << events.size() << "\n";
    return events.empty() ? 0 : 3;
}

// ==== simulate ====

struct SimulateOpts {
    std::string config;
    std::string host = "127.0.0.1";
    int port = 0;
    std::int64_t serve_for_ms = 0; // 0 = until SIGINT/SIGTERM
};

int run_simulate(const SimulateOpts& o, const Verbose& v) {
    const auto specs = load_sim_models(o.config);
    install_stop_handlers();
    sim::SimServer server;
    for (const auto& s : specs)
        server.add_model(s.id, s.model, s.logprobs_supported, s.min_max_tokens);
    server.start(o.host, o.port);
    std::cout << "listening " << server.base_url() << "\n";
    for (const auto& s : specs) {
        std::cout << "model " << s.id << " vocab=" << s.model.vocab_size
                  << " top_k=" << s.model.top_k
                  << " sigma=" << s.model.noise_sigma
                  << " seed=" << s.model.seed
                  << " logprobs=" << (s.logprobs_supported ? "yes" : "no")
                  << "\n";
    }
    std::cout.flush();
    v.kv("host", o.host);
    v.kv("port", server.port());
    v.kv("serve_for_ms", o.serve_for_ms);
    const auto started = std::chrono::steady_clock::now();
    while (!g_stop.load()) {
        if (o.serve_for_ms > 0) {
            const auto elapsed =
                std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - started)
                    .count();
            if (elapsed >= o.serve_for_ms) break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    server.stop();
    return 0;
}

// ==== bench ====

struct BenchOpts {
    std::vector<std::string> methods{"lt"};
    std::string variant = "logit-shift";
    std::vector<double> ladder;
    std::size_t trials = 200;
    std::size_t n = 10;
    std::vector<std::uint64_t> seeds{17, 18, 19, 20, 21};
    std::size_t vocab = sim::kDefaultVocab;
    double sigma = sim::kDefaultNoiseSigma;
    std::size_t top_k = sim::kDefaultTopK;
    std::size_t met_length = kDefaultMetLength;
    std::size_t mmlu_prompts = 25;
    std::size_t resamples = 1000;
    double level = 0.95;
    std::string format = "csv";
};

int run_bench(const BenchOpts& o, const Verbose& v) {
    eval::ExperimentPlan plan;
    plan.methods.clear();
    for (const auto& m : o.methods) plan.methods.push_back(eval::parse_method(m));
    plan.variant = sim::parse_variant_kind(o.variant);
    plan.ladder = o.ladder;
    plan.trials = o.trials;
    plan.n_per_test = o.n;
    plan.seeds = o.seeds;
    plan.vocab_size = o.vocab;
    plan.noise_sigma = o.sigma;
    plan.top_k = o.top_k;
    plan.met_length = o.met_length;
    plan.mmlu_prompts = o.mmlu_prompts;
    plan.bootstrap_resamples = o.resamples;
    plan.ci_level = o.level;
    if (o.format != "csv" && o.format != "json")
        throw InvalidInput("--format must be csv or json");
    v.kv("variant", o.variant);
    v.kv("trials", plan.trials);
    v.kv("n_per_test", plan.n_per_test);
    v.kv("vocab_size", plan.vocab_size);
    v.kv("noise_sigma", plan.noise_sigma);
    v.kv("top_k", plan.top_k);
    v.kv("met_length", plan.met_length);
    v.kv("mmlu_prompts", plan.mmlu_prompts);
    v.kv("bootstrap_resamples", plan.bootstrap_resamples);
    v.kv("ci_level", plan.ci_level);
    const auto result = eval::run_benchmark(plan);
    std::cout << (o.format == "csv" ? eval::benchmark_to_csv(result)
                                    : eval::benchmark_to_json(result));
    return 0;
}

// ==== ablate ====

struct AblateOpts {
    std::vector<std::string> prompts; // label or label=sigma
    std::size_t models = 5;
    std::size_t trials = 200;
    std::size_t n = 10;
    std::string variant = "logit-shift";
    double magnitude = 0.25;
    std::uint64_t seed = 17;
    std::size_t vocab = sim::kDefaultVocab;
    std::size_t top_k = sim::kDefaultTopK;
};

int run_ablate(const AblateOpts& o, const Verbose& v) {
    eval::AblationPlan plan;
    for (const auto& spec : o.prompts) {
        eval::PromptSpec p;
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
            p.label = spec;
        } else {
            p.label = spec.substr(0, eq);
            try {
                p.noise_sigma = std::stod(spec.substr(eq + 1));
            } catch (const std::exception&) {
                throw InvalidInput("bad prompt spec (want label=sigma): " + spec);
            }
        }
        plan.prompts.push_back(std::move(p));
    }
    plan.n_models = o.models;
    plan.trials = o.trials;
    plan.n_per_test = o.n;
    plan.variant.kind = sim::parse_variant_kind(o.variant);
    plan.variant.magnitude = o.magnitude;
    plan.vocab_size = o.vocab;
    plan.top_k = o.top_k;
    plan.seed = o.seed;
    v.kv("prompts", plan.prompts.size());
    v.kv("n_models", plan.n_models);
    v.kv("trials", plan.trials);
    v.kv("n_per_test", plan.n_per_test);
    v.kv("variant", o.variant);
    v.kv("magnitude", plan.variant.magnitude);
    v.kv("seed", plan.seed);
    const auto result = eval::prompt_ablation(plan);
    std::cout << eval::ablation_to_csv(result);
    return 0;
}

// ==== report ====

struct ReportOpts {
    std::string data_dir;
    std::string export_path;
};

int run_report(const ReportOpts& o, const Verbose& v) {
    Store store(o.data_dir);
    const auto keys = store.list_series();
    v.kv("series", keys.size());
    json j;
    j["series"] = json::array();
    std::uint64_t total = 0;
    for (const auto& key : keys) {
        const auto records = store.read_records(key.endpoint_id, key.prompt);
        json s;
        s["endpoint"] = key.endpoint_id;
        s["prompt"] = key.prompt;
        s["points"] = records.size();
        if (!records.empty()) {
            s["first"] = format_rfc3339(records.front().timestamp);
            s["last"] = format_rfc3339(records.back().timestamp);
        }
        total += records.size();
        j["series"].push_back(std::move(s));
    }
    j["total_points"] = total;
    if (!o.export_path.empty()) {
        store.export_archive(o.export_path);
        j["exported"] = o.export_path;
    }
    for (const auto& w : store.drain_warnings()) std::cerr << "# " << w << "\n";
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"logprob change detection for chat-completion endpoints"};
    app.require_subcommand(1);
    Verbose verbose;
    app.add_flag("--verbose", verbose.on, "echo effective parameters to stderr");

    std::function<int()> action;

    ProbeOpts probe_opts;
    auto* probe_cmd = app.add_subcommand("probe", "single logprob probe");
    probe_cmd->add_option("--url", probe_opts.base_url, "base URL")->required();
    probe_cmd->add_option("--model", probe_opts.model, "model id")->required();
    probe_cmd->add_option("--prompt", probe_opts.prompt, "probe prompt");
    probe_cmd->add_option("--top-logprobs", probe_opts.top_logprobs,
                          "requested top-k");
    probe_cmd->add_option("--max-tokens", probe_opts.max_tokens,
                          "completion budget");
    probe_cmd->add_option("--temperature", probe_opts.temperature, "temperature");
    probe_cmd->add_option("--timeout", probe_opts.timeout, "seconds");
    probe_cmd->add_option("--auth-env", probe_opts.auth_env,
                          "env var holding the bearer token");
    probe_cmd->add_option("--attempts", probe_opts.attempts, "retry attempts");
    probe_cmd->callback([&] { action = [&] { return run_probe(probe_opts, verbose); }; });

    std::string survey_config;
    auto* survey_cmd =
        app.add_subcommand("survey", "fleet logprob support survey");
    survey_cmd->add_option("--config", survey_config, "fleet JSON file")
        ->required();
    survey_cmd->callback(
        [&] { action = [&] { return run_survey(survey_config, verbose); }; });

    PollOpts poll_opts;
    auto* poll_cmd = app.add_subcommand("poll", "periodic fleet polling daemon");
    poll_cmd->add_option("--config", poll_opts.config, "fleet JSON file")
        ->required();
    poll_cmd->add_option("--data-dir", poll_opts.data_dir, "store directory")
        ->required();
    poll_cmd->add_option("--interval", poll_opts.interval, "seconds per tick");
    poll_cmd->add_option("--ticks", poll_opts.ticks, "tick budget (0 = run on)");
    poll_cmd->add_option("--parallelism", poll_opts.parallelism,
                         "concurrent probes");
    poll_cmd->add_option("--jitter", poll_opts.jitter,
                         "per-tick jitter fraction of the interval");
    poll_cmd->add_option("--seed", poll_opts.seed, "jitter stream seed");
    poll_cmd->callback([&] { action = [&] { return run_poll(poll_opts, verbose); }; });

    TestOpts test_opts;
    auto* test_cmd =
        app.add_subcommand("test", "two-sample permutation test (exit 3 = change)");
    test_cmd->add_option("--a", test_opts.file_a, "record JSONL, group A");
    test_cmd->add_option("--b", test_opts.file_b, "record JSONL, group B");
    test_cmd->add_flag("--live", test_opts.live, "draw both groups live");
    test_cmd->add_option("--url", test_opts.base_url, "base URL (live)");
    test_cmd->add_option("--model-a", test_opts.model_a, "model id, group A (live)");
    test_cmd->add_option("--model-b", test_opts.model_b, "model id, group B (live)");
    test_cmd->add_option("--prompt", test_opts.prompt, "probe prompt (live)");
    test_cmd->add_option("--auth-env", test_opts.auth_env,
                         "env var holding the bearer token (live)");
    test_cmd->add_option("--top-logprobs", test_opts.top_logprobs,
                         "requested top-k (live)");
    test_cmd->add_option("--timeout", test_opts.timeout, "seconds (live)");
    test_cmd->add_option("-n,--n", test_opts.n, "samples per side (live)");
    test_cmd->add_option("--permutations", test_opts.permutations,
                         "permutation count");
    test_cmd->add_option("--seed", test_opts.seed, "permutation stream seed");
    test_cmd->add_flag("--exact", test_opts.exact, "enumerate all splits");
    test_cmd->add_option("--cap", test_opts.cap, "exact enumeration cap");
    test_cmd->add_option("--alpha", test_opts.alpha, "significance level");
    test_cmd->add_flag("--text-only", test_opts.text_only,
                       "match tokens by text, ignoring bytes");
    test_cmd->callback([&] { action = [&] { return run_test(test_opts, verbose); }; });

    ScanOpts scan_opts;
    auto* scan_cmd =
        app.add_subcommand("scan", "change-point scan over a stored series");
    scan_cmd->add_option("--input", scan_opts.input, "record JSONL (one series)");
    scan_cmd->add_option("--data-dir", scan_opts.data_dir, "store directory");
    scan_cmd->add_option("--endpoint", scan_opts.endpoint, "endpoint id in store");
    scan_cmd->add_option("--prompt", scan_opts.prompt, "prompt key in store");
    scan_cmd->add_option("--w", scan_opts.w, "adjacent window width");
    scan_cmd->add_option("--window", scan_opts.window, "trailing stats window");
    scan_cmd->add_option("--k-sigma", scan_opts.k_sigma, "trigger multiplier");
    scan_cmd->add_option("--floor", scan_opts.floor, "absolute trigger floor");
    scan_cmd->add_option("--cooldown", scan_opts.cooldown,
                         "positions muted after an event (-1 = 2w)");
    scan_cmd->add_flag("--text-only", scan_opts.text_only,
                       "match tokens by text, ignoring bytes");
    scan_cmd->callback([&] { action = [&] { return run_scan(scan_opts, verbose); }; });

    SimulateOpts sim_opts;
    auto* sim_cmd =
        app.add_subcommand("simulate", "serve synthetic chat-completion models");
    sim_cmd->add_option("--config", sim_opts.config, "model JSON file")
        ->required();
    sim_cmd->add_option("--host", sim_opts.host, "bind host");
    sim_cmd->add_option("--port", sim_opts.port, "bind port (0 = pick free)");
    sim_cmd->add_option("--serve-for-ms", sim_opts.serve_for_ms,
                        "stop after this many ms (0 = until signal)");
    sim_cmd->callback([&] { action = [&] { return run_simulate(sim_opts, verbose); }; });

    BenchOpts bench_opts;
    auto* bench_cmd =
        app.add_subcommand("bench", "detection AUC across a difficulty ladder");
    bench_cmd->add_option("--methods", bench_opts.methods, "lt,met,mmlu")
        ->delimiter(',');
    bench_cmd->add_option("--variant", bench_opts.variant, "variant kind");
    bench_cmd->add_option("--ladder", bench_opts.ladder, "magnitudes")
        ->delimiter(',')
        ->required();
    bench_cmd->add_option("--trials", bench_opts.trials, "tests per cell side");
    bench_cmd->add_option("-n,--n", bench_opts.n, "samples per group");
    bench_cmd->add_option("--seeds", bench_opts.seeds, "model seeds")
        ->delimiter(',');
    bench_cmd->add_option("--vocab", bench_opts.vocab, "vocabulary size");
    bench_cmd->add_option("--sigma", bench_opts.sigma, "serving noise sigma");
    bench_cmd->add_option("--top-k", bench_opts.top_k, "served top-k");
    bench_cmd->add_option("--met-length", bench_opts.met_length,
                          "sequence length for met");
    bench_cmd->add_option("--mmlu-prompts", bench_opts.mmlu_prompts,
                          "question count for mmlu");
    bench_cmd->add_option("--resamples", bench_opts.resamples,
                          "bootstrap resamples");
    bench_cmd->add_option("--level", bench_opts.level, "CI level");
    bench_cmd->add_option("--format", bench_opts.format, "csv or json");
    bench_cmd->callback([&] { action = [&] { return run_bench(bench_opts, verbose); }; });

    AblateOpts ablate_opts;
    auto* ablate_cmd =
        app.add_subcommand("ablate", "per-prompt relative detection power");
    ablate_cmd
        ->add_option("--prompt", ablate_opts.prompts,
                     "prompt spec label=sigma (repeatable)")
        ->required();
    ablate_cmd->add_option("--models", ablate_opts.models, "model replicates");
    ablate_cmd->add_option("--trials", ablate_opts.trials, "tests per cell side");
    ablate_cmd->add_option("-n,--n", ablate_opts.n, "samples per group");
    ablate_cmd->add_option("--variant", ablate_opts.variant, "variant kind");
    ablate_cmd->add_option("--magnitude", ablate_opts.magnitude,
                           "variant magnitude");
    ablate_cmd->add_option("--seed", ablate_opts.seed, "base seed");
    ablate_cmd->add_option("--vocab", ablate_opts.vocab, "vocabulary size");
    ablate_cmd->add_option("--top-k", ablate_opts.top_k, "served top-k");
    ablate_cmd->callback([&] { action = [&] { return run_ablate(ablate_opts, verbose); }; });

    ReportOpts report_opts;
    auto* report_cmd = app.add_subcommand("report", "store contents summary");
    report_cmd->add_option("--data-dir", report_opts.data_dir, "store directory")
        ->required();
    report_cmd->add_option("--export", report_opts.export_path,
                           "write a flat JSONL archive here");
    report_cmd->callback([&] { action = [&] { return run_report(report_opts, verbose); }; });

    for (auto* cmd : {probe_cmd, survey_cmd, poll_cmd, test_cmd, scan_cmd,
                      sim_cmd, bench_cmd, ablate_cmd, report_cmd})
        cmd->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        app.exit(e);
        return 1;
    }

    try {
        return action();
    } catch (const Error& e) {
        std::cerr << "error[" << e.id() << "]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return 2;
    }
}
