#include "logprobe/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <system_error>
#include <utility>

#include "json.hpp"
#include "logprobe/errors.hpp"

namespace logprobe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Filesystem-safe directory name for an endpoint id; a hash suffix is
// added whenever sanitization loses information.
std::string endpoint_dir_name(const std::string& endpoint_id) {
    std::string safe;
    safe.reserve(endpoint_id.size());
    for (const char c : endpoint_id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '.' || c == '_' ||
                        c == '-';
        safe.push_back(ok ? c : '_');
    }
    if (safe.size() > 100) safe.resize(100);
    if (safe.empty() || safe != endpoint_id) {
        if (safe.empty()) safe = "endpoint";
        safe += "-" + hex64(fnv1a64(endpoint_id)).substr(0, 8);
    }
    return safe;
}

json entry_to_json(const LogprobEntry& e) {
    json j;
    j["token"] = e.text;
    j["logprob"] = e.logprob;
    if (e.bytes.has_value()) {
        j["bytes"] = *e.bytes;
    } else {
        j["bytes"] = nullptr;
    }
    return j;
}

LogprobEntry entry_from_json(const json& j) {
    LogprobEntry e;
    e.text = j.at("token").get<std::string>();
    e.logprob = j.at("logprob").get<double>();
    if (j.contains("bytes") && !j.at("bytes").is_null()) {
        e.bytes = j.at("bytes").get<std::vector<std::uint8_t>>();
    }
    return e;
}

void validate_record(const SeriesRecord& r) {
    if (r.schema_version < 1) throw InvalidInput("schema_version must be >= 1");
    if (r.endpoint_id.empty()) throw InvalidInput("endpoint_id must be non-empty");
    if (r.entries.empty()) throw InvalidInput("record needs at least one entry");
    for (const auto& e : r.entries) {
        if (e.logprob > 0.0) {
            throw InvalidInput("logprob must be <= 0 (got " +
                               std::to_string(e.logprob) + ")");
        }
    }
}

struct ParsedFile {
    std::vector<SeriesRecord> records;
    std::uint64_t valid_bytes = 0; // file prefix holding intact lines
    bool torn_tail = false;
};

// Shared reader implementing the recovery contract: only a malformed
// final line is forgiven.
ParsedFile parse_series_file(const fs::path& path) {
    ParsedFile out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string line;
    std::uint64_t offset = 0;
    bool pending_bad = false;
    std::string pending_detail;
    while (std::getline(in, line)) {
        const bool had_newline = !in.eof();
        const std::uint64_t line_bytes = line.size() + (had_newline ? 1 : 0);
        if (pending_bad) {
            throw StorageError("corrupt record in " + path.string() + ": " +
                               pending_detail);
        }
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            // Blank padding is tolerated only as a torn tail.
            pending_bad = true;
            pending_detail = "blank line";
        } else {
            try {
                out.records.push_back(record_from_json_line(line));
                out.valid_bytes = offset + line_bytes;
            } catch (const Error& e) {
                pending_bad = true;
                pending_detail = e.what();
            }
        }
        offset += line_bytes;
    }
    if (pending_bad) out.torn_tail = true;

    for (std::size_t i = 1; i < out.records.size(); ++i) {
        if (out.records[i].timestamp <= out.records[i - 1].timestamp) {
            throw StorageError("timestamps out of order in " + path.string());
        }
    }
    return out;
}

} // namespace

std::string record_to_json_line(const SeriesRecord& r) {
    json j;
    j["schema_version"] = r.schema_version;
    j["endpoint_id"] = r.endpoint_id;
    j["prompt"] = r.prompt;
    j["timestamp"] = format_rfc3339(r.timestamp);
    json entries = json::array();
    for (const auto& e : r.entries) entries.push_back(entry_to_json(e));
    j["entries"] = std::move(entries);
    j["request_params"] = {{"top_logprobs", r.request_params.top_logprobs},
                           {"max_tokens", r.request_params.max_tokens},
                           {"temperature", r.request_params.temperature}};
    if (r.usage.has_value()) {
        j["usage"] = {{"prompt_tokens", r.usage->prompt_tokens},
                      {"completion_tokens", r.usage->completion_tokens}};
    }
    return j.dump();
}

SeriesRecord record_from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw StorageError(std::string("bad record line: ") + e.what());
    }
    try {
        SeriesRecord r;
        r.schema_version = j.at("schema_version").get<int>();
        r.endpoint_id = j.at("endpoint_id").get<std::string>();
        r.prompt = j.at("prompt").get<std::string>();
        r.timestamp = parse_rfc3339(j.at("timestamp").get<std::string>());
        for (const auto& e : j.at("entries")) {
            r.entries.push_back(entry_from_json(e));
        }
        if (j.contains("request_params")) {
            const auto& p = j.at("request_params");
            r.request_params.top_logprobs = p.value("top_logprobs", 0);
            r.request_params.max_tokens = p.value("max_tokens", 0);
            r.request_params.temperature = p.value("temperature", 1.0);
        }
        if (j.contains("usage") && !j.at("usage").is_null()) {
            Usage u;
            u.prompt_tokens = j.at("usage").value("prompt_tokens", 0ULL);
            u.completion_tokens = j.at("usage").value("completion_tokens", 0ULL);
            r.usage = u;
        }
        validate_record(r);
        return r;
    } catch (const json::exception& e) {
        throw StorageError(std::string("bad record line: ") + e.what());
    }
}

struct Store::SeriesState {
    fs::path path;
    std::ofstream out;
    Timestamp last_timestamp = std::numeric_limits<Timestamp>::min();
    std::uint64_t count = 0;
    bool opened = false;
};

Store::Store(fs::path data_dir) : data_dir_(std::move(data_dir)) {
    std::error_code ec;
    fs::create_directories(data_dir_, ec);
    if (ec) {
        throw StorageError("cannot create data dir " + data_dir_.string() +
                           ": " + ec.message());
    }
}

Store::~Store() = default;

fs::path Store::series_path(const std::string& endpoint_id,
                            const std::string& prompt) const {
    return data_dir_ / endpoint_dir_name(endpoint_id) /
           (hex64(fnv1a64(prompt)) + ".jsonl");
}

Store::SeriesState& Store::state_for(const std::string& endpoint_id,
                                     const std::string& prompt) {
    const SeriesKey key{endpoint_id, prompt};
    auto it = open_.find(key);
    if (it != open_.end() && it->second->opened) return *it->second;

    auto state = std::make_unique<SeriesState>();
    state->path = series_path(endpoint_id, prompt);

    std::error_code ec;
    fs::create_directories(state->path.parent_path(), ec);
    if (ec) {
        throw StorageError("cannot create series dir: " + ec.message());
    }

    if (fs::exists(state->path)) {
        ParsedFile parsed = parse_series_file(state->path);
        if (parsed.torn_tail) {
            // Repair: drop the unacknowledged torn tail before reopening
            // for append.
            fs::resize_file(state->path, parsed.valid_bytes, ec);
            if (ec) {
                throw StorageError("cannot truncate torn tail of " +
                                   state->path.string() + ": " + ec.message());
            }
            warnings_.push_back("recovered_with_loss: " + state->path.string() +
                                " (torn final line dropped)");
        }
        if (!parsed.records.empty()) {
            state->last_timestamp = parsed.records.back().timestamp;
            state->count = parsed.records.size();
        }
    }

    state->out.open(state->path, std::ios::binary | std::ios::app);
    if (!state->out) {
        throw StorageError("cannot open " + state->path.string() +
                           " for append");
    }
    state->opened = true;

    auto [pos, _] = open_.insert_or_assign(key, std::move(state));
    return *pos->second;
}

std::uint64_t Store::append(const SeriesRecord& record) {
    validate_record(record);
    std::lock_guard<std::mutex> lock(mutex_);
    SeriesState& s = state_for(record.endpoint_id, record.prompt);
    if (record.timestamp <= s.last_timestamp) {
        throw OrderingError("timestamp " + format_rfc3339(record.timestamp) +
                            " not after series tail " +
                            format_rfc3339(s.last_timestamp));
    }
    const std::string line = record_to_json_line(record);
    s.out << line << '\n';
    s.out.flush();
    if (!s.out) {
        s.opened = false; // force reopen and tail repair on next touch
        throw StorageError("write failed for " + s.path.string());
    }
    s.last_timestamp = record.timestamp;
    return s.count++;
}

std::vector<SeriesRecord> Store::read_records(const std::string& endpoint_id,
                                              const std::string& prompt) {
    std::lock_guard<std::mutex> lock(mutex_);
    const fs::path path = series_path(endpoint_id, prompt);
    if (!fs::exists(path)) return {};
    ParsedFile parsed = parse_series_file(path);
    if (parsed.torn_tail) {
        warnings_.push_back("recovered_with_loss: " + path.string() +
                            " (torn final line skipped)");
    }
    return std::move(parsed.records);
}

std::vector<SeriesPoint> Store::read_series(const std::string& endpoint_id,
                                            const std::string& prompt,
                                            Timestamp from, Timestamp to) {
    std::vector<SeriesPoint> points;
    for (auto& r : read_records(endpoint_id, prompt)) {
        if (r.timestamp < from || r.timestamp >= to) continue;
        SeriesPoint p;
        p.timestamp = r.timestamp;
        p.vector = std::move(r.entries);
        p.endpoint_id = r.endpoint_id;
        p.prompt = r.prompt;
        points.push_back(std::move(p));
    }
    return points;
}

std::vector<SeriesKey> Store::list_series() {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<SeriesKey> keys;
    if (!fs::exists(data_dir_)) return keys;
    for (const auto& dir : fs::directory_iterator(data_dir_)) {
        if (!dir.is_directory()) continue;
        for (const auto& file : fs::directory_iterator(dir.path())) {
            if (!file.is_regular_file()) continue;
            if (file.path().extension() != ".jsonl") continue;
            // Identity lives inside the records; the first line names
            // the series.
            std::ifstream in(file.path(), std::ios::binary);
            std::string line;
            if (!std::getline(in, line)) continue;
            try {
                const SeriesRecord r = record_from_json_line(line);
                keys.push_back({r.endpoint_id, r.prompt});
            } catch (const Error&) {
                warnings_.push_back("unreadable series file skipped: " +
                                    file.path().string());
            }
        }
    }
    std::sort(keys.begin(), keys.end());
    return keys;
}

void Store::export_archive(const fs::path& out_file) {
    const auto keys = list_series();
    std::ofstream out(out_file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw StorageError("cannot open archive " + out_file.string());
    }
    for (const auto& key : keys) {
        for (const auto& r : read_records(key.endpoint_id, key.prompt)) {
            out << record_to_json_line(r) << '\n';
        }
    }
    out.flush();
    if (!out) throw StorageError("archive write failed");
}

std::vector<std::string> Store::drain_warnings() {
    std::lock_guard<std::mutex> lock(mutex_);
    return std::exchange(warnings_, {});
}

} // namespace logprobe
