#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "logprobe/timeutil.hpp"
#include "logprobe/tokens.hpp"

namespace logprobe {

inline constexpr int kSchemaVersion = 1;

struct RequestParams {
    int top_logprobs = 0;
    int max_tokens = 0;
    double temperature = 1.0;
};

struct Usage {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
};

// Persisted form of one probe result.
struct SeriesRecord {
    int schema_version = kSchemaVersion;
    std::string endpoint_id;
    std::string prompt;
    Timestamp timestamp = 0;
    LogprobVector entries;
    RequestParams request_params;
    std::optional<Usage> usage;
};

// In-memory view the monitor consumes.
struct SeriesPoint {
    Timestamp timestamp = 0;
    LogprobVector vector;
    std::string endpoint_id;
    std::string prompt;
};

struct SeriesKey {
    std::string endpoint_id;
    std::string prompt;

    auto operator<=>(const SeriesKey&) const = default;
};

// One record per line, one file per (endpoint_id, prompt) series under
// {data_dir}/{endpoint_dir}/{prompt_hash}.jsonl.  Appends are flushed
// before being acknowledged and must arrive in strictly increasing
// timestamp order per series.  On read, a malformed final line is
// treated as a torn write: it is skipped with a recovered-with-loss
// warning (and truncated away when the series is next opened for
// append).  Malformed content anywhere else is corruption and raises
// StorageError.
class Store {
public:
    explicit Store(std::filesystem::path data_dir);
    ~Store();

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    // Returns the record's 0-based position within its series.
    std::uint64_t append(const SeriesRecord& record);

    // Points with from <= timestamp < to, in timestamp order.  Unknown
    // series yield an empty vector.
    std::vector<SeriesPoint> read_series(
        const std::string& endpoint_id, const std::string& prompt,
        Timestamp from = std::numeric_limits<Timestamp>::min(),
        Timestamp to = std::numeric_limits<Timestamp>::max());

    // Full records of one series (same recovery semantics).
    std::vector<SeriesRecord> read_records(const std::string& endpoint_id,
                                           const std::string& prompt);

    std::vector<SeriesKey> list_series();

    // Flat archive: every record of every series as one JSONL stream,
    // series ordered by (endpoint_id, prompt).
    void export_archive(const std::filesystem::path& out_file);

    // Warnings accumulated by reads/appends (torn-tail recoveries).
    std::vector<std::string> drain_warnings();

    const std::filesystem::path& data_dir() const { return data_dir_; }

    // Stable series file path (exposed for tests and tooling).
    std::filesystem::path series_path(const std::string& endpoint_id,
                                      const std::string& prompt) const;

private:
    struct SeriesState;

    SeriesState& state_for(const std::string& endpoint_id,
                           const std::string& prompt);

    std::filesystem::path data_dir_;
    std::mutex mutex_;
    std::map<SeriesKey, std::unique_ptr<SeriesState>> open_;
    std::vector<std::string> warnings_;
};

// JSON line codecs for SeriesRecord (used by the store, the export
// archive, and offline test inputs).
std::string record_to_json_line(const SeriesRecord& record);
SeriesRecord record_from_json_line(const std::string& line);

} // namespace logprobe
