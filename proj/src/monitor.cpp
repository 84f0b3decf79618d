#include "logprobe/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "json.hpp"
#include "logprobe/errors.hpp"
#include "logprobe/stats.hpp"

namespace logprobe {

std::string event_to_json_line(const ChangeEvent& e) {
    nlohmann::json j;
    j["timestamp"] = format_rfc3339(e.timestamp);
    j["index"] = e.index;
    j["statistic"] = e.statistic;
    j["running_mean"] = e.running_mean;
    j["running_std"] = e.running_std;
    j["window"] = e.window;
    j["endpoint_id"] = e.endpoint_id;
    return j.dump();
}

std::optional<double> adjacent_window_statistic(
    const std::vector<SeriesPoint>& series, std::size_t t, std::size_t w,
    bool text_only) {
    if (w == 0) throw InvalidInput("window width must be positive");
    if (t < w || t + w > series.size()) return std::nullopt;
    SampleSet left, right;
    left.reserve(w);
    right.reserve(w);
    for (std::size_t i = t - w; i < t; ++i) left.push_back(series[i].vector);
    for (std::size_t i = t; i < t + w; ++i) right.push_back(series[i].vector);
    const auto tokens = token_union(left, right, text_only);
    if (tokens.empty()) throw InvalidInput("token union is empty");
    return lt_statistic(to_matrix(left, tokens, text_only),
                        to_matrix(right, tokens, text_only));
}

namespace {

// Interned series representation for the sliding scan: token strings
// are mapped to dense ids once, and each point keeps (id, logprob)
// pairs plus its row minimum.
struct InternedSeries {
    std::vector<std::vector<std::pair<std::uint32_t, double>>> points;
    std::vector<double> row_min;
    std::size_t n_tokens = 0;
};

InternedSeries intern(const std::vector<SeriesPoint>& series, bool text_only) {
    InternedSeries out;
    std::unordered_map<std::string, std::uint32_t> ids;
    out.points.reserve(series.size());
    out.row_min.reserve(series.size());
    for (const auto& point : series) {
        if (point.vector.empty()) {
            throw InvalidInput("series contains a point with no entries");
        }
        std::vector<std::pair<std::uint32_t, double>> row;
        row.reserve(point.vector.size());
        double mn = point.vector.front().logprob;
        for (const auto& entry : point.vector) {
            const std::string key = token_key(entry, text_only);
            const auto [it, _] = ids.emplace(
                key, static_cast<std::uint32_t>(ids.size()));
            row.emplace_back(it->second, entry.logprob);
            mn = std::min(mn, entry.logprob);
        }
        out.points.push_back(std::move(row));
        out.row_min.push_back(mn);
    }
    out.n_tokens = ids.size();
    return out;
}

// Sliding accumulators for one window of points.  For a union token i,
// the imputed column mean over the window is
//   (sum_lp[i] + (rowmin_total - sum_rowmin_present[i])) / w
// where sum_rowmin_present[i] sums the row minima of exactly the rows
// that contain token i.
struct WindowAcc {
    std::vector<double> sum_lp;
    std::vector<double> sum_rowmin_present;
    std::vector<std::uint32_t> count;
    double rowmin_total = 0.0;

    explicit WindowAcc(std::size_t n_tokens)
        : sum_lp(n_tokens, 0.0), sum_rowmin_present(n_tokens, 0.0),
          count(n_tokens, 0) {}

    void add(const InternedSeries& s, std::size_t idx, int sign) {
        const double rm = s.row_min[idx];
        rowmin_total += sign * rm;
        for (const auto& [id, lp] : s.points[idx]) {
            sum_lp[id] += sign * lp;
            sum_rowmin_present[id] += sign * rm;
            count[id] += static_cast<std::uint32_t>(sign);
        }
    }
};

} // namespace

std::vector<double> scan_statistics(const std::vector<SeriesPoint>& series,
                                    std::size_t w, bool text_only) {
    if (w == 0) throw InvalidInput("window width must be positive");
    std::vector<double> stats;
    if (series.size() < 2 * w) return stats;

    const InternedSeries s = intern(series, text_only);
    WindowAcc left(s.n_tokens), right(s.n_tokens);
    // Active token ids (present in either window), with O(1) removal.
    std::vector<std::uint32_t> active;
    std::vector<std::uint32_t> slot(s.n_tokens,
                                    std::numeric_limits<std::uint32_t>::max());
    const auto on_count_change = [&](std::uint32_t id) {
        const bool present = left.count[id] + right.count[id] > 0;
        const bool listed = slot[id] != std::numeric_limits<std::uint32_t>::max();
        if (present && !listed) {
            slot[id] = static_cast<std::uint32_t>(active.size());
            active.push_back(id);
        } else if (!present && listed) {
            const std::uint32_t last = active.back();
            active[slot[id]] = last;
            slot[last] = slot[id];
            active.pop_back();
            slot[id] = std::numeric_limits<std::uint32_t>::max();
        }
    };
    const auto move_point = [&](WindowAcc& acc, std::size_t idx, int sign) {
        acc.add(s, idx, sign);
        for (const auto& [id, _] : s.points[idx]) on_count_change(id);
    };

    for (std::size_t i = 0; i < w; ++i) move_point(left, i, +1);
    for (std::size_t i = w; i < 2 * w; ++i) move_point(right, i, +1);

    const double inv_w = 1.0 / static_cast<double>(w);
    const std::size_t last_t = series.size() - w;
    stats.reserve(last_t - w + 1);
    for (std::size_t t = w;; ++t) {
        double acc = 0.0;
        for (const std::uint32_t id : active) {
            const double ml =
                (left.sum_lp[id] +
                 (left.rowmin_total - left.sum_rowmin_present[id])) *
                inv_w;
            const double mr =
                (right.sum_lp[id] +
                 (right.rowmin_total - right.sum_rowmin_present[id])) *
                inv_w;
            acc += std::abs(ml - mr);
        }
        stats.push_back(acc / static_cast<double>(active.size()));
        if (t == last_t) break;
        // Slide: point t enters left, t-w leaves left, t+w enters right,
        // t leaves right.
        move_point(left, t, +1);
        move_point(left, t - w, -1);
        move_point(right, t + w, +1);
        move_point(right, t, -1);
    }
    return stats;
}

std::vector<std::optional<std::pair<double, double>>> running_stats(
    const std::vector<double>& stats, std::size_t window) {
    if (window < 2) throw InvalidInput("running window must be >= 2");
    std::vector<std::optional<std::pair<double, double>>> out(stats.size());
    if (stats.size() < window) return out;
    double sum = 0.0;
    for (std::size_t i = 0; i < window; ++i) sum += stats[i];
    for (std::size_t i = window; i < stats.size(); ++i) {
        const double mean = sum / static_cast<double>(window);
        double sq = 0.0;
        for (std::size_t j = i - window; j < i; ++j) {
            const double d = stats[j] - mean;
            sq += d * d;
        }
        const double std_dev = std::sqrt(sq / static_cast<double>(window - 1));
        out[i] = std::make_pair(mean, std_dev);
        sum += stats[i];
        sum -= stats[i - window];
    }
    return out;
}

std::vector<ChangeEvent> detect_changes(const std::vector<SeriesPoint>& series,
                                        const MonitorParams& params) {
    if (params.w == 0) throw InvalidInput("w must be positive");
    if (params.window < 2) throw InvalidInput("running window must be >= 2");
    if (params.k_sigma < 0.0) throw InvalidInput("k_sigma must be >= 0");

    std::vector<ChangeEvent> events;
    const std::vector<double> stats =
        scan_statistics(series, params.w, params.text_only);
    if (stats.empty()) return events;
    const auto trailing = running_stats(stats, params.window);
    const std::size_t cooldown = params.effective_cooldown();

    std::size_t j = 0;
    while (j < stats.size()) {
        // The baseline lags the candidate by w: statistics closer than
        // that have sample windows overlapping the change being tested,
        // and a slow ramp of them would inflate the baseline until it
        // masks its own trigger.
        if (j < params.w || !trailing[j - params.w].has_value()) {
            ++j;
            continue;
        }
        const auto [mean, std_dev] = *trailing[j - params.w];
        const bool triggered = stats[j] > mean + params.k_sigma * std_dev &&
                               stats[j] > params.abs_floor;
        if (!triggered) {
            ++j;
            continue;
        }
        // The true peak lies within the next w positions of the first
        // crossing; refine the event to it.  If those positions are not
        // all available yet, the online monitor would still be waiting,
        // so stop rather than emit a provisional event.
        if (j + params.w >= stats.size()) break;
        std::size_t peak = j;
        for (std::size_t k = j + 1; k <= j + params.w; ++k) {
            if (stats[k] > stats[peak]) peak = k;
        }
        ChangeEvent e;
        e.index = params.w + peak;
        e.timestamp = series[e.index].timestamp;
        e.statistic = stats[peak];
        e.running_mean = mean;
        e.running_std = std_dev;
        e.window = params.w;
        e.endpoint_id = series[e.index].endpoint_id;
        events.push_back(std::move(e));
        j = peak + cooldown + 1;
    }
    return events;
}

} // namespace logprobe
