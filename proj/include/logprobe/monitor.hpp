#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "logprobe/store.hpp"

namespace logprobe {

// Production trigger parameters: a candidate point's adjacent-window
// statistic must exceed the trailing mean of prior statistics by
// k_sigma standard deviations AND an absolute floor.
struct MonitorParams {
    std::size_t w = 24;          // adjacent-window width (samples)
    std::size_t window = 100;    // trailing statistics window
    double k_sigma = 12.0;
    double abs_floor = 1.0;
    // Scan positions suppressed after an emission; kDefaultCooldown
    // resolves to 2 * w.
    std::size_t cooldown = kDefaultCooldown;
    bool text_only = false;

    static constexpr std::size_t kDefaultCooldown =
        static_cast<std::size_t>(-1);

    std::size_t effective_cooldown() const {
        return cooldown == kDefaultCooldown ? 2 * w : cooldown;
    }
};

struct ChangeEvent {
    Timestamp timestamp = 0;
    std::size_t index = 0; // scan position t in the point series
    double statistic = 0.0;
    double running_mean = 0.0; // trailing stats frozen at the trigger
    double running_std = 0.0;
    std::size_t window = 0; // adjacent-window width w
    std::string endpoint_id;
};

std::string event_to_json_line(const ChangeEvent& e);

// LT statistic between the windows [t-w, t) and [t, t+w); the candidate
// change point t is the boundary and owns the event timestamp.  Empty
// when the series is too short around t.
std::optional<double> adjacent_window_statistic(
    const std::vector<SeriesPoint>& series, std::size_t t, std::size_t w = 24,
    bool text_only = false);

// Statistic at every valid scan position t in [w, len - w]; stats[i]
// corresponds to t = w + i.  Computed with an interned sliding-window
// pass; agrees with adjacent_window_statistic up to summation order.
std::vector<double> scan_statistics(const std::vector<SeriesPoint>& series,
                                    std::size_t w = 24, bool text_only = false);

// Trailing mean and sample standard deviation of the `window` values
// preceding each index (the value at the index itself is excluded, so
// the trigger is causal).  Indices with fewer than `window` priors are
// empty.
std::vector<std::optional<std::pair<double, double>>> running_stats(
    const std::vector<double>& stats, std::size_t window = 100);

// Offline scan; the online daemon applied to a growing series emits the
// same prefix of events.
//
// Emission rule: at the first scan position whose statistic crosses the
// trigger, the event is placed at the statistic's argmax over the next
// w scan positions; the crossing always happens while the true change
// point is still inside the lookahead, so this pins the event to the
// peak.  The trailing mean/std baseline lags the candidate position by
// w, keeping statistics whose windows overlap the candidate change out
// of their own baseline (a ramp would otherwise mask its trigger).
// If the lookahead extends past the available series the scan stops
// (the online monitor would still be waiting for those points).  After
// an emission, triggers are suppressed for effective_cooldown() scan
// positions past the peak.
std::vector<ChangeEvent> detect_changes(const std::vector<SeriesPoint>& series,
                                        const MonitorParams& params = {});

} // namespace logprobe
