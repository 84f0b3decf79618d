#pragma once

#include <cstdint>
#include <string>

namespace logprobe {

// Microseconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

// Current wall-clock time.
Timestamp now_utc_micros();

// RFC 3339 with microsecond fraction, e.g. "2026-03-14T09:26:53.589793Z".
std::string format_rfc3339(Timestamp micros);

// Parses the format emitted by format_rfc3339 (also accepts missing or
// shorter fractional part).  Throws InvalidInput on malformed text.
Timestamp parse_rfc3339(const std::string& text);

} // namespace logprobe
