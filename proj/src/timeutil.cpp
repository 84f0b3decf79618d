#include "logprobe/timeutil.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>

#include "logprobe/errors.hpp"

namespace logprobe {

Timestamp now_utc_micros() {
    const auto now = std::chrono::system_clock::now();
    return std::chrono::duration_cast<std::chrono::microseconds>(
               now.time_since_epoch())
        .count();
}

std::string format_rfc3339(Timestamp micros) {
    std::int64_t secs = micros / 1000000;
    std::int64_t frac = micros % 1000000;
    if (frac < 0) {
        frac += 1000000;
        secs -= 1;
    }
    std::time_t t = static_cast<std::time_t>(secs);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ",
                  tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                  tm.tm_min, tm.tm_sec, static_cast<long long>(frac));
    return buf;
}

Timestamp parse_rfc3339(const std::string& text) {
    int year = 0, mon = 0, day = 0, hour = 0, min = 0, sec = 0;
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &year, &mon,
                    &day, &hour, &min, &sec, &consumed) != 6) {
        throw InvalidInput("bad timestamp: " + text);
    }
    const char* rest = text.c_str() + consumed;
    std::int64_t frac = 0;
    if (*rest == '.') {
        ++rest;
        int digits = 0;
        while (*rest >= '0' && *rest <= '9') {
            if (digits < 6) frac = frac * 10 + (*rest - '0');
            ++digits;
            ++rest;
        }
        if (digits == 0) throw InvalidInput("bad timestamp fraction: " + text);
        while (digits < 6) {
            frac *= 10;
            ++digits;
        }
    }
    if (std::strcmp(rest, "Z") != 0 && std::strcmp(rest, "+00:00") != 0) {
        throw InvalidInput("bad timestamp zone: " + text);
    }
    if (mon < 1 || mon > 12 || day < 1 || day > 31 || hour > 23 || min > 59 ||
        sec > 60) {
        throw InvalidInput("timestamp out of range: " + text);
    }
    std::tm tm{};
    tm.tm_year = year - 1900;
    tm.tm_mon = mon - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = min;
    tm.tm_sec = sec;
    const std::time_t secs = timegm(&tm);
    return static_cast<Timestamp>(secs) * 1000000 + frac;
}

} // namespace logprobe
