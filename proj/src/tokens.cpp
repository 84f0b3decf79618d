#include "logprobe/tokens.hpp"

#include <algorithm>

namespace logprobe {

std::string token_key(const LogprobEntry& entry, bool text_only) {
    if (!text_only && entry.bytes.has_value()) {
        std::string key = "b:";
        key.append(reinterpret_cast<const char*>(entry.bytes->data()),
                   entry.bytes->size());
        return key;
    }
    return "t:" + entry.text;
}

void sort_by_logprob(LogprobVector& v) {
    std::stable_sort(v.begin(), v.end(),
                     [](const LogprobEntry& a, const LogprobEntry& b) {
                         return a.logprob > b.logprob;
                     });
}

} // namespace logprobe
