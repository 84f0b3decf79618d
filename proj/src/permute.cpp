#include "logprobe/permute.hpp"

#include "logprobe/errors.hpp"

namespace logprobe {

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    if (k > n - k) k = n - k;
    std::uint64_t result = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        // Multiply before dividing; the running value is always an
        // exact binomial coefficient so the division is exact.
        const std::uint64_t numer = n - k + i;
        if (result > UINT64_MAX / numer) {
            throw CapExceeded("binomial coefficient overflows 64 bits");
        }
        result = result * numer / i;
    }
    return result;
}

} // namespace logprobe
