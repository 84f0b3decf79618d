#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "logprobe/rng.hpp"

namespace logprobe {

// C(n, k) in exact integer arithmetic.  Callers cap the result long
// before uint64 overflow becomes a concern (enumeration caps are in
// the hundreds of thousands).
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

// ==== random group splits ====
//
// Draws uniformly random n-of-2n splits for permutation testing.  The
// draw sequence depends only on (group_size, seed), so every test
// family sharing this engine sees identical splits under a common
// seed.  Implemented as a partial Fisher-Yates shuffle; picking each
// position uniformly from the remainder makes the leading n elements a
// uniform subset regardless of the buffer's prior arrangement, so no
// reset between draws is needed.
class SplitSampler {
public:
    SplitSampler(std::size_t group_size, std::uint64_t seed)
        : n_(group_size), idx_(2 * group_size), rng_(seed) {
        std::iota(idx_.begin(), idx_.end(), std::size_t{0});
    }

    // Indices of group one for the next split (unordered); the
    // complement of the pooled range forms group two.  The view is
    // valid until the next call.
    std::span<const std::size_t> next() {
        const std::size_t total = idx_.size();
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng_.below(total - i));
            std::swap(idx_[i], idx_[j]);
        }
        return {idx_.data(), n_};
    }

private:
    std::size_t n_;
    std::vector<std::size_t> idx_;
    Rng rng_;
};

// Visits every size-`group` subset of {0..pool-1} in lexicographic
// order.  fn receives the subset as a sorted index vector.
template <typename Fn>
void enumerate_splits(std::size_t pool, std::size_t group, Fn&& fn) {
    std::vector<std::size_t> comb(group);
    std::iota(comb.begin(), comb.end(), std::size_t{0});
    for (;;) {
        fn(const_cast<const std::vector<std::size_t>&>(comb));
        std::size_t i = group;
        while (i > 0 && comb[i - 1] == pool - group + i - 1) --i;
        if (i == 0) return;
        ++comb[i - 1];
        for (std::size_t j = i; j < group; ++j) comb[j] = comb[j - 1] + 1;
    }
}

} // namespace logprobe
