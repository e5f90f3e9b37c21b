#include "frito/attention.hpp"

#include <atomic>

namespace frito {

namespace {
std::atomic<std::uint64_t> g_score_scalars{0};
}

void score_counter_reset() { g_score_scalars.store(0, std::memory_order_relaxed); }

std::uint64_t score_counter_scalars() { return g_score_scalars.load(std::memory_order_relaxed); }

namespace detail {
void note_score_scalars(std::uint64_t n) {
    g_score_scalars.fetch_add(n, std::memory_order_relaxed);
}
}  // namespace detail

}  // namespace frito
