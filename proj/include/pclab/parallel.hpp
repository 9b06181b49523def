#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace pclab {

// Deterministic sharded map: runs fn(shard) for shard = 0..num_shards-1 on
// `workers` threads and returns results indexed by shard. Each shard must
// derive its own RngStream from (master seed, label, shard), so the combined
// result is a pure function of the shard list — identical for any worker
// count. Callers reduce the returned vector in index order.
template <class State, class ShardFn>
std::vector<State> run_sharded(std::uint64_t num_shards, unsigned workers,
                               ShardFn&& fn) {
    std::vector<State> results(num_shards);
    if (workers <= 1 || num_shards <= 1) {
        for (std::uint64_t s = 0; s < num_shards; ++s) results[s] = fn(s);
        return results;
    }
    std::atomic<std::uint64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::uint64_t s = next.fetch_add(1);
            if (s >= num_shards) return;
            results[s] = fn(s);
        }
    };
    std::vector<std::thread> pool;
    const unsigned nt =
        static_cast<unsigned>(std::min<std::uint64_t>(workers, num_shards));
    pool.reserve(nt);
    for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

// Shard count heuristic: enough shards that work balances, few enough that
// per-shard setup stays negligible; deterministic in m alone.
inline std::uint64_t default_shards(std::int64_t m) {
    if (m < 4) return 1;
    const std::int64_t s = m / 4096;
    if (s < 1) return 1;
    if (s > 64) return 64;
    return static_cast<std::uint64_t>(s);
}

}  // namespace pclab
