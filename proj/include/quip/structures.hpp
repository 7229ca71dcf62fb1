#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "quip/planner.hpp"

namespace quip {

/// Fixed-size bloom filter, double hashing, seeded for reproducibility.
/// No false negatives by construction.
class BloomFilter {
public:
    BloomFilter() = default;
    /// ~10 bits per expected element, k = 7; a floor keeps tiny fixtures
    /// deterministic in practice.
    BloomFilter(size_t expected, uint64_t seed, int bits_per_element = 10, int k = 7);

    void insert(const Value& v);
    bool contains(const Value& v) const;
    size_t inserted() const { return inserted_; }
    size_t bit_count() const { return bits_.size() * 64; }
    size_t popcount() const;

private:
    std::vector<uint64_t> bits_;
    size_t m_ = 0;
    int k_ = 7;
    uint64_t seed1_ = 0, seed2_ = 0;
    size_t inserted_ = 0;
};

/// Bloom filter + completeness flag for one join attribute. The completeness
/// flag may be set only once all missing values under the attribute have been
/// imputed or eliminated; the engine enforces the gating.
struct BloomState {
    BloomFilter bf;
    bool complete = false;  // BFC(a)
    std::vector<std::function<void()>> on_complete;  // fired exactly once

    void mark_complete(int missing_count);
    bool is_complete() const { return complete; }
};

/// Exact value -> base tuple ids, maintained from the same insertion events
/// as the bloom filter. Conservative pair: bf.contains == false implies an
/// empty lookup here.
class AttrIndex {
public:
    void insert(const Value& v, Tid tid);
    std::vector<Tid> lookup(const Value& v) const;
    bool empty() const { return map_.empty(); }

private:
    std::unordered_map<Value, std::vector<Tid>, ValueHash> map_;
};

/// Per-join trigger bookkeeping: tuple ids of the smaller missing side
/// (L_temp + Flag) and the imputed-but-waiting ready lists.
template <typename TupleT>
struct TempLists {
    enum class Side { L, R };
    Side flag = Side::R;
    std::vector<Tid> l_temp;            // base tids of the Flag side's missing cells
    std::vector<TupleT> ready[2];       // [0]=L_Ready, [1]=R_Ready
    bool drained[2] = {false, false};

    std::vector<TupleT>& ready_of(int side) { return ready[side]; }
};

}  // namespace quip
