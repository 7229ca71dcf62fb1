#include "quip/structures.hpp"

#include <bit>

namespace quip {

BloomFilter::BloomFilter(size_t expected, uint64_t seed, int bits_per_element, int k)
    : k_(k) {
    size_t m = expected * static_cast<size_t>(bits_per_element);
    if (m < 256) m = 256;
    m_ = m;
    bits_.assign((m + 63) / 64, 0);
    seed1_ = splitmix64(seed ^ 0x5bf0633bd5c2ca35ull);
    seed2_ = splitmix64(seed ^ 0x94a62f7c1d80fae1ull) | 1;
}

void BloomFilter::insert(const Value& v) {
    if (bits_.empty()) return;
    uint64_t h = value_hash(v);
    uint64_t h1 = splitmix64(h ^ seed1_);
    uint64_t h2 = splitmix64(h ^ seed2_) | 1;
    for (int i = 0; i < k_; ++i) {
        uint64_t idx = (h1 + static_cast<uint64_t>(i) * h2) % m_;
        bits_[idx >> 6] |= (1ull << (idx & 63));
    }
    ++inserted_;
}

bool BloomFilter::contains(const Value& v) const {
    if (bits_.empty()) return false;
    uint64_t h = value_hash(v);
    uint64_t h1 = splitmix64(h ^ seed1_);
    uint64_t h2 = splitmix64(h ^ seed2_) | 1;
    for (int i = 0; i < k_; ++i) {
        uint64_t idx = (h1 + static_cast<uint64_t>(i) * h2) % m_;
        if (!(bits_[idx >> 6] & (1ull << (idx & 63)))) return false;
    }
    return true;
}

size_t BloomFilter::popcount() const {
    size_t n = 0;
    for (uint64_t w : bits_) n += static_cast<size_t>(std::popcount(w));
    return n;
}

void BloomState::mark_complete(int missing_count) {
    if (complete) return;
    if (missing_count != 0)
        throw Error("exec", "bloom filter marked complete with " +
                                std::to_string(missing_count) + " missing values left");
    complete = true;
    auto cbs = std::move(on_complete);
    on_complete.clear();
    for (auto& cb : cbs) cb();
}

void AttrIndex::insert(const Value& v, Tid tid) {
    auto& tids = map_[v];
    for (Tid t : tids)
        if (t == tid) return;
    tids.push_back(tid);
}

std::vector<Tid> AttrIndex::lookup(const Value& v) const {
    auto it = map_.find(v);
    return it == map_.end() ? std::vector<Tid>{} : it->second;
}

}  // namespace quip
