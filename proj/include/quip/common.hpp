#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace quip {

/// Error thrown by loaders, binders and the engine. `kind` is a short
/// machine-readable tag ("load", "parse", "bind", "plan", "exec", "impute").
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

// Tuple id: table ordinal in the catalog packed with the row ordinal.
using Tid = uint64_t;

inline Tid make_tid(int table, int row) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(table)) << 32) |
           static_cast<uint32_t>(row);
}
inline int tid_table(Tid t) { return static_cast<int>(t >> 32); }
inline int tid_row(Tid t) { return static_cast<int>(t & 0xffffffffu); }

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

std::string lower(std::string s);

}  // namespace quip
