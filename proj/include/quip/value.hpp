#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "quip/common.hpp"

namespace quip {

enum class AttrType { Int, Float, Text };

std::string attr_type_name(AttrType t);
AttrType attr_type_from_name(const std::string& s);

/// A typed cell. NULL is std::monostate; whether a NULL cell counts as
/// "missing" is decided by the owning tuple's missing bit, not by the value.
struct Value {
    std::variant<std::monostate, int64_t, double, std::string> v;

    Value() = default;
    static Value null() { return Value{}; }
    static Value of(int64_t i) {
        Value x;
        x.v = i;
        return x;
    }
    static Value of(double d) {
        Value x;
        x.v = d;
        return x;
    }
    static Value of(std::string s) {
        Value x;
        x.v = std::move(s);
        return x;
    }

    bool is_null() const { return std::holds_alternative<std::monostate>(v); }
    bool is_int() const { return std::holds_alternative<int64_t>(v); }
    bool is_float() const { return std::holds_alternative<double>(v); }
    bool is_text() const { return std::holds_alternative<std::string>(v); }
    bool is_numeric() const { return is_int() || is_float(); }

    int64_t as_int() const { return std::get<int64_t>(v); }
    double as_float() const { return std::get<double>(v); }
    const std::string& as_text() const { return std::get<std::string>(v); }
    double numeric() const { return is_int() ? static_cast<double>(as_int()) : as_float(); }

    bool operator==(const Value& o) const;
    bool operator!=(const Value& o) const { return !(*this == o); }
};

/// Three-way compare for ordering predicates; nullopt when either side is
/// NULL or the types are not comparable (text vs numeric).
std::optional<int> compare_values(const Value& a, const Value& b);

/// Total order usable for deterministic sorting (NULL first, then by type).
bool value_less(const Value& a, const Value& b);

uint64_t value_hash(const Value& v);

std::string render_value(const Value& v);

/// Parse a raw CSV token as `type`; throws Error("load") when unparseable.
Value parse_typed(const std::string& raw, AttrType type);

struct ValueHash {
    size_t operator()(const Value& v) const { return static_cast<size_t>(value_hash(v)); }
};

}  // namespace quip
