#include "quip/value.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace quip {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string attr_type_name(AttrType t) {
    switch (t) {
        case AttrType::Int: return "int";
        case AttrType::Float: return "float";
        case AttrType::Text: return "text";
    }
    return "?";
}

AttrType attr_type_from_name(const std::string& s) {
    std::string n = lower(s);
    if (n == "int" || n == "integer") return AttrType::Int;
    if (n == "float" || n == "double" || n == "real") return AttrType::Float;
    if (n == "text" || n == "string" || n == "varchar") return AttrType::Text;
    throw Error("load", "unknown attribute type '" + s + "'");
}

bool Value::operator==(const Value& o) const {
    if (is_null() || o.is_null()) return is_null() && o.is_null();
    if (is_text() != o.is_text()) return false;
    if (is_text()) return as_text() == o.as_text();
    if (is_int() && o.is_int()) return as_int() == o.as_int();
    return numeric() == o.numeric();
}

std::optional<int> compare_values(const Value& a, const Value& b) {
    if (a.is_null() || b.is_null()) return std::nullopt;
    if (a.is_text() && b.is_text()) {
        int c = a.as_text().compare(b.as_text());
        return c < 0 ? -1 : c > 0 ? 1 : 0;
    }
    if (a.is_text() || b.is_text()) return std::nullopt;
    if (a.is_int() && b.is_int()) {
        int64_t x = a.as_int(), y = b.as_int();
        return x < y ? -1 : x > y ? 1 : 0;
    }
    double x = a.numeric(), y = b.numeric();
    return x < y ? -1 : x > y ? 1 : 0;
}

bool value_less(const Value& a, const Value& b) {
    auto rank = [](const Value& v) { return v.is_null() ? 0 : v.is_numeric() ? 1 : 2; };
    if (rank(a) != rank(b)) return rank(a) < rank(b);
    if (a.is_null()) return false;
    if (a.is_numeric()) {
        if (a.numeric() != b.numeric()) return a.numeric() < b.numeric();
        return false;
    }
    return a.as_text() < b.as_text();
}

uint64_t value_hash(const Value& v) {
    if (v.is_null()) return 0x9d3a;
    if (v.is_text()) {
        uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : v.as_text()) h = (h ^ c) * 0x100000001b3ull;
        return hash_combine(2, h);
    }
    // Ints and equal floats must hash alike: 2 == 2.0 joins.
    double d = v.numeric();
    if (d == static_cast<double>(static_cast<int64_t>(d)) &&
        std::abs(d) < 9.0e18) {
        return hash_combine(1, static_cast<uint64_t>(static_cast<int64_t>(d)));
    }
    uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    return hash_combine(1, bits);
}

std::string render_value(const Value& v) {
    if (v.is_null()) return "NULL";
    if (v.is_int()) return std::to_string(v.as_int());
    if (v.is_float()) {
        double d = v.as_float();
        if (d == static_cast<double>(static_cast<int64_t>(d)) && std::abs(d) < 1e15) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.1f", d);
            return buf;
        }
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.12g", d);
        return buf;
    }
    return v.as_text();
}

Value parse_typed(const std::string& raw, AttrType type) {
    switch (type) {
        case AttrType::Int: {
            int64_t out = 0;
            auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), out);
            if (ec != std::errc() || p != raw.data() + raw.size())
                throw Error("load", "cannot parse '" + raw + "' as int");
            return Value::of(out);
        }
        case AttrType::Float: {
            char* end = nullptr;
            std::string tmp = raw;
            double d = std::strtod(tmp.c_str(), &end);
            if (end != tmp.c_str() + tmp.size() || tmp.empty())
                throw Error("load", "cannot parse '" + raw + "' as float");
            return Value::of(d);
        }
        case AttrType::Text: return Value::of(raw);
    }
    throw Error("load", "bad type");
}

}  // namespace quip
