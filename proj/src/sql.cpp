#include <cctype>
#include <sstream>

#include "quip/frontend.hpp"

namespace quip {

std::string cmp_op_name(CmpOp op) {
    switch (op) {
        case CmpOp::Eq: return "=";
        case CmpOp::Ne: return "!=";
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Gt: return ">";
        case CmpOp::Ge: return ">=";
        case CmpOp::In: return "in";
    }
    return "?";
}

bool eval_cmp(const Value& v, CmpOp op, const std::vector<Value>& lits) {
    if (op == CmpOp::In) {
        for (const auto& lit : lits)
            if (v == lit) return true;
        return false;
    }
    auto c = compare_values(v, lits.at(0));
    if (!c) return false;
    switch (op) {
        case CmpOp::Eq: return *c == 0;
        case CmpOp::Ne: return *c != 0;
        case CmpOp::Lt: return *c < 0;
        case CmpOp::Le: return *c <= 0;
        case CmpOp::Gt: return *c > 0;
        case CmpOp::Ge: return *c >= 0;
        case CmpOp::In: return false;
    }
    return false;
}

std::string agg_fn_name(AggFn f) {
    switch (f) {
        case AggFn::Max: return "max";
        case AggFn::Min: return "min";
        case AggFn::Count: return "count";
        case AggFn::Sum: return "sum";
        case AggFn::Avg: return "avg";
    }
    return "?";
}

static std::string render_literal_sql(const Value& v);

std::string SelPred::render() const {
    if (op == CmpOp::In) {
        std::string s = attr.qualified() + " in {";
        for (size_t i = 0; i < lits.size(); ++i)
            s += (i ? ", " : "") + render_literal_sql(lits[i]);
        return s + "}";
    }
    return attr.qualified() + " " + cmp_op_name(op) + " " + render_literal_sql(lits.at(0));
}

static std::string render_literal_sql(const Value& v) {
    if (v.is_text()) {
        std::string s = "'";
        for (char c : v.as_text()) {
            if (c == '\'') s += "''";
            else s += c;
        }
        return s + "'";
    }
    return render_value(v);
}

namespace {

struct Token {
    enum class T { Ident, Number, String, Punct, End };
    T t = T::End;
    std::string text;
    size_t pos = 0;
};

class Lexer {
public:
    explicit Lexer(const std::string& s) : s_(s) { advance(); }

    const Token& cur() const { return cur_; }

    void advance() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
        cur_.pos = i_;
        if (i_ >= s_.size()) {
            cur_ = {Token::T::End, "", i_};
            return;
        }
        char c = s_[i_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t j = i_;
            while (j < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[j])) ||
                                     s_[j] == '_'))
                ++j;
            cur_ = {Token::T::Ident, s_.substr(i_, j - i_), i_};
            i_ = j;
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && i_ + 1 < s_.size() &&
             std::isdigit(static_cast<unsigned char>(s_[i_ + 1])))) {
            size_t j = i_ + 1;
            while (j < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[j])) ||
                                     s_[j] == '.'))
                ++j;
            cur_ = {Token::T::Number, s_.substr(i_, j - i_), i_};
            i_ = j;
            return;
        }
        if (c == '\'') {
            std::string out;
            size_t j = i_ + 1;
            while (j < s_.size()) {
                if (s_[j] == '\'') {
                    if (j + 1 < s_.size() && s_[j + 1] == '\'') {
                        out += '\'';
                        j += 2;
                    } else {
                        ++j;
                        break;
                    }
                } else {
                    out += s_[j++];
                }
            }
            cur_ = {Token::T::String, out, i_};
            i_ = j;
            return;
        }
        // multi-char comparison operators
        static const char* two[] = {"<=", ">=", "!=", "<>"};
        for (const char* op : two) {
            if (s_.compare(i_, 2, op) == 0) {
                cur_ = {Token::T::Punct, op, i_};
                i_ += 2;
                return;
            }
        }
        cur_ = {Token::T::Punct, std::string(1, c), i_};
        ++i_;
    }

private:
    const std::string& s_;
    size_t i_ = 0;
    Token cur_;
};

[[noreturn]] void fail(const Token& t, const std::string& what) {
    throw Error("parse", what + " at position " + std::to_string(t.pos) +
                             (t.text.empty() ? "" : " near '" + t.text + "'"));
}

class Parser {
public:
    explicit Parser(const std::string& s) : lex_(s) {}

    QuerySpec parse() {
        expect_kw("select");
        QuerySpec q;
        parse_select_list(q);
        expect_kw("from");
        parse_tables(q);
        if (is_kw("where")) {
            lex_.advance();
            parse_predicates(q);
        }
        if (is_kw("group")) {
            lex_.advance();
            expect_kw("by");
            q.group_by = parse_attr();
        }
        if (lex_.cur().t != Token::T::End) fail(lex_.cur(), "trailing input");
        return q;
    }

private:
    bool is_kw(const std::string& kw) const {
        return lex_.cur().t == Token::T::Ident && lower(lex_.cur().text) == kw;
    }
    void expect_kw(const std::string& kw) {
        if (!is_kw(kw)) fail(lex_.cur(), "expected '" + kw + "'");
        lex_.advance();
    }
    void expect_punct(const std::string& p) {
        if (lex_.cur().t != Token::T::Punct || lex_.cur().text != p)
            fail(lex_.cur(), "expected '" + p + "'");
        lex_.advance();
    }
    bool accept_punct(const std::string& p) {
        if (lex_.cur().t == Token::T::Punct && lex_.cur().text == p) {
            lex_.advance();
            return true;
        }
        return false;
    }

    AttrName parse_attr() {
        if (lex_.cur().t != Token::T::Ident) fail(lex_.cur(), "expected attribute");
        std::string a = lower(lex_.cur().text);
        lex_.advance();
        if (accept_punct(".")) {
            if (lex_.cur().t != Token::T::Ident) fail(lex_.cur(), "expected column name");
            std::string c = lower(lex_.cur().text);
            lex_.advance();
            return {a, c};
        }
        return {"", a};
    }

    Value parse_literal() {
        const Token& t = lex_.cur();
        if (t.t == Token::T::Number) {
            std::string txt = t.text;
            lex_.advance();
            if (txt.find('.') != std::string::npos) return Value::of(std::stod(txt));
            return Value::of(static_cast<int64_t>(std::stoll(txt)));
        }
        if (t.t == Token::T::String) {
            std::string txt = t.text;
            lex_.advance();
            return Value::of(txt);
        }
        fail(t, "expected literal");
    }

    void parse_select_list(QuerySpec& q) {
        static const char* aggs[] = {"max", "min", "count", "sum", "avg"};
        do {
            bool is_agg = false;
            for (int i = 0; i < 5; ++i) {
                if (is_kw(aggs[i])) {
                    if (q.agg) fail(lex_.cur(), "only one aggregate supported");
                    lex_.advance();
                    expect_punct("(");
                    AggSpec a;
                    a.fn = static_cast<AggFn>(i);
                    a.attr = parse_attr();
                    expect_punct(")");
                    q.agg = a;
                    is_agg = true;
                    break;
                }
            }
            if (!is_agg) q.projection.push_back(parse_attr());
        } while (accept_punct(","));
    }

    void parse_tables(QuerySpec& q) {
        do {
            if (lex_.cur().t != Token::T::Ident) fail(lex_.cur(), "expected table name");
            std::string table = lower(lex_.cur().text);
            lex_.advance();
            std::string alias = table;
            if (is_kw("as")) {
                lex_.advance();
                if (lex_.cur().t != Token::T::Ident) fail(lex_.cur(), "expected alias");
                alias = lower(lex_.cur().text);
                lex_.advance();
            } else if (lex_.cur().t == Token::T::Ident && !is_kw("where") &&
                       !is_kw("group")) {
                alias = lower(lex_.cur().text);
                lex_.advance();
            }
            q.tables.emplace_back(table, alias);
        } while (accept_punct(","));
    }

    void parse_predicates(QuerySpec& q) {
        do {
            AttrName left = parse_attr();
            if (is_kw("in")) {
                lex_.advance();
                bool brace = accept_punct("{");
                if (!brace) expect_punct("(");
                SelPred p;
                p.attr = left;
                p.op = CmpOp::In;
                do {
                    p.lits.push_back(parse_literal());
                } while (accept_punct(","));
                expect_punct(brace ? "}" : ")");
                q.preds.emplace_back(std::move(p));
                continue;
            }
            const Token& t = lex_.cur();
            if (t.t != Token::T::Punct) fail(t, "expected comparison operator");
            CmpOp op;
            std::string sym = t.text;
            if (sym == "=") op = CmpOp::Eq;
            else if (sym == "!=" || sym == "<>") op = CmpOp::Ne;
            else if (sym == "<") op = CmpOp::Lt;
            else if (sym == "<=") op = CmpOp::Le;
            else if (sym == ">") op = CmpOp::Gt;
            else if (sym == ">=") op = CmpOp::Ge;
            else fail(t, "expected comparison operator");
            lex_.advance();
            // attr op attr with '=' is a join; anything else needs a literal.
            if (lex_.cur().t == Token::T::Ident) {
                AttrName right = parse_attr();
                if (op != CmpOp::Eq)
                    fail(t, "join predicates must be equalities");
                q.preds.emplace_back(JoinPred{left, right});
            } else {
                SelPred p;
                p.attr = left;
                p.op = op;
                p.lits.push_back(parse_literal());
                q.preds.emplace_back(std::move(p));
            }
        } while ([&] {
            if (is_kw("and")) {
                lex_.advance();
                return true;
            }
            return false;
        }());
    }

    Lexer lex_;
};

}  // namespace

QuerySpec parse_sql(const std::string& text) { return Parser(text).parse(); }

std::string render_sql(const QuerySpec& q) {
    std::ostringstream out;
    out << "SELECT ";
    bool first = true;
    for (const auto& a : q.projection) {
        out << (first ? "" : ", ") << a.qualified();
        first = false;
    }
    if (q.agg) {
        out << (first ? "" : ", ") << agg_fn_name(q.agg->fn) << "(" << q.agg->attr.qualified()
            << ")";
        first = false;
    }
    out << " FROM ";
    for (size_t i = 0; i < q.tables.size(); ++i) {
        out << (i ? ", " : "") << q.tables[i].first;
        if (q.tables[i].second != q.tables[i].first) out << " AS " << q.tables[i].second;
    }
    if (!q.preds.empty()) {
        out << " WHERE ";
        for (size_t i = 0; i < q.preds.size(); ++i) {
            if (i) out << " AND ";
            if (const auto* s = std::get_if<SelPred>(&q.preds[i])) {
                if (s->op == CmpOp::In) {
                    out << s->attr.qualified() << " in (";
                    for (size_t k = 0; k < s->lits.size(); ++k)
                        out << (k ? ", " : "") << render_literal_sql(s->lits[k]);
                    out << ")";
                } else {
                    out << s->attr.qualified() << " " << cmp_op_name(s->op) << " "
                        << render_literal_sql(s->lits.at(0));
                }
            } else {
                out << std::get<JoinPred>(q.preds[i]).render();
            }
        }
    }
    if (q.group_by) out << " GROUP BY " << q.group_by->qualified();
    return out.str();
}

namespace {

// Coerce a parsed literal to the attribute's type; numeric widening only.
Value coerce_literal(const Value& v, AttrType t, const AttrName& attr) {
    switch (t) {
        case AttrType::Int:
            if (v.is_int()) return v;
            if (v.is_float() && v.as_float() == static_cast<double>(
                                    static_cast<int64_t>(v.as_float())))
                return Value::of(static_cast<int64_t>(v.as_float()));
            break;
        case AttrType::Float:
            if (v.is_numeric()) return Value::of(v.numeric());
            break;
        case AttrType::Text:
            if (v.is_text()) return v;
            break;
    }
    throw Error("bind", "literal " + render_value(v) + " does not match type of " +
                            attr.qualified());
}

}  // namespace

void bind_query(QuerySpec& q, const Database& db) {
    struct Entry {
        std::string alias;
        const Table* table;
    };
    std::vector<Entry> scope;
    for (auto& [table, alias] : q.tables) {
        const Table& t = db.require_table(table);
        for (const auto& e : scope)
            if (e.alias == alias) throw Error("bind", "duplicate alias '" + alias + "'");
        scope.push_back({alias, &t});
    }
    auto resolve = [&](AttrName& a) -> AttrType {
        if (a.alias.empty()) {
            const Entry* owner = nullptr;
            for (const auto& e : scope) {
                if (e.table->schema.col_index(a.col) >= 0) {
                    if (owner) throw Error("bind", "ambiguous column '" + a.col + "'");
                    owner = &e;
                }
            }
            if (!owner) throw Error("bind", "unknown column '" + a.col + "'");
            a.alias = owner->alias;
            return owner->table->schema.cols[owner->table->schema.col_index(a.col)].type;
        }
        for (const auto& e : scope) {
            if (e.alias == a.alias) {
                int c = e.table->schema.col_index(a.col);
                if (c < 0)
                    throw Error("bind", "table '" + a.alias + "' has no column '" + a.col +
                                            "'");
                return e.table->schema.cols[c].type;
            }
        }
        throw Error("bind", "unknown table alias '" + a.alias + "'");
    };
    for (auto& a : q.projection) resolve(a);
    if (q.agg) resolve(q.agg->attr);
    if (q.group_by) resolve(*q.group_by);
    for (auto& p : q.preds) {
        if (auto* s = std::get_if<SelPred>(&p)) {
            AttrType t = resolve(s->attr);
            for (auto& lit : s->lits) lit = coerce_literal(lit, t, s->attr);
        } else {
            auto& j = std::get<JoinPred>(p);
            AttrType lt = resolve(j.left);
            AttrType rt = resolve(j.right);
            bool lnum = lt != AttrType::Text, rnum = rt != AttrType::Text;
            if (lnum != rnum)
                throw Error("bind", "join attribute types are incompatible: " + j.render());
        }
    }
    if (!q.projection.empty() && q.agg && !q.group_by)
        throw Error("bind", "plain attributes next to an aggregate require GROUP BY");
}

}  // namespace quip
