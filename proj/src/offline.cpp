#include "quip/offline.hpp"

#include <algorithm>
#include <unordered_map>

namespace quip {

OfflineImputation impute_all(const Database& db, Imputer& imputer) {
    OfflineImputation out;
    out.db.tables = db.tables;
    out.db.gt = db.gt;
    for (size_t t = 0; t < out.db.tables.size(); ++t) {
        Table& table = out.db.tables[t];
        for (auto& row : table.rows) {
            for (size_t c = 0; c < row.miss.size(); ++c) {
                if (!row.miss[c]) continue;
                Value v = imputer.impute(db, static_cast<int>(t), tid_row(row.tid),
                                         static_cast<int>(c));
                row.vals[c] = std::move(v);
                row.miss[c] = 0;
                ++out.imputations[table.schema.name + "." + table.schema.cols[c].name];
                ++out.total;
                out.charge_ms += imputer.charge_ms();
            }
        }
    }
    out.db.missing.init(out.db.tables);
    return out;
}

namespace {

struct Rel {
    std::vector<std::string> cols;  // qualified names
    std::vector<std::vector<Value>> rows;

    int col(const std::string& name) const {
        for (size_t i = 0; i < cols.size(); ++i)
            if (cols[i] == name) return static_cast<int>(i);
        throw Error("exec", "offline: unknown column " + name);
    }
};

Rel eval(const PlanNode& n, const Database& db) {
    switch (n.kind) {
        case PlanNode::Kind::Scan: {
            const Table& t = db.require_table(n.table);
            Rel r;
            for (const auto& c : t.schema.cols) r.cols.push_back(n.alias + "." + c.name);
            for (const auto& row : t.rows) r.rows.push_back(row.vals);
            return r;
        }
        case PlanNode::Kind::Select: {
            Rel in = eval(*n.child(), db);
            int c = in.col(n.sel.attr.qualified());
            Rel out;
            out.cols = in.cols;
            for (auto& row : in.rows)
                if (eval_cmp(row[c], n.sel.op, n.sel.lits)) out.rows.push_back(std::move(row));
            return out;
        }
        case PlanNode::Kind::Join: {
            Rel l = eval(*n.child(0), db);
            Rel r = eval(*n.child(1), db);
            int lc = l.col(n.join.left.qualified());
            int rc = r.col(n.join.right.qualified());
            std::unordered_map<Value, std::vector<size_t>, ValueHash> ht;
            for (size_t i = 0; i < r.rows.size(); ++i)
                if (!r.rows[i][rc].is_null()) ht[r.rows[i][rc]].push_back(i);
            Rel out;
            out.cols = l.cols;
            out.cols.insert(out.cols.end(), r.cols.begin(), r.cols.end());
            for (const auto& lrow : l.rows) {
                if (lrow[lc].is_null()) continue;
                auto it = ht.find(lrow[lc]);
                if (it == ht.end()) continue;
                for (size_t ri : it->second) {
                    std::vector<Value> row = lrow;
                    row.insert(row.end(), r.rows[ri].begin(), r.rows[ri].end());
                    out.rows.push_back(std::move(row));
                }
            }
            return out;
        }
        case PlanNode::Kind::Project: {
            Rel in = eval(*n.child(), db);
            std::vector<int> idx;
            for (const auto& a : n.attrs) idx.push_back(in.col(a.qualified()));
            Rel out;
            for (const auto& a : n.attrs) out.cols.push_back(a.qualified());
            for (const auto& row : in.rows) {
                std::vector<Value> o;
                for (int i : idx) o.push_back(row[i]);
                out.rows.push_back(std::move(o));
            }
            return out;
        }
        case PlanNode::Kind::Aggregate: {
            Rel in = eval(*n.child(), db);
            int ac = in.col(n.agg->attr.qualified());
            int gc = n.group_by ? in.col(n.group_by->qualified()) : -1;
            struct Acc {
                long count = 0;
                double sum = 0;
                long nn = 0;
                std::optional<Value> best;
            };
            std::map<Value, Acc, bool (*)(const Value&, const Value&)> groups(value_less);
            AggFn fn = n.agg->fn;
            for (const auto& row : in.rows) {
                Value g = gc >= 0 ? row[gc] : Value::null();
                Acc& acc = groups[g];
                acc.count += 1;
                const Value& v = row[ac];
                if (fn != AggFn::Count && !v.is_null()) {
                    if (fn == AggFn::Sum || fn == AggFn::Avg) {
                        acc.sum += v.numeric();
                        acc.nn += 1;
                    } else {
                        auto c = acc.best ? compare_values(v, *acc.best) : std::nullopt;
                        if (!acc.best || (c && (fn == AggFn::Max ? *c > 0 : *c < 0)))
                            acc.best = v;
                    }
                }
            }
            Rel out;
            if (gc >= 0) out.cols.push_back(n.group_by->qualified());
            out.cols.push_back(agg_fn_name(fn) + "(" + n.agg->attr.qualified() + ")");
            auto emit = [&](const Value* g, const Acc& acc) {
                std::vector<Value> row;
                if (g) row.push_back(*g);
                switch (fn) {
                    case AggFn::Count:
                        row.push_back(Value::of(static_cast<int64_t>(acc.count)));
                        break;
                    case AggFn::Sum:
                        row.push_back(acc.nn ? Value::of(acc.sum) : Value::null());
                        break;
                    case AggFn::Avg:
                        row.push_back(acc.nn ? Value::of(acc.sum / static_cast<double>(acc.nn))
                                             : Value::null());
                        break;
                    case AggFn::Max:
                    case AggFn::Min:
                        row.push_back(acc.best ? *acc.best : Value::null());
                        break;
                }
                out.rows.push_back(std::move(row));
            };
            if (gc >= 0) {
                for (const auto& [g, acc] : groups) emit(&g, acc);
            } else if (!groups.empty()) {
                const Acc& acc = groups.begin()->second;
                if ((fn == AggFn::Max || fn == AggFn::Min) && !acc.best) {
                    // no valid values: empty result, matching the engine
                } else {
                    emit(nullptr, acc);
                }
            } else if (fn == AggFn::Count || fn == AggFn::Sum || fn == AggFn::Avg) {
                Acc zero;
                emit(nullptr, zero);
            }
            return out;
        }
        default: throw Error("exec", "offline: unsupported plan node");
    }
}

}  // namespace

std::vector<std::vector<Value>> offline_execute(const PlanNode& plan, const Database& db) {
    return eval(plan, db).rows;
}

}  // namespace quip
