#pragma once

#include <fstream>
#include <random>
#include <sstream>

#include "quip/harness.hpp"

namespace quip::testutil {

inline std::string toy_dir() { return std::string(TESTDATA_DIR) + "/toy"; }

inline Database load_toy() { return load_database(toy_dir()); }

inline std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline PlanPtr toy_plan(const Database& db) {
    return load_plan_json(slurp(toy_dir() + "/q0_plan.json"), db);
}

/// Random small database: 1-3 tables named f1..f3 with columns
/// k (join key), s (selection), b (aggregation), c (text). Cells can be
/// regular NULLs or missing; every missing cell has a ground-truth value.
inline Database fuzz_db(std::mt19937_64& rng, int max_rows = 60,
                        double max_missing = 0.5, int n_tables = 0,
                        int key_domain_hint = 0) {
    Database db;
    int nt = n_tables ? n_tables : 1 + static_cast<int>(rng() % 3);
    const char* texts[] = {"x", "y", "z"};
    for (int t = 0; t < nt; ++t) {
        Table tab;
        tab.schema.name = "f" + std::to_string(t + 1);
        tab.schema.cols = {{"k", AttrType::Int},
                           {"s", AttrType::Int},
                           {"b", AttrType::Int},
                           {"c", AttrType::Text}};
        int rows = static_cast<int>(rng() % (max_rows + 1));
        int key_domain = key_domain_hint ? key_domain_hint : 1 + static_cast<int>(rng() % 6);
        double null_ratio = 0.08;
        std::vector<double> miss_ratio(4);
        for (auto& m : miss_ratio)
            m = max_missing * static_cast<double>(rng() % 1000) / 1000.0;
        auto frac = [&] { return static_cast<double>(rng() % 1000) / 1000.0; };
        for (int r = 0; r < rows; ++r) {
            BaseTuple row;
            row.tid = make_tid(t, r);
            row.vals = {Value::of(static_cast<int64_t>(rng() % key_domain)),
                        Value::of(static_cast<int64_t>(rng() % 10)),
                        Value::of(static_cast<int64_t>(rng() % 100)),
                        Value::of(std::string(texts[rng() % 3]))};
            row.miss.assign(4, 0);
            for (int c = 0; c < 4; ++c) {
                double f = frac();
                if (f < miss_ratio[c]) {
                    db.gt.add(tab.schema.name, r, tab.schema.cols[c].name, row.vals[c]);
                    row.vals[c] = Value::null();
                    row.miss[c] = 1;
                } else if (f < miss_ratio[c] + null_ratio) {
                    row.vals[c] = Value::null();
                }
            }
            tab.rows.push_back(std::move(row));
        }
        db.tables.push_back(std::move(tab));
    }
    db.missing.init(db.tables);
    return db;
}

/// Random plan over fuzz_db tables: chain joins on k; selections randomly
/// pushed to leaves or kept above joins; projection or aggregate root.
inline PlanPtr fuzz_plan(std::mt19937_64& rng, const Database& db, int shape) {
    int nt = static_cast<int>(db.tables.size());
    int used = std::min(nt, 1 + shape % 3);

    std::vector<PlanPtr> nodes;
    for (int t = 0; t < used; ++t)
        nodes.push_back(make_scan(db.tables[t].schema.name, db.tables[t].schema.name));

    // candidate selections, attached later at random heights
    struct SelSpec {
        std::string alias;
        SelPred pred;
    };
    std::vector<SelSpec> sels;
    for (int t = 0; t < used; ++t) {
        std::string alias = db.tables[t].schema.name;
        unsigned kind = rng() % 4;
        if (kind == 0) continue;  // no selection on this table
        SelPred p;
        if (kind == 1) {
            p.attr = {alias, "s"};
            p.op = CmpOp::Ge;
            p.lits = {Value::of(static_cast<int64_t>(rng() % 11))};
        } else if (kind == 2) {
            p.attr = {alias, "s"};
            p.op = CmpOp::In;
            int n = 1 + static_cast<int>(rng() % 4);
            for (int i = 0; i < n; ++i)
                p.lits.push_back(Value::of(static_cast<int64_t>(rng() % 10)));
        } else {
            p.attr = {alias, "c"};
            p.op = CmpOp::Eq;
            p.lits = {Value::of(std::string(rng() % 2 ? "x" : "y"))};
        }
        sels.push_back({alias, std::move(p)});
    }

    // chain joins, occasionally selections pushed to leaves first
    for (auto it = sels.begin(); it != sels.end();) {
        if (rng() % 2) {
            for (int t = 0; t < used; ++t)
                if (db.tables[t].schema.name == it->alias)
                    nodes[t] = make_select(it->pred, std::move(nodes[t]));
            it = sels.erase(it);
        } else {
            ++it;
        }
    }
    PlanPtr cur = std::move(nodes[0]);
    for (int t = 1; t < used; ++t) {
        JoinPred jp{{db.tables[t - 1].schema.name, "k"}, {db.tables[t].schema.name, "k"}};
        if (rng() % 2) {
            cur = make_join(jp, std::move(cur), std::move(nodes[t]));
        } else {
            std::swap(jp.left, jp.right);
            cur = make_join(jp, std::move(nodes[t]), std::move(cur));
        }
        // remaining selections over already-joined aliases may sit here
        for (auto it = sels.begin(); it != sels.end();) {
            bool joined = false;
            for (int x = 0; x <= t; ++x)
                if (db.tables[x].schema.name == it->alias) joined = true;
            if (joined && rng() % 2) {
                cur = make_select(it->pred, std::move(cur));
                it = sels.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& s : sels) cur = make_select(s.pred, std::move(cur));

    if (shape % 5 == 3) {
        AggSpec a;
        unsigned f = rng() % 4;
        a.fn = f == 0 ? AggFn::Max : f == 1 ? AggFn::Min : f == 2 ? AggFn::Avg : AggFn::Count;
        a.attr = {db.tables[0].schema.name, "b"};
        std::optional<AttrName> gb;
        if (rng() % 2) gb = AttrName{db.tables[0].schema.name, "s"};
        cur = make_aggregate(a, gb, std::move(cur));
    } else {
        std::vector<AttrName> attrs;
        attrs.push_back({db.tables[0].schema.name, "k"});
        attrs.push_back({db.tables[0].schema.name, "c"});
        if (used > 1) attrs.push_back({db.tables[1].schema.name, "b"});
        cur = make_project(std::move(attrs), std::move(cur));
    }
    bind_plan(*cur, db);
    return cur;
}

}  // namespace quip::testutil
