#include "quip/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

namespace quip {

using nlohmann::json;

std::vector<std::vector<Value>> sorted_rows(std::vector<std::vector<Value>> rows) {
    auto row_less = [](const std::vector<Value>& a, const std::vector<Value>& b) {
        for (size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
            if (value_less(a[i], b[i])) return true;
            if (value_less(b[i], a[i])) return false;
        }
        return a.size() < b.size();
    };
    std::sort(rows.begin(), rows.end(), row_less);
    return rows;
}

std::string digest_rows(const std::vector<std::vector<Value>>& rows) {
    auto sorted = sorted_rows(rows);
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
        h = (h ^ 0x1f) * 0x100000001b3ull;
    };
    for (const auto& row : sorted) {
        for (const auto& v : row) mix(render_value(v));
        mix("|");
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

bool same_answers(const RunReport& a, const RunReport& b) {
    return sorted_rows(a.answer) == sorted_rows(b.answer);
}

double smape_rows(const std::vector<std::vector<Value>>& ra,
                  const std::vector<std::vector<Value>>& rb) {
    auto a = sorted_rows(ra);
    auto b = sorted_rows(rb);
    double sum = 0;
    long cells = 0;
    size_t n = std::max(a.size(), b.size());
    for (size_t i = 0; i < n; ++i) {
        if (i >= a.size() || i >= b.size()) {
            const auto& row = i < a.size() ? a[i] : b[i];
            for (const auto& v : row)
                if (v.is_numeric()) {
                    sum += 2.0;  // unmatched tuple: maximum deviation
                    ++cells;
                }
            continue;
        }
        for (size_t c = 0; c < std::min(a[i].size(), b[i].size()); ++c) {
            const Value& x = a[i][c];
            const Value& y = b[i][c];
            if (x.is_null() && y.is_null()) continue;
            if (x.is_null() || y.is_null()) {
                sum += 2.0;
                ++cells;
                continue;
            }
            if (!x.is_numeric() || !y.is_numeric()) continue;  // skipped with warning
            double dx = x.numeric(), dy = y.numeric();
            double denom = std::abs(dx) + std::abs(dy);
            sum += denom == 0 ? 0.0 : 2.0 * std::abs(dx - dy) / denom;
            ++cells;
        }
    }
    return cells ? 100.0 * sum / static_cast<double>(cells) : 0.0;
}

double smape(const RunReport& a, const RunReport& b) { return smape_rows(a.answer, b.answer); }

std::string RunReport::to_json() const {
    json j;
    j["strategy"] = strategy;
    j["imputer"] = imputer;
    j["seed"] = seed;
    j["answer"] = json::array();
    for (const auto& row : sorted_rows(answer)) {
        json r = json::array();
        for (const auto& v : row) {
            if (v.is_null()) r.push_back(nullptr);
            else if (v.is_int()) r.push_back(v.as_int());
            else if (v.is_float()) r.push_back(v.as_float());
            else r.push_back(v.as_text());
        }
        j["answer"].push_back(r);
    }
    j["answer_digest"] = answer_digest;
    j["imputations"] = json::object();
    for (const auto& [a, n] : imputations) j["imputations"][a] = n;
    j["total_imputations"] = total_imputations;
    j["imputation_charge_ms"] = imputation_charge_ms;
    j["temporary_tuples"] = temporary_tuples;
    j["wall_ms"] = wall_ms;
    if (!stats_json.empty()) j["stats"] = json::parse(stats_json);
    if (!trace.empty()) j["trace"] = trace;
    return j.dump(2);
}

RunReport run(const Database& db, const PlanNode& plan, const RunOptions& opt) {
    auto t0 = std::chrono::steady_clock::now();
    auto imputer = make_imputer(opt.imputer, opt.latency_ms);
    if (imputer->blocking() && opt.strategy == Strategy::Adaptive)
        throw Error("plan", "blocking imputer '" + opt.imputer +
                                "' supports only eager or lazy strategies");

    RunReport rep;
    rep.strategy = strategy_name(opt.strategy);
    rep.imputer = opt.imputer;
    rep.seed = opt.seed;

    if (opt.strategy == Strategy::Offline) {
        OfflineImputation off = impute_all(db, *imputer);
        rep.answer = offline_execute(plan, off.db);
        rep.imputations = off.imputations;
        rep.total_imputations = off.total;
        rep.imputation_charge_ms = off.charge_ms;
        rep.temporary_tuples = 0;
    } else {
        RewriteOptions ro;
        ro.minmax_opt = opt.minmax_opt;
        QuipPlan qp = rewrite(plan, db, ro);
        EngineOptions eo;
        eo.strategy = opt.strategy;
        eo.bloom_checks = opt.bloom;
        eo.trace = opt.trace;
        eo.seed = opt.seed;
        eo.decision = opt.decision;
        eo.decision.strategy = opt.strategy;
        eo.decision.impute_cost_multiplier = opt.impute_cost_multiplier;
        eo.decision.blocking_imputer = imputer->blocking();
        Engine eng(db, qp, *imputer, eo);
        rep.answer = eng.execute();
        rep.imputations = eng.metrics().imputations;
        rep.total_imputations = eng.metrics().total_imputations;
        rep.imputation_charge_ms = eng.metrics().imputation_charge_ms;
        rep.temporary_tuples = eng.metrics().temporary_tuples;
        rep.stats_json = eng.stats().snapshot_json();
        rep.trace = eng.trace_lines();
    }
    rep.answer_digest = digest_rows(rep.answer);
    rep.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    return rep;
}

RunReport run_sql(const Database& db, const std::string& sql, const RunOptions& opt) {
    QuerySpec q = parse_sql(sql);
    PlanPtr plan = plan_from_query(q, db);
    return run(db, *plan, opt);
}

// ---------------------------------------------------------------------------

Workload generate_workload(const WorkloadSpec& spec) {
    if (spec.n_tables < 1 || spec.n_tables > 8) throw Error("gen", "n_tables out of range");
    if (spec.rows < 1) throw Error("gen", "rows must be positive");
    if (spec.missing_ratio < 0 || spec.missing_ratio > 1)
        throw Error("gen", "missing ratio out of range");
    for (double s : spec.selection_sel)
        if (s < 0 || s > 1) throw Error("gen", "infeasible selection selectivity");
    if (!spec.selection_sel.empty() &&
        spec.selection_sel.size() != static_cast<size_t>(spec.n_tables))
        throw Error("gen", "selection_sel must have one entry per table");
    if (spec.join_class != "low" && spec.join_class != "high")
        throw Error("gen", "join_class must be low or high");

    std::mt19937_64 rng(spec.seed);
    Workload w;
    long key_domain = spec.join_class == "high"
                          ? std::max<long>(2, spec.rows / 20)
                          : std::max<long>(4, static_cast<long>(spec.rows) * 4);

    for (int t = 0; t < spec.n_tables; ++t) {
        Table tab;
        tab.schema.name = "r" + std::to_string(t + 1);
        tab.schema.cols = {{"k", AttrType::Int},
                           {"s", AttrType::Int},
                           {"a", AttrType::Int},
                           {"b", AttrType::Int}};
        for (int r = 0; r < spec.rows; ++r) {
            BaseTuple row;
            row.tid = make_tid(t, r);
            row.vals.resize(4);
            row.miss.assign(4, 0);
            row.vals[0] = Value::of(static_cast<int64_t>(rng() % key_domain));
            // cycled residues keep realized selection selectivity near-exact
            row.vals[1] = Value::of(static_cast<int64_t>((r * 37 + t * 11) % 100));
            row.vals[2] = Value::of(static_cast<int64_t>(rng() % 5));
            row.vals[3] = Value::of(static_cast<int64_t>(rng() % 1000));
            tab.rows.push_back(std::move(row));
        }
        w.db.tables.push_back(std::move(tab));
    }

    // blank cells, recording ground truth first; the selection column is
    // blanked stratified by value so the surviving clean rows keep the
    // requested selectivity
    for (int t = 0; t < spec.n_tables; ++t) {
        Table& tab = w.db.tables[t];
        for (const std::string& colname : spec.missing_on) {
            int c = tab.schema.col_index(colname);
            if (c < 0) throw Error("gen", "missing_on column '" + colname + "' unknown");
            std::vector<int> rows(tab.rows.size());
            for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
            if (colname == "s") {
                std::sort(rows.begin(), rows.end(), [&](int a, int b) {
                    return value_less(tab.rows[a].vals[c], tab.rows[b].vals[c]);
                });
                long k = std::lround(spec.missing_ratio * static_cast<double>(rows.size()));
                if (k > 0) {
                    double step = static_cast<double>(rows.size()) / static_cast<double>(k);
                    std::vector<int> picked;
                    for (long i = 0; i < k; ++i)
                        picked.push_back(rows[static_cast<size_t>(i * step)]);
                    rows = picked;
                } else {
                    rows.clear();
                }
            } else {
                std::shuffle(rows.begin(), rows.end(), rng);
                long k = std::lround(spec.missing_ratio * static_cast<double>(rows.size()));
                rows.resize(std::max<long>(0, k));
            }
            for (int r : rows) {
                BaseTuple& row = tab.rows[r];
                w.db.gt.add(tab.schema.name, r, colname, row.vals[c]);
                row.vals[c] = Value::null();
                row.miss[c] = 1;
            }
        }
    }
    w.db.missing.init(w.db.tables);

    // template query
    std::ostringstream sql;
    sql << "SELECT ";
    if (spec.agg == "none") {
        sql << "r1.a, r1.b";
    } else {
        if (spec.group_by && spec.agg != "max" && spec.agg != "min") sql << "r1.a, ";
        sql << spec.agg << "(r1.b)";
    }
    sql << " FROM ";
    for (int t = 0; t < spec.n_tables; ++t) sql << (t ? ", " : "") << "r" << (t + 1);
    std::vector<std::string> preds;
    for (int t = 0; t + 1 < spec.n_tables; ++t)
        preds.push_back("r" + std::to_string(t + 1) + ".k = r" + std::to_string(t + 2) + ".k");
    for (int t = 0; t < spec.n_tables && !spec.selection_sel.empty(); ++t) {
        double s = spec.selection_sel[t];
        int thr = static_cast<int>(std::lround(100.0 * (1.0 - s)));
        preds.push_back("r" + std::to_string(t + 1) + ".s >= " + std::to_string(thr));
        // realized selectivity on clean rows
        const Table& tab = w.db.tables[t];
        long clean = 0, pass = 0;
        for (const auto& row : tab.rows) {
            int c = tab.schema.col_index("s");
            if (row.miss[c] || row.vals[c].is_null()) continue;
            ++clean;
            if (row.vals[c].as_int() >= thr) ++pass;
        }
        double realized = clean ? static_cast<double>(pass) / static_cast<double>(clean) : s;
        w.achieved_sel["r" + std::to_string(t + 1) + ".s"] = realized;
        if (std::abs(realized - s) > 0.05)
            throw Error("gen", "realized selectivity drifted beyond 0.05");
    }
    if (!preds.empty()) {
        sql << " WHERE ";
        for (size_t i = 0; i < preds.size(); ++i) sql << (i ? " AND " : "") << preds[i];
    }
    if (spec.agg != "none" && spec.group_by && spec.agg != "max" && spec.agg != "min")
        sql << " GROUP BY r1.a";
    w.sql = sql.str();
    return w;
}

}  // namespace quip
