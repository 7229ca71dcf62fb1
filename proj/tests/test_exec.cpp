#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <functional>

#include "test_util.hpp"

using namespace quip;
using namespace quip::testutil;

namespace {

RunReport run_strategy(const Database& db, const PlanNode& plan, Strategy s,
                       const std::string& imputer = "oracle", bool bloom = true,
                       bool minmax = true, bool trace = false) {
    RunOptions opt;
    opt.strategy = s;
    opt.imputer = imputer;
    opt.bloom = bloom;
    opt.minmax_opt = minmax;
    opt.trace = trace;
    return run(db, plan, opt);
}

long count_trace(const RunReport& rep, const std::string& needle) {
    long n = 0;
    for (const auto& l : rep.trace)
        if (l.find(needle) != std::string::npos) ++n;
    return n;
}

long count_imputes(const RunReport& rep) {
    long n = 0;
    for (const auto& l : rep.trace)
        if (l.find(" impute ") != std::string::npos && l.find("decide") == std::string::npos)
            ++n;
    return n;
}

}  // namespace

TEST_CASE("modified selection delays imputations and filters early") {
    Database db = load_toy();
    PlanPtr plan = toy_plan(db);
    RunReport rep = run_strategy(db, *plan, Strategy::Lazy, "oracle", true, true, true);

    // the S-side selection keeps three tuples; rooms 2214 and 3119 die on the
    // derived filter predicate without imputing their buildings
    long drops = count_trace(rep, "op#6 drop filter");
    CHECK(drops == 2);
    CHECK(rep.imputations.count("s.building") == 0);
}

TEST_CASE("modified join defers missing probe tuples as padded outer rows") {
    // sub-plan with only the room join: the four-tuple intermediate
    Database db = load_toy();
    PlanPtr t_scan = make_scan("trajectories", "t");
    // vacuous predicate on another t attribute so room_location stays
    // non-obligated and its imputations can be delayed
    SelPred vac;
    vac.attr = {"t", "mac_address"};
    vac.op = CmpOp::Ne;
    vac.lits = {Value::of(std::string("zzzz"))};
    PlanPtr t_vac = make_select(vac, std::move(t_scan));
    SelPred rs;
    rs.attr = {"t", "room_location"};
    rs.op = CmpOp::In;
    for (int64_t v : {2065, 2011, 2082, 2035, 2206}) rs.lits.push_back(Value::of(v));
    PlanPtr t_sel = make_select(rs, std::move(t_vac));
    SelPred dbh;
    dbh.attr = {"s", "building"};
    dbh.op = CmpOp::Eq;
    dbh.lits = {Value::of(std::string("DBH"))};
    PlanPtr s_sel = make_select(dbh, make_scan("space", "s"));
    PlanPtr join = make_join({{"t", "room_location"}, {"s", "room"}}, std::move(t_sel),
                             std::move(s_sel));
    PlanPtr plan = make_project({{"t", "mac_address"}, {"t", "time"}}, std::move(join));
    bind_plan(*plan, db);

    RunReport rep = run_strategy(db, *plan, Strategy::Lazy, "oracle", true, true, true);
    // one real join plus three left-padded tuples left the join
    CHECK(count_trace(rep, "pad left") == 3);
    auto rows = sorted_rows(rep.answer);
    REQUIRE(rows.size() == 1);
    CHECK(render_value(rows[0][0]) == "4fep");
    CHECK(render_value(rows[0][1]) == "12pm");
    RunReport off = run_strategy(db, *plan, Strategy::Offline);
    CHECK(same_answers(rep, off));
}

TEST_CASE("clean inputs reduce to a textbook hash join") {
    std::mt19937_64 rng(7);
    Database db = fuzz_db(rng, 40, 0.0, 2);  // no missing values
    PlanPtr plan = fuzz_plan(rng, db, 1);
    RunReport lazy = run_strategy(db, *plan, Strategy::Lazy);
    RunReport off = run_strategy(db, *plan, Strategy::Offline);
    CHECK(lazy.total_imputations == 0);
    CHECK(same_answers(lazy, off));
}

TEST_CASE("case 3: both sides missing keeps the smaller side in L_temp") {
    Database db;
    for (int t = 0; t < 2; ++t) {
        Table tab;
        tab.schema.name = t == 0 ? "l" : "r";
        tab.schema.cols = {{"k", AttrType::Int}, {"v", AttrType::Int}};
        db.tables.push_back(tab);
    }
    auto add = [&](int t, int r, std::optional<int64_t> k, int64_t v, int64_t truth) {
        BaseTuple row;
        row.tid = make_tid(t, r);
        row.vals = {k ? Value::of(*k) : Value::null(), Value::of(v)};
        row.miss = {static_cast<uint8_t>(k ? 0 : 1), 0};
        if (!k) db.gt.add(db.tables[t].schema.name, r, "k", Value::of(truth));
        db.tables[t].rows.push_back(std::move(row));
    };
    add(0, 0, 5, 10, 0);
    add(0, 1, std::nullopt, 11, 5);  // l2: one missing key, truth joins k=5
    add(0, 2, 7, 12, 0);
    add(1, 0, 5, 20, 0);
    add(1, 1, std::nullopt, 21, 5);  // r2: two missing keys
    add(1, 2, std::nullopt, 22, 7);
    db.missing.init(db.tables);

    // vacuous selections keep the keys non-obligated so both sides delay
    auto vac = [](const std::string& alias) {
        SelPred p;
        p.attr = {alias, "v"};
        p.op = CmpOp::Ge;
        p.lits = {Value::of(int64_t{0})};
        return p;
    };
    PlanPtr plan = make_project(
        {{"l", "v"}, {"r", "v"}},
        make_join({{"l", "k"}, {"r", "k"}}, make_select(vac("l"), make_scan("l", "l")),
                  make_select(vac("r"), make_scan("r", "r"))));
    bind_plan(*plan, db);

    {
        OracleImputer imp;
        QuipPlan qp = rewrite(*plan, db);
        EngineOptions eo;
        eo.strategy = Strategy::Lazy;
        Engine eng(db, qp, imp, eo);
        auto rows = eng.execute();
        auto& rt = eng.join_rt(0);
        CHECK(rt.temp.flag == TempLists<ExecTuple>::Side::L);
        CHECK(rt.temp.l_temp.size() == 1);
        // truth: l {(5,10),(5,11),(7,12)} x r {(5,20),(5,21),(7,22)} on k
        CHECK(sorted_rows(rows).size() == 5);
    }
    RunReport lazy = run_strategy(db, *plan, Strategy::Lazy);
    RunReport off = run_strategy(db, *plan, Strategy::Offline);
    CHECK(same_answers(lazy, off));
    CHECK(smape(lazy, off) == 0.0);
}

TEST_CASE("projection imputes projected attributes") {
    Database db = load_toy();
    PlanPtr plan = make_project({{"s", "room"}, {"s", "floor"}}, make_scan("space", "s"));
    bind_plan(*plan, db);
    RunReport rep = run_strategy(db, *plan, Strategy::Lazy);
    CHECK(rep.imputations.at("s.floor") == 1);  // N5 only
    RunReport off = run_strategy(db, *plan, Strategy::Offline);
    CHECK(same_answers(rep, off));
}

TEST_CASE("imputed value violating the verify set drops the tuple") {
    class ConstImputer : public Imputer {
    public:
        Value impute(const Database&, int, int, int) override {
            return Value::of(int64_t{7});
        }
        bool blocking() const override { return false; }
        double charge_ms() const override { return 0; }
        std::string name() const override { return "const7"; }
    };
    Database db;
    Table tab;
    tab.schema.name = "t";
    tab.schema.cols = {{"a", AttrType::Int}};
    BaseTuple row;
    row.tid = make_tid(0, 0);
    row.vals = {Value::null()};
    row.miss = {1};
    tab.rows.push_back(row);
    db.tables.push_back(tab);
    db.missing.init(db.tables);

    SelPred p;
    p.attr = {"t", "a"};
    p.op = CmpOp::Eq;
    p.lits = {Value::of(int64_t{5})};
    PlanPtr plan = make_project({{"t", "a"}}, make_select(p, make_scan("t", "t")));
    bind_plan(*plan, db);

    QuipPlan qp = rewrite(*plan, db);
    ConstImputer imp;
    EngineOptions eo;
    eo.strategy = Strategy::Lazy;
    Engine eng(db, qp, imp, eo);
    auto rows = eng.execute();
    CHECK(rows.empty());
    CHECK(eng.metrics().total_imputations == 1);
}

TEST_CASE("rho resolves the toy pipeline with exactly three imputations") {
    Database db = load_toy();
    PlanPtr plan = toy_plan(db);
    RunReport rep = run_strategy(db, *plan, Strategy::Lazy, "oracle", true, true, true);
    REQUIRE(rep.total_imputations == 3);
    CHECK(rep.imputations.at("u.mac_address") == 2);
    CHECK(rep.imputations.at("t.room_location") == 1);
    auto rows = sorted_rows(rep.answer);
    REQUIRE(rows.size() == 1);
    CHECK(render_value(rows[0][0]) == "Robert");
    CHECK(render_value(rows[0][1]) == "12pm");
    CHECK(render_value(rows[0][2]) == "2206");
    // the imputed 2082 dies on the triggered join against the completed filter
    CHECK(count_trace(rep, "bf-negative") >= 1);
}

TEST_CASE("pass-through tuples at rho") {
    // a tuple with no missing predicate attributes and no deferred joins is
    // emitted untouched
    std::mt19937_64 rng(9);
    Database db = fuzz_db(rng, 20, 0.0, 1);
    PlanPtr plan = fuzz_plan(rng, db, 0);
    RunReport rep = run_strategy(db, *plan, Strategy::Lazy);
    CHECK(rep.total_imputations == 0);
}

TEST_CASE("vf activation can only add drops, never change answers") {
    Database db = load_toy();
    PlanPtr plan = toy_plan(db);
    RunReport with_bloom = run_strategy(db, *plan, Strategy::Lazy, "oracle", true, true, true);
    RunReport without = run_strategy(db, *plan, Strategy::Lazy, "oracle", false, true, true);
    CHECK(same_answers(with_bloom, without));
    CHECK(with_bloom.total_imputations == without.total_imputations);
    CHECK(count_trace(with_bloom, "drop filter") >= count_trace(without, "drop filter"));
    CHECK(with_bloom.temporary_tuples <= without.temporary_tuples);
}

TEST_CASE("aggregate: toy max query") {
    Database db = load_toy();
    QuerySpec q = parse_sql(slurp(toy_dir() + "/q_max.sql"));
    PlanPtr plan = plan_from_query(q, db);
    RunReport rep = run_strategy(db, *plan, Strategy::Lazy);
    REQUIRE(rep.answer.size() == 1);
    CHECK(render_value(rep.answer[0][0]) == "12pm");
    RunReport off = run_strategy(db, *plan, Strategy::Offline);
    CHECK(same_answers(rep, off));
}

TEST_CASE("aggregate: max over an empty stream emits no row") {
    Database db;
    Table tab;
    tab.schema.name = "t";
    tab.schema.cols = {{"a", AttrType::Int}};
    db.tables.push_back(tab);
    db.missing.init(db.tables);
    QuerySpec q = parse_sql("SELECT max(a) FROM t");
    PlanPtr plan = plan_from_query(q, db);
    RunReport rep = run_strategy(db, *plan, Strategy::Lazy);
    CHECK(rep.answer.empty());
}

TEST_CASE("max/min threshold never changes answers and never adds imputations") {
    for (uint64_t seed : {3u, 17u, 23u, 41u}) {
        WorkloadSpec spec;
        spec.n_tables = 2;
        spec.rows = 150;
        spec.missing_ratio = 0.3;
        spec.missing_on = {"b"};
        spec.selection_sel = {0.6, 0.6};
        spec.agg = "max";
        spec.group_by = false;
        spec.seed = seed;
        Workload w = generate_workload(spec);
        QuerySpec q = parse_sql(w.sql);
        PlanPtr plan = plan_from_query(q, w.db);
        RunReport with_opt = run_strategy(w.db, *plan, Strategy::Lazy, "oracle", true, true);
        RunReport without = run_strategy(w.db, *plan, Strategy::Lazy, "oracle", true, false);
        RunReport off = run_strategy(w.db, *plan, Strategy::Offline);
        CHECK(same_answers(with_opt, without));
        CHECK(same_answers(with_opt, off));
        CHECK(with_opt.total_imputations <= without.total_imputations);
    }
}

TEST_CASE("answer equivalence: randomized instances match the offline baseline") {
    std::mt19937_64 rng(2024);
    int checked = 0;
    for (int iter = 0; iter < 60; ++iter) {
        Database db = fuzz_db(rng, 40, 0.5);
        for (int shape = 0; shape < 5; ++shape) {
            PlanPtr plan = fuzz_plan(rng, db, shape);
            RunReport off = run_strategy(db, *plan, Strategy::Offline);
            for (Strategy s : {Strategy::Lazy, Strategy::Adaptive, Strategy::Eager}) {
                RunReport rep = run_strategy(db, *plan, s);
                INFO("iter " << iter << " shape " << shape << " strategy "
                             << strategy_name(s) << "\nplan:\n"
                             << render_plan(*plan));
                REQUIRE(same_answers(rep, off));
            }
            ++checked;
        }
    }
    CHECK(checked == 300);
}

TEST_CASE("answer equivalence holds for the mean imputer too") {
    std::mt19937_64 rng(77);
    for (int iter = 0; iter < 20; ++iter) {
        Database db = fuzz_db(rng, 30, 0.4);
        bool feasible = true;
        for (const auto& t : db.tables) {
            for (size_t c = 0; c + 1 < t.schema.cols.size(); ++c) {  // numeric cols
                bool any = false, any_missing = false;
                for (const auto& r : t.rows) {
                    if (!r.miss[c] && !r.vals[c].is_null()) any = true;
                    if (r.miss[c]) any_missing = true;
                }
                if (any_missing && !any) feasible = false;
            }
            for (const auto& r : t.rows)
                if (r.miss[3]) feasible = false;  // text cannot be mean-imputed
        }
        if (!feasible) continue;
        PlanPtr plan = fuzz_plan(rng, db, 1 + iter % 3);
        RunReport off = run_strategy(db, *plan, Strategy::Offline, "mean");
        RunReport lazy = run_strategy(db, *plan, Strategy::Lazy, "mean");
        INFO("iter " << iter << "\n" << render_plan(*plan));
        REQUIRE(same_answers(lazy, off));
    }
}

TEST_CASE("no duplicated outputs from triggered joins under heavy missing keys") {
    std::mt19937_64 rng(5150);
    for (int iter = 0; iter < 40; ++iter) {
        Database db = fuzz_db(rng, 25, 0.5, 2);
        PlanPtr plan = fuzz_plan(rng, db, 1);
        RunReport lazy = run_strategy(db, *plan, Strategy::Lazy);
        RunReport off = run_strategy(db, *plan, Strategy::Offline);
        INFO("iter " << iter << "\n" << render_plan(*plan));
        REQUIRE(sorted_rows(lazy.answer) == sorted_rows(off.answer));
    }
}

TEST_CASE("imputations are counted exactly once per cell") {
    Database db = load_toy();
    PlanPtr plan = toy_plan(db);
    RunReport rep = run_strategy(db, *plan, Strategy::Lazy, "oracle", true, true, true);
    long traced = count_imputes(rep);
    CHECK(traced == rep.total_imputations);
    long per_attr_total = 0;
    for (const auto& [a, n] : rep.imputations) per_attr_total += n;
    CHECK(per_attr_total == rep.total_imputations);
}
