#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "quip/harness.hpp"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw quip::Error("load", "cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

quip::PlanPtr resolve_plan(const quip::Database& db, const std::string& query_file,
                           const std::string& plan_file, const std::string& sql_inline) {
    if (!plan_file.empty()) return quip::load_plan_json(slurp(plan_file), db);
    std::string sql = !sql_inline.empty() ? sql_inline : slurp(query_file);
    quip::QuerySpec q = quip::parse_sql(sql);
    return quip::plan_from_query(q, db);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"imputation-aware query engine"};
    app.require_subcommand(1);

    // --- run ---------------------------------------------------------------
    auto* run = app.add_subcommand("run", "execute a query under one strategy");
    std::string db_dir, query_file, plan_file, sql_inline, report_file;
    std::string strategy = "lazy", imputer = "oracle";
    double latency = 0;
    uint64_t seed = 42;
    bool no_bloom = false, no_minmax = false, trace = false;
    double multiplier = 1.0;
    run->add_option("--db", db_dir, "database directory")->required();
    run->add_option("--query", query_file, "SQL file");
    run->add_option("--sql", sql_inline, "inline SQL");
    run->add_option("--plan", plan_file, "plan JSON file");
    run->add_option("--strategy", strategy, "eager|lazy|adaptive|offline");
    run->add_option("--imputer", imputer, "mean|knn|oracle");
    run->add_option("--latency", latency, "oracle latency charge in ms");
    run->add_option("--seed", seed, "reproducibility seed");
    run->add_option("--report", report_file, "write the run report JSON here");
    run->add_option("--impute-cost-multiplier", multiplier,
                    "scales imputation cost in the decision function");
    run->add_flag("--no-bloom", no_bloom, "disable bloom-filter based early filtering");
    run->add_flag("--no-minmax-opt", no_minmax, "disable the max/min threshold selection");
    run->add_flag("--trace", trace, "record per-operator events");

    // --- gen ---------------------------------------------------------------
    auto* gen = app.add_subcommand("gen", "generate a synthetic workload");
    std::string out_dir, join_class = "low", agg = "avg", sel_csv, missing_on_csv = "s,k";
    int tables = 2, rows = 100;
    double missing = 0.2;
    bool group = true;
    uint64_t gen_seed = 1;
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--tables", tables);
    gen->add_option("--rows", rows);
    gen->add_option("--missing", missing, "missing ratio per chosen attribute");
    gen->add_option("--missing-on", missing_on_csv, "columns to blank (k,s,b)");
    gen->add_option("--sel", sel_csv, "per-table selection selectivities, e.g. 0.4,0.6");
    gen->add_option("--join", join_class, "low|high join selectivity");
    gen->add_option("--agg", agg, "avg|max|min|count|none");
    gen->add_flag("--no-group", [&group](size_t) { group = false; }, "omit GROUP BY");
    gen->add_option("--seed", gen_seed);

    // --- vf ----------------------------------------------------------------
    auto* vf = app.add_subcommand("vf", "dump the verify/filter list for a query");
    std::string vdb, vquery, vplan, vsql;
    vf->add_option("--db", vdb)->required();
    vf->add_option("--query", vquery);
    vf->add_option("--sql", vsql);
    vf->add_option("--plan", vplan);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (query_file.empty() && plan_file.empty() && sql_inline.empty())
                throw quip::Error("parse", "one of --query/--sql/--plan is required");
            quip::Database db = quip::load_database(db_dir);
            quip::PlanPtr plan = resolve_plan(db, query_file, plan_file, sql_inline);
            quip::RunOptions opt;
            opt.strategy = quip::strategy_from_name(strategy);
            opt.imputer = imputer;
            opt.latency_ms = latency;
            opt.seed = seed;
            opt.bloom = !no_bloom;
            opt.minmax_opt = !no_minmax;
            opt.trace = trace;
            opt.impute_cost_multiplier = multiplier;
            quip::RunReport rep = quip::run(db, *plan, opt);
            if (!report_file.empty()) {
                std::ofstream out(report_file);
                out << rep.to_json() << '\n';
            }
            std::cout << "strategy " << rep.strategy << ", imputations "
                      << rep.total_imputations << ", temporary tuples "
                      << rep.temporary_tuples << ", answers " << rep.answer.size()
                      << ", digest " << rep.answer_digest << "\n";
            for (const auto& row : quip::sorted_rows(rep.answer)) {
                for (size_t i = 0; i < row.size(); ++i)
                    std::cout << (i ? ", " : "  ") << quip::render_value(row[i]);
                std::cout << "\n";
            }
            if (trace)
                for (const auto& line : rep.trace) std::cerr << line << "\n";
        } else if (gen->parsed()) {
            quip::WorkloadSpec spec;
            spec.n_tables = tables;
            spec.rows = rows;
            spec.missing_ratio = missing;
            spec.join_class = join_class;
            spec.agg = agg;
            spec.group_by = group;
            spec.seed = gen_seed;
            spec.missing_on.clear();
            std::stringstream ms(missing_on_csv);
            for (std::string tok; std::getline(ms, tok, ',');)
                if (!tok.empty()) spec.missing_on.push_back(tok);
            spec.selection_sel.clear();
            if (!sel_csv.empty()) {
                std::stringstream ss(sel_csv);
                for (std::string tok; std::getline(ss, tok, ',');)
                    spec.selection_sel.push_back(std::stod(tok));
            }
            quip::Workload w = quip::generate_workload(spec);
            quip::save_database(w.db, out_dir);
            std::ofstream qf(out_dir + "/query.sql");
            qf << w.sql << '\n';
            std::cout << "wrote " << out_dir << "\n" << w.sql << "\n";
            for (const auto& [a, s] : w.achieved_sel)
                std::cout << "  realized sel " << a << " = " << s << "\n";
        } else if (vf->parsed()) {
            quip::Database db = quip::load_database(vdb);
            quip::PlanPtr plan = resolve_plan(db, vquery, vplan, vsql);
            quip::QuipPlan qp = quip::rewrite(*plan, db);
            std::cout << quip::vf_dump_json(qp) << "\n";
        }
    } catch (const quip::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
