#pragma once

#include "quip/exec.hpp"
#include "quip/offline.hpp"

namespace quip {

struct RunOptions {
    Strategy strategy = Strategy::Lazy;
    std::string imputer = "oracle";
    double latency_ms = 0;
    uint64_t seed = 42;
    bool bloom = true;        // --no-bloom clears this
    bool minmax_opt = true;   // --no-minmax-opt clears this
    bool trace = false;
    double impute_cost_multiplier = 1.0;
    DecisionConfig decision;  // thresholds; strategy/multiplier copied in
};

struct RunReport {
    std::string strategy;
    std::string imputer;
    uint64_t seed = 0;
    std::vector<std::vector<Value>> answer;  // in emission order
    std::string answer_digest;               // over the sorted multiset
    std::map<std::string, long> imputations;
    long total_imputations = 0;
    double imputation_charge_ms = 0;
    long temporary_tuples = 0;
    double wall_ms = 0;
    std::string stats_json;
    std::vector<std::string> trace;

    std::string to_json() const;
};

/// Executes the plan under the given strategy. Offline means impute the
/// whole database first, then run the reference evaluator.
RunReport run(const Database& db, const PlanNode& plan, const RunOptions& opt);

/// Parses + plans the query with the built-in planner, then runs it.
RunReport run_sql(const Database& db, const std::string& sql, const RunOptions& opt);

std::vector<std::vector<Value>> sorted_rows(std::vector<std::vector<Value>> rows);
std::string digest_rows(const std::vector<std::vector<Value>>& rows);
bool same_answers(const RunReport& a, const RunReport& b);

/// Symmetric mean absolute percentage error over matched numeric answer
/// cells (both multisets canonically sorted). Unmatched rows count at the
/// maximum deviation; non-numeric cells are skipped.
double smape(const RunReport& a, const RunReport& b);
double smape_rows(const std::vector<std::vector<Value>>& a,
                  const std::vector<std::vector<Value>>& b);

// ---------------------------------------------------------------------------

struct WorkloadSpec {
    int n_tables = 2;
    int rows = 100;
    double missing_ratio = 0.2;
    std::vector<std::string> missing_on = {"s", "k"};  // among k (join), s (selection), b (agg)
    std::vector<double> selection_sel;  // per table, in {0,0.2,...,1}; empty = none
    std::string join_class = "low";     // low | high selectivity
    std::string agg = "avg";            // avg | max | count | none
    bool group_by = true;
    uint64_t seed = 1;
};

struct Workload {
    Database db;
    std::string sql;
    std::map<std::string, double> achieved_sel;  // per selection attribute
};

/// Deterministic synthetic workload from the selectivity-sweep template:
/// SELECT r1.a, AVG(r1.b) FROM r1..rn WHERE chain joins on k, selections
/// r_i.s >= x_i, GROUP BY r1.a. Ground truth covers every blanked cell.
/// Throws Error("gen") on infeasible specs; realized selectivities land
/// within +-0.05 of the request on clean rows.
Workload generate_workload(const WorkloadSpec& spec);

}  // namespace quip
