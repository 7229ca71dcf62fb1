#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "quip/storage.hpp"

namespace quip {

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge, In };

std::string cmp_op_name(CmpOp op);

/// SQL-style comparison: NULL or incomparable values never satisfy.
bool eval_cmp(const Value& v, CmpOp op, const std::vector<Value>& lits);

/// Qualified attribute "alias.column". Unqualified input gets an empty alias
/// until binding resolves it.
struct AttrName {
    std::string alias;
    std::string col;

    std::string qualified() const { return alias.empty() ? col : alias + "." + col; }
    bool operator==(const AttrName& o) const { return alias == o.alias && col == o.col; }
};

struct SelPred {
    AttrName attr;
    CmpOp op = CmpOp::Eq;
    std::vector<Value> lits;  // one literal, or the literal set for In

    std::string render() const;
};

/// Equality join; bloom filters require equi-joins so nothing else is allowed.
struct JoinPred {
    AttrName left, right;

    std::string render() const { return left.qualified() + " = " + right.qualified(); }
};

using Pred = std::variant<SelPred, JoinPred>;

enum class AggFn { Max, Min, Count, Sum, Avg };

std::string agg_fn_name(AggFn f);

struct AggSpec {
    AggFn fn = AggFn::Count;
    AttrName attr;
};

struct QuerySpec {
    std::vector<std::pair<std::string, std::string>> tables;  // (table, alias)
    std::vector<AttrName> projection;                          // plain SELECT items
    std::optional<AggSpec> agg;
    std::optional<AttrName> group_by;
    std::vector<Pred> preds;
};

/// Parses the SPJ-aggregate dialect:
///   SELECT <attr|AGG(attr)>[, ...] FROM t [AS a][, ...]
///   [WHERE pred AND pred ...] [GROUP BY attr]
/// Conjunctive predicates only; joins are attr = attr; selections are
/// attr (=|!=|<|<=|>|>=) literal or attr IN {lit, ...}.
/// Throws Error("parse") with a position on syntax errors.
QuerySpec parse_sql(const std::string& text);

/// Pretty-printer; parse_sql(render(q)) is a fixpoint on bound specs.
std::string render_sql(const QuerySpec& q);

/// Resolves aliases/columns against the database schema, qualifies bare
/// attribute names, and coerces literals to the attribute type.
void bind_query(QuerySpec& q, const Database& db);

// ---------------------------------------------------------------------------

struct PlanNode {
    // Rho and ThresholdSelect exist only in rewritten plans, never in input.
    enum class Kind { Scan, Select, Join, Project, Aggregate, ThresholdSelect, Rho };
    Kind kind = Kind::Scan;
    int id = -1;  // assigned at bind time, preorder

    // Scan
    std::string table, alias;
    // Select
    SelPred sel;
    // Join
    JoinPred join;
    // Project
    std::vector<AttrName> attrs;
    // Aggregate
    std::optional<AggSpec> agg;
    std::optional<AttrName> group_by;
    // ThresholdSelect (planner-injected max/min optimization)
    AttrName thr_attr;
    bool thr_greater = true;

    std::vector<std::unique_ptr<PlanNode>> children;

    PlanNode* child(size_t i = 0) const { return children.at(i).get(); }
    std::unique_ptr<PlanNode> clone() const;
};

using PlanPtr = std::unique_ptr<PlanNode>;

PlanPtr make_scan(const std::string& table, const std::string& alias);
PlanPtr make_select(SelPred p, PlanPtr child);
PlanPtr make_join(JoinPred p, PlanPtr left, PlanPtr right);
PlanPtr make_project(std::vector<AttrName> attrs, PlanPtr child);
PlanPtr make_aggregate(AggSpec agg, std::optional<AttrName> group_by, PlanPtr child);

/// Loads an externally produced plan. Node kinds: scan/select/join/project/
/// aggregate; see README for the schema. Binds against the database and
/// throws Error("bind") on dangling tables/columns.
PlanPtr load_plan_json(const std::string& text, const Database& db);

std::string plan_to_json(const PlanNode& root);

/// Built-in heuristic planner: selection pushdown, left-deep joins ordered by
/// ascending table cardinality. Deterministic. Throws Error("plan") when the
/// join graph is disconnected (cross products unsupported).
PlanPtr plan_from_query(const QuerySpec& q, const Database& db);

/// Validates a plan against the db (tables/columns exist, join sides come
/// from distinct subtrees), assigns node ids in preorder, and lower-cases
/// nothing (inputs are already normalized).
void bind_plan(PlanNode& root, const Database& db);

/// All query predicates appearing in the plan (each exactly once).
std::vector<Pred> plan_predicates(const PlanNode& root);

std::string render_plan(const PlanNode& root);

}  // namespace quip
