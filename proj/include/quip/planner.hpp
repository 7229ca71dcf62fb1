#pragma once

#include <map>

#include "quip/frontend.hpp"

namespace quip {

/// Attribute of one catalog entry (alias instance), by ordinal.
struct AttrId {
    int tbl = -1;
    int col = -1;
    bool valid() const { return tbl >= 0; }
    bool operator==(const AttrId& o) const { return tbl == o.tbl && col == o.col; }
    bool operator<(const AttrId& o) const {
        return tbl != o.tbl ? tbl < o.tbl : col < o.col;
    }
};

/// Alias instances referenced by a plan, in leaf order. Each instance has its
/// own tuple ids and missing-value accounting even when two aliases scan the
/// same base table.
struct Catalog {
    struct Entry {
        std::string alias;
        int table_idx = -1;      // into Database::tables
        const Table* table = nullptr;
        int offset = 0;          // column offset in the concatenated layout
    };
    std::vector<Entry> entries;
    int width = 0;

    int entry_of(const std::string& alias) const;
    AttrId resolve(const AttrName& a) const;       // throws Error("bind")
    std::string name_of(AttrId a) const;           // "alias.col"
    AttrType type_of(AttrId a) const;
    int flat(AttrId a) const { return entries[a.tbl].offset + a.col; }
};

struct RSel {
    AttrId attr;
    CmpOp op = CmpOp::Eq;
    std::vector<Value> lits;
    bool derived = false;  // added by transitive closure

    bool same_as(const RSel& o) const;
};

struct RJoin {
    AttrId left, right;
    int op_id = -1;     // join node id in the rewritten plan
    int ordinal = -1;   // dense join index
};

/// Per-operator verify/filter sets. Join predicates in filter sets are
/// checked one-sided against the completed side's bloom filter; their status
/// bit lives with the engine's bloom state.
struct VFEntry {
    std::vector<RSel> verify_sel;
    std::vector<RJoin> verify_join;
    std::vector<RSel> filter_sel;
    struct FilterJoin {
        RJoin pred;
        AttrId local;   // attribute produced by this operator's subtree
        AttrId other;   // attribute whose bloom filter is consulted
    };
    std::vector<FilterJoin> filter_join;
};

struct QuipPlan {
    PlanPtr root;        // rewritten tree: modified operators + rho (+ thresholds)
    Catalog catalog;
    int rho_id = -1;     // -1 when the plan has no select/join
    int threshold_id = -1;
    std::vector<RJoin> joins;                 // by ordinal
    std::vector<RSel> selections;             // all query selection predicates
    std::map<int, VFEntry> vf;                // op id -> entry
    std::map<int, std::vector<int>> subtree_joins;  // op id -> join ordinals strictly below
    int node_count = 0;

    const VFEntry& vf_of(int op_id) const;
    const RJoin* join_of_op(int op_id) const;
};

struct RewriteOptions {
    bool minmax_opt = true;
};

/// Marks every select/join/project/aggregate as modified, inserts the
/// imputation operator rho immediately above the topmost select/join (below
/// the root project/aggregate), and, for an ungrouped max/min root, injects
/// the threshold selection at the aggregate attribute's leaf — or just above
/// the first join whose build side holds that relation.
QuipPlan rewrite(const PlanNode& plan, const Database& db, const RewriteOptions& opt = {});

/// Builds verify/filter sets for every modified operator; rho's verify set
/// carries all query predicates. Filter sets are closed transitively over
/// the query's equality atoms. Stored into qp.vf.
void build_vf_list(QuipPlan& qp);

/// Debug dump of the VF list (operator -> verify/filter arrays + status
/// placeholders), as JSON.
std::string vf_dump_json(const QuipPlan& qp);

/// True iff missing values of `attr` must always be imputed for this query:
/// attr appears in a predicate or the projection, and no other attribute of
/// its relation instance appears in any predicate.
bool obligated(AttrId attr, const QuipPlan& qp, const std::vector<AttrId>& projection);

}  // namespace quip
