#pragma once

#include <array>
#include <deque>
#include <memory>
#include <unordered_map>

#include "quip/decision.hpp"
#include "quip/imputers.hpp"
#include "quip/planner.hpp"
#include "quip/structures.hpp"

namespace quip {

/// In-flight composite tuple over the full catalog layout. Slots mirror
/// catalog entries; inactive slots have not joined yet, padded slots are
/// NULL-filled stand-ins for a deferred join's other side.
struct ExecTuple {
    std::vector<Value> vals;
    std::vector<uint8_t> miss;
    uint32_t active = 0;
    uint32_t padded = 0;       // subset of active
    std::vector<int32_t> rows;  // row ordinal per slot, -1 when absent/padded
    uint32_t padded_left = 0;   // join ordinals deferred with this tuple as left party
    uint32_t padded_right = 0;
    uint32_t inserted = 0;      // join ordinals whose side structures saw this tuple

    bool has_deferred() const { return (padded_left | padded_right) != 0; }
};

struct EngineOptions {
    Strategy strategy = Strategy::Lazy;
    bool bloom_checks = true;  // --no-bloom turns the filter-activation checks off
    bool trace = false;
    uint64_t seed = 42;
    DecisionConfig decision;
};

struct Metrics {
    std::map<std::string, long> imputations;  // per qualified attribute
    long total_imputations = 0;
    double imputation_charge_ms = 0;
    long temporary_tuples = 0;  // total operator emissions
};

class Engine;

class Operator {
public:
    Operator(Engine& eng, const PlanNode& node) : eng_(eng), node_(node) {}
    virtual ~Operator() = default;
    virtual void open() = 0;
    virtual std::optional<ExecTuple> next() = 0;
    virtual void close() {}
    int id() const { return node_.id; }

protected:
    Engine& eng_;
    const PlanNode& node_;
};

/// Per-cell liveness: refs counts the live holders of a still-missing cell
/// (stream tuples, parked tuples, retained join-side copies). A cell dies
/// when its last holder drops; it leaves the missing state when imputed.
struct Cell {
    int refs = 0;
    enum class State { Missing, Imputed, Dead } state = State::Missing;
    Value imputed;
};

class Engine {
public:
    Engine(const Database& db, const QuipPlan& qp, Imputer& imputer, EngineOptions opt);

    /// Runs the pipeline and returns the answer rows.
    std::vector<std::vector<Value>> execute();

    // --- tuple liveness -----------------------------------------------------
    void acquire(const ExecTuple& t);
    void release(const ExecTuple& t);
    void drop(const ExecTuple& t, int op_id, const char* reason);
    // retained side-index copies hold cell references only; deferred-join
    // liveness belongs to in-flight tuples
    void acquire_cells(const ExecTuple& t);
    void release_cells(const ExecTuple& t);
    void release_padding(const ExecTuple& t);
    void clear_padding_bit(ExecTuple& t, int ordinal);

    // --- imputation ---------------------------------------------------------
    struct ImputeResult {
        bool verified = true;
        bool teleport = false;  // tuple must continue at rho (deferred join on attr)
    };
    /// Imputes (or fills from the cell cache) t's cell under `attr`, verifies
    /// it against op_id's verify set, and updates counters/stats/events.
    ImputeResult impute_into(ExecTuple& t, AttrId attr, int op_id);

    // --- VF filter ----------------------------------------------------------
    bool filter_test(const ExecTuple& t, int op_id);

    // --- decision function --------------------------------------------------
    Choice decide(AttrId attr, int op_id, const ExecTuple& t);
    DecisionTree decision_tree(AttrId attr, int op_id, const ExecTuple& t) const;

    // --- structures ---------------------------------------------------------
    struct IndexEntry {
        ExecTuple tuple;    // restricted to the host side's subtree slots
        bool late = false;  // inserted at resolution time rather than stream time
        Tid base_tid = 0;
    };
    // Per join, per side. An attribute can feed several joins at different
    // heights; each position sees its own insertion stream (base rows vs
    // composites), so bloom filters and completeness are tracked per side of
    // each join, not globally per attribute.
    struct JoinRt {
        int ordinal = -1;
        int op_id = -1;
        AttrId attr[2];              // [0]=left/probe, [1]=right/build
        uint32_t side_slots[2] = {0, 0};
        uint32_t side_join_mask[2] = {0, 0};
        int depth = 0;
        std::unordered_map<Value, std::vector<IndexEntry>, ValueHash> side[2];
        BloomState bloom[2];
        AttrIndex aindex[2];
        bool retain[2] = {false, true};  // build side always retained
        TempLists<ExecTuple> temp;
        bool stream_done[2] = {false, false};
        int live_padded = 0;             // in-flight deferred parties of this join
        int pending_insert[2] = {0, 0};  // parties whose value is not yet published
        bool retired = false;
        long padded_missing_seen[2] = {0, 0};
        std::vector<long> carried_any;          // retained copies deferred at join j
        std::vector<long> carried_pending[2];   // ... not yet published on side s
    };

    /// Test/debug view: the bloom state of the unique join side fed by this
    /// attribute (nullptr when the attribute joins nowhere).
    const BloomState* bloom_if_tracked(AttrId a) const;
    JoinRt& join_rt(int ordinal) { return joins_[ordinal]; }
    size_t join_count() const { return joins_.size(); }

    /// Streams a concrete value into the join-attribute structures.
    void stream_insert(JoinRt& j, int side, const ExecTuple& t, const Value& v);
    /// Resolution-time insertion: makes a deferred tuple's now-concrete value
    /// visible to the opposite side's triggered joins.
    void late_insert(JoinRt& j, int side, const ExecTuple& t, const Value& v);

    // --- events -------------------------------------------------------------
    void on_stream_done(int join_ordinal, int side);
    /// Retire/complete fixpoint: retires settled joins, fires completeness
    /// events whose gates hold, drains ready lists into the resolution queue.
    void pump();
    /// Marks the tuple's value for this deferred join as published and keeps
    /// the pending-insert accounting in step.
    void mark_inserted(ExecTuple& t, int ordinal, int side);
    struct Gates {
        /// join can still be probed: a live deferred party exists, or a
        /// retained copy deferred at it sits in a matchable host (least
        /// fixpoint rooted at live tuples)
        std::vector<bool> matchable;
        /// a copy with an unpublished side-s value could still be revived
        bool rev_pending(int ordinal, int side) const { return rp[ordinal][side]; }
        std::vector<std::array<bool, 2>> rp;
    };
    Gates compute_gates() const;
    bool can_fire(const JoinRt& j, int side, const Gates& g) const;
    void assert_drained() const;

    /// Merges a deferred party with an opposite-side segment. Only the
    /// segment's concrete slots are copied; `clear_ordinal` marks the join as
    /// resolved in the output. Liveness is untouched.
    ExecTuple merge_tuples(const ExecTuple& u, const ExecTuple& m, int clear_ordinal) const;
    /// Tuple restricted to one side's subtree, as stored in side indexes.
    ExecTuple restrict_to_side(const ExecTuple& t, const JoinRt& j, int side) const;
    std::vector<ExecTuple> bf_join_resolve(ExecTuple u, int ordinal, int side);

    int missing_count(AttrId a) const { return counters_[a.tbl][a.col]; }

    // --- misc ---------------------------------------------------------------
    const Catalog& catalog() const { return qp_.catalog; }
    const QuipPlan& plan() const { return qp_; }
    const Database& db() const { return db_; }
    const EngineOptions& options() const { return opt_; }
    Stats& stats() { return stats_; }
    Metrics& metrics() { return metrics_; }
    const std::vector<std::string>& trace_lines() const { return trace_; }

    void count_emit(int op_id) { ++metrics_.temporary_tuples; (void)op_id; }
    void trace(int op_id, const std::string& event, const std::string& detail);

    Value& at(ExecTuple& t, AttrId a) const { return t.vals[qp_.catalog.flat(a)]; }
    const Value& at(const ExecTuple& t, AttrId a) const { return t.vals[qp_.catalog.flat(a)]; }
    bool is_missing(const ExecTuple& t, AttrId a) const {
        return t.miss[qp_.catalog.flat(a)] != 0;
    }
    bool is_padded_slot(const ExecTuple& t, AttrId a) const {
        return (t.padded >> a.tbl) & 1;
    }
    bool is_active_slot(const ExecTuple& t, AttrId a) const {
        return (t.active >> a.tbl) & 1;
    }

    std::deque<ExecTuple> resolution_queue;

    /// Current best for the max/min threshold selection (empty until a valid
    /// tuple reached the aggregate).
    std::optional<Value> threshold;
    bool threshold_greater = true;

    const PlanNode* node_of(int op_id) const { return nodes_.at(op_id); }
    const PlanNode* parent_of(int op_id) const {
        auto it = parents_.find(op_id);
        return it == parents_.end() ? nullptr : it->second;
    }
    std::string attr_name(AttrId a) const { return qp_.catalog.name_of(a); }
    bool attr_is_join(AttrId a) const;
    bool attr_has_selection(AttrId a) const;
    const std::vector<AttrId>& projection_attrs() const { return proj_attrs_; }

private:
    friend class RhoOp;
    uint64_t cell_key(AttrId a, int row) const {
        return (static_cast<uint64_t>(static_cast<uint32_t>(a.tbl)) << 40) |
               (static_cast<uint64_t>(static_cast<uint32_t>(a.col)) << 32) |
               static_cast<uint32_t>(row);
    }
    void try_retire(JoinRt& j);
    bool pumping_ = false;
    std::unique_ptr<Operator> build_operator(const PlanNode& node);
    std::vector<std::vector<Value>> run_project(const PlanNode& proj, Operator& child);
    std::vector<std::vector<Value>> run_aggregate(const PlanNode& agg, Operator& child);

    const Database& db_;
    const QuipPlan& qp_;
    Imputer& imputer_;
    EngineOptions opt_;
    Stats stats_;
    Metrics metrics_;
    std::vector<std::string> trace_;

    std::vector<std::vector<int>> counters_;  // per catalog entry per column
    std::unordered_map<uint64_t, Cell> cells_;
    std::vector<JoinRt> joins_;
    std::vector<AttrId> join_attrs_;
    std::map<int, const PlanNode*> nodes_;
    std::map<int, const PlanNode*> parents_;
    std::vector<AttrId> proj_attrs_;
    std::vector<AttrId> sel_attrs_;  // attrs appearing in selection predicates
};

}  // namespace quip
