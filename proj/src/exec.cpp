#include "quip/exec.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <sstream>

namespace quip {

namespace {

uint32_t low_bit(uint32_t m) { return m & (~m + 1); }

int bit_index(uint32_t b) {
    int i = 0;
    while (b >>= 1) ++i;
    return i;
}

}  // namespace

// ---------------------------------------------------------------------------

Engine::Engine(const Database& db, const QuipPlan& qp, Imputer& imputer, EngineOptions opt)
    : db_(db), qp_(qp), imputer_(imputer), opt_(std::move(opt)) {
    const Catalog& cat = qp_.catalog;

    std::function<void(const PlanNode&, const PlanNode*)> walk =
        [&](const PlanNode& n, const PlanNode* parent) {
            nodes_[n.id] = &n;
            if (parent) parents_[n.id] = parent;
            for (const auto& c : n.children) walk(*c, &n);
        };
    walk(*qp_.root, nullptr);

    counters_.resize(cat.entries.size());
    for (size_t e = 0; e < cat.entries.size(); ++e) {
        const Table* t = cat.entries[e].table;
        counters_[e].assign(t->schema.cols.size(), 0);
        for (const auto& row : t->rows) {
            for (size_t c = 0; c < row.miss.size(); ++c) {
                if (!row.miss[c]) continue;
                ++counters_[e][c];
                AttrId a{static_cast<int>(e), static_cast<int>(c)};
                cells_[cell_key(a, tid_row(row.tid))] = Cell{1, Cell::State::Missing, {}};
            }
        }
    }

    auto slots_of = [&](const PlanNode& n) {
        uint32_t m = 0;
        std::function<void(const PlanNode&)> rec = [&](const PlanNode& x) {
            if (x.kind == PlanNode::Kind::Scan) m |= 1u << cat.entry_of(x.alias);
            for (const auto& c : x.children) rec(*c);
        };
        rec(n);
        return m;
    };
    auto depth_of = [&](int id) {
        int d = 0;
        const PlanNode* n = nodes_.at(id);
        while ((n = parent_of(n->id))) ++d;
        return d;
    };

    joins_.resize(qp_.joins.size());
    for (const RJoin& rj : qp_.joins) {
        JoinRt& j = joins_[rj.ordinal];
        j.ordinal = rj.ordinal;
        j.op_id = rj.op_id;
        j.attr[0] = rj.left;
        j.attr[1] = rj.right;
        const PlanNode* n = nodes_.at(rj.op_id);
        j.side_slots[0] = slots_of(*n->child(0));
        j.side_slots[1] = slots_of(*n->child(1));
        for (int s = 0; s < 2; ++s)
            for (int ord : qp_.subtree_joins.at(n->child(s)->id))
                j.side_join_mask[s] |= 1u << ord;
        j.depth = depth_of(rj.op_id);
        j.carried_any.assign(qp_.joins.size(), 0);
        j.carried_pending[0].assign(qp_.joins.size(), 0);
        j.carried_pending[1].assign(qp_.joins.size(), 0);
        stats_.set_join_op(rj.op_id);
        for (int s = 0; s < 2; ++s) {
            AttrId a = j.attr[s];
            uint64_t seed = splitmix64(opt_.seed ^ value_hash(Value::of(attr_name(a))) ^
                                       static_cast<uint64_t>(rj.ordinal * 2 + s));
            j.bloom[s].bf = BloomFilter(cat.entries[a.tbl].table->rows.size(), seed);
            if (std::find(join_attrs_.begin(), join_attrs_.end(), a) == join_attrs_.end())
                join_attrs_.push_back(a);
        }
    }

    const PlanNode* root = qp_.root.get();
    if (root->kind == PlanNode::Kind::Project) {
        for (const auto& a : root->attrs) proj_attrs_.push_back(cat.resolve(a));
    } else if (root->kind == PlanNode::Kind::Aggregate) {
        proj_attrs_.push_back(cat.resolve(root->agg->attr));
        if (root->group_by) proj_attrs_.push_back(cat.resolve(*root->group_by));
    }
    for (const RSel& s : qp_.selections)
        if (std::find(sel_attrs_.begin(), sel_attrs_.end(), s.attr) == sel_attrs_.end())
            sel_attrs_.push_back(s.attr);

    threshold_greater = root->kind == PlanNode::Kind::Aggregate && root->agg &&
                        root->agg->fn == AggFn::Max;
}

bool Engine::attr_has_selection(AttrId a) const {
    return std::find(sel_attrs_.begin(), sel_attrs_.end(), a) != sel_attrs_.end();
}

bool Engine::attr_is_join(AttrId a) const {
    return std::find(join_attrs_.begin(), join_attrs_.end(), a) != join_attrs_.end();
}

const BloomState* Engine::bloom_if_tracked(AttrId a) const {
    for (const auto& j : joins_)
        for (int s = 0; s < 2; ++s)
            if (j.attr[s] == a) return &j.bloom[s];
    return nullptr;
}

void Engine::trace(int op_id, const std::string& event, const std::string& detail) {
    if (!opt_.trace) return;
    std::ostringstream os;
    os << "op#" << op_id << " " << event;
    if (!detail.empty()) os << " " << detail;
    trace_.push_back(os.str());
}

// --- liveness ---------------------------------------------------------------

void Engine::acquire_cells(const ExecTuple& t) {
    const Catalog& cat = qp_.catalog;
    for (size_t s = 0; s < cat.entries.size(); ++s) {
        if (!((t.active >> s) & 1) || ((t.padded >> s) & 1)) continue;
        int row = t.rows[s];
        if (row < 0) continue;
        int w = static_cast<int>(cat.entries[s].table->schema.cols.size());
        for (int c = 0; c < w; ++c) {
            if (!t.miss[cat.entries[s].offset + c]) continue;
            auto it = cells_.find(cell_key({static_cast<int>(s), c}, row));
            if (it != cells_.end() && it->second.state == Cell::State::Missing)
                ++it->second.refs;
        }
    }
}

void Engine::release_cells(const ExecTuple& t) {
    const Catalog& cat = qp_.catalog;
    bool changed = false;
    for (size_t s = 0; s < cat.entries.size(); ++s) {
        if (!((t.active >> s) & 1) || ((t.padded >> s) & 1)) continue;
        int row = t.rows[s];
        if (row < 0) continue;
        int w = static_cast<int>(cat.entries[s].table->schema.cols.size());
        for (int c = 0; c < w; ++c) {
            if (!t.miss[cat.entries[s].offset + c]) continue;
            auto it = cells_.find(cell_key({static_cast<int>(s), c}, row));
            if (it == cells_.end() || it->second.state != Cell::State::Missing) continue;
            if (--it->second.refs == 0) {
                it->second.state = Cell::State::Dead;
                --counters_[s][c];
                changed = true;
            }
        }
    }
    if (changed) pump();
}

void Engine::release_padding(const ExecTuple& t) {
    bool changed = false;
    for (uint32_t bits = t.padded_left | t.padded_right; bits;) {
        uint32_t b = low_bit(bits);
        bits &= ~b;
        JoinRt& j = joins_[bit_index(b)];
        --j.live_padded;
        if (!(t.inserted & b)) --j.pending_insert[(t.padded_left & b) ? 0 : 1];
        changed = true;
    }
    if (changed) pump();
}

void Engine::clear_padding_bit(ExecTuple& t, int ordinal) {
    uint32_t b = 1u << ordinal;
    if ((t.padded_left | t.padded_right) & b) {
        JoinRt& j = joins_[ordinal];
        --j.live_padded;
        if (!(t.inserted & b)) --j.pending_insert[(t.padded_left & b) ? 0 : 1];
        t.padded_left &= ~b;
        t.padded_right &= ~b;
        pump();
    }
}

void Engine::mark_inserted(ExecTuple& t, int ordinal, int side) {
    uint32_t b = 1u << ordinal;
    if (t.inserted & b) return;
    t.inserted |= b;
    --joins_[ordinal].pending_insert[side];
}

void Engine::acquire(const ExecTuple& t) {
    acquire_cells(t);
    for (uint32_t bits = t.padded_left | t.padded_right; bits;) {
        uint32_t b = low_bit(bits);
        bits &= ~b;
        JoinRt& j = joins_[bit_index(b)];
        ++j.live_padded;
        if (!(t.inserted & b)) ++j.pending_insert[(t.padded_left & b) ? 0 : 1];
    }
}

void Engine::release(const ExecTuple& t) {
    release_cells(t);
    release_padding(t);
}

void Engine::drop(const ExecTuple& t, int op_id, const char* reason) {
    trace(op_id, "drop", reason);
    release(t);
}

// --- imputation ---------------------------------------------------------------

Engine::ImputeResult Engine::impute_into(ExecTuple& t, AttrId attr, int op_id) {
    int flat = qp_.catalog.flat(attr);
    int row = t.rows[attr.tbl];
    if (row < 0) throw Error("exec", "imputing into a padded slot");
    auto it = cells_.find(cell_key(attr, row));
    if (it == cells_.end()) throw Error("exec", "no cell ledger entry");
    Cell& cell = it->second;
    if (cell.state == Cell::State::Dead)
        throw Error("exec", "imputing a dead cell of " + attr_name(attr));
    bool fresh = cell.state == Cell::State::Missing;
    if (fresh) {
        const auto& entry = qp_.catalog.entries[attr.tbl];
        Value v = imputer_.impute(db_, entry.table_idx, row, attr.col);
        if (v.is_null()) throw Error("impute", "imputer returned NULL for " + attr_name(attr));
        cell.state = Cell::State::Imputed;
        cell.imputed = std::move(v);
        std::string an = attr_name(attr);
        ++metrics_.imputations[an];
        ++metrics_.total_imputations;
        metrics_.imputation_charge_ms += imputer_.charge_ms();
        stats_.on_imputed(an, imputer_.charge_ms());
        --counters_[attr.tbl][attr.col];
        trace(op_id, "impute", an + "=" + render_value(cell.imputed));
    }
    t.vals[flat] = cell.imputed;
    t.miss[flat] = 0;

    const VFEntry& vf = qp_.vf_of(op_id);
    for (const RSel& s : vf.verify_sel) {
        if (!(s.attr == attr)) continue;
        if (!eval_cmp(cell.imputed, s.op, s.lits)) {
            trace(op_id, "verify-fail", attr_name(attr));
            if (fresh) pump();
            return {false, false};
        }
    }
    bool tele = false;
    for (uint32_t bits = t.padded_left | t.padded_right; bits;) {
        uint32_t b = low_bit(bits);
        bits &= ~b;
        const JoinRt& j = joins_[bit_index(b)];
        int side = (t.padded_left & b) ? 0 : 1;
        if (j.attr[side] == attr) tele = true;
    }
    if (fresh) pump();
    return {true, tele && op_id != qp_.rho_id};
}

// --- VF filter ----------------------------------------------------------------

bool Engine::filter_test(const ExecTuple& t, int op_id) {
    if (opt_.strategy == Strategy::Eager) return true;
    const VFEntry& vf = qp_.vf_of(op_id);
    for (const RSel& s : vf.filter_sel) {
        if (!is_active_slot(t, s.attr) || is_padded_slot(t, s.attr) || is_missing(t, s.attr))
            continue;
        const Value& v = at(t, s.attr);
        if (v.is_null() || !eval_cmp(v, s.op, s.lits)) return false;
    }
    if (opt_.bloom_checks) {
        for (const auto& fj : vf.filter_join) {
            const JoinRt& j = joins_[fj.pred.ordinal];
            int other_side = j.attr[1] == fj.other ? 1 : 0;
            const BloomState& ob = j.bloom[other_side];
            if (!ob.is_complete()) continue;  // predicate still inactive
            if (!is_active_slot(t, fj.local) || is_padded_slot(t, fj.local) ||
                is_missing(t, fj.local))
                continue;
            const Value& v = at(t, fj.local);
            if (v.is_null()) return false;
            if (!ob.bf.contains(v)) return false;  // no false negatives, so safe
        }
    }
    return true;
}

// --- decision function ----------------------------------------------------------

DecisionTree Engine::decision_tree(AttrId attr, int op_id, const ExecTuple& t) const {
    DecisionTree out;
    const DecisionConfig& cfg = opt_.decision;
    const PlanNode* n = nodes_.at(op_id);
    bool first = true;
    while (n && n->kind != PlanNode::Kind::Rho && n->kind != PlanNode::Kind::Project &&
           n->kind != PlanNode::Kind::Aggregate) {
        if (n->kind == PlanNode::Kind::Select || n->kind == PlanNode::Kind::Join) {
            DecisionOp op;
            op.is_join = n->kind == PlanNode::Kind::Join;
            AttrId eval_attr;
            if (!op.is_join) {
                eval_attr = qp_.catalog.resolve(n->sel.attr);
            } else {
                const RJoin* j = qp_.join_of_op(n->id);
                // the side the tuple will arrive on
                if (is_active_slot(t, j->left)) eval_attr = j->left;
                else if (is_active_slot(t, j->right)) eval_attr = j->right;
            }
            if (first) {
                op.missing = true;
                eval_attr = attr;
            } else {
                op.missing = eval_attr.valid() && is_active_slot(t, eval_attr) &&
                             !is_padded_slot(t, eval_attr) && is_missing(t, eval_attr);
            }
            op.sel = stats_.selectivity(n->id, cfg);
            op.impute_cost = eval_attr.valid()
                                 ? stats_.impute_cost(attr_name(eval_attr)) *
                                       cfg.impute_cost_multiplier
                                 : 0.0;
            op.tests = op.is_join ? stats_.tests_per_tuple(n->id) : 1.0;
            op.ttjoin = op.is_join ? cfg.join_test_cost_ms : 0.0;
            out.ops.push_back(op);
            first = false;
        }
        n = parent_of(n->id);
    }
    return out;
}

Choice Engine::decide(AttrId attr, int op_id, const ExecTuple& t) {
    if (opt_.strategy == Strategy::Eager) return Choice::Impute;
    if (obligated(attr, qp_, proj_attrs_)) {
        trace(op_id, "decide", "impute obligated " + attr_name(attr));
        return Choice::Impute;
    }
    if (opt_.strategy == Strategy::Lazy) return Choice::Delay;
    if (stats_.impute_samples(attr_name(attr)) < opt_.decision.attr_bootstrap)
        return Choice::Delay;  // bootstrap: collect samples first
    Choice c = decide_adaptive(decision_tree(attr, op_id, t));
    trace(op_id, "decide", (c == Choice::Impute ? "impute " : "delay ") + attr_name(attr));
    return c;
}

// --- join structures -------------------------------------------------------------

ExecTuple Engine::restrict_to_side(const ExecTuple& t, const JoinRt& j, int side) const {
    ExecTuple r = t;
    uint32_t slots = j.side_slots[side];
    r.active &= slots;
    r.padded &= slots;
    for (size_t s = 0; s < r.rows.size(); ++s)
        if (!((slots >> s) & 1)) r.rows[s] = -1;
    uint32_t jm = j.side_join_mask[side];
    r.padded_left &= jm;
    r.padded_right &= jm;
    r.inserted &= jm;
    return r;
}

namespace {

void count_carried(Engine::JoinRt& host, const ExecTuple& copy, long delta) {
    for (uint32_t bits = copy.padded_left | copy.padded_right; bits;) {
        uint32_t b = low_bit(bits);
        bits &= ~b;
        int ord = bit_index(b);
        host.carried_any[ord] += delta;
        if (!(copy.inserted & b))
            host.carried_pending[(copy.padded_left & b) ? 0 : 1][ord] += delta;
    }
}

}  // namespace

void Engine::stream_insert(JoinRt& j, int side, const ExecTuple& t, const Value& v) {
    j.bloom[side].bf.insert(v);
    Tid bt = make_tid(j.attr[side].tbl, t.rows[j.attr[side].tbl]);
    j.aindex[side].insert(v, bt);
    if (j.retain[side]) {
        IndexEntry e{restrict_to_side(t, j, side), false, bt};
        acquire_cells(e.tuple);
        count_carried(j, e.tuple, +1);
        j.side[side][v].push_back(std::move(e));
    }
}

void Engine::late_insert(JoinRt& j, int side, const ExecTuple& t, const Value& v) {
    j.bloom[side].bf.insert(v);
    Tid bt = make_tid(j.attr[side].tbl, t.rows[j.attr[side].tbl]);
    j.aindex[side].insert(v, bt);
    IndexEntry e{restrict_to_side(t, j, side), true, bt};
    acquire_cells(e.tuple);
    count_carried(j, e.tuple, +1);
    j.side[side][v].push_back(std::move(e));
    trace(j.op_id, "late-insert", attr_name(j.attr[side]) + "=" + render_value(v));
}

// --- events ----------------------------------------------------------------------

void Engine::on_stream_done(int join_ordinal, int side) {
    joins_[join_ordinal].stream_done[side] = true;
    pump();
}

Engine::Gates Engine::compute_gates() const {
    Gates g;
    // matchable: the join can still be probed, either by a live deferred
    // party or by a party revived out of a copy sitting in a matchable host
    g.matchable.assign(joins_.size(), false);
    for (size_t i = 0; i < joins_.size(); ++i)
        g.matchable[i] = !joins_[i].retired && joins_[i].live_padded > 0;
    bool grew = true;
    while (grew) {
        grew = false;
        for (size_t h = 0; h < joins_.size(); ++h) {
            if (joins_[h].retired) continue;
            for (size_t host = 0; host < joins_.size() && !g.matchable[h]; ++host) {
                if (!g.matchable[host] || joins_[host].retired) continue;
                if (joins_[host].carried_any[h] > 0) {
                    g.matchable[h] = true;
                    grew = true;
                }
            }
        }
    }
    g.rp.assign(joins_.size(), {false, false});
    for (size_t j = 0; j < joins_.size(); ++j)
        for (int s = 0; s < 2; ++s)
            for (size_t host = 0; host < joins_.size(); ++host)
                if (!joins_[host].retired && g.matchable[host] &&
                    joins_[host].carried_pending[s][j] > 0)
                    g.rp[j][s] = true;
    return g;
}

bool Engine::can_fire(const JoinRt& j, int side, const Gates& g) const {
    // complete once nothing can add a value on this side: streaming ended,
    // no missing cells of the attribute remain, every live party already
    // published its value, and no unpublished copy can be revived
    if (j.bloom[side].complete) return false;
    if (!j.stream_done[side]) return false;
    if (missing_count(j.attr[side]) != 0) return false;
    if (j.pending_insert[side] != 0) return false;
    if (g.rev_pending(j.ordinal, side)) return false;
    return true;
}

void Engine::try_retire(JoinRt& j) {
    j.retired = true;
    trace(j.op_id, "retire", "");
    for (int side = 0; side < 2; ++side) {
        for (auto& [v, entries] : j.side[side])
            for (auto& e : entries) release_cells(e.tuple);
        j.side[side].clear();
    }
    j.carried_any.assign(joins_.size(), 0);
    j.carried_pending[0].assign(joins_.size(), 0);
    j.carried_pending[1].assign(joins_.size(), 0);
}

void Engine::pump() {
    if (pumping_) return;
    pumping_ = true;
    bool changed = true;
    while (changed) {
        changed = false;
        Gates gates = compute_gates();
        for (auto& j : joins_) {
            if (!j.retired && j.stream_done[0] && j.stream_done[1] &&
                j.temp.ready[0].empty() && j.temp.ready[1].empty() &&
                !gates.matchable[j.ordinal]) {
                try_retire(j);
                changed = true;
                break;  // counters moved: recompute gates
            }
            for (int side = 0; side < 2; ++side) {
                if (!can_fire(j, side, gates)) continue;
                j.bloom[side].mark_complete(missing_count(j.attr[side]));
                trace(j.op_id, "bfc", attr_name(j.attr[side]));
                // wake every parked tuple: the fresh filter may unblock
                // resolutions parked on other joins too
                for (auto& other : joins_) {
                    for (int s = 0; s < 2; ++s) {
                        auto& rl = other.temp.ready_of(s);
                        for (auto& t : rl) resolution_queue.push_back(std::move(t));
                        if (!rl.empty()) other.temp.drained[s] = true;
                        rl.clear();
                    }
                }
                changed = true;
            }
            if (changed) break;
        }
    }
    pumping_ = false;
}

void Engine::assert_drained() const {
    for (const auto& j : joins_) {
        if (!j.temp.ready[0].empty() || !j.temp.ready[1].empty())
            throw Error("exec", "tuples stuck in ready lists of join op#" +
                                    std::to_string(j.op_id));
        if (j.live_padded != 0)
            throw Error("exec", "unresolved deferred tuples at join op#" +
                                    std::to_string(j.op_id));
    }
    if (!resolution_queue.empty()) throw Error("exec", "resolution queue not drained");
}

// --- operators --------------------------------------------------------------------

namespace {

class ScanOp : public Operator {
public:
    ScanOp(Engine& eng, const PlanNode& node) : Operator(eng, node) {
        slot_ = eng.catalog().entry_of(node.alias);
        table_ = eng.catalog().entries[slot_].table;
    }
    void open() override { idx_ = 0; }
    std::optional<ExecTuple> next() override {
        if (idx_ >= table_->rows.size()) return std::nullopt;
        const BaseTuple& row = table_->rows[idx_];
        const Catalog& cat = eng_.catalog();
        ExecTuple t;
        t.vals.resize(cat.width);
        t.miss.assign(cat.width, 0);
        t.rows.assign(cat.entries.size(), -1);
        int off = cat.entries[slot_].offset;
        for (size_t c = 0; c < row.vals.size(); ++c) {
            t.vals[off + static_cast<int>(c)] = row.vals[c];
            t.miss[off + static_cast<int>(c)] = row.miss[c];
        }
        t.active = 1u << slot_;
        t.rows[slot_] = static_cast<int32_t>(idx_);
        ++idx_;
        eng_.count_emit(id());
        return t;
    }

private:
    int slot_ = 0;
    const Table* table_ = nullptr;
    size_t idx_ = 0;
};

class SelectOp : public Operator {
public:
    SelectOp(Engine& eng, const PlanNode& node, std::unique_ptr<Operator> child)
        : Operator(eng, node), child_(std::move(child)) {
        attr_ = eng.catalog().resolve(node.sel.attr);
    }
    void open() override { child_->open(); }
    std::optional<ExecTuple> next() override {
        while (auto t = child_->next()) {
            if (!eng_.filter_test(*t, id())) {
                eng_.drop(*t, id(), "filter");
                continue;
            }
            if (eng_.is_padded_slot(*t, attr_)) {  // deferred attribute: pass
                eng_.count_emit(id());
                return t;
            }
            if (eng_.is_missing(*t, attr_)) {
                if (eng_.decide(attr_, id(), *t) == Choice::Delay) {
                    eng_.count_emit(id());
                    return t;
                }
                auto r = eng_.impute_into(*t, attr_, id());
                if (!r.verified) {
                    eng_.drop(*t, id(), "verify");
                    continue;
                }
                if (r.teleport) {  // deferred join woke up: resolve at rho
                    eng_.resolution_queue.push_back(std::move(*t));
                    continue;
                }
                if (eval_cmp(eng_.at(*t, attr_), node_.sel.op, node_.sel.lits)) {
                    eng_.count_emit(id());
                    return t;
                }
                eng_.drop(*t, id(), "pred");
                continue;
            }
            const Value& v = eng_.at(*t, attr_);
            if (v.is_null()) {
                eng_.drop(*t, id(), "null");
                continue;
            }
            bool pass = eval_cmp(v, node_.sel.op, node_.sel.lits);
            eng_.stats().on_op_evaluated(id(), pass);
            if (!pass) {
                eng_.drop(*t, id(), "pred");
                continue;
            }
            eng_.count_emit(id());
            return t;
        }
        return std::nullopt;
    }

private:
    std::unique_ptr<Operator> child_;
    AttrId attr_;
};

class ThresholdOp : public Operator {
public:
    ThresholdOp(Engine& eng, const PlanNode& node, std::unique_ptr<Operator> child)
        : Operator(eng, node), child_(std::move(child)) {
        attr_ = eng.catalog().resolve(node.thr_attr);
    }
    void open() override { child_->open(); }
    std::optional<ExecTuple> next() override {
        while (auto t = child_->next()) {
            if (eng_.threshold && eng_.is_active_slot(*t, attr_) &&
                !eng_.is_padded_slot(*t, attr_) && !eng_.is_missing(*t, attr_)) {
                const Value& v = eng_.at(*t, attr_);
                if (!v.is_null()) {
                    auto c = compare_values(v, *eng_.threshold);
                    bool improves = c && (node_.thr_greater ? *c > 0 : *c < 0);
                    if (!improves) {
                        eng_.drop(*t, id(), "threshold");
                        continue;
                    }
                }
            }
            eng_.count_emit(id());
            return t;
        }
        return std::nullopt;
    }

private:
    std::unique_ptr<Operator> child_;
    AttrId attr_;
};

class JoinOp : public Operator {
public:
    JoinOp(Engine& eng, const PlanNode& node, std::unique_ptr<Operator> left,
           std::unique_ptr<Operator> right)
        : Operator(eng, node),
          left_(std::move(left)),
          right_(std::move(right)),
          rt_(eng.join_rt(eng.plan().join_of_op(node.id)->ordinal)) {}

    void open() override {
        left_->open();
        right_->open();
        build();
    }

    std::optional<ExecTuple> next() override {
        while (true) {
            if (!pending_.empty()) {
                ExecTuple t = std::move(pending_.front());
                pending_.pop_front();
                eng_.count_emit(id());
                return t;
            }
            auto t = left_->next();
            if (!t) {
                if (!probe_done_) {
                    probe_done_ = true;
                    eng_.on_stream_done(rt_.ordinal, 0);
                }
                if (!pending_.empty()) continue;
                return std::nullopt;
            }
            if (!eng_.filter_test(*t, id())) {
                eng_.drop(*t, id(), "filter");
                continue;
            }
            AttrId a = rt_.attr[0];
            if (eng_.is_padded_slot(*t, a)) {  // attribute deferred deeper down
                pending_.push_back(make_padded(std::move(*t), 0));
                continue;
            }
            bool was_missing = false;
            if (eng_.is_missing(*t, a)) {
                was_missing = true;
                if (eng_.decide(a, id(), *t) == Choice::Delay) {
                    if (rt_.temp.flag == TempLists<ExecTuple>::Side::L)
                        rt_.temp.l_temp.push_back(make_tid(a.tbl, t->rows[a.tbl]));
                    ++rt_.padded_missing_seen[0];
                    pending_.push_back(make_padded(std::move(*t), 0));
                    continue;
                }
                auto r = eng_.impute_into(*t, a, id());
                if (!r.verified) {
                    eng_.drop(*t, id(), "verify");
                    continue;
                }
                if (r.teleport) {
                    eng_.resolution_queue.push_back(std::move(*t));
                    continue;
                }
            }
            const Value& v = eng_.at(*t, a);
            if (v.is_null()) {
                eng_.drop(*t, id(), "null-join-attr");
                continue;
            }
            // probe the hash table built at open(); values imputed later feed
            // the bloom filter and the triggered join, never the live probe
            auto it = rt_.side[1].find(v);
            long n = 0;
            if (it != rt_.side[1].end())
                for (const auto& e : it->second)
                    if (!e.late) ++n;
            if (!was_missing) {
                eng_.stats().on_join_tested(id(), n);
                eng_.stats().on_op_evaluated(id(), n > 0);
            }
            eng_.stream_insert(rt_, 0, *t, v);
            if (n == 0) {
                eng_.drop(*t, id(), "no-match");
                continue;
            }
            for (const auto& e : it->second) {
                if (e.late) continue;
                ExecTuple out = eng_.merge_tuples(*t, e.tuple, -1);
                eng_.acquire(out);
                pending_.push_back(std::move(out));
            }
            eng_.release(*t);
        }
    }

private:
    void build() {
        // smaller missing side is remembered for duplicate suppression
        int ml = eng_.missing_count(rt_.attr[0]);
        int mr = eng_.missing_count(rt_.attr[1]);
        rt_.temp.flag =
            ml <= mr ? TempLists<ExecTuple>::Side::L : TempLists<ExecTuple>::Side::R;

        while (auto t = right_->next()) {
            if (!eng_.filter_test(*t, id())) {
                eng_.drop(*t, id(), "filter");
                continue;
            }
            AttrId a = rt_.attr[1];
            if (eng_.is_padded_slot(*t, a)) {
                pending_.push_back(make_padded(std::move(*t), 1));
                continue;
            }
            if (eng_.is_missing(*t, a)) {
                if (eng_.decide(a, id(), *t) == Choice::Delay) {
                    if (rt_.temp.flag == TempLists<ExecTuple>::Side::R)
                        rt_.temp.l_temp.push_back(make_tid(a.tbl, t->rows[a.tbl]));
                    ++rt_.padded_missing_seen[1];
                    pending_.push_back(make_padded(std::move(*t), 1));
                    continue;
                }
                auto r = eng_.impute_into(*t, a, id());
                if (!r.verified) {
                    eng_.drop(*t, id(), "verify");
                    continue;
                }
                if (r.teleport) {
                    eng_.resolution_queue.push_back(std::move(*t));
                    continue;
                }
            }
            const Value& v = eng_.at(*t, a);
            if (v.is_null()) {
                eng_.drop(*t, id(), "null-join-attr");
                continue;
            }
            eng_.stream_insert(rt_, 1, *t, v);  // the stored copy is the live holder now
            eng_.release(*t);
        }
        // probe-side composites are retained only when a deferred build party
        // may later look them up
        rt_.retain[0] = padded_party_[1] > 0;
        eng_.on_stream_done(rt_.ordinal, 1);
    }

    ExecTuple make_padded(ExecTuple t, int side) {
        uint32_t other = rt_.side_slots[1 - side];
        t.active |= other;
        t.padded |= other;
        if (side == 0) t.padded_left |= 1u << rt_.ordinal;
        else t.padded_right |= 1u << rt_.ordinal;
        ++rt_.live_padded;
        ++rt_.pending_insert[side];
        ++padded_party_[side];
        eng_.trace(id(), "pad", side == 0 ? "left" : "right");
        return t;
    }

    std::unique_ptr<Operator> left_, right_;
    Engine::JoinRt& rt_;
    std::deque<ExecTuple> pending_;
    bool probe_done_ = false;
    long padded_party_[2] = {0, 0};
};

}  // namespace

ExecTuple Engine::merge_tuples(const ExecTuple& u, const ExecTuple& m,
                               int clear_ordinal) const {
    const Catalog& cat = qp_.catalog;
    ExecTuple out = u;
    uint32_t real_m = m.active & ~m.padded;
    for (size_t s = 0; s < cat.entries.size(); ++s) {
        if (!((real_m >> s) & 1)) continue;
        int off = cat.entries[s].offset;
        int w = static_cast<int>(cat.entries[s].table->schema.cols.size());
        for (int c = 0; c < w; ++c) {
            out.vals[off + c] = m.vals[off + c];
            out.miss[off + c] = m.miss[off + c];
        }
        out.rows[s] = m.rows[s];
    }
    uint32_t real_u = u.active & ~u.padded;
    out.active = u.active | m.active;
    out.padded = out.active & ~(real_u | real_m);
    uint32_t keep = clear_ordinal >= 0 ? ~(1u << clear_ordinal) : ~0u;
    out.padded_left = (u.padded_left | m.padded_left) & keep;
    out.padded_right = (u.padded_right | m.padded_right) & keep;
    out.inserted = u.inserted | m.inserted;
    return out;
}

// Deferred-join resolution (the triggered join). Consumes u; returns the
// merged outputs, already acquired.
std::vector<ExecTuple> Engine::bf_join_resolve(ExecTuple u, int ordinal, int side) {
    JoinRt& j = joins_[ordinal];
    AttrId own = j.attr[side];
    const Value v = at(u, own);
    std::vector<ExecTuple> outs;
    BloomState& ob = j.bloom[1 - side];
    if (opt_.bloom_checks && !ob.bf.contains(v)) {
        drop(u, j.op_id, "bf-negative");
        return outs;
    }
    bool is_flag_side = (side == 0) == (j.temp.flag == TempLists<ExecTuple>::Side::L);
    auto it = j.side[1 - side].find(v);
    if (it != j.side[1 - side].end()) {
        for (const auto& e : it->second) {
            if (!is_flag_side && e.late) continue;  // duplicate suppression
            ExecTuple out = merge_tuples(u, e.tuple, ordinal);
            acquire(out);
            outs.push_back(std::move(out));
        }
    }
    trace(j.op_id, "bf_join",
          render_value(v) + " -> " + std::to_string(outs.size()) + " match(es)");
    release(u);
    return outs;
}

class RhoOp : public Operator {
public:
    RhoOp(Engine& eng, const PlanNode& node, std::unique_ptr<Operator> child)
        : Operator(eng, node), child_(std::move(child)) {}

    void open() override { child_->open(); }

    std::optional<ExecTuple> next() override {
        while (true) {
            if (!out_.empty()) {
                ExecTuple t = std::move(out_.front());
                out_.pop_front();
                eng_.count_emit(id());
                return t;
            }
            if (!eng_.resolution_queue.empty()) {
                ExecTuple t = std::move(eng_.resolution_queue.front());
                eng_.resolution_queue.pop_front();
                process(std::move(t));
                continue;
            }
            if (!child_done_) {
                auto t = child_->next();
                if (t) {
                    process(std::move(*t));
                    continue;
                }
                child_done_ = true;
                eng_.pump();
                continue;
            }
            eng_.pump();
            if (!eng_.resolution_queue.empty() || !out_.empty()) continue;
            eng_.assert_drained();
            return std::nullopt;
        }
    }

private:
    // imputes all missing predicate attributes (selection attributes first),
    // publishes freshly concrete deferred-join values, resolves deferred
    // joins deepest-first, then re-verifies every predicate before emitting
    void process(ExecTuple first) {
        std::vector<ExecTuple> work;
        work.push_back(std::move(first));
        while (!work.empty()) {
            ExecTuple u = std::move(work.back());
            work.pop_back();

            bool dead = false;
            for (int phase = 0; phase < 2 && !dead; ++phase) {
                const Catalog& cat = eng_.catalog();
                for (size_t s = 0; s < cat.entries.size() && !dead; ++s) {
                    if (!((u.active >> s) & 1) || ((u.padded >> s) & 1)) continue;
                    int w = static_cast<int>(cat.entries[s].table->schema.cols.size());
                    for (int c = 0; c < w && !dead; ++c) {
                        if (!u.miss[cat.entries[s].offset + c]) continue;
                        AttrId a{static_cast<int>(s), c};
                        bool is_sel = eng_.attr_has_selection(a);
                        bool is_join = eng_.attr_is_join(a);
                        if (!is_sel && !is_join) continue;  // projection handles the rest
                        if ((phase == 0) != is_sel) continue;
                        auto r = eng_.impute_into(u, a, id());
                        if (!r.verified) {
                            eng_.drop(u, id(), "verify");
                            dead = true;
                        }
                    }
                }
            }
            if (dead) continue;

            // publish concrete values of still-deferred joins
            for (uint32_t bits = u.padded_left | u.padded_right; bits;) {
                uint32_t b = low_bit(bits);
                bits &= ~b;
                int ord = bit_index(b);
                if (u.inserted & b) continue;
                Engine::JoinRt& j = eng_.join_rt(ord);
                int side = (u.padded_left & b) ? 0 : 1;
                AttrId own = j.attr[side];
                if (!eng_.is_active_slot(u, own) || eng_.is_padded_slot(u, own) ||
                    eng_.is_missing(u, own))
                    continue;
                const Value& v = eng_.at(u, own);
                if (v.is_null()) continue;
                eng_.late_insert(j, side, u, v);
                eng_.mark_inserted(u, ord, side);
            }

            // a deferred join whose opposite side has been filled in through
            // another join reduces to a plain predicate check
            bool died = false;
            for (uint32_t bits = u.padded_left | u.padded_right; bits && !died;) {
                uint32_t b = low_bit(bits);
                bits &= ~b;
                int ord = bit_index(b);
                Engine::JoinRt& j = eng_.join_rt(ord);
                auto usable = [&](AttrId a) {
                    return eng_.is_active_slot(u, a) && !eng_.is_padded_slot(u, a) &&
                           !eng_.is_missing(u, a);
                };
                if (!usable(j.attr[0]) || !usable(j.attr[1])) continue;
                const Value& l = eng_.at(u, j.attr[0]);
                const Value& r = eng_.at(u, j.attr[1]);
                if (l.is_null() || r.is_null() || !(l == r)) {
                    eng_.drop(u, id(), "join-pred");
                    died = true;
                    break;
                }
                eng_.clear_padding_bit(u, ord);
            }
            if (died) continue;

            if (u.has_deferred()) {
                // prefer the deepest join that can resolve right now; park on
                // the deepest candidate otherwise
                int best_ord = -1, best_side = 0, best_depth = -1;
                int ready_ord = -1, ready_side = 0, ready_depth = -1;
                bool null_attr = false;
                for (uint32_t bits = u.padded_left | u.padded_right; bits;) {
                    uint32_t b = low_bit(bits);
                    bits &= ~b;
                    int ord = bit_index(b);
                    Engine::JoinRt& j = eng_.join_rt(ord);
                    int side = -1;
                    for (int s = 0; s < 2; ++s) {
                        AttrId own = j.attr[s];
                        if (eng_.is_active_slot(u, own) && !eng_.is_padded_slot(u, own) &&
                            !eng_.is_missing(u, own))
                            side = s;
                    }
                    if (side < 0) continue;  // a deeper join must fill the slot first
                    if (eng_.at(u, j.attr[side]).is_null()) {
                        null_attr = true;  // plain NULL can never join
                        break;
                    }
                    if (j.depth > best_depth) {
                        best_depth = j.depth;
                        best_ord = ord;
                        best_side = side;
                    }
                    if (j.bloom[1 - side].is_complete() && j.depth > ready_depth) {
                        ready_depth = j.depth;
                        ready_ord = ord;
                        ready_side = side;
                    }
                }
                if (null_attr) {
                    eng_.drop(u, id(), "null-join-attr");
                    continue;
                }
                if (ready_ord >= 0) {
                    auto outs = eng_.bf_join_resolve(std::move(u), ready_ord, ready_side);
                    for (auto& o : outs) work.push_back(std::move(o));
                    continue;
                }
                if (best_ord < 0)
                    throw Error("exec", "deferred join with no resolvable attribute");
                Engine::JoinRt& j = eng_.join_rt(best_ord);
                eng_.trace(j.op_id, "park", best_side == 0 ? "left" : "right");
                j.temp.ready_of(best_side).push_back(std::move(u));
                continue;
            }

            if (!final_verify(u)) {
                eng_.drop(u, id(), "reverify");
                continue;
            }
            out_.push_back(std::move(u));
        }
    }

    bool final_verify(const ExecTuple& u) const {
        const QuipPlan& qp = eng_.plan();
        for (const RSel& s : qp.selections) {
            const Value& v = eng_.at(u, s.attr);
            if (eng_.is_missing(u, s.attr))
                throw Error("exec", "missing predicate attribute survived rho");
            if (v.is_null() || !eval_cmp(v, s.op, s.lits)) return false;
        }
        for (const RJoin& j : qp.joins) {
            const Value& l = eng_.at(u, j.left);
            const Value& r = eng_.at(u, j.right);
            if (l.is_null() || r.is_null()) return false;
            if (!(l == r)) return false;
        }
        return true;
    }

    std::unique_ptr<Operator> child_;
    std::deque<ExecTuple> out_;
    bool child_done_ = false;
};

// --- pipeline assembly ------------------------------------------------------------

std::unique_ptr<Operator> Engine::build_operator(const PlanNode& node) {
    switch (node.kind) {
        case PlanNode::Kind::Scan: return std::make_unique<ScanOp>(*this, node);
        case PlanNode::Kind::Select:
            return std::make_unique<SelectOp>(*this, node, build_operator(*node.child()));
        case PlanNode::Kind::ThresholdSelect:
            return std::make_unique<ThresholdOp>(*this, node, build_operator(*node.child()));
        case PlanNode::Kind::Join:
            return std::make_unique<JoinOp>(*this, node, build_operator(*node.child(0)),
                                            build_operator(*node.child(1)));
        case PlanNode::Kind::Rho:
            return std::make_unique<RhoOp>(*this, node, build_operator(*node.child()));
        default: throw Error("exec", "unexpected node below the root region");
    }
}

std::vector<std::vector<Value>> Engine::run_project(const PlanNode& proj, Operator& child) {
    std::vector<AttrId> attrs;
    for (const auto& a : proj.attrs) attrs.push_back(qp_.catalog.resolve(a));
    std::vector<std::vector<Value>> rows;
    while (auto t = child.next()) {
        if (!filter_test(*t, proj.id)) {
            drop(*t, proj.id, "filter");
            continue;
        }
        bool dead = false;
        for (AttrId a : attrs) {
            if (!is_missing(*t, a)) continue;
            auto r = impute_into(*t, a, proj.id);  // forced for projected attributes
            if (!r.verified) {
                drop(*t, proj.id, "verify");
                dead = true;
                break;
            }
        }
        if (dead) continue;
        std::vector<Value> row;
        for (AttrId a : attrs) {
            if (!is_active_slot(*t, a) || is_padded_slot(*t, a))
                throw Error("exec", "projected attribute not resolved");
            row.push_back(at(*t, a));
        }
        count_emit(proj.id);
        rows.push_back(std::move(row));
        release(*t);
    }
    return rows;
}

std::vector<std::vector<Value>> Engine::run_aggregate(const PlanNode& agg, Operator& child) {
    AttrId agg_attr = qp_.catalog.resolve(agg.agg->attr);
    std::optional<AttrId> group_attr;
    if (agg.group_by) group_attr = qp_.catalog.resolve(*agg.group_by);
    AggFn fn = agg.agg->fn;

    struct Acc {
        long count = 0;
        double sum = 0;
        long n = 0;
        std::optional<Value> best;
    };
    std::map<Value, Acc, bool (*)(const Value&, const Value&)> groups(value_less);

    while (auto t = child.next()) {
        if (!filter_test(*t, agg.id)) {
            drop(*t, agg.id, "filter");
            continue;
        }
        bool dead = false;
        if (group_attr && is_missing(*t, *group_attr)) {
            auto r = impute_into(*t, *group_attr, agg.id);
            if (!r.verified) {
                drop(*t, agg.id, "verify");
                dead = true;
            }
        }
        if (!dead && fn != AggFn::Count && is_missing(*t, agg_attr)) {
            auto r = impute_into(*t, agg_attr, agg.id);
            if (!r.verified) {
                drop(*t, agg.id, "verify");
                dead = true;
            }
        }
        if (dead) continue;
        Value g = group_attr ? at(*t, *group_attr) : Value::null();
        Acc& acc = groups[g];
        acc.count += 1;
        const Value& v = at(*t, agg_attr);
        if (fn != AggFn::Count && !v.is_null()) {
            if (fn == AggFn::Sum || fn == AggFn::Avg) {
                acc.sum += v.numeric();
                acc.n += 1;
            } else {
                auto c = acc.best ? compare_values(v, *acc.best) : std::nullopt;
                bool better = !acc.best || (c && (fn == AggFn::Max ? *c > 0 : *c < 0));
                if (better) {
                    acc.best = v;
                    if (!group_attr) {
                        // the threshold selection becomes more selective as
                        // the running best improves
                        threshold = v;
                    }
                }
            }
        }
        release(*t);
    }

    std::vector<std::vector<Value>> rows;
    auto emit = [&](const Value* g, const Acc& acc) {
        std::vector<Value> row;
        if (g) row.push_back(*g);
        switch (fn) {
            case AggFn::Count: row.push_back(Value::of(static_cast<int64_t>(acc.count))); break;
            case AggFn::Sum:
                row.push_back(acc.n ? Value::of(acc.sum) : Value::null());
                break;
            case AggFn::Avg:
                row.push_back(acc.n ? Value::of(acc.sum / static_cast<double>(acc.n))
                                    : Value::null());
                break;
            case AggFn::Max:
            case AggFn::Min:
                row.push_back(acc.best ? *acc.best : Value::null());
                break;
        }
        count_emit(agg.id);
        rows.push_back(std::move(row));
    };
    if (group_attr) {
        for (const auto& [g, acc] : groups) emit(&g, acc);
    } else if (!groups.empty()) {
        const Acc& acc = groups.begin()->second;
        if ((fn == AggFn::Max || fn == AggFn::Min) && !acc.best) {
            // max/min over no valid values: empty result
        } else {
            emit(nullptr, acc);
        }
    } else if (fn == AggFn::Count) {
        Acc zero;
        emit(nullptr, zero);
    } else if (fn == AggFn::Sum || fn == AggFn::Avg) {
        Acc zero;
        emit(nullptr, zero);
    }
    return rows;
}

std::vector<std::vector<Value>> Engine::execute() {
    const PlanNode* root = qp_.root.get();
    if (root->kind != PlanNode::Kind::Project && root->kind != PlanNode::Kind::Aggregate)
        throw Error("exec", "plan root must be a projection or an aggregate");
    auto child = build_operator(*root->child());
    child->open();
    auto rows = root->kind == PlanNode::Kind::Project ? run_project(*root, *child)
                                                      : run_aggregate(*root, *child);
    child->close();
    return rows;
}

}  // namespace quip
