#include <algorithm>
#include <functional>
#include <numeric>
#include <set>

#include <json.hpp>

#include "quip/planner.hpp"

namespace quip {

using nlohmann::json;

int Catalog::entry_of(const std::string& alias) const {
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].alias == alias) return static_cast<int>(i);
    return -1;
}

AttrId Catalog::resolve(const AttrName& a) const {
    int e = entry_of(a.alias);
    if (e < 0) throw Error("bind", "unknown alias '" + a.alias + "'");
    int c = entries[e].table->schema.col_index(a.col);
    if (c < 0) throw Error("bind", "unknown column '" + a.qualified() + "'");
    return {e, c};
}

std::string Catalog::name_of(AttrId a) const {
    return entries[a.tbl].alias + "." + entries[a.tbl].table->schema.cols[a.col].name;
}

AttrType Catalog::type_of(AttrId a) const {
    return entries[a.tbl].table->schema.cols[a.col].type;
}

bool RSel::same_as(const RSel& o) const {
    if (!(attr == o.attr) || op != o.op || lits.size() != o.lits.size()) return false;
    for (size_t i = 0; i < lits.size(); ++i)
        if (lits[i] != o.lits[i]) return false;
    return true;
}

const VFEntry& QuipPlan::vf_of(int op_id) const {
    static const VFEntry empty;
    auto it = vf.find(op_id);
    return it == vf.end() ? empty : it->second;
}

const RJoin* QuipPlan::join_of_op(int op_id) const {
    for (const auto& j : joins)
        if (j.op_id == op_id) return &j;
    return nullptr;
}

namespace {

void collect_leaves(const PlanNode& n, std::vector<const PlanNode*>& out) {
    if (n.kind == PlanNode::Kind::Scan) out.push_back(&n);
    for (const auto& c : n.children) collect_leaves(*c, out);
}

// Inserts rho above the topmost select/join, below root project/aggregate.
// Returns true when a select/join exists.
bool insert_rho(PlanPtr& node) {
    PlanNode* n = node.get();
    if (n->kind == PlanNode::Kind::Project || n->kind == PlanNode::Kind::Aggregate) {
        return insert_rho(n->children[0]);
    }
    if (n->kind == PlanNode::Kind::Select || n->kind == PlanNode::Kind::Join) {
        auto rho = std::make_unique<PlanNode>();
        rho->kind = PlanNode::Kind::Rho;
        rho->children.push_back(std::move(node));
        node = std::move(rho);
        return true;
    }
    return false;
}

// The first join operator associated with the alias: nearest join ancestor of
// its scan leaf. Returns (join node, true when the leaf sits in the right =
// build subtree).
std::pair<PlanNode*, bool> first_join_of(PlanNode* root, const std::string& alias) {
    std::vector<PlanNode*> path;
    PlanNode* found = nullptr;
    std::function<bool(PlanNode*)> dfs = [&](PlanNode* n) -> bool {
        path.push_back(n);
        if (n->kind == PlanNode::Kind::Scan && n->alias == alias) {
            found = n;
            return true;
        }
        for (auto& c : n->children)
            if (dfs(c.get())) return true;
        path.pop_back();
        return false;
    };
    dfs(root);
    if (!found) return {nullptr, false};
    for (int i = static_cast<int>(path.size()) - 2; i >= 0; --i) {
        if (path[i]->kind == PlanNode::Kind::Join) {
            bool onRight = path[i]->children[1].get() == path[i + 1];
            return {path[i], onRight};
        }
    }
    return {nullptr, false};
}

PlanNode* find_parent(PlanNode* root, const PlanNode* child) {
    if (root == child) return nullptr;
    for (auto& c : root->children) {
        if (c.get() == child) return root;
        if (PlanNode* p = find_parent(c.get(), child)) return p;
    }
    return nullptr;
}

void insert_threshold(QuipPlan& qp, const AggSpec& agg) {
    std::string alias = agg.attr.alias;
    auto [join, onBuildSide] = first_join_of(qp.root.get(), alias);

    auto thr = std::make_unique<PlanNode>();
    thr->kind = PlanNode::Kind::ThresholdSelect;
    thr->thr_attr = agg.attr;
    thr->thr_greater = agg.fn == AggFn::Max;

    PlanNode* anchor = nullptr;  // node the threshold goes directly above
    if (join && onBuildSide) {
        // leaf feeds a hash-table build: a leaf-level threshold could not
        // drop anything before the build blocks, so place it above the join
        anchor = join;
    } else {
        std::vector<const PlanNode*> leaves;
        collect_leaves(*qp.root, leaves);
        for (const PlanNode* l : leaves)
            if (l->alias == alias) anchor = const_cast<PlanNode*>(l);
    }
    if (!anchor) return;
    PlanNode* parent = find_parent(qp.root.get(), anchor);
    if (!parent) return;  // anchor is the root: nothing to gain
    for (auto& c : parent->children) {
        if (c.get() == anchor) {
            thr->children.push_back(std::move(c));
            c = std::move(thr);
            return;
        }
    }
}

void walk(const PlanNode& n, const std::function<void(const PlanNode&)>& f) {
    f(n);
    for (const auto& c : n.children) walk(*c, f);
}

}  // namespace

QuipPlan rewrite(const PlanNode& plan, const Database& db, const RewriteOptions& opt) {
    QuipPlan qp;
    qp.root = plan.clone();

    bool has_filtering = insert_rho(qp.root);

    const PlanNode* rootNode = qp.root.get();
    if (opt.minmax_opt && rootNode->kind == PlanNode::Kind::Aggregate && !rootNode->group_by &&
        rootNode->agg &&
        (rootNode->agg->fn == AggFn::Max || rootNode->agg->fn == AggFn::Min)) {
        insert_threshold(qp, *rootNode->agg);
    }

    bind_plan(*qp.root, db);
    qp.node_count = 0;
    walk(*qp.root, [&](const PlanNode& n) { qp.node_count = std::max(qp.node_count, n.id + 1); });

    // catalog in leaf order
    std::vector<const PlanNode*> leaves;
    collect_leaves(*qp.root, leaves);
    for (const PlanNode* l : leaves) {
        Catalog::Entry e;
        e.alias = l->alias;
        e.table_idx = db.table_index(l->table);
        e.table = &db.tables[e.table_idx];
        e.offset = qp.catalog.width;
        qp.catalog.width += static_cast<int>(e.table->schema.cols.size());
        qp.catalog.entries.push_back(e);
    }

    walk(*qp.root, [&](const PlanNode& n) {
        if (n.kind == PlanNode::Kind::Rho) qp.rho_id = n.id;
        if (n.kind == PlanNode::Kind::ThresholdSelect) qp.threshold_id = n.id;
        if (n.kind == PlanNode::Kind::Join) {
            RJoin j;
            j.left = qp.catalog.resolve(n.join.left);
            j.right = qp.catalog.resolve(n.join.right);
            j.op_id = n.id;
            qp.joins.push_back(j);
        }
        if (n.kind == PlanNode::Kind::Select) {
            RSel s;
            s.attr = qp.catalog.resolve(n.sel.attr);
            s.op = n.sel.op;
            s.lits = n.sel.lits;
            qp.selections.push_back(std::move(s));
        }
    });
    std::sort(qp.joins.begin(), qp.joins.end(),
              [](const RJoin& a, const RJoin& b) { return a.op_id < b.op_id; });
    for (size_t i = 0; i < qp.joins.size(); ++i) qp.joins[i].ordinal = static_cast<int>(i);
    if (qp.joins.size() > 31) throw Error("plan", "too many joins (max 31)");
    (void)has_filtering;

    // joins at-or-below each node, used for completeness gating
    std::function<std::vector<int>(const PlanNode&)> collect =
        [&](const PlanNode& n) -> std::vector<int> {
        std::vector<int> acc;
        for (const auto& c : n.children) {
            auto sub = collect(*c);
            acc.insert(acc.end(), sub.begin(), sub.end());
        }
        if (n.kind == PlanNode::Kind::Join) acc.push_back(qp.join_of_op(n.id)->ordinal);
        qp.subtree_joins[n.id] = acc;
        return acc;
    };
    collect(*qp.root);

    build_vf_list(qp);
    return qp;
}

namespace {

struct UnionFind {
    std::map<AttrId, AttrId> parent;
    AttrId find(AttrId a) {
        if (!parent.count(a)) parent[a] = a;
        if (parent[a] == a) return a;
        return parent[a] = find(parent[a]);
    }
    void unite(AttrId a, AttrId b) { parent[find(a)] = find(b); }
};

}  // namespace

void build_vf_list(QuipPlan& qp) {
    qp.vf.clear();
    const Catalog& cat = qp.catalog;

    // equality classes over all query join predicates
    UnionFind uf;
    for (const auto& j : qp.joins) uf.unite(j.left, j.right);

    struct Ctx {
        std::vector<const PlanNode*> ancestors;  // root..parent
    };

    // attrs produced by a subtree = attrs of its catalog entries
    auto subtree_tables = [&](const PlanNode& n) {
        std::set<int> tabs;
        std::vector<const PlanNode*> leaves;
        collect_leaves(n, leaves);
        for (auto* l : leaves) tabs.insert(cat.entry_of(l->alias));
        return tabs;
    };
    auto in_schema = [&](const std::set<int>& tabs, AttrId a) { return tabs.count(a.tbl) > 0; };

    std::function<void(const PlanNode&, std::vector<const PlanNode*>&)> visit =
        [&](const PlanNode& n, std::vector<const PlanNode*>& anc) {
            bool isOp = n.kind == PlanNode::Kind::Select || n.kind == PlanNode::Kind::Join ||
                        n.kind == PlanNode::Kind::Project || n.kind == PlanNode::Kind::Aggregate ||
                        n.kind == PlanNode::Kind::Rho;
            if (isOp) {
                VFEntry e;
                std::set<int> tabs = subtree_tables(n);
                std::vector<AttrId> own;
                if (n.kind == PlanNode::Kind::Select) own = {cat.resolve(n.sel.attr)};
                if (n.kind == PlanNode::Kind::Join)
                    own = {cat.resolve(n.join.left), cat.resolve(n.join.right)};
                if (n.kind == PlanNode::Kind::Project)
                    for (const auto& a : n.attrs) own.push_back(cat.resolve(a));
                if (n.kind == PlanNode::Kind::Aggregate) {
                    own.push_back(cat.resolve(n.agg->attr));
                    if (n.group_by) own.push_back(cat.resolve(*n.group_by));
                }
                auto is_own = [&](AttrId a) {
                    return std::find(own.begin(), own.end(), a) != own.end();
                };

                // verify set: predicates strictly below n applicable to own attrs
                // (rho: all predicates)
                std::function<void(const PlanNode&)> below = [&](const PlanNode& b) {
                    for (const auto& c : b.children) below(*c);
                    if (&b == &n) return;
                    if (b.kind == PlanNode::Kind::Select) {
                        RSel s{cat.resolve(b.sel.attr), b.sel.op, b.sel.lits, false};
                        if (n.kind == PlanNode::Kind::Rho || is_own(s.attr))
                            e.verify_sel.push_back(std::move(s));
                    }
                    if (b.kind == PlanNode::Kind::Join) {
                        const RJoin* j = qp.join_of_op(b.id);
                        if (n.kind == PlanNode::Kind::Rho || is_own(j->left) || is_own(j->right))
                            e.verify_join.push_back(*j);
                    }
                };
                if (n.kind == PlanNode::Kind::Rho) {
                    // carries every query predicate, evaluated or re-verified here
                    std::function<void(const PlanNode&)> all = [&](const PlanNode& b) {
                        if (b.kind == PlanNode::Kind::Select)
                            e.verify_sel.push_back({cat.resolve(b.sel.attr), b.sel.op, b.sel.lits, false});
                        if (b.kind == PlanNode::Kind::Join) e.verify_join.push_back(*qp.join_of_op(b.id));
                        for (const auto& c : b.children) all(*c);
                    };
                    all(*n.child());
                } else {
                    below(n);
                }

                // filter set: ancestor predicates applicable to schema attrs
                // other than own
                for (const PlanNode* a : anc) {
                    if (a->kind == PlanNode::Kind::Select) {
                        AttrId at = cat.resolve(a->sel.attr);
                        if (in_schema(tabs, at) && !is_own(at))
                            e.filter_sel.push_back({at, a->sel.op, a->sel.lits, false});
                    }
                    if (a->kind == PlanNode::Kind::Join) {
                        const RJoin* j = qp.join_of_op(a->id);
                        bool l_in = in_schema(tabs, j->left), r_in = in_schema(tabs, j->right);
                        if (l_in == r_in) continue;  // needs exactly one local side
                        AttrId local = l_in ? j->left : j->right;
                        AttrId other = l_in ? j->right : j->left;
                        if (is_own(local)) continue;
                        e.filter_join.push_back({*j, local, other});
                    }
                }

                // transitive closure: propagate query selection predicates
                // across equality classes onto local attributes
                for (int t : tabs) {
                    const auto& entry = cat.entries[t];
                    for (size_t c = 0; c < entry.table->schema.cols.size(); ++c) {
                        AttrId x{t, static_cast<int>(c)};
                        if (is_own(x)) continue;
                        if (!uf.parent.count(x)) continue;  // not in any equality atom
                        for (const auto& s : qp.selections) {
                            if (s.attr == x) continue;
                            if (!uf.parent.count(s.attr)) continue;
                            if (!(uf.find(s.attr) == uf.find(x))) continue;
                            RSel d{x, s.op, s.lits, true};
                            bool dup = false;
                            for (const auto& f : e.filter_sel)
                                if (f.same_as(d)) dup = true;
                            if (!dup) e.filter_sel.push_back(std::move(d));
                        }
                    }
                }
                qp.vf[n.id] = std::move(e);
            }
            anc.push_back(&n);
            for (const auto& c : n.children) visit(*c, anc);
            anc.pop_back();
        };
    std::vector<const PlanNode*> anc;
    visit(*qp.root, anc);
}

std::string vf_dump_json(const QuipPlan& qp) {
    json out = json::object();
    const Catalog& cat = qp.catalog;
    std::function<void(const PlanNode&)> visit = [&](const PlanNode& n) {
        auto it = qp.vf.find(n.id);
        if (it != qp.vf.end()) {
            json e;
            std::string label;
            switch (n.kind) {
                case PlanNode::Kind::Select: label = "select " + n.sel.render(); break;
                case PlanNode::Kind::Join: label = "join " + n.join.render(); break;
                case PlanNode::Kind::Project: label = "project"; break;
                case PlanNode::Kind::Aggregate: label = "aggregate"; break;
                case PlanNode::Kind::Rho: label = "rho"; break;
                default: label = "?"; break;
            }
            e["operator"] = label;
            e["verify"] = json::array();
            for (const auto& s : it->second.verify_sel)
                e["verify"].push_back(cat.name_of(s.attr) + " " + cmp_op_name(s.op));
            for (const auto& j : it->second.verify_join)
                e["verify"].push_back(cat.name_of(j.left) + " = " + cat.name_of(j.right));
            e["filter"] = json::array();
            for (const auto& s : it->second.filter_sel)
                e["filter"].push_back(
                    json{{"pred", cat.name_of(s.attr) + " " + cmp_op_name(s.op)},
                         {"derived", s.derived}});
            for (const auto& f : it->second.filter_join)
                e["filter"].push_back(json{
                    {"pred", cat.name_of(f.pred.left) + " = " + cat.name_of(f.pred.right)},
                    {"status", 0}});
            out[std::to_string(n.id)] = e;
        }
        for (const auto& c : n.children) visit(*c);
    };
    visit(*qp.root);
    return out.dump(2);
}

bool obligated(AttrId attr, const QuipPlan& qp, const std::vector<AttrId>& projection) {
    std::set<AttrId> predAttrs;
    for (const auto& s : qp.selections) predAttrs.insert(s.attr);
    for (const auto& j : qp.joins) {
        predAttrs.insert(j.left);
        predAttrs.insert(j.right);
    }
    bool needed = predAttrs.count(attr) > 0 ||
                  std::find(projection.begin(), projection.end(), attr) != projection.end();
    if (!needed) return false;
    for (const AttrId& a : predAttrs)
        if (a.tbl == attr.tbl && !(a == attr)) return false;
    return true;
}

}  // namespace quip
