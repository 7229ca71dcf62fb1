#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

#include "quip/frontend.hpp"

namespace quip {

using nlohmann::json;

std::unique_ptr<PlanNode> PlanNode::clone() const {
    auto n = std::make_unique<PlanNode>();
    n->kind = kind;
    n->id = id;
    n->table = table;
    n->alias = alias;
    n->sel = sel;
    n->join = join;
    n->attrs = attrs;
    n->agg = agg;
    n->group_by = group_by;
    n->thr_attr = thr_attr;
    n->thr_greater = thr_greater;
    for (const auto& c : children) n->children.push_back(c->clone());
    return n;
}

PlanPtr make_scan(const std::string& table, const std::string& alias) {
    auto n = std::make_unique<PlanNode>();
    n->kind = PlanNode::Kind::Scan;
    n->table = table;
    n->alias = alias.empty() ? table : alias;
    return n;
}

PlanPtr make_select(SelPred p, PlanPtr child) {
    auto n = std::make_unique<PlanNode>();
    n->kind = PlanNode::Kind::Select;
    n->sel = std::move(p);
    n->children.push_back(std::move(child));
    return n;
}

PlanPtr make_join(JoinPred p, PlanPtr left, PlanPtr right) {
    auto n = std::make_unique<PlanNode>();
    n->kind = PlanNode::Kind::Join;
    n->join = std::move(p);
    n->children.push_back(std::move(left));
    n->children.push_back(std::move(right));
    return n;
}

PlanPtr make_project(std::vector<AttrName> attrs, PlanPtr child) {
    auto n = std::make_unique<PlanNode>();
    n->kind = PlanNode::Kind::Project;
    n->attrs = std::move(attrs);
    n->children.push_back(std::move(child));
    return n;
}

PlanPtr make_aggregate(AggSpec agg, std::optional<AttrName> group_by, PlanPtr child) {
    auto n = std::make_unique<PlanNode>();
    n->kind = PlanNode::Kind::Aggregate;
    n->agg = agg;
    n->group_by = std::move(group_by);
    n->children.push_back(std::move(child));
    return n;
}

namespace {

AttrName attr_from_string(const std::string& s) {
    auto dot = s.find('.');
    if (dot == std::string::npos) return {"", lower(s)};
    return {lower(s.substr(0, dot)), lower(s.substr(dot + 1))};
}

Value value_from_json(const json& j) {
    if (j.is_null()) return Value::null();
    if (j.is_number_integer()) return Value::of(j.get<int64_t>());
    if (j.is_number_float()) return Value::of(j.get<double>());
    if (j.is_string()) return Value::of(j.get<std::string>());
    throw Error("parse", "unsupported literal in plan json: " + j.dump());
}

json value_to_json(const Value& v) {
    if (v.is_null()) return nullptr;
    if (v.is_int()) return v.as_int();
    if (v.is_float()) return v.as_float();
    return v.as_text();
}

CmpOp cmp_from_string(const std::string& s) {
    if (s == "=" || s == "==" || s == "eq") return CmpOp::Eq;
    if (s == "!=" || s == "<>" || s == "ne") return CmpOp::Ne;
    if (s == "<" || s == "lt") return CmpOp::Lt;
    if (s == "<=" || s == "le") return CmpOp::Le;
    if (s == ">" || s == "gt") return CmpOp::Gt;
    if (s == ">=" || s == "ge") return CmpOp::Ge;
    if (s == "in") return CmpOp::In;
    throw Error("parse", "unknown comparison '" + s + "' in plan json");
}

SelPred sel_from_json(const json& j) {
    SelPred p;
    p.attr = attr_from_string(j.at("attr").get<std::string>());
    p.op = cmp_from_string(j.at("cmp").get<std::string>());
    if (p.op == CmpOp::In) {
        for (const auto& v : j.at("values")) p.lits.push_back(value_from_json(v));
        if (p.lits.empty()) throw Error("parse", "empty IN list in plan json");
    } else {
        p.lits.push_back(value_from_json(j.at("value")));
    }
    return p;
}

PlanPtr node_from_json(const json& j) {
    std::string op = lower(j.at("op").get<std::string>());
    if (op == "scan") {
        std::string table = lower(j.at("table").get<std::string>());
        std::string alias = j.contains("as") ? lower(j.at("as").get<std::string>()) : table;
        return make_scan(table, alias);
    }
    if (op == "select") return make_select(sel_from_json(j.at("pred")), node_from_json(j.at("child")));
    if (op == "join") {
        JoinPred p;
        p.left = attr_from_string(j.at("pred").at("l").get<std::string>());
        p.right = attr_from_string(j.at("pred").at("r").get<std::string>());
        return make_join(p, node_from_json(j.at("left")), node_from_json(j.at("right")));
    }
    if (op == "project") {
        std::vector<AttrName> attrs;
        for (const auto& a : j.at("attrs")) attrs.push_back(attr_from_string(a.get<std::string>()));
        return make_project(std::move(attrs), node_from_json(j.at("child")));
    }
    if (op == "aggregate") {
        AggSpec a;
        std::string fn = lower(j.at("fn").get<std::string>());
        if (fn == "max") a.fn = AggFn::Max;
        else if (fn == "min") a.fn = AggFn::Min;
        else if (fn == "count") a.fn = AggFn::Count;
        else if (fn == "sum") a.fn = AggFn::Sum;
        else if (fn == "avg") a.fn = AggFn::Avg;
        else throw Error("parse", "unknown aggregate '" + fn + "'");
        a.attr = attr_from_string(j.at("attr").get<std::string>());
        std::optional<AttrName> gb;
        if (j.contains("group_by") && !j.at("group_by").is_null())
            gb = attr_from_string(j.at("group_by").get<std::string>());
        return make_aggregate(a, gb, node_from_json(j.at("child")));
    }
    throw Error("parse", "unknown plan node kind '" + op + "'");
}

json node_to_json(const PlanNode& n) {
    json j;
    switch (n.kind) {
        case PlanNode::Kind::Scan:
            j["op"] = "scan";
            j["table"] = n.table;
            if (n.alias != n.table) j["as"] = n.alias;
            break;
        case PlanNode::Kind::Select: {
            j["op"] = "select";
            json p;
            p["attr"] = n.sel.attr.qualified();
            p["cmp"] = cmp_op_name(n.sel.op);
            if (n.sel.op == CmpOp::In) {
                p["values"] = json::array();
                for (const auto& v : n.sel.lits) p["values"].push_back(value_to_json(v));
            } else {
                p["value"] = value_to_json(n.sel.lits.at(0));
            }
            j["pred"] = p;
            j["child"] = node_to_json(*n.child());
            break;
        }
        case PlanNode::Kind::ThresholdSelect:
            j["op"] = "threshold_select";
            j["attr"] = n.thr_attr.qualified();
            j["cmp"] = n.thr_greater ? ">" : "<";
            j["child"] = node_to_json(*n.child());
            break;
        case PlanNode::Kind::Join:
            j["op"] = "join";
            j["pred"] = {{"l", n.join.left.qualified()}, {"r", n.join.right.qualified()}};
            j["left"] = node_to_json(*n.child(0));
            j["right"] = node_to_json(*n.child(1));
            break;
        case PlanNode::Kind::Project: {
            j["op"] = "project";
            j["attrs"] = json::array();
            for (const auto& a : n.attrs) j["attrs"].push_back(a.qualified());
            j["child"] = node_to_json(*n.child());
            break;
        }
        case PlanNode::Kind::Aggregate:
            j["op"] = "aggregate";
            j["fn"] = agg_fn_name(n.agg->fn);
            j["attr"] = n.agg->attr.qualified();
            if (n.group_by) j["group_by"] = n.group_by->qualified();
            j["child"] = node_to_json(*n.child());
            break;
        case PlanNode::Kind::Rho:
            j["op"] = "rho";
            j["child"] = node_to_json(*n.child());
            break;
    }
    return j;
}

struct Binder {
    const Database& db;
    int next_id = 0;

    struct Scope {
        std::vector<std::pair<std::string, const Table*>> aliases;  // in leaf order

        const Table* find(const std::string& alias) const {
            for (const auto& [a, t] : aliases)
                if (a == alias) return t;
            return nullptr;
        }
    };

    AttrType resolve(AttrName& a, const Scope& sc, const char* what) {
        if (a.alias.empty()) {
            const Table* owner = nullptr;
            std::string ownerAlias;
            for (const auto& [al, t] : sc.aliases) {
                if (t->schema.col_index(a.col) >= 0) {
                    if (owner) throw Error("bind", std::string(what) + ": ambiguous column '" + a.col + "'");
                    owner = t;
                    ownerAlias = al;
                }
            }
            if (!owner) throw Error("bind", std::string(what) + ": unknown column '" + a.col + "'");
            a.alias = ownerAlias;
            return owner->schema.cols[owner->schema.col_index(a.col)].type;
        }
        const Table* t = sc.find(a.alias);
        if (!t) throw Error("bind", std::string(what) + ": attribute '" + a.qualified() +
                                        "' is not produced by this subtree");
        int c = t->schema.col_index(a.col);
        if (c < 0) throw Error("bind", std::string(what) + ": unknown column '" + a.qualified() + "'");
        return t->schema.cols[c].type;
    }

    Scope bind(PlanNode& n) {
        n.id = next_id++;
        switch (n.kind) {
            case PlanNode::Kind::Scan: {
                if (!n.children.empty()) throw Error("bind", "scan must be a leaf");
                const Table& t = db.require_table(n.table);
                if (n.alias.empty()) n.alias = n.table;
                Scope sc;
                sc.aliases.emplace_back(n.alias, &t);
                return sc;
            }
            case PlanNode::Kind::Select: {
                Scope sc = bind(*n.child());
                AttrType t = resolve(n.sel.attr, sc, "select");
                for (auto& lit : n.sel.lits) {
                    // same numeric coercion as query binding
                    if (t == AttrType::Text) {
                        if (!lit.is_text()) throw Error("bind", "literal type mismatch in " + n.sel.render());
                    } else if (lit.is_text()) {
                        throw Error("bind", "literal type mismatch in " + n.sel.render());
                    } else if (t == AttrType::Int && lit.is_float()) {
                        double d = lit.as_float();
                        if (d != static_cast<double>(static_cast<int64_t>(d)))
                            throw Error("bind", "literal type mismatch in " + n.sel.render());
                        lit = Value::of(static_cast<int64_t>(d));
                    } else if (t == AttrType::Float && lit.is_int()) {
                        lit = Value::of(lit.numeric());
                    }
                }
                return sc;
            }
            case PlanNode::Kind::ThresholdSelect: {
                Scope sc = bind(*n.child());
                resolve(n.thr_attr, sc, "threshold");
                return sc;
            }
            case PlanNode::Kind::Join: {
                Scope l = bind(*n.child(0));
                Scope r = bind(*n.child(1));
                Scope merged;
                merged.aliases = l.aliases;
                for (const auto& e : r.aliases) {
                    if (merged.find(e.first))
                        throw Error("bind", "alias '" + e.first + "' appears on both join sides");
                    merged.aliases.push_back(e);
                }
                AttrName& la = n.join.left;
                AttrName& ra = n.join.right;
                AttrType lt = resolve(la, merged, "join");
                AttrType rt = resolve(ra, merged, "join");
                auto in_scope = [](const Scope& sc, const AttrName& a) {
                    return sc.find(a.alias) != nullptr;
                };
                // normalize: left attribute from the left subtree
                if (!in_scope(l, la) && in_scope(l, ra) && in_scope(r, la)) {
                    std::swap(la, ra);
                    std::swap(lt, rt);
                }
                if (!in_scope(l, la) || !in_scope(r, ra))
                    throw Error("bind", "join attributes must come from distinct subtrees: " +
                                            n.join.render());
                if ((lt == AttrType::Text) != (rt == AttrType::Text))
                    throw Error("bind", "join attribute types are incompatible: " + n.join.render());
                return merged;
            }
            case PlanNode::Kind::Project: {
                Scope sc = bind(*n.child());
                for (auto& a : n.attrs) resolve(a, sc, "project");
                return sc;
            }
            case PlanNode::Kind::Aggregate: {
                Scope sc = bind(*n.child());
                resolve(n.agg->attr, sc, "aggregate");
                if (n.group_by) resolve(*n.group_by, sc, "group by");
                return sc;
            }
            case PlanNode::Kind::Rho:
                return bind(*n.child());
        }
        throw Error("bind", "bad node");
    }
};

void check_root_region(const PlanNode& root) {
    // Project/Aggregate only in the root region, leaves are scans.
    const PlanNode* n = &root;
    while (n->kind == PlanNode::Kind::Project || n->kind == PlanNode::Kind::Aggregate)
        n = n->child();
    std::vector<const PlanNode*> stack{n};
    while (!stack.empty()) {
        const PlanNode* cur = stack.back();
        stack.pop_back();
        if (cur->kind == PlanNode::Kind::Project || cur->kind == PlanNode::Kind::Aggregate)
            throw Error("bind", "project/aggregate allowed only at the plan root");
        if (cur->kind == PlanNode::Kind::Scan && !cur->children.empty())
            throw Error("bind", "scan must be a leaf");
        for (const auto& c : cur->children) stack.push_back(c.get());
    }
}

}  // namespace

void bind_plan(PlanNode& root, const Database& db) {
    Binder b{db};
    b.bind(root);
    check_root_region(root);
}

PlanPtr load_plan_json(const std::string& text, const Database& db) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw Error("parse", std::string("plan json: ") + e.what());
    }
    PlanPtr p = node_from_json(j);
    bind_plan(*p, db);
    return p;
}

std::string plan_to_json(const PlanNode& root) { return node_to_json(root).dump(2); }

std::vector<Pred> plan_predicates(const PlanNode& root) {
    std::vector<Pred> out;
    std::vector<const PlanNode*> stack{&root};
    while (!stack.empty()) {
        const PlanNode* n = stack.back();
        stack.pop_back();
        if (n->kind == PlanNode::Kind::Select) out.emplace_back(n->sel);
        if (n->kind == PlanNode::Kind::Join) out.emplace_back(n->join);
        for (const auto& c : n->children) stack.push_back(c.get());
    }
    return out;
}

PlanPtr plan_from_query(const QuerySpec& q, const Database& db) {
    QuerySpec spec = q;
    bind_query(spec, db);

    // leaf per alias, selections pushed down onto their leaf
    struct Leaf {
        std::string alias;
        size_t rows;
        PlanPtr node;
    };
    std::vector<Leaf> leaves;
    for (const auto& [table, alias] : spec.tables) {
        const Table& t = db.require_table(table);
        leaves.push_back({alias, t.rows.size(), make_scan(table, alias)});
    }
    std::vector<JoinPred> joins;
    for (const auto& p : spec.preds) {
        if (const auto* s = std::get_if<SelPred>(&p)) {
            for (auto& leaf : leaves)
                if (leaf.alias == s->attr.alias) leaf.node = make_select(*s, std::move(leaf.node));
        } else {
            joins.push_back(std::get<JoinPred>(p));
        }
    }

    // left-deep joins, smallest table first, grow by the smallest connected
    std::stable_sort(leaves.begin(), leaves.end(),
                     [](const Leaf& a, const Leaf& b) { return a.rows < b.rows; });
    std::set<std::string> joined;
    PlanPtr cur = std::move(leaves[0].node);
    joined.insert(leaves[0].alias);
    std::vector<bool> used(leaves.size(), false);
    used[0] = true;
    std::vector<bool> join_used(joins.size(), false);
    for (size_t step = 1; step < leaves.size(); ++step) {
        int best = -1, best_join = -1;
        for (size_t i = 0; i < leaves.size(); ++i) {
            if (used[i]) continue;
            for (size_t k = 0; k < joins.size(); ++k) {
                if (join_used[k]) continue;
                const auto& jp = joins[k];
                bool connects = (joined.count(jp.left.alias) && jp.right.alias == leaves[i].alias) ||
                                (joined.count(jp.right.alias) && jp.left.alias == leaves[i].alias);
                if (connects && (best < 0 || leaves[i].rows < leaves[best].rows)) {
                    best = static_cast<int>(i);
                    best_join = static_cast<int>(k);
                }
            }
        }
        if (best < 0) throw Error("plan", "join graph is disconnected (cross products unsupported)");
        JoinPred jp = joins[best_join];
        if (!joined.count(jp.left.alias)) std::swap(jp.left, jp.right);
        join_used[best_join] = true;
        joined.insert(leaves[best].alias);
        cur = make_join(jp, std::move(cur), std::move(leaves[best].node));
        used[best] = true;
    }
    // attach any remaining join predicates between already-joined tables as
    // extra join nodes is unsupported; they indicate a cycle in the join graph
    for (size_t k = 0; k < joins.size(); ++k)
        if (!join_used[k])
            throw Error("plan", "cyclic join predicates unsupported: " + joins[k].render());

    if (spec.agg) {
        cur = make_aggregate(*spec.agg, spec.group_by, std::move(cur));
        if (spec.group_by && !spec.projection.empty()) {
            // template form SELECT a, AGG(b) ... GROUP BY a: the aggregate
            // node already emits (group, value)
        }
    } else {
        cur = make_project(spec.projection, std::move(cur));
    }
    bind_plan(*cur, db);
    return cur;
}

std::string render_plan(const PlanNode& root) {
    std::ostringstream out;
    std::vector<std::pair<const PlanNode*, int>> stack{{&root, 0}};
    while (!stack.empty()) {
        auto [n, depth] = stack.back();
        stack.pop_back();
        for (int i = 0; i < depth; ++i) out << "  ";
        switch (n->kind) {
            case PlanNode::Kind::Scan: out << "scan " << n->alias; break;
            case PlanNode::Kind::Select: out << "select " << n->sel.render(); break;
            case PlanNode::Kind::ThresholdSelect:
                out << "threshold " << n->thr_attr.qualified() << (n->thr_greater ? " > t" : " < t");
                break;
            case PlanNode::Kind::Join: out << "join " << n->join.render(); break;
            case PlanNode::Kind::Project: out << "project"; break;
            case PlanNode::Kind::Aggregate:
                out << "aggregate " << agg_fn_name(n->agg->fn) << "(" << n->agg->attr.qualified() << ")";
                break;
            case PlanNode::Kind::Rho: out << "rho"; break;
        }
        out << "  #" << n->id << "\n";
        for (auto it = n->children.rbegin(); it != n->children.rend(); ++it)
            stack.push_back({it->get(), depth + 1});
    }
    return out.str();
}

}  // namespace quip
